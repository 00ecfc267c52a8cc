//! Density-matrix simulation of noisy Bell-pair generation, entanglement
//! swapping and correction along a homogeneous node chain, plus Monte-Carlo
//! construction of the per-hop (fidelity, duration) lookup tables consumed by
//! the network layer.

mod chain;
mod density;
mod lut;

pub use chain::{simulate_chain, swap_and_correct, swap_with_outcome, BsmOutcome};
pub use density::{embed_single, pauli_x, pauli_y, pauli_z, DensityMatrix, PureState, C64};
pub use lut::{build_lookup_table, LinkSample, LookupTable, LutProvenance};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QlinkError {
    #[error("dimension {0} is not a power of two")]
    InvalidDimension(usize),
    #[error("state norm {0} is not 1")]
    NotNormalized(f64),
    #[error("trace {0} is not 1")]
    NotUnitTrace(f64),
    #[error("matrix is not Hermitian")]
    NotHermitian,
    #[error("matrix is not positive semidefinite (min eigenvalue {0})")]
    NotPositive(f64),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("qubit index {qubit} out of range for {num_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("probability {0} outside [0,1]")]
    InvalidProbability(f64),
    #[error("source fidelity {0} outside (0,1]")]
    InvalidSourceFidelity(f64),
    #[error("noise rate {0} must be non-negative")]
    NegativeRate(f64),
    #[error("timing value {name} must be strictly positive, got {value}")]
    NonPositiveTiming { name: &'static str, value: u64 },
    #[error("hop count must be at least 1")]
    ZeroHops,
    #[error("invalid lookup table: {0}")]
    InvalidLookupTable(String),
    #[error("measurement outcome has zero probability")]
    ImpossibleOutcome,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("lookup table parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Per-node noise configuration (source fidelity, memory depolarizing rate,
/// gate dephasing rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub source_fidelity: f64,
    /// Memory depolarizing rate in Hz.
    pub memory_depolar_rate: f64,
    /// Gate dephasing rate in Hz.
    pub gate_dephase_rate: f64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<(), QlinkError> {
        if !(self.source_fidelity > 0.0 && self.source_fidelity <= 1.0) {
            return Err(QlinkError::InvalidSourceFidelity(self.source_fidelity));
        }
        if self.memory_depolar_rate < 0.0 {
            return Err(QlinkError::NegativeRate(self.memory_depolar_rate));
        }
        if self.gate_dephase_rate < 0.0 {
            return Err(QlinkError::NegativeRate(self.gate_dephase_rate));
        }
        Ok(())
    }

    /// Noiseless configuration, handy in tests.
    pub fn ideal() -> Self {
        Self {
            source_fidelity: 1.0,
            memory_depolar_rate: 0.0,
            gate_dephase_rate: 0.0,
        }
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            source_fidelity: 0.9,
            memory_depolar_rate: 6000.0,
            gate_dephase_rate: 5000.0,
        }
    }
}

/// Channel and gate timing, all in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingParams {
    pub photon_hop_time_ns: u64,
    pub classical_hop_time_ns: u64,
    pub gate_time_ns: u64,
}

impl TimingParams {
    pub fn validate(&self) -> Result<(), QlinkError> {
        for (name, value) in [
            ("photon_hop_time_ns", self.photon_hop_time_ns),
            ("classical_hop_time_ns", self.classical_hop_time_ns),
            ("gate_time_ns", self.gate_time_ns),
        ] {
            if value == 0 {
                return Err(QlinkError::NonPositiveTiming { name, value });
            }
        }
        Ok(())
    }
}

impl Default for TimingParams {
    fn default() -> Self {
        Self {
            photon_hop_time_ns: 5_000,
            classical_hop_time_ns: 5_000,
            gate_time_ns: 1_000,
        }
    }
}

/// Depolarizing probability after `elapsed_ns` at `rate` Hz.
pub fn depolar_prob(rate_hz: f64, elapsed_ns: u64) -> f64 {
    1.0 - (-rate_hz * elapsed_ns as f64 * 1e-9).exp()
}

/// Phase-flip probability after `elapsed_ns` at `rate` Hz.
pub fn dephase_prob(rate_hz: f64, elapsed_ns: u64) -> f64 {
    0.5 * (1.0 - (-rate_hz * elapsed_ns as f64 * 1e-9).exp())
}

/// Generate one noisy Bell pair: |Φ⁺⟩ with probability `source_fidelity`,
/// else the orthogonal |Ψ⁺⟩. Expected fidelity vs |Φ⁺⟩ equals the source
/// fidelity exactly.
pub fn bell_pair(source_fidelity: f64, rng: &mut impl Rng) -> Result<DensityMatrix, QlinkError> {
    if !(source_fidelity > 0.0 && source_fidelity <= 1.0) {
        return Err(QlinkError::InvalidSourceFidelity(source_fidelity));
    }
    let correct = rng.random::<f64>() < source_fidelity;
    let state = if correct {
        PureState::bell_phi_plus()
    } else {
        PureState::bell_psi_plus()
    };
    Ok(state.projector())
}

/// Memory depolarizing applied to one qubit for an elapsed wall time.
pub fn apply_depolarizing(
    state: &DensityMatrix,
    qubit: usize,
    rate_hz: f64,
    elapsed_ns: u64,
) -> Result<DensityMatrix, QlinkError> {
    if rate_hz < 0.0 {
        return Err(QlinkError::NegativeRate(rate_hz));
    }
    state.depolarize_prob(qubit, depolar_prob(rate_hz, elapsed_ns))
}

/// Gate dephasing applied to one qubit for an elapsed wall time.
pub fn apply_dephasing(
    state: &DensityMatrix,
    qubit: usize,
    rate_hz: f64,
    elapsed_ns: u64,
) -> Result<DensityMatrix, QlinkError> {
    if rate_hz < 0.0 {
        return Err(QlinkError::NegativeRate(rate_hz));
    }
    state.dephase_prob(qubit, dephase_prob(rate_hz, elapsed_ns))
}
