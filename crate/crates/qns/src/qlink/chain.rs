//! Entanglement swapping and node-chain simulation.
//!
//! A chain of `hops` links is folded pairwise: the running long-range pair
//! (A, M) is merged with the next link pair (M', B') through a Bell-state
//! measurement on (M, M'), so the simulated register never exceeds 4 qubits
//! (two quantum memories per node).

use nalgebra::DMatrix;
use rand::Rng;

use super::density::{pauli_x, pauli_z, DensityMatrix, PureState, C64};
use super::lut::LinkSample;
use super::{apply_dephasing, apply_depolarizing, bell_pair, NoiseParams, QlinkError, TimingParams};

/// Outcome of a Bell-state measurement, as (phase, parity) classical bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BsmOutcome {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BsmOutcome {
    pub const ALL: [BsmOutcome; 4] = [
        BsmOutcome::PhiPlus,
        BsmOutcome::PhiMinus,
        BsmOutcome::PsiPlus,
        BsmOutcome::PsiMinus,
    ];

    /// (phase bit, parity bit): the two classical bits sent to the end node.
    pub fn bits(self) -> (bool, bool) {
        match self {
            BsmOutcome::PhiPlus => (false, false),
            BsmOutcome::PhiMinus => (true, false),
            BsmOutcome::PsiPlus => (false, true),
            BsmOutcome::PsiMinus => (true, true),
        }
    }

    fn bell_state(self) -> PureState {
        let (phase, parity) = self.bits();
        PureState::bell(phase, parity)
    }
}

/// Projector onto a Bell state of qubits (1,2) of a 4-qubit register.
fn bsm_projector(outcome: BsmOutcome) -> DMatrix<C64> {
    let bell = outcome.bell_state().projector();
    let i2 = DMatrix::<C64>::identity(2, 2);
    i2.kronecker(bell.matrix()).kronecker(&i2)
}

/// Project the middle qubits (M, M') of a 4-qubit register onto a forced BSM
/// outcome, apply the outcome-conditioned X/Z corrections to qubit B, and
/// return the reduced (A, B) pair together with the outcome probability.
pub fn swap_with_outcome(
    chain_state: &DensityMatrix,
    outcome: BsmOutcome,
) -> Result<(DensityMatrix, f64), QlinkError> {
    if chain_state.dim() != 16 {
        return Err(QlinkError::DimensionMismatch {
            left: chain_state.dim(),
            right: 16,
        });
    }
    let (projected, prob) = chain_state
        .project(&bsm_projector(outcome))
        .ok_or(QlinkError::ImpossibleOutcome)?;
    let (phase, parity) = outcome.bits();
    let mut corrected = projected;
    if parity {
        corrected = corrected.apply_single_qubit(3, &pauli_x())?;
    }
    if phase {
        corrected = corrected.apply_single_qubit(3, &pauli_z())?;
    }
    let pair = corrected.partial_trace_keep(&[0, 3])?;
    Ok((pair, prob))
}

/// Bell-state measurement on the middle qubits with the outcome sampled from
/// Born probabilities, followed by correction and reduction to (A, B).
pub fn swap_and_correct(
    chain_state: &DensityMatrix,
    rng: &mut impl Rng,
) -> Result<(DensityMatrix, BsmOutcome), QlinkError> {
    if chain_state.dim() != 16 {
        return Err(QlinkError::DimensionMismatch {
            left: chain_state.dim(),
            right: 16,
        });
    }
    let probs: Vec<f64> = BsmOutcome::ALL
        .iter()
        .map(|&o| {
            let p = bsm_projector(o);
            (&p * chain_state.matrix()).trace().re.max(0.0)
        })
        .collect();
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut chosen = BsmOutcome::PsiMinus;
    for (o, p) in BsmOutcome::ALL.iter().zip(&probs) {
        if u < *p {
            chosen = *o;
            break;
        }
        u -= p;
    }
    let (pair, _) = swap_with_outcome(chain_state, chosen)?;
    Ok((pair, chosen))
}

fn aged_link_pair(
    noise: &NoiseParams,
    elapsed_ns: u64,
    rng: &mut impl Rng,
) -> Result<DensityMatrix, QlinkError> {
    let mut pair = bell_pair(noise.source_fidelity, rng)?;
    for q in [0, 1] {
        pair = apply_depolarizing(&pair, q, noise.memory_depolar_rate, elapsed_ns)?;
    }
    Ok(pair)
}

/// One end-to-end entanglement attempt over `hops` homogeneous links.
///
/// Link pairs are generated simultaneously; swaps run sequentially, each
/// taking one gate time plus one classical hop for the correction message.
/// Returns the final fidelity against |Φ⁺⟩ and the attempt duration.
pub fn simulate_chain(
    hops: u32,
    noise: &NoiseParams,
    timing: &TimingParams,
    rng: &mut impl Rng,
) -> Result<LinkSample, QlinkError> {
    if hops < 1 {
        return Err(QlinkError::ZeroHops);
    }
    noise.validate()?;
    timing.validate()?;

    let photon = timing.photon_hop_time_ns;
    let step = timing.gate_time_ns + timing.classical_hop_time_ns;
    let duration_ns = photon + (hops as u64 - 1) * step + timing.gate_time_ns;

    let mut left = aged_link_pair(noise, photon, rng)?;
    for s in 0..hops.saturating_sub(1) as u64 {
        // The next link pair has idled in memory since its photon arrived.
        let next = aged_link_pair(noise, photon + s * step, rng)?;
        let mut register = left.kron(&next);
        // Gate dephasing around the measurement and the correction gates.
        for q in [1, 2, 3] {
            register = apply_dephasing(&register, q, noise.gate_dephase_rate, timing.gate_time_ns)?;
        }
        let (pair, _outcome) = swap_and_correct(&register, rng)?;
        // End memories decohere while the gate runs and the outcome travels.
        let mut aged = pair;
        for q in [0, 1] {
            aged = apply_depolarizing(&aged, q, noise.memory_depolar_rate, step)?;
        }
        left = aged;
    }

    let fidelity = left.fidelity(&PureState::bell_phi_plus())?;
    Ok(LinkSample {
        fidelity,
        duration_ns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngutil;

    fn ideal_two_pairs() -> DensityMatrix {
        let phi = PureState::bell_phi_plus().projector();
        phi.kron(&phi)
    }

    #[test]
    fn ideal_swap_gives_phi_plus_for_every_forced_outcome() {
        let register = ideal_two_pairs();
        for outcome in BsmOutcome::ALL {
            let (pair, prob) = swap_with_outcome(&register, outcome).unwrap();
            let f = pair.fidelity(&PureState::bell_phi_plus()).unwrap();
            assert!((f - 1.0).abs() < 1e-10, "{outcome:?}: fidelity {f}");
            assert!((prob - 0.25).abs() < 1e-10, "{outcome:?}: prob {prob}");
        }
    }

    #[test]
    fn wrong_bell_state_propagates_through_swap() {
        let phi = PureState::bell_phi_plus().projector();
        let psi = PureState::bell_psi_plus().projector();
        let register = phi.kron(&psi);
        let mut rng = rngutil::stream(11, "test", &[]);
        let (pair, _) = swap_and_correct(&register, &mut rng).unwrap();
        let f = pair.fidelity(&PureState::bell_phi_plus()).unwrap();
        assert!(f < 1e-10, "orthogonal input should give fidelity 0, got {f}");
    }

    #[test]
    fn outcome_distribution_is_uniform_on_ideal_inputs() {
        let register = ideal_two_pairs();
        let mut rng = rngutil::stream(12, "test", &[]);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let (_, outcome) = swap_and_correct(&register, &mut rng).unwrap();
            counts[BsmOutcome::ALL.iter().position(|&o| o == outcome).unwrap()] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!(
                (c as f64 - n as f64 * 0.25).abs() < 3.0 * sigma,
                "counts {counts:?}"
            );
        }
    }

    #[test]
    fn swap_rejects_wrong_dimension() {
        let phi = PureState::bell_phi_plus().projector();
        let mut rng = rngutil::stream(13, "test", &[]);
        assert!(swap_and_correct(&phi, &mut rng).is_err());
        assert!(swap_with_outcome(&phi, BsmOutcome::PhiPlus).is_err());
    }

    #[test]
    fn single_hop_ideal_chain() {
        let timing = TimingParams::default();
        let mut rng = rngutil::stream(14, "test", &[]);
        let sample = simulate_chain(1, &NoiseParams::ideal(), &timing, &mut rng).unwrap();
        assert!((sample.fidelity - 1.0).abs() < 1e-12);
        assert_eq!(
            sample.duration_ns,
            timing.photon_hop_time_ns + timing.gate_time_ns
        );
    }

    #[test]
    fn ideal_pipeline_is_perfect_for_short_chains() {
        let timing = TimingParams::default();
        let mut rng = rngutil::stream(15, "test", &[]);
        for hops in 1..=4 {
            let sample = simulate_chain(hops, &NoiseParams::ideal(), &timing, &mut rng).unwrap();
            assert!(
                (sample.fidelity - 1.0).abs() < 1e-10,
                "hops={hops} fidelity={}",
                sample.fidelity
            );
        }
    }

    #[test]
    fn chain_duration_formula() {
        let timing = TimingParams {
            photon_hop_time_ns: 5_000,
            classical_hop_time_ns: 5_000,
            gate_time_ns: 1_000,
        };
        let mut rng = rngutil::stream(16, "test", &[]);
        let s3 = simulate_chain(3, &NoiseParams::ideal(), &timing, &mut rng).unwrap();
        assert_eq!(s3.duration_ns, 5_000 + 2 * 6_000 + 1_000);
    }

    #[test]
    fn noisy_chain_fidelity_decreases_with_hops() {
        let noise = NoiseParams::default();
        let timing = TimingParams::default();
        let n = 2_000;
        let mean = |hops: u32| {
            let mut acc = 0.0;
            for i in 0..n {
                let mut rng = rngutil::stream(17, "test", &[hops as u64, i]);
                acc += simulate_chain(hops, &noise, &timing, &mut rng)
                    .unwrap()
                    .fidelity;
            }
            acc / n as f64
        };
        let m1 = mean(1);
        let m3 = mean(3);
        assert!(m3 < m1, "hops=3 mean {m3} should be below hops=1 mean {m1}");
    }

    #[test]
    fn zero_hops_rejected() {
        let mut rng = rngutil::stream(18, "test", &[]);
        assert!(matches!(
            simulate_chain(0, &NoiseParams::ideal(), &TimingParams::default(), &mut rng),
            Err(QlinkError::ZeroHops)
        ));
    }
}
