//! Dense density-matrix arithmetic for registers of up to four qubits.
//!
//! Qubit 0 is the leftmost tensor factor (most significant bit of the basis
//! index). Registers never exceed 4 qubits, so dense 16x16 matrices are fine.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use super::QlinkError;

pub type C64 = Complex<f64>;

pub const TRACE_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

/// A pure state vector with unit 2-norm.
#[derive(Debug, Clone)]
pub struct PureState {
    amps: DVector<C64>,
}

impl PureState {
    pub fn new(amps: Vec<C64>) -> Result<Self, QlinkError> {
        if !amps.len().is_power_of_two() {
            return Err(QlinkError::InvalidDimension(amps.len()));
        }
        let v = DVector::from_vec(amps);
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(QlinkError::NotNormalized(norm));
        }
        Ok(Self { amps: v })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amps
    }

    /// |Φ⁺⟩ = (|00⟩+|11⟩)/√2
    pub fn bell_phi_plus() -> Self {
        Self::bell(false, false)
    }

    /// |Φ⁻⟩ = (|00⟩−|11⟩)/√2
    pub fn bell_phi_minus() -> Self {
        Self::bell(true, false)
    }

    /// |Ψ⁺⟩ = (|01⟩+|10⟩)/√2
    pub fn bell_psi_plus() -> Self {
        Self::bell(false, true)
    }

    /// |Ψ⁻⟩ = (|01⟩−|10⟩)/√2
    pub fn bell_psi_minus() -> Self {
        Self::bell(true, true)
    }

    /// Bell state indexed by (phase bit, parity bit).
    pub fn bell(phase: bool, parity: bool) -> Self {
        let s = 1.0 / f64::sqrt(2.0);
        let sign = if phase { -s } else { s };
        let mut amps = vec![C64::new(0.0, 0.0); 4];
        if parity {
            amps[0b01] = C64::new(s, 0.0);
            amps[0b10] = C64::new(sign, 0.0);
        } else {
            amps[0b00] = C64::new(s, 0.0);
            amps[0b11] = C64::new(sign, 0.0);
        }
        Self {
            amps: DVector::from_vec(amps),
        }
    }

    /// Single-qubit |+⟩ = (|0⟩+|1⟩)/√2
    pub fn plus() -> Self {
        let s = C64::new(1.0 / f64::sqrt(2.0), 0.0);
        Self {
            amps: DVector::from_vec(vec![s, s]),
        }
    }

    pub fn projector(&self) -> DensityMatrix {
        let m = &self.amps * self.amps.adjoint();
        DensityMatrix { mat: m }
    }
}

/// A mixed state of an n-qubit register: Hermitian, unit-trace, PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(mat: DMatrix<C64>) -> Result<Self, QlinkError> {
        if !mat.is_square() || !mat.nrows().is_power_of_two() {
            return Err(QlinkError::InvalidDimension(mat.nrows()));
        }
        let rho = Self { mat };
        rho.validate()?;
        Ok(rho)
    }

    /// Maximally mixed state on `n` qubits.
    pub fn maximally_mixed(n: u32) -> Self {
        let dim = 1usize << n;
        let mat = DMatrix::identity(dim, dim) * C64::new(1.0 / dim as f64, 0.0);
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn num_qubits(&self) -> u32 {
        self.dim().trailing_zeros()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    /// Check trace, Hermiticity and positive semidefiniteness.
    pub fn validate(&self) -> Result<(), QlinkError> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QlinkError::NotUnitTrace(tr.re));
        }
        for i in 0..self.dim() {
            for j in 0..=i {
                let diff = self.mat[(i, j)] - self.mat[(j, i)].conj();
                if diff.norm() > HERMITIAN_TOL {
                    return Err(QlinkError::NotHermitian);
                }
            }
        }
        let min_ev = self.min_eigenvalue();
        if min_ev < -PSD_TOL {
            return Err(QlinkError::NotPositive(min_ev));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.mat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    /// F(|ψ⟩, ρ) = ⟨ψ|ρ|ψ⟩, clamped to [0,1] against roundoff.
    pub fn fidelity(&self, target: &PureState) -> Result<f64, QlinkError> {
        if target.dim() != self.dim() {
            return Err(QlinkError::DimensionMismatch {
                left: self.dim(),
                right: target.dim(),
            });
        }
        let v = target.amplitudes();
        let f = (v.adjoint() * &self.mat * v)[(0, 0)].re;
        Ok(f.clamp(0.0, 1.0))
    }

    /// Tensor product `self ⊗ other` (self on the left, i.e. lower qubit indices).
    pub fn kron(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            mat: self.mat.kronecker(&other.mat),
        }
    }

    fn check_qubit(&self, qubit: usize) -> Result<(), QlinkError> {
        if qubit >= self.num_qubits() as usize {
            return Err(QlinkError::QubitOutOfRange {
                qubit,
                num_qubits: self.num_qubits() as usize,
            });
        }
        Ok(())
    }

    /// Embed a single-qubit operator at `qubit` and conjugate: U ρ U†.
    pub fn apply_single_qubit(
        &self,
        qubit: usize,
        op: &DMatrix<C64>,
    ) -> Result<DensityMatrix, QlinkError> {
        self.check_qubit(qubit)?;
        let full = embed_single(op, qubit, self.num_qubits() as usize);
        let mat = &full * &self.mat * full.adjoint();
        Ok(DensityMatrix { mat })
    }

    /// Depolarizing channel with explicit probability:
    /// ρ → (1−p)ρ + p (I/2 ⊗ tr_q ρ), realized as the equivalent Pauli twirl.
    pub fn depolarize_prob(&self, qubit: usize, p: f64) -> Result<DensityMatrix, QlinkError> {
        self.check_qubit(qubit)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(QlinkError::InvalidProbability(p));
        }
        if p == 0.0 {
            return Ok(self.clone());
        }
        let x = self.apply_single_qubit(qubit, &pauli_x())?;
        let y = self.apply_single_qubit(qubit, &pauli_y())?;
        let z = self.apply_single_qubit(qubit, &pauli_z())?;
        let w = C64::new(p / 4.0, 0.0);
        let mat = self.mat.clone() * C64::new(1.0 - 3.0 * p / 4.0, 0.0)
            + x.mat * w
            + y.mat * w
            + z.mat * w;
        Ok(DensityMatrix { mat })
    }

    /// Phase-flip channel with explicit probability: ρ → (1−p)ρ + p ZρZ.
    pub fn dephase_prob(&self, qubit: usize, p: f64) -> Result<DensityMatrix, QlinkError> {
        self.check_qubit(qubit)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(QlinkError::InvalidProbability(p));
        }
        if p == 0.0 {
            return Ok(self.clone());
        }
        let z = self.apply_single_qubit(qubit, &pauli_z())?;
        let mat = self.mat.clone() * C64::new(1.0 - p, 0.0) + z.mat * C64::new(p, 0.0);
        Ok(DensityMatrix { mat })
    }

    /// Partial trace keeping the listed qubits (ascending order preserved).
    pub fn partial_trace_keep(&self, keep: &[usize]) -> Result<DensityMatrix, QlinkError> {
        let n = self.num_qubits() as usize;
        for &q in keep {
            self.check_qubit(q)?;
        }
        debug_assert!(keep.windows(2).all(|w| w[0] < w[1]));
        let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        let kd = 1usize << keep.len();
        let td = 1usize << traced.len();
        let mut out = DMatrix::zeros(kd, kd);
        // Full index from kept-part bits and traced-part bits.
        let assemble = |kbits: usize, tbits: usize| -> usize {
            let mut idx = 0usize;
            for (pos, &q) in keep.iter().enumerate() {
                let bit = (kbits >> (keep.len() - 1 - pos)) & 1;
                idx |= bit << (n - 1 - q);
            }
            for (pos, &q) in traced.iter().enumerate() {
                let bit = (tbits >> (traced.len() - 1 - pos)) & 1;
                idx |= bit << (n - 1 - q);
            }
            idx
        };
        for r in 0..kd {
            for c in 0..kd {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..td {
                    acc += self.mat[(assemble(r, t), assemble(c, t))];
                }
                out[(r, c)] = acc;
            }
        }
        Ok(DensityMatrix { mat: out })
    }

    /// Project onto `proj`, renormalize. Returns the outcome probability and
    /// the post-measurement state, or `None` when the probability vanishes.
    pub fn project(&self, proj: &DMatrix<C64>) -> Option<(DensityMatrix, f64)> {
        let reduced = proj * &self.mat * proj.adjoint();
        let p = reduced.trace().re;
        if p < 1e-15 {
            return None;
        }
        Some((
            DensityMatrix {
                mat: reduced * C64::new(1.0 / p, 0.0),
            },
            p,
        ))
    }
}

pub fn pauli_x() -> DMatrix<C64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
        ],
    )
}

pub fn pauli_y() -> DMatrix<C64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(0.0, 0.0),
            C64::new(0.0, -1.0),
            C64::new(0.0, 1.0),
            C64::new(0.0, 0.0),
        ],
    )
}

pub fn pauli_z() -> DMatrix<C64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(-1.0, 0.0),
        ],
    )
}

/// I_{2^q} ⊗ op ⊗ I_{2^{n-1-q}} under the MSB-first qubit convention.
pub fn embed_single(op: &DMatrix<C64>, qubit: usize, n: usize) -> DMatrix<C64> {
    let left = DMatrix::<C64>::identity(1 << qubit, 1 << qubit);
    let right = DMatrix::<C64>::identity(1 << (n - 1 - qubit), 1 << (n - 1 - qubit));
    left.kronecker(op).kronecker(&right)
}
