//! Dense linear algebra on the one-photon sector tensored with a truncated
//! mirror Fock space.
//!
//! Joint-space indices put the photon outermost: index `p * n + m` is photon
//! basis state `p` and mirror Fock state `m`. Photon state `0` is
//! `|0>_A |1>_B` (photon in the reference arm B) and photon state `1` is
//! `|1>_A |0>_B` (photon in the mirror arm A).

use ndarray::{s, Array1, Array2};
use num_complex::Complex64;
use thiserror::Error;

use crate::expm::{self, ExpmFailure};

/// Pre-renormalization probability outside the truncation above which a
/// state is rejected.
pub const LEAKAGE_BUDGET: f64 = 1.0e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("Fock dimension must be at least 2 (got {0})")]
    InvalidDimension(usize),
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Space,
        right: Space,
    },
    #[error("matrix is {rows}x{cols}, expected {expected}x{expected} for {space}")]
    BadMatrix {
        rows: usize,
        cols: usize,
        expected: usize,
        space: Space,
    },
    #[error("truncation leakage {leakage:.3e} exceeds budget {budget:.1e} at n_levels = {n_levels}")]
    Truncation {
        leakage: f64,
        budget: f64,
        n_levels: usize,
    },
    #[error("matrix exponential rejected input: {0:?}")]
    Exponential(ExpmFailure),
}

/// Number of mirror Fock states kept (indices `0..n_levels`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockDimension(usize);

impl FockDimension {
    pub fn new(n_levels: usize) -> Result<Self, FockError> {
        if n_levels < 2 {
            return Err(FockError::InvalidDimension(n_levels));
        }
        Ok(Self(n_levels))
    }

    pub fn n_levels(self) -> usize {
        self.0
    }

    /// Truncation for states displaced by at most `alpha_max`, with
    /// `heating` extra quanta pumped in by collapse noise (`η σ² t`).
    ///
    /// `ceil(|α|² + 8|α| + 12 + 12 h)`. Without heating the Poisson tail
    /// beyond the cut is below 1e-12.
    pub fn from_truncation_rule(alpha_max: f64, heating: f64) -> Self {
        let a = alpha_max.abs();
        let h = heating.max(0.0);
        let n = (a * a + 8.0 * a + 12.0 + 12.0 * h).ceil() as usize;
        Self(n.max(2))
    }
}

/// Which Hilbert space an operator or state lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Space {
    /// The two one-photon basis states.
    Photon,
    Mirror(FockDimension),
    Joint(FockDimension),
}

impl Space {
    pub fn size(self) -> usize {
        match self {
            Space::Photon => 2,
            Space::Mirror(d) => d.0,
            Space::Joint(d) => 2 * d.0,
        }
    }
}

impl std::fmt::Display for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Space::Photon => write!(f, "photon(2)"),
            Space::Mirror(d) => write!(f, "mirror({})", d.0),
            Space::Joint(d) => write!(f, "photon⊗mirror(2x{})", d.0),
        }
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Square dense complex matrix tagged with its space.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexOperator {
    space: Space,
    matrix: Array2<Complex64>,
}

impl ComplexOperator {
    pub fn from_matrix(space: Space, matrix: Array2<Complex64>) -> Result<Self, FockError> {
        let n = space.size();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(FockError::BadMatrix {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                expected: n,
                space,
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn zeros(space: Space) -> Self {
        let n = space.size();
        Self {
            space,
            matrix: Array2::zeros((n, n)),
        }
    }

    pub fn identity(space: Space) -> Self {
        Self {
            space,
            matrix: Array2::eye(space.size()),
        }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<Complex64> {
        self.matrix
    }

    pub fn dagger(&self) -> Self {
        Self {
            space: self.space,
            matrix: self.matrix.t().mapv(|z| z.conj()),
        }
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self {
            space: self.space,
            matrix: self.matrix.mapv(|z| z * k),
        }
    }

    fn check(&self, other: &Self, op: &'static str) -> Result<(), FockError> {
        if self.space != other.space {
            return Err(FockError::ShapeMismatch {
                op,
                left: self.space,
                right: other.space,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, FockError> {
        self.check(other, "add")?;
        Ok(Self {
            space: self.space,
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FockError> {
        self.check(other, "sub")?;
        Ok(Self {
            space: self.space,
            matrix: &self.matrix - &other.matrix,
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self, FockError> {
        self.check(other, "mul")?;
        Ok(Self {
            space: self.space,
            matrix: self.matrix.dot(&other.matrix),
        })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self, FockError> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector, FockError> {
        if self.space != psi.space {
            return Err(FockError::ShapeMismatch {
                op: "apply",
                left: self.space,
                right: psi.space,
            });
        }
        Ok(StateVector {
            space: self.space,
            amplitudes: self.matrix.dot(&psi.amplitudes),
            norm_leakage: psi.norm_leakage,
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_residual(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[[i, j]] - self.matrix[[j, i]].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_residual() <= tol
    }

    pub fn trace(&self) -> Complex64 {
        trace(self)
    }

    /// `exp(self)`; see [`matrix_exp`].
    pub fn exp(&self) -> Result<Self, FockError> {
        matrix_exp(self)
    }

    /// Mirror-space block `(p, q)` of a joint-space operator.
    pub fn photon_block(&self, p: usize, q: usize) -> Result<Self, FockError> {
        let Space::Joint(dim) = self.space else {
            return Err(FockError::ShapeMismatch {
                op: "photon_block",
                left: self.space,
                right: Space::Joint(FockDimension(2)),
            });
        };
        let n = dim.0;
        assert!(p < 2 && q < 2, "photon index out of range");
        Ok(Self {
            space: Space::Mirror(dim),
            matrix: self
                .matrix
                .slice(s![p * n..(p + 1) * n, q * n..(q + 1) * n])
                .to_owned(),
        })
    }
}

/// Ladder operator `b` with `b[n-1, n] = sqrt(n)`.
pub fn annihilation(dim: FockDimension) -> ComplexOperator {
    let n = dim.0;
    let mut m = Array2::zeros((n, n));
    for k in 1..n {
        m[[k - 1, k]] = c((k as f64).sqrt());
    }
    ComplexOperator {
        space: Space::Mirror(dim),
        matrix: m,
    }
}

pub fn creation(dim: FockDimension) -> ComplexOperator {
    annihilation(dim).dagger()
}

/// `b†b`, exactly diagonal.
pub fn number(dim: FockDimension) -> ComplexOperator {
    let n = dim.0;
    let mut m = Array2::zeros((n, n));
    for k in 0..n {
        m[[k, k]] = c(k as f64);
    }
    ComplexOperator {
        space: Space::Mirror(dim),
        matrix: m,
    }
}

/// `b + b†`.
pub fn quadrature(dim: FockDimension) -> ComplexOperator {
    let b = annihilation(dim);
    b.add(&b.dagger()).expect("same space")
}

/// Photon projector onto basis state `p`.
pub fn photon_projector(p: usize) -> ComplexOperator {
    let mut m = Array2::zeros((2, 2));
    m[[p, p]] = c(1.0);
    ComplexOperator {
        space: Space::Photon,
        matrix: m,
    }
}

/// Scaling-and-squaring exponential of a dense operator.
pub fn matrix_exp(a: &ComplexOperator) -> Result<ComplexOperator, FockError> {
    let matrix = expm::expm(&a.matrix).map_err(FockError::Exponential)?;
    Ok(ComplexOperator {
        space: a.space,
        matrix,
    })
}

/// Kronecker product with the photon index outermost.
pub fn tensor(
    photon_part: &ComplexOperator,
    mirror_part: &ComplexOperator,
) -> Result<ComplexOperator, FockError> {
    let Space::Mirror(dim) = mirror_part.space else {
        return Err(FockError::ShapeMismatch {
            op: "tensor",
            left: photon_part.space,
            right: mirror_part.space,
        });
    };
    if photon_part.space != Space::Photon {
        return Err(FockError::ShapeMismatch {
            op: "tensor",
            left: photon_part.space,
            right: mirror_part.space,
        });
    }
    let n = dim.0;
    let mut m = Array2::zeros((2 * n, 2 * n));
    for p in 0..2 {
        for q in 0..2 {
            let w = photon_part.matrix[[p, q]];
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            m.slice_mut(s![p * n..(p + 1) * n, q * n..(q + 1) * n])
                .assign(&mirror_part.matrix.mapv(|z| z * w));
        }
    }
    Ok(ComplexOperator {
        space: Space::Joint(dim),
        matrix: m,
    })
}

/// Lifts a mirror operator to `I_photon ⊗ op`.
pub fn lift_mirror(op: &ComplexOperator) -> Result<ComplexOperator, FockError> {
    tensor(&ComplexOperator::identity(Space::Photon), op)
}

pub fn trace(a: &ComplexOperator) -> Complex64 {
    a.matrix.diag().iter().sum()
}

/// Traces out the mirror, leaving the 2x2 photon matrix.
pub fn partial_trace_mirror(rho: &ComplexOperator) -> Result<ComplexOperator, FockError> {
    let Space::Joint(dim) = rho.space else {
        return Err(FockError::ShapeMismatch {
            op: "partial_trace_mirror",
            left: rho.space,
            right: Space::Joint(FockDimension(2)),
        });
    };
    let n = dim.0;
    let mut out = Array2::zeros((2, 2));
    for p in 0..2 {
        for q in 0..2 {
            out[[p, q]] = (0..n).map(|m| rho.matrix[[p * n + m, q * n + m]]).sum();
        }
    }
    Ok(ComplexOperator {
        space: Space::Photon,
        matrix: out,
    })
}

/// State vector with a record of the probability lost to truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    space: Space,
    amplitudes: Array1<Complex64>,
    norm_leakage: f64,
}

impl StateVector {
    pub fn from_amplitudes(space: Space, amplitudes: Array1<Complex64>) -> Result<Self, FockError> {
        if amplitudes.len() != space.size() {
            return Err(FockError::BadMatrix {
                rows: amplitudes.len(),
                cols: 1,
                expected: space.size(),
                space,
            });
        }
        Ok(Self {
            space,
            amplitudes,
            norm_leakage: 0.0,
        })
    }

    pub fn basis(space: Space, index: usize) -> Self {
        let mut amplitudes = Array1::zeros(space.size());
        amplitudes[index] = c(1.0);
        Self {
            space,
            amplitudes,
            norm_leakage: 0.0,
        }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn amplitudes(&self) -> &Array1<Complex64> {
        &self.amplitudes
    }

    pub fn norm_leakage(&self) -> f64 {
        self.norm_leakage
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&self, k: Complex64) -> Self {
        Self {
            space: self.space,
            amplitudes: self.amplitudes.mapv(|z| z * k),
            norm_leakage: self.norm_leakage,
        }
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Joint state `photon ⊗ mirror`; `photon` holds the two photon
    /// amplitudes.
    pub fn joint(photon: [Complex64; 2], mirror: [&StateVector; 2]) -> Result<Self, FockError> {
        let Space::Mirror(dim) = mirror[0].space else {
            return Err(FockError::ShapeMismatch {
                op: "joint",
                left: mirror[0].space,
                right: mirror[1].space,
            });
        };
        if mirror[1].space != mirror[0].space {
            return Err(FockError::ShapeMismatch {
                op: "joint",
                left: mirror[0].space,
                right: mirror[1].space,
            });
        }
        let n = dim.0;
        let mut amplitudes = Array1::zeros(2 * n);
        for p in 0..2 {
            for m in 0..n {
                amplitudes[p * n + m] = photon[p] * mirror[p].amplitudes[m];
            }
        }
        Ok(Self {
            space: Space::Joint(dim),
            amplitudes,
            norm_leakage: mirror[0].norm_leakage.max(mirror[1].norm_leakage),
        })
    }
}

/// Coherent state `|α>` truncated to `dim` and renormalized.
pub fn coherent_state(amplitude: Complex64, dim: FockDimension) -> Result<StateVector, FockError> {
    let n = dim.0;
    let mut amps = Array1::zeros(n);
    let mut cn = c((-0.5 * amplitude.norm_sqr()).exp());
    amps[0] = cn;
    for k in 1..n {
        cn = cn * amplitude / (k as f64).sqrt();
        amps[k] = cn;
    }
    let kept: f64 = amps.iter().map(|z: &Complex64| z.norm_sqr()).sum();
    let leakage = (1.0 - kept).max(0.0);
    if leakage > LEAKAGE_BUDGET {
        return Err(FockError::Truncation {
            leakage,
            budget: LEAKAGE_BUDGET,
            n_levels: n,
        });
    }
    let inv = 1.0 / kept.sqrt();
    amps.mapv_inplace(|z| z * inv);
    Ok(StateVector {
        space: Space::Mirror(dim),
        amplitudes: amps,
        norm_leakage: leakage,
    })
}

/// Density matrix on some space. Hermiticity and unit trace are checkable
/// properties rather than construction invariants, because the off-diagonal
/// photon block is neither.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexOperator);

impl DensityMatrix {
    pub fn new(op: ComplexOperator) -> Self {
        Self(op)
    }

    pub fn pure(psi: &StateVector) -> Self {
        let a = &psi.amplitudes;
        let n = a.len();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] = a[i] * a[j].conj();
            }
        }
        Self(ComplexOperator {
            space: psi.space,
            matrix: m,
        })
    }

    pub fn operator(&self) -> &ComplexOperator {
        &self.0
    }

    pub fn into_operator(self) -> ComplexOperator {
        self.0
    }

    pub fn space(&self) -> Space {
        self.0.space
    }

    pub fn trace(&self) -> Complex64 {
        trace(&self.0)
    }

    /// `ρ_OD = 2 <1_A 0_B| ρ |0_A 1_B>`.
    pub fn offdiagonal_block(&self) -> Result<ComplexOperator, FockError> {
        Ok(self.0.photon_block(1, 0)?.scale(c(2.0)))
    }
}
