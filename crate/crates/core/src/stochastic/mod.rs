//! Monte Carlo realizations of the collapse dynamics: the nonlinear and
//! linear stochastic Schrödinger equations, and the Gaussian-ansatz
//! solution of the linear one.

pub(crate) mod ensemble;
mod gaussian;
mod sse;
mod wiener;

pub use ensemble::{
    ensemble_density, ensemble_offdiag, ensemble_offdiag_in, sample_f_s, DensityEstimate,
    EnsembleEstimate, EnsemblePoint, EnsembleSeries, Moments, Scheme, CHUNK, MAX_ABORT_FRACTION,
    MIN_TRAJECTORIES,
};
pub use gaussian::{
    branch_overlap, correlation_kernel, f_factorized, f_s_from_kernel, f_s_sample, gaussian_evolve,
    ground_width, kernel_double_integral, phase_coupling, z_process, Factorized, GaussianAnsatz,
    GaussianEvolver,
};
pub use sse::{
    initial_amplitudes, step_linear, step_nonlinear, trajectory_offdiag, SseOperators, SseWork,
    NORM_CEILING, NORM_FLOOR,
};
pub use wiener::{check_grid, generate_path, SampleGrid, WienerPath, WienerStream};

use thiserror::Error;

use crate::fock::{FockError, Space};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticError {
    #[error("invalid time grid: {0}")]
    BadGrid(String),
    #[error("eta must be non-negative and finite (got {0})")]
    BadEta(f64),
    #[error("branch must be 0 or 1 (got {0})")]
    BadBranch(u8),
    #[error("expected a photon⊗mirror state, got {0}")]
    WrongSpace(Space),
    #[error("state norm collapsed to {norm:e}")]
    NormCollapse { norm: f64 },
    #[error("state norm overflowed ({norm:e})")]
    NormOverflow { norm: f64 },
    #[error("Gaussian is not normalizable (Re a = {0})")]
    NotNormalizable(f64),
    #[error("need at least {min} trajectories (got {n})")]
    TooFewTrajectories { n: usize, min: usize },
    #[error("{aborted} of {total} trajectories aborted (first: {first})")]
    TooManyAborts {
        aborted: usize,
        total: usize,
        first: String,
    },
    #[error(transparent)]
    Fock(#[from] FockError),
}
