//! Physical parameterization of the interferometer and every closed-form
//! result for the photon visibility.
//!
//! Conventions: ℏ = 1, so `omega_m`, `coupling` and the arm Hamiltonians are
//! angular frequencies. `sigma` keeps length units so `q = σ (b + b†)` is a
//! length.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expm::frobenius_diff;
use crate::fock::{
    self, annihilation, coherent_state, creation, lift_mirror, number, photon_projector,
    quadrature, ComplexOperator, FockDimension, FockError, Space, StateVector,
};
use crate::units::Units;

/// Relative tolerance for the derived-parameter consistency checks.
const RELATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{name} must be positive and finite (got {value})")]
    NotPositive { name: &'static str, value: f64 },
    #[error("coupling {given} disagrees with omega_c * sigma / L = {derived}")]
    CouplingMismatch { given: f64, derived: f64 },
    #[error("sigma {given} disagrees with sqrt(1 / (2 M omega_m)) = {derived}")]
    WidthMismatch { given: f64, derived: f64 },
}

/// Interferometer and mirror constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    /// Photon angular frequency.
    pub omega_c: f64,
    /// Mirror angular frequency.
    pub omega_m: f64,
    /// Optomechanical coupling `G`.
    pub coupling: f64,
    /// Ground-state wavepacket width.
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity_length: Option<f64>,
    #[serde(default)]
    pub units: Units,
}

fn positive(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ParamError::NotPositive { name, value })
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= RELATION_TOL * a.abs().max(b.abs())
}

impl ExperimentParams {
    pub fn new(omega_c: f64, omega_m: f64, coupling: f64, sigma: f64) -> Result<Self, ParamError> {
        let p = Self {
            omega_c,
            omega_m,
            coupling,
            sigma,
            mass: None,
            cavity_length: None,
            units: Units::NATURAL,
        };
        p.validate()?;
        Ok(p)
    }

    /// Dimensionless setup with `omega_m = sigma = 1`, `coupling = kappa`.
    pub fn dimensionless(kappa: f64) -> Self {
        Self::new(1.0e3, 1.0, kappa, 1.0).expect("valid dimensionless parameters")
    }

    /// Derives `G = omega_c sigma / L`.
    pub fn from_cavity(
        omega_c: f64,
        omega_m: f64,
        sigma: f64,
        cavity_length: f64,
    ) -> Result<Self, ParamError> {
        positive("cavity_length", cavity_length)?;
        let mut p = Self::new(omega_c, omega_m, omega_c * sigma / cavity_length, sigma)?;
        p.cavity_length = Some(cavity_length);
        Ok(p)
    }

    pub fn with_mass(mut self, mass: f64) -> Result<Self, ParamError> {
        self.mass = Some(mass);
        self.validate()?;
        Ok(self)
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        positive("omega_c", self.omega_c)?;
        positive("omega_m", self.omega_m)?;
        positive("sigma", self.sigma)?;
        // G = 0 is the decoupled limit and stays admissible.
        if !(self.coupling >= 0.0 && self.coupling.is_finite()) {
            return Err(ParamError::NotPositive {
                name: "coupling",
                value: self.coupling,
            });
        }
        if let Some(l) = self.cavity_length {
            positive("cavity_length", l)?;
            let derived = self.omega_c * self.sigma / l;
            if !close(self.coupling, derived) {
                return Err(ParamError::CouplingMismatch {
                    given: self.coupling,
                    derived,
                });
            }
        }
        if let Some(m) = self.mass {
            positive("mass", m)?;
            let derived = (1.0 / (2.0 * m * self.omega_m)).sqrt();
            if !close(self.sigma, derived) {
                return Err(ParamError::WidthMismatch {
                    given: self.sigma,
                    derived,
                });
            }
        }
        Ok(())
    }

    /// `κ = G / ω_m`.
    pub fn kappa(&self) -> f64 {
        self.coupling / self.omega_m
    }

    /// Maximum excursion of the mirror centre of mass, `ℓ = 4κσ`.
    pub fn ell(&self) -> f64 {
        4.0 * self.kappa() * self.sigma
    }

    /// Force per length, `g = G / σ`.
    pub fn g(&self) -> f64 {
        self.coupling / self.sigma
    }

    /// Mirror period `T = 2π / ω_m`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega_m
    }

    /// Effective mass `1 / (2 σ² ω_m)` implied by `σ` (ℏ = 1).
    pub fn effective_mass(&self) -> f64 {
        self.mass
            .unwrap_or_else(|| 1.0 / (2.0 * self.sigma * self.sigma * self.omega_m))
    }

    /// Truncation for evolutions up to `t_end` under stochasticity `eta`.
    pub fn truncation(&self, eta: f64, t_end: f64) -> FockDimension {
        let heating = eta * self.sigma * self.sigma * t_end.max(0.0);
        FockDimension::from_truncation_rule(2.0 * self.kappa(), heating)
    }
}

/// Where a visibility value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ClosedForm,
    MasterEquation,
    MonteCarlo,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::ClosedForm => "closed_form",
            Source::MasterEquation => "master_equation",
            Source::MonteCarlo => "monte_carlo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityRecord {
    pub t: f64,
    /// `f = Tr_m ρ_OD`.
    pub f: Complex64,
    pub nu: f64,
    pub source: Source,
}

impl VisibilityRecord {
    pub fn new(t: f64, f: Complex64, source: Source) -> Self {
        Self {
            t,
            f,
            nu: f.norm(),
            source,
        }
    }
}

/// Full Hamiltonian on the one-photon ⊗ mirror space:
/// `ω_c + ω_m b†b − G P_A (b + b†)`, with `P_A` the arm-A projector.
pub fn build_hamiltonian(p: &ExperimentParams, dim: FockDimension) -> ComplexOperator {
    let photon_energy = ComplexOperator::identity(Space::Joint(dim)).scale(p.omega_c.into());
    let mirror = lift_mirror(&number(dim).scale(p.omega_m.into())).expect("mirror operator");
    let coupling = fock::tensor(
        &photon_projector(1),
        &quadrature(dim).scale((-p.coupling).into()),
    )
    .expect("photon ⊗ mirror");
    photon_energy
        .add(&mirror)
        .and_then(|h| h.add(&coupling))
        .expect("same joint space")
}

/// Mirror Hamiltonians conditioned on the photon arm, as frequencies:
/// `H_A = ω_m b†b − G (b + b†)` and `H_B = ω_m b†b`.
pub fn arm_hamiltonians(
    p: &ExperimentParams,
    dim: FockDimension,
) -> (ComplexOperator, ComplexOperator) {
    let hb = number(dim).scale(p.omega_m.into());
    let ha = hb
        .sub(&quadrature(dim).scale(p.coupling.into()))
        .expect("same mirror space");
    (ha, hb)
}

/// The evolved two-branch state of the standard-QM interferometer.
#[derive(Debug, Clone)]
pub struct AnalyticState {
    /// Common photon phase `e^{−iω_c t}`.
    pub global_phase: Complex64,
    /// Relative phase of the arm-A branch, `e^{iκ²(ω_m t − sin ω_m t)}`.
    pub branch_phase: Complex64,
    pub alpha_t: Complex64,
    pub state: StateVector,
}

/// Mirror coherent amplitude `α_t = κ (1 − e^{−iω_m t})`.
pub fn coherent_amplitude(p: &ExperimentParams, t: f64) -> Complex64 {
    p.kappa() * (1.0 - Complex64::from_polar(1.0, -p.omega_m * t))
}

fn qm_phase(p: &ExperimentParams, t: f64) -> f64 {
    let k = p.kappa();
    let x = p.omega_m * t;
    k * k * (x - x.sin())
}

pub fn analytic_state(
    p: &ExperimentParams,
    t: f64,
    dim: FockDimension,
) -> Result<AnalyticState, FockError> {
    let alpha_t = coherent_amplitude(p, t);
    let global_phase = Complex64::from_polar(1.0, -p.omega_c * t);
    let branch_phase = Complex64::from_polar(1.0, qm_phase(p, t));
    let vac = StateVector::basis(Space::Mirror(dim), 0);
    let displaced = coherent_state(alpha_t, dim)?;
    let amp = global_phase * FRAC_1_SQRT_2;
    let state = StateVector::joint([amp, amp * branch_phase], [&vac, &displaced])?;
    Ok(AnalyticState {
        global_phase,
        branch_phase,
        alpha_t,
        state,
    })
}

/// Scalars of the normal-ordered factorization
/// `e^{−iH_A t} e^{iH_B t} = N_t e^{α_t b†} e^{β_t b}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BakerHausdorffFactors {
    pub n_t: Complex64,
    pub alpha_t: Complex64,
    pub beta_t: Complex64,
}

impl BakerHausdorffFactors {
    /// `N_t e^{α_t b†} e^{β_t b}`.
    pub fn normal_ordered(&self, dim: FockDimension) -> Result<ComplexOperator, FockError> {
        let up = creation(dim).scale(self.alpha_t).exp()?;
        let down = annihilation(dim).scale(self.beta_t).exp()?;
        Ok(up.mul(&down)?.scale(self.n_t))
    }

    /// `N_t e^{β_t b†} e^{α_t b}`, the factorization of
    /// `e^{iH_B t} e^{−iH_A t}`.
    pub fn adjoint_normal_ordered(&self, dim: FockDimension) -> Result<ComplexOperator, FockError> {
        let up = creation(dim).scale(self.beta_t).exp()?;
        let down = annihilation(dim).scale(self.alpha_t).exp()?;
        Ok(up.mul(&down)?.scale(self.n_t))
    }
}

pub fn bh_factors(p: &ExperimentParams, t: f64) -> BakerHausdorffFactors {
    let k = p.kappa();
    let x = p.omega_m * t;
    let e = Complex64::from_polar(1.0, -x);
    let n_t = (-(k * k) * (1.0 - Complex64::new(0.0, x) - e)).exp();
    BakerHausdorffFactors {
        n_t,
        alpha_t: k * (1.0 - e),
        beta_t: -k * (1.0 - e.conj()),
    }
}

/// Relative residuals of both operator orderings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BakerHausdorffCheck {
    /// `e^{−iH_A t} e^{iH_B t}` against `N e^{α b†} e^{β b}`.
    pub residual: f64,
    /// `e^{iH_B t} e^{−iH_A t}` against `N e^{β b†} e^{α b}`.
    pub adjoint_residual: f64,
}

/// Checks the normal-ordered factorization with dense exponentials.
///
/// The unitary side is exponentiated on a space padded by `n_levels / 2`
/// and cut back to `n_levels`, so the compared entries do not see the
/// reflecting truncation edge of `H_A`. The normal-ordered side needs no
/// padding: its factors are nilpotent and their truncated matrices are
/// exact. Only columns below `n_levels / 2` enter the Frobenius ratio.
pub fn verify_baker_hausdorff(
    p: &ExperimentParams,
    t: f64,
    dim: FockDimension,
) -> Result<BakerHausdorffCheck, FockError> {
    let n = dim.n_levels();
    let padded = FockDimension::new(n + n / 2)?;
    let (ha, hb) = arm_hamiltonians(p, padded);
    let ua = ha.scale(Complex64::new(0.0, -t)).exp()?;
    let ub = hb.scale(Complex64::new(0.0, t)).exp()?;
    let forward = ua.mul(&ub)?;
    let backward = ub.mul(&ua)?;

    let factors = bh_factors(p, t);
    let rhs = factors.normal_ordered(dim)?;
    let rhs_adj = factors.adjoint_normal_ordered(dim)?;

    let cols = (n / 2).max(1);
    let ratio = |lhs: &ComplexOperator, rhs: &ComplexOperator| {
        let l = lhs.matrix().slice(ndarray::s![..n, ..cols]).to_owned();
        let r = rhs.matrix().slice(ndarray::s![..n, ..cols]).to_owned();
        let denom = l.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        frobenius_diff(&l, &r) / denom
    };
    Ok(BakerHausdorffCheck {
        residual: ratio(&forward, &rhs),
        adjoint_residual: ratio(&backward, &rhs_adj),
    })
}

/// Standard-QM visibility `e^{−κ²(1 − cos ω_m t)}`.
pub fn visibility_qm(p: &ExperimentParams, t: f64) -> f64 {
    let k = p.kappa();
    (-(k * k) * (1.0 - (p.omega_m * t).cos())).exp()
}

/// Time profile of the collapse damping,
/// `t − (4/3) sin(ω t)/ω + sin(2ω t)/(6ω)`.
pub fn collapse_time_profile(omega_m: f64, t: f64) -> f64 {
    let x = omega_m * t;
    if x.abs() < 1e-2 {
        // Leading terms cancel; the series is x^5/30 − x^7/252.
        let x2 = x * x;
        return x2 * x2 * x * (1.0 / 30.0 - x2 / 252.0) / omega_m;
    }
    t - (4.0 / 3.0) * x.sin() / omega_m + (2.0 * x).sin() / (6.0 * omega_m)
}

/// Exponent of the collapse-induced damping, `(3/16) η ℓ² × profile`.
pub fn collapse_exponent(p: &ExperimentParams, eta: f64, t: f64) -> f64 {
    let l = p.ell();
    3.0 / 16.0 * eta * l * l * collapse_time_profile(p.omega_m, t)
}

/// The standard-QM factor `e^{iκ²(ω_m t − sin ω_m t)} e^{−κ²(1 − cos ω_m t)}`.
pub fn f_standard(p: &ExperimentParams, t: f64) -> Complex64 {
    Complex64::from_polar(visibility_qm(p, t), qm_phase(p, t))
}

/// `f = Tr_m ρ_OD(t)` including collapse damping.
pub fn f_closed_form(p: &ExperimentParams, eta: f64, t: f64) -> Complex64 {
    f_standard(p, t) * (-collapse_exponent(p, eta, t)).exp()
}

pub fn visibility_collapse(p: &ExperimentParams, eta: f64, t: f64) -> f64 {
    f_closed_form(p, eta, t).norm()
}

/// Visibility loss exponent after one mirror period,
/// `Λ = (3/16) η ℓ² (2π/ω_m)`.
pub fn damping_exponent(p: &ExperimentParams, eta: f64) -> f64 {
    let l = p.ell();
    3.0 / 16.0 * eta * l * l * p.period()
}

/// Stochasticity giving damping exponent `lambda` per period.
pub fn eta_for_damping(p: &ExperimentParams, lambda: f64) -> f64 {
    let l = p.ell();
    lambda / (3.0 / 16.0 * l * l * p.period())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(kappa: f64) -> ExperimentParams {
        ExperimentParams::dimensionless(kappa)
    }

    fn dim(n: usize) -> FockDimension {
        FockDimension::new(n).unwrap()
    }

    #[test]
    fn derived_quantities() {
        let p = ExperimentParams::new(10.0, 2.0, 3.0, 0.5).unwrap();
        assert_eq!(p.kappa(), 1.5);
        assert_eq!(p.ell(), 3.0);
        assert_eq!(p.g(), 6.0);
    }

    #[test]
    fn parameter_relations_are_enforced() {
        let p = ExperimentParams::from_cavity(100.0, 1.0, 0.2, 4.0).unwrap();
        assert!((p.coupling - 5.0).abs() < 1e-15);
        let sigma = (1.0f64 / (2.0 * 3.0 * 1.0)).sqrt();
        let q = ExperimentParams::new(1.0, 1.0, 0.1, sigma).unwrap();
        assert!(q.with_mass(3.0).is_ok());
        assert!(matches!(
            q.with_mass(4.0),
            Err(ParamError::WidthMismatch { .. })
        ));
        let mut bad = p;
        bad.coupling = 4.0;
        assert!(matches!(
            bad.validate(),
            Err(ParamError::CouplingMismatch { .. })
        ));
        assert!(ExperimentParams::new(1.0, -1.0, 0.1, 1.0).is_err());
        assert!(ExperimentParams::new(1.0, 1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn decoupled_hamiltonian_is_block_diagonal() {
        let mut p = params(0.0);
        p.omega_c = 3.0;
        let d = dim(6);
        let h = build_hamiltonian(&p, d);
        let want = number(d)
            .scale(p.omega_m.into())
            .add(&ComplexOperator::identity(Space::Mirror(d)).scale(3.0.into()))
            .unwrap();
        assert_eq!(h.photon_block(0, 0).unwrap(), want);
        assert_eq!(h.photon_block(1, 1).unwrap(), want);
        assert_eq!(h.photon_block(0, 1).unwrap().frobenius_norm(), 0.0);
    }

    #[test]
    fn hamiltonian_vacuum_energy_and_hermiticity() {
        let p = ExperimentParams::new(7.5, 1.3, 0.9, 1.0).unwrap();
        let d = dim(10);
        let h = build_hamiltonian(&p, d);
        // |1_A 0_B, 0_m> sits at joint index n_levels.
        assert_eq!(h.matrix()[[10, 10]], Complex64::new(7.5, 0.0));
        assert_eq!(h.hermiticity_residual(), 0.0);
    }

    #[test]
    fn arm_hamiltonians_limits() {
        let d = dim(12);
        let (ha, hb) = arm_hamiltonians(&params(0.0), d);
        assert_eq!(ha, hb);
        for k in 0..12 {
            assert_eq!(hb.matrix()[[k, k]], Complex64::new(k as f64, 0.0));
        }
    }

    #[test]
    fn displaced_oscillator_ground_energy() {
        let p = params(1.0);
        let (ha, _) = arm_hamiltonians(&p, dim(40));
        let n = 40;
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| ha.matrix()[[i, j]].re);
        let eig = nalgebra::SymmetricEigen::new(m);
        let ground = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let k = p.kappa();
        assert!((ground + k * k * p.omega_m).abs() < 1e-10, "{ground}");
    }

    #[test]
    fn analytic_state_at_start_and_period() {
        let p = params(0.7);
        let d = dim(30);
        let s0 = analytic_state(&p, 0.0, d).unwrap();
        let vac = StateVector::basis(Space::Mirror(d), 0);
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let psi0 = StateVector::joint([h, h], [&vac, &vac]).unwrap();
        assert!(s0.state.distance(&psi0) < 1e-15);

        let t = p.period();
        let s = analytic_state(&p, t, d).unwrap();
        assert!(s.alpha_t.norm() < 1e-15);
        let want = Complex64::from_polar(1.0, 2.0 * PI * 0.49);
        assert!((s.branch_phase - want).norm() < 1e-12);
    }

    #[test]
    fn analytic_state_matches_dense_propagation() {
        let p = params(1.0);
        let d = dim(40);
        let t = 1.3;
        let s = analytic_state(&p, t, d).unwrap();
        let psi0 = analytic_state(&p, 0.0, d).unwrap().state;
        // Propagate on a padded space to keep the truncation edge away.
        let big = dim(80);
        let h = build_hamiltonian(&p, big);
        let u = h.scale(Complex64::new(0.0, -t)).exp().unwrap();
        let mut psi_big = ndarray::Array1::zeros(160);
        for ph in 0..2 {
            for m in 0..40 {
                psi_big[ph * 80 + m] = psi0.amplitudes()[ph * 40 + m];
            }
        }
        let out = u.matrix().dot(&psi_big);
        let mut diff = 0.0;
        for ph in 0..2 {
            for m in 0..80 {
                let want = if m < 40 {
                    s.state.amplitudes()[ph * 40 + m]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                diff += (out[ph * 80 + m] - want).norm_sqr();
            }
        }
        assert!(diff.sqrt() < 1e-8, "{}", diff.sqrt());
    }

    #[test]
    fn bh_factor_values() {
        let p = params(0.6);
        let f0 = bh_factors(&p, 0.0);
        assert_eq!(f0.n_t, Complex64::new(1.0, 0.0));
        assert_eq!(f0.alpha_t.norm(), 0.0);
        assert_eq!(f0.beta_t.norm(), 0.0);

        let f = bh_factors(&p, PI);
        let k = 0.6;
        assert!((f.alpha_t - Complex64::new(2.0 * k, 0.0)).norm() < 1e-15);
        assert!((f.beta_t - Complex64::new(-2.0 * k, 0.0)).norm() < 1e-15);
        let want = (-2.0 * k * k) * 1.0;
        let want = Complex64::from_polar(want.exp(), PI * k * k);
        assert!((f.n_t - want).norm() < 1e-14);
    }

    #[test]
    fn bh_identity_numerically() {
        let p = params(0.8);
        let d = dim(60);
        let c0 = verify_baker_hausdorff(&p, 0.0, d).unwrap();
        assert!(c0.residual < 1e-14 && c0.adjoint_residual < 1e-14);
        for t in [0.5, PI, 5.0] {
            let c = verify_baker_hausdorff(&p, t, d).unwrap();
            assert!(c.residual <= 1e-8, "t={t}: {}", c.residual);
            assert!((c.residual - c.adjoint_residual).abs() <= 1e-10);
        }
    }

    #[test]
    fn visibility_values() {
        let p = params(1.0);
        assert_eq!(visibility_qm(&p, 0.0), 1.0);
        assert!((visibility_qm(&p, PI) - (-2.0f64).exp()).abs() < 1e-15);
        assert!((visibility_qm(&p, 2.0 * PI) - 1.0).abs() < 1e-15);
        assert!((visibility_qm(&p, PI) - 0.135_335).abs() < 1e-6);
    }

    #[test]
    fn closed_form_f() {
        let p = params(1.0);
        for t in [0.0, 0.4, 2.0, 5.5] {
            assert_eq!(f_closed_form(&p, 0.0, t), f_standard(&p, t));
        }
        assert_eq!(f_closed_form(&p, 3.0, 0.0), Complex64::new(1.0, 0.0));
        // ℓ = 4, t = T: |f| = e^{−(3/16)·16·2π}.
        let v = f_closed_form(&p, 1.0, 2.0 * PI).norm();
        assert!((v / (-6.0 * PI).exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collapse_visibility_examples() {
        // η = 1, ℓ = 1, ω_m = 2π, t = 1.
        let p = ExperimentParams::new(100.0, 2.0 * PI, 0.25 * 2.0 * PI, 1.0).unwrap();
        assert!((p.ell() - 1.0).abs() < 1e-15);
        let v = visibility_collapse(&p, 1.0, 1.0);
        assert!((v - (-3.0f64 / 16.0).exp()).abs() < 1e-14);
        assert!((damping_exponent(&p, 1.0) - 3.0 / 16.0).abs() < 1e-15);
        assert_eq!(damping_exponent(&p, 0.0), 0.0);
    }

    #[test]
    fn series_branch_is_continuous() {
        let w = 1.7;
        for x in [0.009f64, 0.0099999, 0.01, 0.0100001] {
            let t = x / w;
            let direct = t - (4.0 / 3.0) * x.sin() / w + (2.0 * x).sin() / (6.0 * w);
            let got = collapse_time_profile(w, t);
            assert!((got - direct).abs() < 1e-15, "{x}: {got} vs {direct}");
        }
    }

    proptest! {
        #[test]
        fn beta_is_minus_conjugate_alpha(t in -50.0f64..50.0, k in 0.0f64..2.0) {
            let f = bh_factors(&params(k), t);
            prop_assert!((f.beta_t + f.alpha_t.conj()).norm() < 1e-14);
            let mag = (-(k * k) * (1.0 - t.cos())).exp();
            prop_assert!((f.n_t.norm() - mag).abs() < 1e-12);
            prop_assert!(f.n_t.norm() <= 1.0 + 1e-15);
        }

        #[test]
        fn qm_visibility_periodic(t in 0.0f64..20.0, k in 0.0f64..2.0, w in 0.2f64..5.0) {
            let p = ExperimentParams::new(1.0, w, k * w, 1.0).unwrap();
            let a = visibility_qm(&p, t);
            let b = visibility_qm(&p, t + p.period());
            prop_assert!((a - b).abs() < 1e-10);
        }

        #[test]
        fn revival_at_whole_periods(k_int in 1u32..6, kappa in 0.0f64..2.0) {
            let p = params(kappa);
            let t = k_int as f64 * p.period();
            prop_assert!((visibility_qm(&p, t) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn damping_phase_untouched(t in 0.0f64..20.0, eta in 0.0f64..3.0, k in 0.05f64..1.5) {
            let p = params(k);
            let a = f_closed_form(&p, eta, t);
            let b = f_standard(&p, t);
            prop_assert!((a.arg() - b.arg()).abs() < 1e-12 || a.norm() < 1e-200);
            prop_assert!(visibility_collapse(&p, eta, t) <= visibility_qm(&p, t) * (1.0 + 1e-15));
        }

        #[test]
        fn one_period_damping(eta in 0.0f64..2.0, k in 0.05f64..1.5, w in 0.3f64..4.0) {
            let p = ExperimentParams::new(1.0, w, k * w, 0.7).unwrap();
            let v = visibility_collapse(&p, eta, p.period());
            prop_assert!((v * damping_exponent(&p, eta).exp() - 1.0).abs() < 1e-10);
        }
    }
}
