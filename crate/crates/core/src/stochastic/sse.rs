//! Euler–Maruyama steps of the nonlinear (norm-preserving) and linear
//! stochastic Schrödinger equations on the photon ⊗ mirror space.
//!
//! The photon energy `ω_c` is the same in both branches, so it only adds a
//! global phase. It is dropped from the generator: an explicit step with
//! `ω_c dt ~ 1` would otherwise be wildly unstable.

use num_complex::Complex64;

use crate::experiment::ExperimentParams;
use crate::fock::{FockDimension, Space, StateVector};

use super::StochasticError;

/// Below this pre-normalization norm a nonlinear trajectory is dropped.
pub const NORM_FLOOR: f64 = 1e-12;
/// Above this squared norm a linear trajectory is dropped.
pub const NORM_CEILING: f64 = 1e30;

/// Banded generator pieces shared by both unravellings.
#[derive(Debug, Clone)]
pub struct SseOperators {
    n: usize,
    /// `−iH − (η/2) q²` per photon block: diagonal, first and second
    /// off-diagonals (symmetric).
    diag: [Vec<Complex64>; 2],
    off1: [Vec<Complex64>; 2],
    off2: Vec<f64>,
    /// `q = σ (b + b†)` first off-diagonal.
    q_off: Vec<f64>,
    eta: f64,
}

/// Scratch buffers for one trajectory.
#[derive(Debug, Clone)]
pub struct SseWork {
    d_psi: Vec<Complex64>,
    q_psi: Vec<Complex64>,
}

impl SseWork {
    pub fn new(dim: FockDimension) -> Self {
        let n = 2 * dim.n_levels();
        Self {
            d_psi: vec![Complex64::new(0.0, 0.0); n],
            q_psi: vec![Complex64::new(0.0, 0.0); n],
        }
    }
}

impl SseOperators {
    pub fn new(p: &ExperimentParams, eta: f64, dim: FockDimension) -> Self {
        let n = dim.n_levels();
        let s2 = p.sigma * p.sigma;
        let half = 0.5 * eta * s2;
        let i = Complex64::new(0.0, 1.0);
        let diag_for = |_branch: usize| -> Vec<Complex64> {
            (0..n)
                .map(|m| {
                    // Truncated X² diagonal: m + (m + 1), minus the edge term.
                    let x2 = m as f64 + if m + 1 < n { (m + 1) as f64 } else { 0.0 };
                    -i * (p.omega_m * m as f64) - half * x2
                })
                .collect()
        };
        let sq: Vec<f64> = (1..n).map(|m| (m as f64).sqrt()).collect();
        Self {
            n,
            diag: [diag_for(0), diag_for(1)],
            // Photon 0 is the free arm; photon 1 carries −G(b + b†).
            off1: [
                vec![Complex64::new(0.0, 0.0); n - 1],
                sq.iter().map(|s| i * (p.coupling * s)).collect(),
            ],
            off2: (0..n.saturating_sub(2))
                .map(|m| -half * (((m + 1) * (m + 2)) as f64).sqrt())
                .collect(),
            q_off: sq.iter().map(|s| p.sigma * s).collect(),
            eta,
        }
    }

    pub fn n_levels(&self) -> usize {
        self.n
    }

    fn apply(&self, psi: &[Complex64], work: &mut SseWork) {
        let n = self.n;
        for b in 0..2 {
            let x = &psi[b * n..(b + 1) * n];
            let d = &mut work.d_psi[b * n..(b + 1) * n];
            let q = &mut work.q_psi[b * n..(b + 1) * n];
            let (dg, o1, o2) = (&self.diag[b], &self.off1[b], &self.off2);
            for m in 0..n {
                let mut acc = dg[m] * x[m];
                let mut qa = Complex64::new(0.0, 0.0);
                if m >= 1 {
                    acc += o1[m - 1] * x[m - 1];
                    qa += x[m - 1] * self.q_off[m - 1];
                }
                if m + 1 < n {
                    acc += o1[m] * x[m + 1];
                    qa += x[m + 1] * self.q_off[m];
                }
                if m >= 2 {
                    acc += x[m - 2] * o2[m - 2];
                }
                if m + 2 < n {
                    acc += x[m + 2] * o2[m];
                }
                d[m] = acc;
                q[m] = qa;
            }
        }
    }

    /// Nonlinear step in place. `⟨q⟩` is taken from the state before the
    /// step; the result is renormalized.
    pub fn step_nonlinear(
        &self,
        psi: &mut [Complex64],
        dw: f64,
        dt: f64,
        work: &mut SseWork,
    ) -> Result<(), StochasticError> {
        self.apply(psi, work);
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let qmean = psi
            .iter()
            .zip(&work.q_psi)
            .map(|(a, b)| (a.conj() * b).re)
            .sum::<f64>()
            / norm2;
        let se = self.eta.sqrt();
        let kq = self.eta * qmean * dt + se * dw;
        let k0 = -(0.5 * self.eta * qmean * qmean * dt + se * dw * qmean);
        let mut new_norm2 = 0.0;
        for ((x, d), q) in psi.iter_mut().zip(&work.d_psi).zip(&work.q_psi) {
            *x += d * dt + q * kq + *x * k0;
            new_norm2 += x.norm_sqr();
        }
        let norm = new_norm2.sqrt();
        if !(norm >= NORM_FLOOR) || !norm.is_finite() {
            return Err(StochasticError::NormCollapse { norm });
        }
        let inv = 1.0 / norm;
        for x in psi.iter_mut() {
            *x *= inv;
        }
        Ok(())
    }

    /// Linear step in place, without renormalization.
    pub fn step_linear(
        &self,
        psi: &mut [Complex64],
        dw: f64,
        dt: f64,
        work: &mut SseWork,
    ) -> Result<(), StochasticError> {
        self.apply(psi, work);
        let kq = Complex64::new(0.0, self.eta.sqrt() * dw);
        let mut norm2 = 0.0;
        for ((x, d), q) in psi.iter_mut().zip(&work.d_psi).zip(&work.q_psi) {
            *x += d * dt + q * kq;
            norm2 += x.norm_sqr();
        }
        if !(norm2 <= NORM_CEILING) {
            return Err(StochasticError::NormOverflow { norm: norm2.sqrt() });
        }
        Ok(())
    }
}

fn joint_dim(psi: &StateVector) -> Result<FockDimension, StochasticError> {
    match psi.space() {
        Space::Joint(d) => Ok(d),
        other => Err(StochasticError::WrongSpace(other)),
    }
}

/// One Euler–Maruyama step of the norm-preserving collapse equation.
pub fn step_nonlinear(
    psi: &StateVector,
    dw: f64,
    dt: f64,
    p: &ExperimentParams,
    eta: f64,
) -> Result<StateVector, StochasticError> {
    let dim = joint_dim(psi)?;
    let ops = SseOperators::new(p, eta, dim);
    let mut amps = psi.amplitudes().to_vec();
    ops.step_nonlinear(&mut amps, dw, dt, &mut SseWork::new(dim))?;
    Ok(StateVector::from_amplitudes(psi.space(), amps.into())?)
}

/// One Euler–Maruyama step of the linear unravelling.
pub fn step_linear(
    psi: &StateVector,
    dw: f64,
    dt: f64,
    p: &ExperimentParams,
    eta: f64,
) -> Result<StateVector, StochasticError> {
    let dim = joint_dim(psi)?;
    let ops = SseOperators::new(p, eta, dim);
    let mut amps = psi.amplitudes().to_vec();
    ops.step_linear(&mut amps, dw, dt, &mut SseWork::new(dim))?;
    Ok(StateVector::from_amplitudes(psi.space(), amps.into())?)
}

/// `(|0_A 1_B⟩ + |1_A 0_B⟩) ⊗ |0⟩_m / √2` as raw amplitudes.
pub fn initial_amplitudes(dim: FockDimension) -> Vec<Complex64> {
    let n = dim.n_levels();
    let mut v = vec![Complex64::new(0.0, 0.0); 2 * n];
    v[0] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    v[n] = v[0];
    v
}

/// `Tr ρ̂_OD = 2 Σ_m ψ_A[m] ψ_B[m]*`.
pub fn trajectory_offdiag(psi: &[Complex64]) -> Complex64 {
    let n = psi.len() / 2;
    2.0 * psi[n..]
        .iter()
        .zip(&psi[..n])
        .map(|(a, b)| a * b.conj())
        .sum::<Complex64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::build_hamiltonian;
    use crate::fock::{lift_mirror, quadrature, ComplexOperator};

    fn dim(n: usize) -> FockDimension {
        FockDimension::new(n).unwrap()
    }

    fn sample_state(d: FockDimension) -> StateVector {
        let n = 2 * d.n_levels();
        let v: Vec<Complex64> = (0..n)
            .map(|k| {
                let x = k as f64;
                Complex64::new((0.7 * x).cos() / (1.0 + x), (1.3 * x).sin() / (1.0 + x))
            })
            .collect();
        let s = StateVector::from_amplitudes(Space::Joint(d), v.into()).unwrap();
        s.scale((1.0 / s.norm_sqr().sqrt()).into())
    }

    /// Dense reference: `−i(H − ω_c)`, `q`.
    fn dense(p: &ExperimentParams, d: FockDimension) -> (ComplexOperator, ComplexOperator) {
        let h = build_hamiltonian(p, d)
            .sub(&ComplexOperator::identity(Space::Joint(d)).scale(p.omega_c.into()))
            .unwrap();
        let q = lift_mirror(&quadrature(d).scale(p.sigma.into())).unwrap();
        (h, q)
    }

    #[test]
    fn linear_step_matches_dense_formula() {
        let p = ExperimentParams::new(50.0, 1.3, 0.6, 0.8).unwrap();
        let d = dim(9);
        let (eta, dw, dt) = (0.4f64, 0.03, 0.01);
        let psi = sample_state(d);
        let (h, q) = dense(&p, d);
        let hpsi = h.apply(&psi).unwrap();
        let qpsi = q.apply(&psi).unwrap();
        let q2psi = q.apply(&qpsi).unwrap();
        let i = Complex64::new(0.0, 1.0);
        let want = psi.amplitudes() + &(hpsi.amplitudes() * (-i * dt))
            + &(qpsi.amplitudes() * (i * eta.sqrt() * dw))
            - &(q2psi.amplitudes() * Complex64::from(0.5 * eta * dt));
        let got = step_linear(&psi, dw, dt, &p, eta).unwrap();
        let err: f64 = (got.amplitudes() - &want).iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!(err.sqrt() < 1e-14, "{}", err.sqrt());
    }

    #[test]
    fn nonlinear_step_matches_dense_formula() {
        let p = ExperimentParams::new(50.0, 1.3, 0.6, 0.8).unwrap();
        let d = dim(9);
        let (eta, dw, dt) = (0.4f64, -0.05, 0.01);
        let psi = sample_state(d);
        let (h, q) = dense(&p, d);
        let qpsi = q.apply(&psi).unwrap();
        let qm = psi.inner(&qpsi).re;
        let shifted = qpsi.amplitudes() - &(psi.amplitudes() * Complex64::from(qm));
        let s = StateVector::from_amplitudes(Space::Joint(d), shifted.clone()).unwrap();
        let shifted2 = q.apply(&s).unwrap().amplitudes() - &(&shifted * Complex64::from(qm));
        let i = Complex64::new(0.0, 1.0);
        let raw = psi.amplitudes() + &(h.apply(&psi).unwrap().amplitudes() * (-i * dt))
            + &(&shifted * Complex64::from(eta.sqrt() * dw))
            - &(shifted2 * Complex64::from(0.5 * eta * dt));
        let nrm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let want = raw / Complex64::from(nrm);
        let got = step_nonlinear(&psi, dw, dt, &p, eta).unwrap();
        let err: f64 = (got.amplitudes() - &want).iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!(err.sqrt() < 1e-14, "{}", err.sqrt());
        assert!((got.norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn deterministic_limit_agrees() {
        let p = ExperimentParams::dimensionless(0.7);
        let d = dim(12);
        let psi = sample_state(d);
        let a = step_linear(&psi, 0.3, 1e-3, &p, 0.0).unwrap();
        let b = step_nonlinear(&psi, 0.3, 1e-3, &p, 0.0).unwrap();
        // Same direction; the nonlinear one is renormalized by 1 + O(dt²).
        let scale = a.norm_sqr().sqrt();
        assert!((scale - 1.0).abs() < 1e-5);
        assert!(a.scale((1.0 / scale).into()).distance(&b) < 1e-14);
    }

    #[test]
    fn euler_norm_drift_is_second_order() {
        let p = ExperimentParams::dimensionless(0.7);
        let d = dim(12);
        let psi = sample_state(d);
        let drift = |dt: f64| (step_linear(&psi, 0.0, dt, &p, 0.0).unwrap().norm_sqr() - 1.0).abs();
        let r = drift(1e-3) / drift(5e-4);
        assert!((r - 4.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn sharply_peaked_state_feels_little_noise() {
        // Squeezed vacuum e^{r(b² − b†²)/2} has Δq = σ e^{−r}.
        let p = ExperimentParams::dimensionless(0.0);
        let d = dim(60);
        let r = 1.0;
        let b = crate::fock::annihilation(d);
        let b2 = b.mul(&b).unwrap();
        let gen = b2.sub(&b2.dagger()).unwrap().scale((0.5 * r).into());
        let sq = gen.exp().unwrap();
        let vac = StateVector::basis(Space::Mirror(d), 0);
        let mirror = sq.apply(&vac).unwrap();
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let squeezed = StateVector::joint([h, h], [&mirror, &mirror]).unwrap();
        let plain = StateVector::joint([h, h], [&vac, &vac]).unwrap();
        let kick = |psi: &StateVector| {
            let a = step_nonlinear(psi, 0.05, 1e-4, &p, 1.0).unwrap();
            let b = step_nonlinear(psi, 0.0, 1e-4, &p, 1.0).unwrap();
            a.distance(&b)
        };
        let ratio = kick(&squeezed) / kick(&plain);
        assert!((ratio - (-r).exp()).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn linear_overflow_and_wrong_space() {
        let p = ExperimentParams::dimensionless(0.5);
        let d = dim(6);
        let mut amps = initial_amplitudes(d);
        let ops = SseOperators::new(&p, 1.0, d);
        let mut w = SseWork::new(d);
        let r = ops.step_linear(&mut amps, 1e20, 1e-3, &mut w);
        assert!(matches!(r, Err(StochasticError::NormOverflow { .. })));
        let m = StateVector::basis(Space::Mirror(d), 0);
        assert!(matches!(
            step_linear(&m, 0.0, 0.1, &p, 0.0),
            Err(StochasticError::WrongSpace(_))
        ));
    }

    #[test]
    fn nonlinear_norm_collapse_aborts() {
        let p = ExperimentParams::dimensionless(0.0);
        let d = dim(4);
        let ops = SseOperators::new(&p, 0.0, d);
        let mut w = SseWork::new(d);
        let mut zero = vec![Complex64::new(0.0, 0.0); 8];
        zero[0] = Complex64::new(1e-300, 0.0);
        let r = ops.step_nonlinear(&mut zero, 0.0, 0.1, &mut w);
        assert!(matches!(r, Err(StochasticError::NormCollapse { .. })));
    }

    #[test]
    fn offdiag_of_initial_state_is_one() {
        let f = trajectory_offdiag(&initial_amplitudes(dim(5)));
        assert!((f - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }
}
