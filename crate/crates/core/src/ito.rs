//! Monte Carlo checks of the Itô-calculus identities the collapse results
//! rest on: isometry, exponential martingale, stochastic Fubini, and the
//! kernel double integral.
//!
//! Stochastic integrals of deterministic integrands are discretized with
//! left-point sums on a uniform grid, using the same increment stream as
//! the trajectory engine.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quad::{adaptive_gauss_legendre, adaptive_simpson, QuadError};
use crate::stochastic::ensemble::run_chunks;
use crate::stochastic::{correlation_kernel, kernel_double_integral, EnsembleEstimate, WienerStream};

/// Two-sided z-score threshold.
pub const Z_THRESHOLD: f64 = 4.0;
/// Absolute tolerance of the quadrature side of each check.
pub const QUAD_TOL: f64 = 1e-10;

/// Real function of time, zero outside its support.
#[derive(Clone)]
pub struct DeterministicIntegrand {
    name: String,
    support: (f64, f64),
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for DeterministicIntegrand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}[{}, {}]", self.name, self.support.0, self.support.1)
    }
}

impl DeterministicIntegrand {
    pub fn new<F>(name: impl Into<String>, support: (f64, f64), f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            support,
            f: Arc::new(f),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), (0.0, f64::INFINITY), move |_| c)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn eval(&self, u: f64) -> f64 {
        if u >= self.support.0 && u < self.support.1 {
            (self.f)(u)
        } else {
            0.0
        }
    }

    /// Restricts the support to `[lo, hi)`.
    pub fn restricted(&self, lo: f64, hi: f64) -> Self {
        Self {
            name: format!("{}|[{lo},{hi})", self.name),
            support: (self.support.0.max(lo), self.support.1.min(hi)),
            f: self.f.clone(),
        }
    }

    /// `∫₀ᵗ self·other du` on the intersected supports.
    fn product_integral(&self, other: &Self, t: f64) -> Result<f64, QuadError> {
        let lo = self.support.0.max(other.support.0).max(0.0);
        let hi = self.support.1.min(other.support.1).min(t);
        if hi <= lo {
            return Ok(0.0);
        }
        adaptive_simpson(|u| (self.f)(u) * (other.f)(u), lo, hi, QUAD_TOL)
    }
}

/// One compared quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub label: String,
    pub estimate: f64,
    pub expected: f64,
    /// Monte Carlo standard error, absent for deterministic comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    /// Absolute tolerance for deterministic comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub passed: bool,
}

impl Comparison {
    pub fn statistical(label: impl Into<String>, estimate: f64, expected: f64, se: f64) -> Self {
        let d = (estimate - expected).abs();
        Self {
            label: label.into(),
            estimate,
            expected,
            std_error: Some(se),
            tolerance: None,
            passed: d == 0.0 || d <= Z_THRESHOLD * se,
        }
    }

    pub fn within(label: impl Into<String>, estimate: f64, expected: f64, tol: f64) -> Self {
        Self {
            label: label.into(),
            estimate,
            expected,
            std_error: None,
            tolerance: Some(tol),
            passed: (estimate - expected).abs() <= tol,
        }
    }

    pub fn z_score(&self) -> Option<f64> {
        let se = self.std_error?;
        let d = (self.estimate - self.expected).abs();
        Some(if d == 0.0 { 0.0 } else { d / se })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckReport {
    pub name: String,
    pub n_paths: usize,
    pub comparisons: Vec<Comparison>,
    pub passed: bool,
}

impl CheckReport {
    fn new(name: impl Into<String>, n_paths: usize, comparisons: Vec<Comparison>) -> Self {
        let passed = comparisons.iter().all(|c| c.passed);
        Self {
            name: name.into(),
            n_paths,
            comparisons,
            passed,
        }
    }

    pub fn max_z(&self) -> f64 {
        self.comparisons
            .iter()
            .filter_map(Comparison::z_score)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub seed_base: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub checks: Vec<CheckReport>,
    pub passed: bool,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Shared Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub n_paths: usize,
    /// Steps of the uniform grid on `[0, t]`.
    pub n_steps: usize,
    pub seed_base: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            n_steps: 1000,
            seed_base: 0,
        }
    }
}

fn grid(t: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t * k as f64 / n as f64).collect()
}

/// Runs `per_path(increments) -> values` over all paths and returns one
/// estimate per value.
fn monte_carlo<F>(mc: &McSettings, t: f64, n_values: usize, per_path: F) -> Vec<EnsembleEstimate>
where
    F: Fn(&[f64]) -> Vec<Complex64> + Sync,
{
    let dt = t / mc.n_steps as f64;
    let (moments, _) = run_chunks(mc.n_paths, n_values, |i, out| {
        let mut s = WienerStream::new(mc.seed_base.wrapping_add(i as u64));
        let dw: Vec<f64> = (0..mc.n_steps).map(|_| s.next_increment(dt)).collect();
        out.extend(per_path(&dw));
        Ok(())
    })
    .expect("paths never abort");
    moments
        .iter()
        .map(|m| m.estimate().expect("n_paths ≥ 2"))
        .collect()
}

/// `E[∫A dW ∫B dW]` against `∫ A B du`.
pub fn check_ito_isometry(
    a: &DeterministicIntegrand,
    b: &DeterministicIntegrand,
    t: f64,
    mc: &McSettings,
) -> Result<CheckReport, QuadError> {
    let g = grid(t, mc.n_steps);
    let av: Vec<f64> = g.iter().map(|u| a.eval(*u)).collect();
    let bv: Vec<f64> = g.iter().map(|u| b.eval(*u)).collect();
    let est = monte_carlo(mc, t, 1, |dw| {
        let ia: f64 = av.iter().zip(dw).map(|(x, d)| x * d).sum();
        let ib: f64 = bv.iter().zip(dw).map(|(x, d)| x * d).sum();
        vec![Complex64::new(ia * ib, 0.0)]
    });
    let rhs = a.product_integral(b, t)?;
    Ok(CheckReport::new(
        format!("ito_isometry({:?}, {:?}, t={t})", a, b),
        mc.n_paths,
        vec![Comparison::statistical(
            "E[IA IB]",
            est[0].mean.re,
            rhs,
            est[0].std_error_re,
        )],
    ))
}

/// Whether `Φ` enters the exponent as `Φ` or as `iΦ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Real,
    Imaginary,
}

/// `E[exp(∫Φ dW)] = exp(½∫Φ² dv)`, or with `iΦ`, `exp(−½∫Φ² dv)`.
pub fn check_exponential_martingale(
    phi: &DeterministicIntegrand,
    phase: Phase,
    t: f64,
    mc: &McSettings,
) -> Result<CheckReport, QuadError> {
    let g = grid(t, mc.n_steps);
    let pv: Vec<f64> = g.iter().map(|u| phi.eval(*u)).collect();
    let est = monte_carlo(mc, t, 1, |dw| {
        let s: f64 = pv.iter().zip(dw).map(|(x, d)| x * d).sum();
        vec![match phase {
            Phase::Real => Complex64::new(s.exp(), 0.0),
            Phase::Imaginary => Complex64::from_polar(1.0, s),
        }]
    });
    let q = phi.product_integral(phi, t)?;
    let e = &est[0];
    let comparisons = match phase {
        Phase::Real => vec![Comparison::statistical(
            "E[exp(I)]",
            e.mean.re,
            (0.5 * q).exp(),
            e.std_error_re,
        )],
        Phase::Imaginary => vec![
            Comparison::statistical("Re E[exp(iI)]", e.mean.re, (-0.5 * q).exp(), e.std_error_re),
            Comparison::statistical("Im E[exp(iI)]", e.mean.im, 0.0, e.std_error_im),
        ],
    };
    Ok(CheckReport::new(
        format!("exponential_martingale({phi:?}, {phase:?}, t={t})"),
        mc.n_paths,
        comparisons,
    ))
}

/// Pathwise `Σ_k dt z_k` (z by the explicit double sum) against
/// `Σ_j ω⁻¹[1 − cos ω(t − t_j)] dW_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FubiniPath {
    pub double_sum: f64,
    pub single_sum: f64,
    /// `5 dt Σ_j (1 + ω(t − t_j)) |dW_j|`.
    pub bound: f64,
}

pub fn fubini_pathwise(dw: &[f64], t: f64, omega_m: f64) -> FubiniPath {
    let n = dw.len();
    let dt = t / n as f64;
    let tk = |k: usize| t * k as f64 / n as f64;
    let mut double_sum = 0.0;
    for k in 0..n {
        let z: f64 = (0..k).map(|j| (omega_m * (tk(k) - tk(j))).sin() * dw[j]).sum();
        double_sum += z * dt;
    }
    let single_sum = (0..n)
        .map(|j| (1.0 - (omega_m * (t - tk(j))).cos()) / omega_m * dw[j])
        .sum();
    let bound = 5.0
        * dt
        * (0..n)
            .map(|j| (1.0 + omega_m * (t - tk(j))) * dw[j].abs())
            .sum::<f64>();
    FubiniPath {
        double_sum,
        single_sum,
        bound,
    }
}

/// Number of paths on which the O(n²) double sum is evaluated literally.
pub const FUBINI_PATHWISE_PATHS: usize = 32;

/// Stochastic Fubini: pathwise agreement on a sample of paths, zero means,
/// and the variance of `∫z ds` against the kernel double integral.
pub fn check_stochastic_fubini(omega_m: f64, t: f64, mc: &McSettings) -> CheckReport {
    let dt = t / mc.n_steps as f64;
    let mut comparisons = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..FUBINI_PATHWISE_PATHS.min(mc.n_paths) {
        let mut s = WienerStream::new(mc.seed_base.wrapping_add(i as u64));
        let dw: Vec<f64> = (0..mc.n_steps).map(|_| s.next_increment(dt)).collect();
        let r = fubini_pathwise(&dw, t, omega_m);
        worst = worst.max((r.double_sum - r.single_sum).abs() / r.bound);
    }
    comparisons.push(Comparison::within("max |double − single| / bound", worst, 0.0, 1.0));

    let g = grid(t, mc.n_steps);
    let weights: Vec<f64> = g
        .iter()
        .map(|u| (1.0 - (omega_m * (t - u)).cos()) / omega_m)
        .collect();
    let est = monte_carlo(mc, t, 3, |dw| {
        // Double sum through the equivalent O(n) recursion.
        let mut j = Complex64::new(0.0, 0.0);
        let mut lhs = 0.0;
        for d in dw {
            lhs += j.im * dt;
            j = Complex64::from_polar(1.0, omega_m * dt) * (j + d);
        }
        let rhs: f64 = weights.iter().zip(dw).map(|(w, d)| w * d).sum();
        vec![lhs.into(), rhs.into(), (rhs * rhs).into()]
    });
    comparisons.push(Comparison::statistical("E[∫z ds]", est[0].mean.re, 0.0, est[0].std_error_re));
    comparisons.push(Comparison::statistical(
        "E[∫(1−cos)/ω dW]",
        est[1].mean.re,
        0.0,
        est[1].std_error_re,
    ));
    comparisons.push(Comparison::statistical(
        "E[(∫z ds)²]",
        est[2].mean.re,
        kernel_double_integral(t, omega_m),
        est[2].std_error_re,
    ));
    CheckReport::new(
        format!("stochastic_fubini(omega={omega_m}, t={t})"),
        mc.n_paths,
        comparisons,
    )
}

/// Closed form, single integral and double integral of the kernel.
pub fn check_kernel_quadrature(t: f64, omega_m: f64) -> Result<CheckReport, QuadError> {
    let closed = kernel_double_integral(t, omega_m);
    let single = adaptive_simpson(
        |v| {
            let c = 1.0 - (omega_m * (t - v)).cos();
            c * c
        },
        0.0,
        t,
        QUAD_TOL,
    )? / (omega_m * omega_m);
    // Split the inner integral at the kink s₂ = s₁.
    let inner = |s1: f64| -> f64 {
        let k = |s2: f64| correlation_kernel(s1, s2, omega_m);
        let tol = QUAD_TOL / (4.0 * t.max(1.0));
        adaptive_gauss_legendre(k, 0.0, s1, tol).unwrap_or(f64::NAN)
            + adaptive_gauss_legendre(k, s1, t, tol).unwrap_or(f64::NAN)
    };
    let double = adaptive_simpson(inner, 0.0, t, QUAD_TOL)?;
    Ok(CheckReport::new(
        format!("kernel_quadrature(t={t}, omega={omega_m})"),
        0,
        vec![
            Comparison::within("single integral", single, closed, QUAD_TOL * 10.0),
            Comparison::within("double integral", double, closed, QUAD_TOL * 10.0),
        ],
    ))
}

/// Increment moments: `E[ΔW²] = dt`, and `E[ΔW_k g(W_{t_k})] = 0` for a
/// non-anticipating `g`.
pub fn check_increment_moments(t: f64, mc: &McSettings) -> CheckReport {
    let dt = t / mc.n_steps as f64;
    let mid = mc.n_steps / 2;
    let est = monte_carlo(mc, t, 2, |dw| {
        let mean_sq = dw.iter().map(|d| d * d).sum::<f64>() / dw.len() as f64;
        let w_before: f64 = dw[..mid].iter().sum();
        vec![mean_sq.into(), (dw[mid] * w_before.cos()).into()]
    });
    CheckReport::new(
        format!("increment_moments(dt={dt})"),
        mc.n_paths,
        vec![
            Comparison::statistical("E[dW²]", est[0].mean.re, dt, est[0].std_error_re),
            Comparison::statistical("E[dW_k cos W_k]", est[1].mean.re, 0.0, est[1].std_error_re),
        ],
    )
}

/// The full identity suite.
pub fn run_suite(mc: &McSettings) -> Result<SuiteReport, QuadError> {
    let w = 1.0;
    let mut checks = Vec::new();
    let one = DeterministicIntegrand::constant(1.0);
    checks.push(check_ito_isometry(&one, &one, 1.0, mc)?);

    let (t, s) = (2.0, 1.0);
    let a = DeterministicIntegrand::new("sin w(t-u)", (0.0, t), move |u| (w * (t - u)).sin());
    let b = DeterministicIntegrand::new("sin w(s-u)", (0.0, s), move |u| (w * (s - u)).sin());
    let mut kernel = check_ito_isometry(&a, &b, t, mc)?;
    kernel.comparisons.push(Comparison::within(
        "quadrature vs K(t,s)",
        a.product_integral(&b, t)?,
        correlation_kernel(t, s, w),
        1e-9,
    ));
    kernel.passed = kernel.comparisons.iter().all(|c| c.passed);
    checks.push(kernel);

    let left = one.restricted(0.0, 0.4);
    let right = one.restricted(0.6, 1.0);
    checks.push(check_ito_isometry(&left, &right, 1.0, mc)?);

    checks.push(check_exponential_martingale(
        &DeterministicIntegrand::constant(0.5),
        Phase::Real,
        1.0,
        mc,
    )?);
    // Keeps Var ∫Φ dW ≈ 0.85 so the lognormal sample mean is well behaved.
    let c = 0.3;
    let tt = 2.0 * PI;
    let phi = DeterministicIntegrand::new("C(1-cos w(t-v))/w", (0.0, tt), move |v| {
        c * (1.0 - (w * (tt - v)).cos()) / w
    });
    for phase in [Phase::Real, Phase::Imaginary] {
        let mut r = check_exponential_martingale(&phi, phase, tt, mc)?;
        // g(t) through the kernel double integral.
        let sign = if phase == Phase::Real { 1.0 } else { -1.0 };
        r.comparisons.push(Comparison::within(
            "closed form vs C²∫∫K",
            r.comparisons[0].expected,
            (sign * 0.5 * c * c * kernel_double_integral(tt, w)).exp(),
            1e-9,
        ));
        r.passed = r.comparisons.iter().all(|c| c.passed);
        checks.push(r);
    }

    checks.push(check_stochastic_fubini(w, 2.0, mc));
    checks.push(check_kernel_quadrature(3.0, w)?);
    checks.push(check_increment_moments(1.0, mc));

    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed_base: mc.seed_base,
        n_paths: mc.n_paths,
        n_steps: mc.n_steps,
        checks,
        passed,
    })
}
