//! CSL decay rate for a uniformly dense cube.
//!
//! The smeared density of a cube factorizes per axis,
//! `F(z) = D0 g(z_x) g(z_y) g(z_z)`, so for any displacement
//! `Γ(d) = γ D0² (G0³ − Π_i (G0 − Δ(d_i)))` with `G0 = ∫g²` and
//! `Δ(d) = ½∫(g(x + d) − g(x))² dx`. Only 1D quadratures are needed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{damping_exponent, ExperimentParams};
use crate::quad::{adaptive_gauss_legendre, QuadError};
use crate::units::{LengthUnit, Units};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CslError {
    #[error("{field} must be finite and > 0 (got {value})")]
    NotPositive { field: &'static str, value: f64 },
    #[error("displacement component {0} is not finite")]
    NonFiniteDisplacement(usize),
    #[error("unit mismatch: {what}: {left:?} vs {right:?}")]
    UnitMismatch {
        what: &'static str,
        left: String,
        right: String,
    },
    #[error("quadrature failed: {0}")]
    Quad(#[from] QuadError),
}

/// Collapse strength `gamma` (length³/time) and inverse localization area
/// `alpha` (1/length²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CslParams {
    pub gamma: f64,
    pub alpha: f64,
    #[serde(default)]
    pub units: Units,
}

impl CslParams {
    pub fn new(gamma: f64, alpha: f64) -> Self {
        CslParams {
            gamma,
            alpha,
            units: Units::NATURAL,
        }
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    pub fn validate(&self) -> Result<(), CslError> {
        positive("gamma", self.gamma)?;
        positive("alpha", self.alpha)
    }

    /// Localization length `1/√α`.
    pub fn r_c(&self) -> f64 {
        self.alpha.sqrt().recip()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    #[default]
    UniformCube,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityProfile {
    #[serde(default)]
    pub kind: ProfileKind,
    /// Number density.
    pub d0: f64,
    /// Side length.
    pub side: f64,
    #[serde(default)]
    pub length: LengthUnit,
}

impl DensityProfile {
    pub fn cube(d0: f64, side: f64) -> Self {
        DensityProfile {
            kind: ProfileKind::UniformCube,
            d0,
            side,
            length: LengthUnit::Natural,
        }
    }

    pub fn with_length(mut self, length: LengthUnit) -> Self {
        self.length = length;
        self
    }

    pub fn validate(&self) -> Result<(), CslError> {
        positive("d0", self.d0)?;
        positive("side", self.side)
    }

    pub fn total_count(&self) -> f64 {
        self.d0 * self.side.powi(3)
    }

    pub fn density(&self, w: [f64; 3]) -> f64 {
        let h = 0.5 * self.side;
        if w.iter().all(|x| x.abs() < h) {
            self.d0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    pub d: [f64; 3],
}

impl Displacement {
    pub fn new(d: [f64; 3]) -> Self {
        Displacement { d }
    }

    pub fn along_x(d: f64) -> Self {
        Displacement { d: [d, 0.0, 0.0] }
    }

    pub fn norm(&self) -> f64 {
        self.d.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn neg(&self) -> Self {
        Displacement {
            d: self.d.map(|x| -x),
        }
    }

    pub fn validate(&self) -> Result<(), CslError> {
        match self.d.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(CslError::NonFiniteDisplacement(i)),
            None => Ok(()),
        }
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), CslError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CslError::NotPositive { field, value })
    }
}

fn check_length(csl: &CslParams, profile: &DensityProfile) -> Result<(), CslError> {
    if csl.units.length != profile.length {
        return Err(CslError::UnitMismatch {
            what: "csl length vs profile length",
            left: format!("{:?}", csl.units.length),
            right: format!("{:?}", profile.length),
        });
    }
    Ok(())
}

/// Per-axis factor of the smeared density: a box of width `side` convolved
/// with a Gaussian of variance `1/alpha`.
pub fn axis_profile(u: f64, side: f64, alpha: f64) -> f64 {
    let r = (0.5 * alpha).sqrt();
    let u = u.abs();
    let h = 0.5 * side;
    if u > h {
        // Both error functions are close to 1 out here.
        0.5 * (libm::erfc(r * (u - h)) - libm::erfc(r * (u + h)))
    } else {
        0.5 * (libm::erf(r * (u + h)) + libm::erf(r * (h - u)))
    }
}

pub fn axis_slope(u: f64, side: f64, alpha: f64) -> f64 {
    let h = 0.5 * side;
    let n = (alpha / (2.0 * PI)).sqrt();
    n * ((-0.5 * alpha * (u + h).powi(2)).exp() - (-0.5 * alpha * (u - h).powi(2)).exp())
}

pub fn smeared_density(z: [f64; 3], profile: &DensityProfile, alpha: f64) -> f64 {
    let s = profile.side;
    profile.d0 * z.iter().map(|&u| axis_profile(u, s, alpha)).product::<f64>()
}

/// Tails of `g` beyond this many `1/√α` are below 1e-30.
const TAIL: f64 = 12.0;

fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    mut cuts: Vec<f64>,
    tol: f64,
) -> Result<f64, QuadError> {
    cuts.sort_by(|a, b| a.total_cmp(b));
    cuts.dedup();
    let n = (cuts.len() - 1) as f64;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += adaptive_gauss_legendre(&f, w[0], w[1], tol / n)?;
    }
    Ok(total)
}

/// `∫ g(x)² dx` by quadrature.
pub fn axis_self_overlap(side: f64, alpha: f64) -> Result<f64, CslError> {
    let m = TAIL / alpha.sqrt();
    let h = 0.5 * side;
    let f = |x: f64| axis_profile(x, side, alpha).powi(2);
    let v = integrate_pieces(f, vec![-h - m, -h, 0.0, h, h + m], 1e-13 * side)?;
    Ok(v)
}

/// `½ ∫ (g(x + d) − g(x))² dx` by quadrature. Non-negative by construction,
/// so small displacements do not suffer from cancellation.
pub fn axis_deficit(d: f64, side: f64, alpha: f64) -> Result<f64, CslError> {
    if d == 0.0 {
        return Ok(0.0);
    }
    let d = d.abs();
    let m = TAIL / alpha.sqrt();
    let h = 0.5 * side;
    // Scale of the answer, for an absolute tolerance.
    let quad = 0.25 * d * d * (alpha / PI).sqrt();
    let scale = quad.min(d).max(f64::MIN_POSITIVE);
    let f = |x: f64| {
        let diff = axis_profile(x + d, side, alpha) - axis_profile(x, side, alpha);
        0.5 * diff * diff
    };
    let cuts = vec![-h - d - m, -h - d, -h, h - d, h, h + m];
    Ok(integrate_pieces(f, cuts, 1e-11 * scale)?)
}

/// `Γ(d) = ½γ ∫ (F(x + d) − F(x))² d³x`.
pub fn gamma_exact(
    d: &Displacement,
    profile: &DensityProfile,
    csl: &CslParams,
) -> Result<f64, CslError> {
    csl.validate()?;
    profile.validate()?;
    d.validate()?;
    check_length(csl, profile)?;
    let (s, a) = (profile.side, csl.alpha);
    let g0 = axis_self_overlap(s, a)?;
    let mut deficits = [0.0; 3];
    for (out, &di) in deficits.iter_mut().zip(&d.d) {
        *out = axis_deficit(di, s, a)?;
    }
    // G0³ − Π(G0 − Δ_i), expanded so that every term is computed directly.
    let [x, y, z] = deficits;
    let e1 = x + y + z;
    let e2 = x * y + y * z + z * x;
    let e3 = x * y * z;
    let bracket = g0 * g0 * e1 - g0 * e2 + e3;
    Ok(csl.gamma * profile.d0 * profile.d0 * bracket)
}

/// Pieces of the small-displacement coefficient `C`, evaluated in closed
/// form from the surface delta functions of the cube gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorTerms {
    /// Integral along the gradient direction; tends to 2.
    pub i3: f64,
    /// Integral over the two transverse directions; tends to `S² 4π/α`.
    pub i12: f64,
    pub c: f64,
}

/// Closed form of `∫ g(x)² dx`: the triangle `(S − |u|)₊` smeared by a
/// Gaussian of variance `2/α`, evaluated at zero lag.
fn axis_self_overlap_closed(side: f64, alpha: f64) -> f64 {
    let s = (2.0 / alpha).sqrt();
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    side * libm::erf(0.5 * side * alpha.sqrt()) + 2.0 * s * (phi(side / s) - phi(0.0))
}

pub fn taylor_terms(profile: &DensityProfile, alpha: f64) -> TaylorTerms {
    let s = profile.side;
    let i3 = 2.0 * (1.0 - (-0.25 * alpha * s * s).exp());
    let g0 = axis_self_overlap_closed(s, alpha);
    let i12 = 4.0 * PI / alpha * g0 * g0;
    let d0 = profile.d0;
    let c = (alpha / PI).powf(1.5) * d0 * d0 * i12 * i3 / 8.0;
    TaylorTerms { i3, i12, c }
}

pub fn taylor_coefficient_c(profile: &DensityProfile, alpha: f64) -> f64 {
    taylor_terms(profile, alpha).c
}

/// Large-cube limit `D0² S² (α/π)^{1/2}`.
pub fn taylor_coefficient_asymptotic(profile: &DensityProfile, alpha: f64) -> f64 {
    profile.d0 * profile.d0 * profile.side * profile.side * (alpha / PI).sqrt()
}

pub const DEFAULT_ASYMPTOTIC_THRESHOLD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CFormula {
    Asymptotic,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    Asymptotic,
    Exact,
    /// Asymptotic when `S√α` reaches the threshold, exact below it.
    Auto { threshold: f64 },
}

impl Default for EtaMode {
    fn default() -> Self {
        EtaMode::Auto {
            threshold: DEFAULT_ASYMPTOTIC_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaCsl {
    pub eta: f64,
    pub formula: CFormula,
}

pub fn eta_csl(
    csl: &CslParams,
    profile: &DensityProfile,
    mode: EtaMode,
) -> Result<EtaCsl, CslError> {
    csl.validate()?;
    profile.validate()?;
    check_length(csl, profile)?;
    let formula = match mode {
        EtaMode::Asymptotic => CFormula::Asymptotic,
        EtaMode::Exact => CFormula::Exact,
        EtaMode::Auto { threshold } => {
            if profile.side * csl.alpha.sqrt() >= threshold {
                CFormula::Asymptotic
            } else {
                CFormula::Exact
            }
        }
    };
    let c = match formula {
        CFormula::Asymptotic => taylor_coefficient_asymptotic(profile, csl.alpha),
        CFormula::Exact => taylor_coefficient_c(profile, csl.alpha),
    };
    Ok(EtaCsl {
        eta: csl.gamma * c,
        formula,
    })
}

/// Large-displacement rate `γ |d| S² D0²`.
pub fn gamma_linear_regime(d_mag: f64, csl: &CslParams, profile: &DensityProfile) -> f64 {
    csl.gamma * d_mag.abs() * profile.side * profile.side * profile.d0 * profile.d0
}

/// Small-displacement rate `½ γ C |d|²`.
pub fn gamma_quadratic_regime(d_mag: f64, csl: &CslParams, c: f64) -> f64 {
    0.5 * csl.gamma * c * d_mag * d_mag
}

/// Where the quadratic and linear asymptotes meet: `2 (π/α)^{1/2}`.
pub fn crossover_displacement(alpha: f64) -> f64 {
    2.0 * (PI / alpha).sqrt()
}

/// Local exponent `d ln Γ / d ln |d|` along x, by a centered difference.
pub fn log_slope(
    d_mag: f64,
    profile: &DensityProfile,
    csl: &CslParams,
) -> Result<f64, CslError> {
    let h = 1e-3;
    let hi = gamma_exact(&Displacement::along_x(d_mag * (1.0 + h)), profile, csl)?;
    let lo = gamma_exact(&Displacement::along_x(d_mag * (1.0 - h)), profile, csl)?;
    Ok((hi / lo).ln() / ((1.0 + h) / (1.0 - h)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossoverReport {
    pub predicted: f64,
    /// Displacement where the exact curve's log slope passes 3/2.
    pub observed: f64,
    pub ratio: f64,
    pub within_band: bool,
}

pub const CROSSOVER_BAND: f64 = 2.0;

/// Locates the quadratic-to-linear transition of the exact `Γ` along x and
/// compares it with [`crossover_displacement`]. Needs `S√α` large enough for
/// a linear stretch to exist (the search stops at `S/4`).
pub fn crossover_check(
    profile: &DensityProfile,
    csl: &CslParams,
) -> Result<CrossoverReport, CslError> {
    let predicted = crossover_displacement(csl.alpha);
    let target = 1.5;
    let mut lo = 0.05 * csl.r_c();
    let mut hi = (0.25 * profile.side).max(2.0 * lo);
    let f = |d: f64| log_slope(d, profile, csl).map(|s| s - target);
    let (flo, fhi) = (f(lo)?, f(hi)?);
    let observed = if flo.signum() == fhi.signum() {
        // No transition inside the search window.
        f64::NAN
    } else {
        for _ in 0..60 {
            let mid = (lo * hi).sqrt();
            if f(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-6 {
                break;
            }
        }
        (lo * hi).sqrt()
    };
    let ratio = observed / predicted;
    Ok(CrossoverReport {
        predicted,
        observed,
        ratio,
        within_band: (1.0 / CROSSOVER_BAND..=CROSSOVER_BAND).contains(&ratio),
    })
}

/// `Λ` for the experiment from the CSL parameters.
pub fn lambda_csl(
    csl: &CslParams,
    profile: &DensityProfile,
    p: &ExperimentParams,
    mode: EtaMode,
) -> Result<f64, CslError> {
    check_length(csl, profile)?;
    if csl.units != p.units {
        return Err(CslError::UnitMismatch {
            what: "csl units vs experiment units",
            left: format!("{:?}", csl.units),
            right: format!("{:?}", p.units),
        });
    }
    let eta = eta_csl(csl, profile, mode)?.eta;
    Ok(damping_exponent(p, eta))
}
