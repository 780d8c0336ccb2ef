//! Deterministic integration of the collapse master equation, on the full
//! photon ⊗ mirror space (oracle) and on the arm-A/arm-B off-diagonal block
//! (production path).

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{arm_hamiltonians, build_hamiltonian, ExperimentParams, Source, VisibilityRecord};
use crate::fock::{
    self, lift_mirror, quadrature, ComplexOperator, DensityMatrix, FockDimension, FockError, Space,
};

/// RK4 is stable for `dt · spectral_bound ≤ 2.78`; keep some margin.
pub const RK4_STABILITY_LIMIT: f64 = 2.5;

/// `‖ρ_OD‖_F` can never exceed 1 for a physical state.
const NORM_BLOWUP: f64 = 1.0 + 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MasterError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("dt = {dt} exceeds the stability limit {limit:.4e} for this truncation")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("integration unstable at t = {t}: ‖ρ_OD‖ = {norm:e}")]
    Unstable { t: f64, norm: f64 },
    #[error("adaptive step collapsed below {min_step:e} at t = {t}")]
    StepUnderflow { t: f64, min_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Rk4,
    Rk45Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasterConfig {
    /// Fixed step for RK4, initial step for RK45.
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Records are emitted at `k · t_end / n_output`, `k = 0..=n_output`.
    pub n_output: usize,
}

impl MasterConfig {
    /// `dt = min(0.002/ω_m, 0.1/(ησ²·4κ²))`.
    pub fn default_for(p: &ExperimentParams, eta: f64, t_end: f64) -> Self {
        let k = p.kappa();
        let damping = eta * p.sigma * p.sigma * 4.0 * k * k;
        let mut dt = 0.002 / p.omega_m;
        if damping > 0.0 {
            dt = dt.min(0.1 / damping);
        }
        Self {
            dt,
            t_end,
            integrator: Integrator::Rk4,
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            n_output: 100,
        }
    }

    pub fn validate(&self) -> Result<(), MasterError> {
        let bad = |m: &str| Err(MasterError::Config(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be non-negative");
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.n_output == 0 {
            return bad("n_output must be at least 1");
        }
        Ok(())
    }
}

/// Upper bound on the spectral radius of the off-diagonal generator.
pub fn spectral_bound(p: &ExperimentParams, eta: f64, dim: FockDimension) -> f64 {
    let n = dim.n_levels() as f64;
    // Spread of the arm spectra, and ½ησ² (2‖X‖)² with ‖X‖ ≤ 2√n.
    p.omega_m * (n - 1.0) + 2.0 * p.coupling * n.sqrt() + 8.0 * eta * p.sigma * p.sigma * n
}

/// Right-hand side on the joint space:
/// `−i[H, ρ] − ½ησ²[X, [X, ρ]]` with `X = I ⊗ (b + b†)`.
pub fn master_rhs(
    rho: &DensityMatrix,
    p: &ExperimentParams,
    eta: f64,
) -> Result<DensityMatrix, MasterError> {
    let Space::Joint(dim) = rho.space() else {
        return Err(FockError::ShapeMismatch {
            op: "master_rhs",
            left: rho.space(),
            right: Space::Joint(FockDimension::new(2)?),
        }
        .into());
    };
    let h = build_hamiltonian(p, dim);
    let x = lift_mirror(&quadrature(dim))?;
    Ok(DensityMatrix::new(joint_rhs(rho.operator(), &h, &x, eta * p.sigma * p.sigma)?))
}

fn joint_rhs(
    rho: &ComplexOperator,
    h: &ComplexOperator,
    x: &ComplexOperator,
    noise: f64,
) -> Result<ComplexOperator, FockError> {
    let coherent = h.commutator(rho)?.scale(Complex64::new(0.0, -1.0));
    let double = x.commutator(&x.commutator(rho)?)?.scale((-0.5 * noise).into());
    coherent.add(&double)
}

/// Right-hand side of the off-diagonal block,
/// `−iH_A ρ + iρH_B − ½ησ²[X, [X, ρ]]`.
pub fn offdiag_rhs(
    rho_od: &ComplexOperator,
    p: &ExperimentParams,
    eta: f64,
) -> Result<ComplexOperator, MasterError> {
    let Space::Mirror(dim) = rho_od.space() else {
        return Err(FockError::ShapeMismatch {
            op: "offdiag_rhs",
            left: rho_od.space(),
            right: Space::Mirror(FockDimension::new(2)?),
        }
        .into());
    };
    let (ha, hb) = arm_hamiltonians(p, dim);
    let x = quadrature(dim);
    let i = Complex64::new(0.0, 1.0);
    let coherent = ha.mul(rho_od)?.scale(-i).add(&rho_od.mul(&hb)?.scale(i))?;
    let double = x
        .commutator(&x.commutator(rho_od)?)?
        .scale((-0.5 * eta * p.sigma * p.sigma).into());
    Ok(coherent.add(&double)?)
}

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
struct Tridiag {
    diag: Vec<f64>,
    off: Vec<f64>,
}

impl Tridiag {
    /// `out = self · m`.
    fn left(&self, m: &Array2<Complex64>, out: &mut Array2<Complex64>) {
        let n = self.diag.len();
        for i in 0..n {
            let mut row = out.row_mut(i);
            row.assign(&m.row(i));
            row *= Complex64::from(self.diag[i]);
            if i + 1 < n {
                row.scaled_add(Complex64::from(self.off[i]), &m.row(i + 1));
            }
            if i > 0 {
                row.scaled_add(Complex64::from(self.off[i - 1]), &m.row(i - 1));
            }
        }
    }

    /// `out = m · self`.
    fn right(&self, m: &Array2<Complex64>, out: &mut Array2<Complex64>) {
        let n = self.diag.len();
        for (orow, mrow) in out.rows_mut().into_iter().zip(m.rows()) {
            let orow = orow.into_slice().expect("standard layout");
            let mrow = mrow.as_slice().expect("standard layout");
            for j in 0..n {
                let mut acc = mrow[j] * self.diag[j];
                if j + 1 < n {
                    acc += mrow[j + 1] * self.off[j];
                }
                if j > 0 {
                    acc += mrow[j - 1] * self.off[j - 1];
                }
                orow[j] = acc;
            }
        }
    }
}

/// Banded form of the off-diagonal generator.
struct OffdiagGenerator {
    ha: Tridiag,
    hb: Vec<f64>,
    x: Tridiag,
    noise: f64,
    xr: Array2<Complex64>,
    rx: Array2<Complex64>,
    tmp: Array2<Complex64>,
}

impl OffdiagGenerator {
    fn new(p: &ExperimentParams, eta: f64, dim: FockDimension) -> Self {
        let n = dim.n_levels();
        let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
        let hb: Vec<f64> = (0..n).map(|k| p.omega_m * k as f64).collect();
        Self {
            ha: Tridiag {
                diag: hb.clone(),
                off: off.iter().map(|s| -p.coupling * s).collect(),
            },
            hb,
            x: Tridiag {
                diag: vec![0.0; n],
                off,
            },
            noise: eta * p.sigma * p.sigma,
            xr: Array2::zeros((n, n)),
            rx: Array2::zeros((n, n)),
            tmp: Array2::zeros((n, n)),
        }
    }

    /// `out = rhs(rho)`.
    fn eval(&mut self, rho: &Array2<Complex64>, out: &mut Array2<Complex64>) {
        let mi = Complex64::new(0.0, -1.0);
        // −i H_A ρ
        self.ha.left(rho, out);
        out.mapv_inplace(|z| z * mi);
        // + i ρ H_B
        for (mut orow, rrow) in out.rows_mut().into_iter().zip(rho.rows()) {
            Zip::from(&mut orow)
                .and(&rrow)
                .and(&self.hb[..])
                .for_each(|o, r, e| *o -= mi * r * e);
        }
        if self.noise == 0.0 {
            return;
        }
        // [X, [X, ρ]] = X(Xρ) − 2(Xρ)X + (ρX)X
        self.x.left(rho, &mut self.xr);
        self.x.right(rho, &mut self.rx);
        let k = Complex64::from(-0.5 * self.noise);
        self.x.left(&self.xr, &mut self.tmp);
        out.scaled_add(k, &self.tmp);
        self.x.right(&self.xr, &mut self.tmp);
        out.scaled_add(-2.0 * k, &self.tmp);
        self.x.right(&self.rx, &mut self.tmp);
        out.scaled_add(k, &self.tmp);
    }
}

/// One output of an evolution.
#[derive(Debug, Clone)]
pub struct MasterSample {
    pub t: f64,
    pub rho_od: ComplexOperator,
    pub record: VisibilityRecord,
}

fn frob(m: &Array2<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

struct Rk4Work {
    k1: Array2<Complex64>,
    k2: Array2<Complex64>,
    k3: Array2<Complex64>,
    k4: Array2<Complex64>,
    stage: Array2<Complex64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        let z = || Array2::zeros((n, n));
        Self {
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            stage: z(),
        }
    }

    fn step<F>(&mut self, f: &mut F, y: &mut Array2<Complex64>, h: f64)
    where
        F: FnMut(&Array2<Complex64>, &mut Array2<Complex64>),
    {
        let h = Complex64::from(h);
        let half = h * 0.5;
        f(y, &mut self.k1);
        Zip::from(&mut self.stage).and(&*y).and(&self.k1).for_each(|s, y, k| *s = y + half * k);
        f(&self.stage, &mut self.k2);
        Zip::from(&mut self.stage).and(&*y).and(&self.k2).for_each(|s, y, k| *s = y + half * k);
        f(&self.stage, &mut self.k3);
        Zip::from(&mut self.stage).and(&*y).and(&self.k3).for_each(|s, y, k| *s = y + h * k);
        f(&self.stage, &mut self.k4);
        let sixth = h / 6.0;
        Zip::from(y)
            .and(&self.k1)
            .and(&self.k2)
            .and(&self.k3)
            .and(&self.k4)
            .for_each(|y, a, b, c, d| *y += sixth * (a + 2.0 * b + 2.0 * c + d));
    }
}

// Dormand–Prince 5(4) tableau. The generator is autonomous, so the
// stage times are not needed.
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_BHAT: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Dopri {
    k: Vec<Array2<Complex64>>,
    stage: Array2<Complex64>,
    y5: Array2<Complex64>,
}

impl Dopri {
    fn new(n: usize) -> Self {
        Self {
            k: (0..7).map(|_| Array2::zeros((n, n))).collect(),
            stage: Array2::zeros((n, n)),
            y5: Array2::zeros((n, n)),
        }
    }

    /// Attempts one step; returns the scaled error norm and leaves the
    /// candidate in `self.y5`.
    fn attempt<F>(&mut self, f: &mut F, y: &Array2<Complex64>, h: f64, cfg: &MasterConfig) -> f64
    where
        F: FnMut(&Array2<Complex64>, &mut Array2<Complex64>),
    {
        f(y, &mut self.k[0]);
        for s in 1..7 {
            self.stage.assign(y);
            for (j, a) in DP_A[s].iter().enumerate().take(s) {
                if *a != 0.0 {
                    self.stage.scaled_add(Complex64::from(h * a), &self.k[j]);
                }
            }
            let (_, rest) = self.k.split_at_mut(s);
            f(&self.stage, &mut rest[0]);
        }
        self.y5.assign(y);
        for (s, b) in DP_B.iter().enumerate() {
            if *b != 0.0 {
                self.y5.scaled_add(Complex64::from(h * b), &self.k[s]);
            }
        }
        let mut err = 0.0f64;
        for idx in 0..y.len() {
            let (r, c) = (idx / y.ncols(), idx % y.ncols());
            let mut e = Complex64::new(0.0, 0.0);
            for s in 0..7 {
                let w = DP_B[s] - DP_BHAT[s];
                if w != 0.0 {
                    e += self.k[s][[r, c]] * (h * w);
                }
            }
            let scale = cfg.abs_tol + cfg.rel_tol * y[[r, c]].norm().max(self.y5[[r, c]].norm());
            err = err.max(e.norm() / scale);
        }
            err
    }
}

/// Drives `y` from `t0` to `t1` with the configured integrator.
fn advance<F>(
    f: &mut F,
    y: &mut Array2<Complex64>,
    t0: f64,
    t1: f64,
    cfg: &MasterConfig,
    h_adapt: &mut f64,
    rk4: &mut Rk4Work,
    dopri: &mut Dopri,
) -> Result<(), MasterError>
where
    F: FnMut(&Array2<Complex64>, &mut Array2<Complex64>),
{
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(());
    }
    match cfg.integrator {
        Integrator::Rk4 => {
            let steps = (span / cfg.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for s in 0..steps {
                rk4.step(f, y, h);
                let norm = frob(y);
                if !(norm <= NORM_BLOWUP) {
                    return Err(MasterError::Unstable {
                        t: t0 + (s + 1) as f64 * h,
                        norm,
                    });
                }
            }
        }
        Integrator::Rk45Adaptive => {
            let mut t = t0;
            let min_step = 1e-12 * span.max(1.0);
            while t < t1 {
                let h = h_adapt.min(t1 - t);
                let err = dopri.attempt(f, y, h, cfg);
                if !err.is_finite() {
                    return Err(MasterError::Unstable { t, norm: frob(y) });
                }
                if err <= 1.0 {
                    y.assign(&dopri.y5);
                    t = if t1 - t <= h { t1 } else { t + h };
                    let norm = frob(y);
                    if !(norm <= NORM_BLOWUP) {
                        return Err(MasterError::Unstable { t, norm });
                    }
                }
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // Do not let a short final step to an output time shrink
                // the step carried into the next interval.
                if err > 1.0 || h == *h_adapt {
                    *h_adapt = h * factor;
                }
                if *h_adapt < min_step {
                    return Err(MasterError::StepUnderflow { t, min_step });
                }
            }
        }
    }
    Ok(())
}

fn output_times(cfg: &MasterConfig) -> Vec<f64> {
    (0..=cfg.n_output)
        .map(|k| cfg.t_end * k as f64 / cfg.n_output as f64)
        .collect()
}

/// Evolves `ρ_OD` and calls `sink` at every output time.
pub fn evolve_offdiag_with<S>(
    initial: &ComplexOperator,
    p: &ExperimentParams,
    eta: f64,
    cfg: &MasterConfig,
    mut sink: S,
) -> Result<(), MasterError>
where
    S: FnMut(f64, &Array2<Complex64>),
{
    cfg.validate()?;
    let Space::Mirror(dim) = initial.space() else {
        return Err(FockError::ShapeMismatch {
            op: "evolve_offdiag",
            left: initial.space(),
            right: Space::Mirror(FockDimension::new(2)?),
        }
        .into());
    };
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(MasterError::Config(format!("eta must be non-negative (got {eta})")));
    }
    if cfg.integrator == Integrator::Rk4 {
        let limit = RK4_STABILITY_LIMIT / spectral_bound(p, eta, dim);
        if cfg.dt > limit {
            return Err(MasterError::StepTooLarge { dt: cfg.dt, limit });
        }
    }
    let n = dim.n_levels();
    let mut generator = OffdiagGenerator::new(p, eta, dim);
    let mut f = |y: &Array2<Complex64>, out: &mut Array2<Complex64>| generator.eval(y, out);
    let mut y = initial.matrix().clone();
    let mut rk4 = Rk4Work::new(n);
    let mut dopri = Dopri::new(n);
    let mut h_adapt = cfg.dt;
    let times = output_times(cfg);
    sink(times[0], &y);
    for w in times.windows(2) {
        advance(&mut f, &mut y, w[0], w[1], cfg, &mut h_adapt, &mut rk4, &mut dopri)?;
        sink(w[1], &y);
    }
    Ok(())
}

/// Evolves `ρ_OD` from `initial`; one sample per output time.
pub fn evolve_offdiag(
    initial: &ComplexOperator,
    p: &ExperimentParams,
    eta: f64,
    cfg: &MasterConfig,
) -> Result<Vec<MasterSample>, MasterError> {
    let space = initial.space();
    let mut out = Vec::with_capacity(cfg.n_output + 1);
    evolve_offdiag_with(initial, p, eta, cfg, |t, y| {
        let rho_od = ComplexOperator::from_matrix(space, y.clone()).expect("same shape");
        let record = VisibilityRecord::new(t, rho_od.trace(), Source::MasterEquation);
        out.push(MasterSample { t, rho_od, record });
    })?;
    Ok(out)
}

/// Visibility records only, without keeping the operators.
pub fn visibility_series(
    p: &ExperimentParams,
    eta: f64,
    dim: FockDimension,
    cfg: &MasterConfig,
) -> Result<Vec<VisibilityRecord>, MasterError> {
    let initial = vacuum_projector(dim);
    let mut out = Vec::with_capacity(cfg.n_output + 1);
    evolve_offdiag_with(&initial, p, eta, cfg, |t, y| {
        let f: Complex64 = (0..y.nrows()).map(|k| y[[k, k]]).sum();
        out.push(VisibilityRecord::new(t, f, Source::MasterEquation));
    })?;
    Ok(out)
}

/// `|0⟩⟨0|` on the mirror.
pub fn vacuum_projector(dim: FockDimension) -> ComplexOperator {
    let mut m = Array2::zeros((dim.n_levels(), dim.n_levels()));
    m[[0, 0]] = Complex64::new(1.0, 0.0);
    ComplexOperator::from_matrix(Space::Mirror(dim), m).expect("square")
}

/// Dense RK4 on the full joint density matrix, returning `f` from the
/// off-diagonal block at each output time. Test oracle only: it is 8× the
/// work of the off-diagonal route.
pub fn evolve_joint(
    initial: &DensityMatrix,
    p: &ExperimentParams,
    eta: f64,
    cfg: &MasterConfig,
) -> Result<Vec<VisibilityRecord>, MasterError> {
    cfg.validate()?;
    let Space::Joint(dim) = initial.space() else {
        return Err(FockError::ShapeMismatch {
            op: "evolve_joint",
            left: initial.space(),
            right: Space::Joint(FockDimension::new(2)?),
        }
        .into());
    };
    let h = build_hamiltonian(p, dim);
    let x = lift_mirror(&quadrature(dim))?;
    let noise = eta * p.sigma * p.sigma;
    let space = initial.space();
    let mut f = |y: &Array2<Complex64>, out: &mut Array2<Complex64>| {
        let rho = ComplexOperator::from_matrix(space, y.clone()).expect("same shape");
        out.assign(joint_rhs(&rho, &h, &x, noise).expect("same space").matrix());
    };
    let mut y = initial.operator().matrix().clone();
    let mut rk4 = Rk4Work::new(space.size());
    let mut dopri = Dopri::new(space.size());
    let mut h_adapt = cfg.dt;
    let record = |t: f64, y: &Array2<Complex64>| {
        let rho = DensityMatrix::new(ComplexOperator::from_matrix(space, y.clone()).expect("shape"));
        let od = rho.offdiagonal_block().expect("joint");
        VisibilityRecord::new(t, fock::trace(&od), Source::MasterEquation)
    };
    let times = output_times(cfg);
    let mut out = vec![record(times[0], &y)];
    for w in times.windows(2) {
        // The joint norm is bounded by 1 as well; reuse the same guard.
        advance(&mut f, &mut y, w[0], w[1], cfg, &mut h_adapt, &mut rk4, &mut dopri)?;
        out.push(record(w[1], &y));
    }
    Ok(out)
}
