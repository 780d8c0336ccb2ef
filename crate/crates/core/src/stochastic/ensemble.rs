//! Ensemble averages over independently seeded trajectories.
//!
//! Trajectory `i` uses seed `seed_base + i`. Trajectories are grouped in
//! fixed chunks of [`CHUNK`]; chunk statistics are merged in chunk order, so
//! results are bit-identical for any thread count.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiment::{ExperimentParams, Source, VisibilityRecord};
use crate::fock::{ComplexOperator, DensityMatrix, FockDimension, Space};

use super::gaussian::{branch_overlap, phase_coupling, GaussianEvolver};
use super::sse::{initial_amplitudes, trajectory_offdiag, SseOperators, SseWork};
use super::wiener::{generate_path, SampleGrid, WienerStream};
use super::StochasticError;

pub const CHUNK: usize = 64;
pub const MIN_TRAJECTORIES: usize = 100;
pub const MAX_ABORT_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Nonlinear,
    Linear,
    Gaussian,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Nonlinear => "nonlinear",
            Scheme::Linear => "linear",
            Scheme::Gaussian => "gaussian",
        }
    }
}

/// Running mean and centred second moment of a real sample.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Welford) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    fn variance(&self) -> f64 {
        self.m2 / (self.n - 1.0)
    }
}

/// Sample moments of a complex quantity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    re: Welford,
    im: Welford,
}

impl Moments {
    pub fn push(&mut self, z: Complex64) {
        self.re.push(z.re);
        self.im.push(z.im);
    }

    pub fn merge(&mut self, o: &Moments) {
        self.re.merge(&o.re);
        self.im.merge(&o.im);
    }

    pub fn count(&self) -> usize {
        self.re.n as usize
    }

    pub fn estimate(&self) -> Option<EnsembleEstimate> {
        if self.re.n < 2.0 {
            return None;
        }
        let n = self.re.n;
        let se_re = (self.re.variance() / n).sqrt();
        let se_im = (self.im.variance() / n).sqrt();
        Some(EnsembleEstimate {
            mean: Complex64::new(self.re.mean, self.im.mean),
            std_error: (se_re * se_re + se_im * se_im).sqrt(),
            std_error_re: se_re,
            std_error_im: se_im,
            n_trajectories: self.count(),
        })
    }
}

/// Sample mean with standard errors.
///
/// `std_error` is `sqrt(Var Re + Var Im) / √n`, the standard error of the
/// complex mean as a distance in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleEstimate {
    pub mean: Complex64,
    pub std_error: f64,
    pub std_error_re: f64,
    pub std_error_im: f64,
    pub n_trajectories: usize,
}

impl EnsembleEstimate {
    pub fn from_samples(samples: &[Complex64]) -> Option<Self> {
        let mut m = Moments::default();
        samples.iter().for_each(|z| m.push(*z));
        m.estimate()
    }

    /// `|mean − target| / std_error`; infinite if the error is zero and
    /// the mean is off.
    pub fn z_score(&self, target: Complex64) -> f64 {
        let d = (self.mean - target).norm();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePoint {
    pub t: f64,
    pub estimate: EnsembleEstimate,
    pub record: VisibilityRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSeries {
    pub scheme: Scheme,
    pub points: Vec<EnsemblePoint>,
    pub n_requested: usize,
    pub n_aborted: usize,
    /// Fock truncation used by the state-vector schemes.
    pub n_levels: Option<usize>,
}

fn check_inputs(n_traj: usize, eta: f64, grid: &SampleGrid) -> Result<(), StochasticError> {
    if n_traj < MIN_TRAJECTORIES {
        return Err(StochasticError::TooFewTrajectories {
            n: n_traj,
            min: MIN_TRAJECTORIES,
        });
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(StochasticError::BadEta(eta));
    }
    grid.validate()
}

/// Runs `n_traj` trajectories and merges per-output moments.
pub(crate) fn run_chunks<F>(
    n_traj: usize,
    n_values: usize,
    traj: F,
) -> Result<(Vec<Moments>, usize), StochasticError>
where
    F: Fn(usize, &mut Vec<Complex64>) -> Result<(), StochasticError> + Sync,
{
    let n_chunks = n_traj.div_ceil(CHUNK);
    let parts: Vec<(Vec<Moments>, usize, Option<StochasticError>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Moments::default(); n_values];
            let mut buf = Vec::with_capacity(n_values);
            let mut aborted = 0;
            let mut first = None;
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_traj) {
                buf.clear();
                match traj(i, &mut buf) {
                    Ok(()) => acc.iter_mut().zip(&buf).for_each(|(m, z)| m.push(*z)),
                    Err(e) => {
                        aborted += 1;
                        first.get_or_insert(e);
                    }
                }
            }
            (acc, aborted, first)
        })
        .collect();
    let mut total = vec![Moments::default(); n_values];
    let mut aborted = 0;
    let mut first = None;
    for (acc, a, f) in parts {
        total.iter_mut().zip(&acc).for_each(|(t, m)| t.merge(m));
        aborted += a;
        if first.is_none() {
            first = f;
        }
    }
    if aborted as f64 > MAX_ABORT_FRACTION * n_traj as f64 {
        return Err(StochasticError::TooManyAborts {
            aborted,
            total: n_traj,
            first: first.map(|e| e.to_string()).unwrap_or_default(),
        });
    }
    Ok((total, aborted))
}

fn sse_trajectory(
    ops: &SseOperators,
    scheme: Scheme,
    seed: u64,
    grid: &SampleGrid,
    out: &mut Vec<Complex64>,
) -> Result<Vec<Complex64>, StochasticError> {
    let dim = FockDimension::new(ops.n_levels())?;
    let mut psi = initial_amplitudes(dim);
    let mut work = SseWork::new(dim);
    let mut noise = WienerStream::new(seed);
    let dt = grid.dt();
    out.push(trajectory_offdiag(&psi));
    for k in 0..grid.n_steps {
        let dw = noise.next_increment(dt);
        match scheme {
            Scheme::Nonlinear => ops.step_nonlinear(&mut psi, dw, dt, &mut work)?,
            _ => ops.step_linear(&mut psi, dw, dt, &mut work)?,
        }
        if (k + 1) % grid.output_every == 0 {
            out.push(trajectory_offdiag(&psi));
        }
    }
    Ok(psi)
}

fn gaussian_trajectory(
    p: &ExperimentParams,
    eta: f64,
    seed: u64,
    grid: &SampleGrid,
    out: &mut Vec<Complex64>,
) -> Result<(), StochasticError> {
    let mut free = GaussianEvolver::new(0, p, eta)?;
    let mut driven = GaussianEvolver::new(1, p, eta)?;
    let mut noise = WienerStream::new(seed);
    let dt = grid.dt();
    out.push(branch_overlap(&free.state(), &driven.state())?);
    for k in 0..grid.n_steps {
        let dw = noise.next_increment(dt);
        free.step(dt, dw);
        driven.step(dt, dw);
        if (k + 1) % grid.output_every == 0 {
            out.push(branch_overlap(&free.state(), &driven.state())?);
        }
    }
    Ok(())
}

/// Ensemble estimate of `f(t) = E[Tr ρ̂_OD]` with the default truncation.
pub fn ensemble_offdiag(
    n_traj: usize,
    seed_base: u64,
    p: &ExperimentParams,
    eta: f64,
    grid: &SampleGrid,
    scheme: Scheme,
) -> Result<EnsembleSeries, StochasticError> {
    let dim = p.truncation(eta, grid.t_end);
    ensemble_offdiag_in(n_traj, seed_base, p, eta, grid, scheme, dim)
}

/// As [`ensemble_offdiag`] with an explicit Fock truncation (ignored by
/// the Gaussian scheme).
pub fn ensemble_offdiag_in(
    n_traj: usize,
    seed_base: u64,
    p: &ExperimentParams,
    eta: f64,
    grid: &SampleGrid,
    scheme: Scheme,
    dim: FockDimension,
) -> Result<EnsembleSeries, StochasticError> {
    check_inputs(n_traj, eta, grid)?;
    let n_values = grid.n_output() + 1;
    let ops = SseOperators::new(p, eta, dim);
    let (moments, n_aborted) = run_chunks(n_traj, n_values, |i, out| {
        let seed = seed_base.wrapping_add(i as u64);
        match scheme {
            Scheme::Gaussian => gaussian_trajectory(p, eta, seed, grid, out),
            _ => sse_trajectory(&ops, scheme, seed, grid, out).map(|_| ()),
        }
    })?;
    let points = grid
        .output_times()
        .into_iter()
        .zip(&moments)
        .map(|(t, m)| {
            let estimate = m.estimate().expect("at least two accepted trajectories");
            EnsemblePoint {
                t,
                estimate,
                record: VisibilityRecord::new(t, estimate.mean, Source::MonteCarlo),
            }
        })
        .collect();
    Ok(EnsembleSeries {
        scheme,
        points,
        n_requested: n_traj,
        n_aborted,
        n_levels: (scheme != Scheme::Gaussian).then_some(dim.n_levels()),
    })
}

/// Entrywise ensemble mean of `|ψ⟩⟨ψ|` on the joint space at `grid.t_end`.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    pub mean: DensityMatrix,
    /// Complex standard error per entry.
    pub std_error: Array2<f64>,
    pub n_trajectories: usize,
}

pub fn ensemble_density(
    n_traj: usize,
    seed_base: u64,
    p: &ExperimentParams,
    eta: f64,
    dim: FockDimension,
    grid: &SampleGrid,
    scheme: Scheme,
) -> Result<DensityEstimate, StochasticError> {
    check_inputs(n_traj, eta, grid)?;
    if scheme == Scheme::Gaussian {
        return Err(StochasticError::BadGrid(
            "density estimates need a state-vector scheme".into(),
        ));
    }
    let ops = SseOperators::new(p, eta, dim);
    let size = 2 * dim.n_levels();
    let (moments, _) = run_chunks(n_traj, size * size, |i, out| {
        let mut scratch = Vec::new();
        let psi = sse_trajectory(&ops, scheme, seed_base.wrapping_add(i as u64), grid, &mut scratch)?;
        for a in &psi {
            for b in &psi {
                out.push(a * b.conj());
            }
        }
        Ok(())
    })?;
    let est: Vec<EnsembleEstimate> = moments
        .iter()
        .map(|m| m.estimate().expect("at least two accepted trajectories"))
        .collect();
    let mean = Array2::from_shape_fn((size, size), |(i, j)| est[i * size + j].mean);
    let std_error = Array2::from_shape_fn((size, size), |(i, j)| est[i * size + j].std_error);
    Ok(DensityEstimate {
        mean: DensityMatrix::new(ComplexOperator::from_matrix(Space::Joint(dim), mean)?),
        std_error,
        n_trajectories: est[0].n_trajectories,
    })
}

/// Monte Carlo estimate of the stochastic factor
/// `E[exp(i k ∫₀ᵗ z_s ds)]`, `k = √η g/(Mω_m)`.
pub fn sample_f_s(
    p: &ExperimentParams,
    eta: f64,
    t: f64,
    n_paths: usize,
    seed_base: u64,
    n_steps: usize,
) -> Result<EnsembleEstimate, StochasticError> {
    if n_paths < 2 {
        return Err(StochasticError::TooFewTrajectories { n: n_paths, min: 2 });
    }
    let grid = SampleGrid {
        t_end: t,
        n_steps,
        output_every: n_steps,
    };
    grid.validate()?;
    let t_grid = grid.t_grid();
    let k = phase_coupling(p, eta);
    let (m, _) = run_chunks(n_paths, 1, |i, out| {
        let path = generate_path(seed_base.wrapping_add(i as u64), &t_grid)?;
        // z by left-point convolution; ∫z ds by trapezoid.
        let mut j = Complex64::new(0.0, 0.0);
        let mut prev = 0.0;
        let mut integral = 0.0;
        for (s, dw) in path.increments().iter().enumerate() {
            let h = t_grid[s + 1] - t_grid[s];
            j = Complex64::from_polar(1.0, p.omega_m * h) * (j + dw);
            integral += 0.5 * h * (prev + j.im);
            prev = j.im;
        }
        out.push(Complex64::from_polar(1.0, k * integral));
        Ok(())
    })?;
    Ok(m[0].estimate().expect("n_paths ≥ 2"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{f_closed_form, f_standard};
    use crate::stochastic::gaussian::{f_s_sample, f_factorized};
    use std::f64::consts::PI;

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..300).map(|k| ((k * 37 % 101) as f64).sin() * 3.0 + 1.0).collect();
        let mut one = Welford::default();
        xs.iter().for_each(|x| one.push(*x));
        let mut a = Welford::default();
        let mut b = Welford::default();
        xs[..120].iter().for_each(|x| a.push(*x));
        xs[120..].iter().for_each(|x| b.push(*x));
        a.merge(&b);
        assert!((a.mean - one.mean).abs() < 1e-14);
        assert!((a.variance() - one.variance()).abs() < 1e-12);
        let mean = xs.iter().sum::<f64>() / 300.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 299.0;
        assert!((one.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn estimate_from_samples() {
        let s = [Complex64::new(1.0, 0.0), Complex64::new(3.0, 2.0)];
        let e = EnsembleEstimate::from_samples(&s).unwrap();
        assert_eq!(e.mean, Complex64::new(2.0, 1.0));
        // Var Re = 2, Var Im = 2, n = 2.
        assert!((e.std_error_re - 1.0).abs() < 1e-15);
        assert!((e.std_error - 2f64.sqrt()).abs() < 1e-15);
        assert!(EnsembleEstimate::from_samples(&s[..1]).is_none());
    }

    #[test]
    fn rejects_small_ensembles() {
        let p = ExperimentParams::dimensionless(0.5);
        let g = SampleGrid::new(1.0, 0.01, 1).unwrap();
        let r = ensemble_offdiag(10, 0, &p, 0.1, &g, Scheme::Linear);
        assert!(matches!(r, Err(StochasticError::TooFewTrajectories { .. })));
        let r = ensemble_offdiag(100, 0, &p, -0.1, &g, Scheme::Linear);
        assert!(matches!(r, Err(StochasticError::BadEta(_))));
    }

    #[test]
    fn noiseless_schemes_are_deterministic() {
        let p = ExperimentParams::dimensionless(0.6);
        let g = SampleGrid::new(2.0 * PI, 2e-4, 4).unwrap();
        for scheme in [Scheme::Linear, Scheme::Nonlinear, Scheme::Gaussian] {
            let s = ensemble_offdiag(100, 9, &p, 0.0, &g, scheme).unwrap();
            for pt in &s.points {
                assert_eq!(pt.estimate.std_error, 0.0, "{scheme:?}");
                let want = f_standard(&p, pt.t);
                // Explicit Euler drifts by O(dt t ⟨H²⟩).
                assert!((pt.estimate.mean - want).norm() < 1e-3, "{scheme:?} t={}", pt.t);
            }
        }
    }

    #[test]
    fn result_independent_of_thread_count() {
        let p = ExperimentParams::dimensionless(0.5);
        let g = SampleGrid::new(1.0, 0.01, 2).unwrap();
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| ensemble_offdiag(200, 42, &p, 0.2, &g, Scheme::Linear).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn abort_budget_enforced() {
        // A huge eta with a coarse step makes linear trajectories blow up.
        let p = ExperimentParams::dimensionless(0.5);
        let g = SampleGrid::new(50.0, 0.5, 1).unwrap();
        let r = ensemble_offdiag_in(
            100,
            0,
            &p,
            400.0,
            &g,
            Scheme::Linear,
            FockDimension::new(20).unwrap(),
        );
        assert!(matches!(r, Err(StochasticError::TooManyAborts { .. })), "{r:?}");
    }

    #[test]
    fn gaussian_scheme_matches_closed_form() {
        let p = ExperimentParams::dimensionless(0.5);
        let lambda = 0.5;
        let eta = crate::experiment::eta_for_damping(&p, lambda);
        let g = SampleGrid::new(2.0 * PI, 1e-3, 4).unwrap();
        let s = ensemble_offdiag(4000, 100, &p, eta, &g, Scheme::Gaussian).unwrap();
        for pt in &s.points[1..] {
            let want = f_closed_form(&p, eta, pt.t);
            assert!(pt.estimate.z_score(want) < 4.0, "t={} {:?} vs {want}", pt.t, pt.estimate);
        }
    }

    #[test]
    fn f_s_sampling_matches_closed_form() {
        let p = ExperimentParams::dimensionless(0.5);
        // ηℓ²t ≈ 1 at t = 2.
        let eta = 0.25;
        let t = 2.0;
        let est = sample_f_s(&p, eta, t, 10_000, 7, 400).unwrap();
        let want = f_factorized(&p, eta, t).f_s;
        assert!(est.z_score(want.into()) < 4.0, "{est:?} vs {want}");
        // The single-path helper agrees with the streaming estimator.
        let grid = SampleGrid::new(t, t / 400.0, 1).unwrap().t_grid();
        let one = f_s_sample(&p, eta, &generate_path(7, &grid).unwrap());
        let mut m = Moments::default();
        m.push(one);
        let (first, _) = run_chunks(1, 1, |_, out| {
            out.push(one);
            Ok(())
        })
        .unwrap();
        assert_eq!(first[0], m);
    }

    #[test]
    fn z_covariance_matches_kernel() {
        use crate::stochastic::gaussian::{correlation_kernel, z_process};
        let w = 1.0;
        let grid = SampleGrid::new(2.0, 0.01, 1).unwrap().t_grid();
        let (i1, i2) = (100, 200);
        let mut m = Welford::default();
        let n = 100_000u64;
        for seed in 0..n {
            let z = z_process(&generate_path(seed, &grid).unwrap(), w);
            m.push(z[i2] * z[i1]);
        }
        let want = correlation_kernel(2.0, 1.0, w);
        let se = (m.variance() / n as f64).sqrt();
        assert!((m.mean - want).abs() < 4.0 * se, "{} vs {want} ± {se}", m.mean);
    }
}
