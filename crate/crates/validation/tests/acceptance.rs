//! Acceptance run: one PASS/FAIL line per criterion, tolerances pinned.
//! Exits non-zero when any criterion fails.

use std::time::{Duration, Instant};

use mirrorsim_core::csl::{
    crossover_check, crossover_displacement, gamma_exact, gamma_linear_regime,
    gamma_quadratic_regime, taylor_coefficient_asymptotic, taylor_coefficient_c, CslParams,
    DensityProfile, Displacement,
};
use mirrorsim_core::experiment::{
    collapse_exponent, eta_for_damping, f_closed_form, verify_baker_hausdorff, visibility_qm,
    ExperimentParams,
};
use mirrorsim_core::fock::FockDimension;
use mirrorsim_core::ito::{run_suite, McSettings};
use mirrorsim_core::master::{visibility_series, MasterConfig};
use mirrorsim_core::stochastic::{
    ensemble_offdiag, f_factorized, sample_f_s, SampleGrid, Scheme,
};
use mirrorsim_validation::{timed, Report};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn closed_form_equivalence() -> (bool, String) {
    const REL_TOL: f64 = 1e-6;
    const CASE_SECONDS: f64 = 30.0;
    let mut worst_dev = 0.0f64;
    let mut worst_time = 0.0f64;
    let mut max_levels = 0;
    let mut notes = Vec::new();
    for kappa in [0.3, 1.0] {
        for x in [0.0, 0.5, 5.0] {
            let p = ExperimentParams::dimensionless(kappa);
            let period = p.period();
            let t_end = 2.0 * period;
            // x = η σ² ℓ² T
            let eta = x / (p.sigma * p.sigma * p.ell() * p.ell() * period);
            let dim = p.truncation(eta, t_end);
            let mut cfg = MasterConfig::default_for(&p, eta, t_end);
            cfg.n_output = 199;
            let start = Instant::now();
            let recs = match visibility_series(&p, eta, dim, &cfg) {
                Ok(r) => r,
                Err(e) => return (false, format!("κ={kappa} x={x}: {e}")),
            };
            let took = secs(start.elapsed());
            let dev = recs
                .iter()
                .map(|r| {
                    let want = f_closed_form(&p, eta, r.t).norm();
                    (r.nu - want).abs() / want
                })
                .fold(0.0, f64::max);
            if dev > REL_TOL || took > CASE_SECONDS {
                notes.push(format!("κ={kappa} x={x}: dev {dev:.2e}, {took:.1} s"));
            }
            worst_dev = worst_dev.max(dev);
            worst_time = worst_time.max(took);
            max_levels = max_levels.max(dim.n_levels());
            assert_eq!(recs.len(), 200);
        }
    }
    let passed = notes.is_empty();
    let mut detail = format!(
        "6 cases × 200 points: max rel |f| dev {worst_dev:.2e} (≤ {REL_TOL:e}); slowest case {worst_time:.1} s (≤ {CASE_SECONDS} s); n_levels up to {max_levels}"
    );
    if !passed {
        detail += &format!("; failing: {}", notes.join("; "));
    }
    (passed, detail)
}

fn standard_revival() -> (bool, String) {
    const TOL: f64 = 1e-8;
    let mut worst = 0.0f64;
    for kappa in [0.3, 1.0] {
        let p = ExperimentParams::dimensionless(kappa);
        let period = p.period();
        let mut cfg = MasterConfig::default_for(&p, 0.0, 2.0 * period);
        cfg.n_output = 100;
        let recs = match visibility_series(&p, 0.0, p.truncation(0.0, 2.0 * period), &cfg) {
            Ok(r) => r,
            Err(e) => return (false, format!("κ={kappa}: {e}")),
        };
        for k in [1usize, 2] {
            let analytic = visibility_qm(&p, k as f64 * period);
            let master = recs[50 * k].nu;
            worst = worst.max((analytic - 1.0).abs()).max((master - 1.0).abs());
        }
    }
    (
        worst <= TOL,
        format!("max |ν(kT) − 1| over k=1,2, κ∈{{0.3,1}}, analytic+master: {worst:.2e} (≤ {TOL:e})"),
    )
}

fn baker_hausdorff() -> (bool, String) {
    const TOL: f64 = 1e-8;
    const SECONDS: f64 = 10.0;
    let dim = FockDimension::new(60).expect("60 levels");
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for kappa in [0.5, 1.0] {
        let p = ExperimentParams::dimensionless(kappa);
        let start = Instant::now();
        for k in 1..=20 {
            let t = 2.0 * p.period() * k as f64 / 20.0;
            match verify_baker_hausdorff(&p, t, dim) {
                Ok(c) => worst = worst.max(c.residual).max(c.adjoint_residual),
                Err(e) => return (false, format!("κ={kappa} t={t}: {e}")),
            }
        }
        slowest = slowest.max(secs(start.elapsed()));
    }
    (
        worst <= TOL && slowest <= SECONDS,
        format!(
            "20 t-points, n_levels=60, κ∈{{0.5,1}}: max Frobenius residual {worst:.2e} (≤ {TOL:e}); slowest sweep {slowest:.1} s (≤ {SECONDS} s)"
        ),
    )
}

fn unravelling_equivalence() -> (bool, String) {
    const Z: f64 = 4.0;
    const SECONDS: f64 = 300.0;
    let p = ExperimentParams::dimensionless(0.5);
    let period = p.period();
    let eta = eta_for_damping(&p, 0.5);
    let grid = SampleGrid::new(period, 1e-3 / p.omega_m, 4).expect("grid");
    let start = Instant::now();
    let run = |scheme, seed| ensemble_offdiag(10_000, seed, &p, eta, &grid, scheme);
    let (lin, non) = match (run(Scheme::Linear, 1_000_000), run(Scheme::Nonlinear, 2_000_000)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return (false, e.to_string()),
    };
    let took = secs(start.elapsed());
    let l = lin.points.last().expect("points").estimate;
    let n = non.points.last().expect("points").estimate;
    let target = f_closed_form(&p, eta, period);
    let z_lin = l.z_score(target);
    let mutual = (l.mean - n.mean).norm() / (l.std_error.powi(2) + n.std_error.powi(2)).sqrt();
    (
        z_lin <= Z && mutual <= Z && took <= SECONDS,
        format!(
            "κ=0.5, Λ=0.5, dt={:.3e}, 10⁴ traj: linear E[f(T)]={:.4}{:+.4}i vs {:.4}{:+.4}i, z={z_lin:.2}; nonlinear vs linear z={mutual:.2} (≤ {Z}); aborted {}+{}; {took:.0} s (≤ {SECONDS} s)",
            grid.dt(),
            l.mean.re,
            l.mean.im,
            target.re,
            target.im,
            lin.n_aborted,
            non.n_aborted
        ),
    )
}

fn gaussian_pipeline() -> (bool, String) {
    const REL_TOL: f64 = 1e-12;
    const Z: f64 = 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let kappa = rng.random_range(0.0..2.0);
        let w = rng.random_range(0.2..5.0);
        let sigma = rng.random_range(0.1..3.0);
        let p = ExperimentParams::new(1e3, w, kappa * w, sigma).expect("valid draw");
        let eta = eta_for_damping(&p, rng.random_range(0.0..2.0));
        let t = rng.random_range(0.0..3.0) * p.period();
        let got = f_factorized(&p, eta, t);
        let want = f_closed_form(&p, eta, t);
        worst = worst.max((got.f - want).norm() / want.norm());
        debug_assert_eq!(got.f, got.f_d * Complex64::new(got.f_s, 0.0));
    }
    let p = ExperimentParams::dimensionless(0.5);
    let eta = eta_for_damping(&p, 0.5);
    let t = p.period();
    let est = match sample_f_s(&p, eta, t, 10_000, 3_000_000, 2000) {
        Ok(e) => e,
        Err(e) => return (false, e.to_string()),
    };
    let target = (-collapse_exponent(&p, eta, t)).exp();
    let z = est.z_score(Complex64::new(target, 0.0));
    (
        worst <= REL_TOL && z <= Z,
        format!(
            "50 draws: max rel |f_D f_S − f| {worst:.2e} (≤ {REL_TOL:e}); MC f_S at 10⁴ paths {:.4}{:+.4}i vs {target:.4}, z={z:.2} (≤ {Z})",
            est.mean.re, est.mean.im
        ),
    )
}

fn ito_suite() -> (bool, String) {
    const SECONDS: f64 = 120.0;
    let mc = McSettings::default();
    let start = Instant::now();
    let report = match run_suite(&mc) {
        Ok(r) => r,
        Err(e) => return (false, e.to_string()),
    };
    let took = secs(start.elapsed());
    let max_z = report.checks.iter().map(|c| c.max_z()).fold(0.0, f64::max);
    let failing: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    (
        report.passed && took <= SECONDS,
        format!(
            "{} checks at {} paths: max |z| {max_z:.2} (≤ 4){}; suite {took:.1} s (≤ {SECONDS} s)",
            report.checks.len(),
            mc.n_paths,
            if failing.is_empty() {
                String::new()
            } else {
                format!(", failing: {}", failing.join(", "))
            }
        ),
    )
}

fn unit_csl(side: f64) -> (CslParams, DensityProfile) {
    (CslParams::new(1.0, 1.0), DensityProfile::cube(1.0, side))
}

fn csl_quadratic() -> (bool, String) {
    const TOL: f64 = 1e-2;
    let (c, prof) = unit_csl(30.0);
    let d = 0.05;
    let g = match gamma_exact(&Displacement::along_x(d), &prof, &c) {
        Ok(g) => g,
        Err(e) => return (false, e.to_string()),
    };
    let exact = (g / gamma_quadratic_regime(d, &c, taylor_coefficient_c(&prof, 1.0)) - 1.0).abs();
    let asym =
        (g / gamma_quadratic_regime(d, &c, taylor_coefficient_asymptotic(&prof, 1.0)) - 1.0).abs();
    (
        exact <= TOL,
        format!(
            "|d|√α=0.05, S√α=30: |Γ/(½γC d²) − 1| = {exact:.2e} with exact C (≤ {TOL:e}); {asym:.2e} with large-cube C"
        ),
    )
}

fn csl_linear() -> (bool, String) {
    const TOL: f64 = 5e-2;
    let (c, prof) = unit_csl(100.0);
    let mut worst = 0.0f64;
    let mut cells = Vec::new();
    for d in [10.0, 12.5, 15.0, 17.5, 20.0] {
        let g = match gamma_exact(&Displacement::along_x(d), &prof, &c) {
            Ok(g) => g,
            Err(e) => return (false, e.to_string()),
        };
        let r = g / gamma_linear_regime(d, &c, &prof);
        worst = worst.max((r - 1.0).abs());
        cells.push(format!("{d}:{r:.4}"));
    }
    (
        worst <= TOL,
        format!(
            "S√α=100, Γ/(γ|d|S²D0²) at |d|√α = {}: max dev {worst:.3} (≤ {TOL})",
            cells.join(" ")
        ),
    )
}

fn csl_crossover() -> (bool, String) {
    let (c, prof) = unit_csl(100.0);
    let dc = crossover_displacement(c.alpha);
    let quad = gamma_quadratic_regime(dc, &c, taylor_coefficient_asymptotic(&prof, c.alpha));
    let lin = gamma_linear_regime(dc, &c, &prof);
    let meet = (quad / lin - 1.0).abs();
    let report = match crossover_check(&prof, &c) {
        Ok(r) => r,
        Err(e) => return (false, e.to_string()),
    };
    (
        meet <= 1e-12 && report.within_band,
        format!(
            "asymptotes meet at 2√(π/α)={dc:.4} (rel mismatch {meet:.1e}); exact Γ log-slope 3/2 at {:.4}, ratio {:.3} (band ×2)",
            report.observed, report.ratio
        ),
    )
}

fn csl_asymptotics() -> (bool, String) {
    let mut ok = true;
    let mut cells = Vec::new();
    for (s, tol) in [(30.0, 5e-2), (300.0, 5e-3)] {
        let prof = DensityProfile::cube(1.0, s);
        let dev = (taylor_coefficient_c(&prof, 1.0) / taylor_coefficient_asymptotic(&prof, 1.0)
            - 1.0)
            .abs();
        ok &= dev <= tol;
        cells.push(format!("S√α={s}: {dev:.4} (≤ {tol})"));
    }
    (
        ok,
        format!("|C_exact/(D0²S²(α/π)^½) − 1|: {}", cells.join("; ")),
    )
}

fn cli_bytes(args: &[&str]) -> Result<Vec<u8>, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("out");
    let mut argv = vec!["mirrorsim"];
    argv.extend_from_slice(args);
    let path_str = path.to_str().expect("utf-8 temp path");
    argv.extend(["--out", path_str]);
    let mut sink = Vec::new();
    let mut err = Vec::new();
    let code = mirrorsim_cli::run(argv, &mut sink, &mut err);
    if code != 0 {
        return Err(format!("exit {code}: {}", String::from_utf8_lossy(&err)));
    }
    std::fs::read(&path).map_err(|e| e.to_string())
}

fn reproducibility() -> (bool, String) {
    let small = [
        "--set",
        "ensemble.n_traj=300",
        "--set",
        "grid.n_points=5",
        "--set",
        "grid.t_end=3",
        "--set",
        "ensemble.dt=0.005",
    ];
    let mut runs: Vec<(String, Vec<String>)> = Vec::new();
    for scheme in ["linear", "nonlinear", "gaussian"] {
        for format in ["csv", "json"] {
            let mut a: Vec<String> = vec!["trajectories".into(), "--seed".into(), "7".into()];
            a.extend(small.iter().map(|s| s.to_string()));
            a.extend(["--set".into(), format!("ensemble.scheme={scheme}")]);
            a.extend(["--format".into(), format.into()]);
            runs.push((format!("trajectories/{scheme}/{format}"), a));
        }
    }
    runs.push((
        "verify".into(),
        [
            "verify",
            "--seed",
            "7",
            "--set",
            "verify.ito.n_paths=4000",
            "--set",
            "verify.bh_points=4",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    ));
    let mut mismatched = Vec::new();
    for (name, args) in &runs {
        let a: Vec<&str> = args.iter().map(String::as_str).collect();
        let mut b = a.clone();
        b.extend(["--threads", "2"]);
        match (cli_bytes(&a), cli_bytes(&a), cli_bytes(&b)) {
            (Ok(x), Ok(y), Ok(z)) => {
                if x != y || x != z || x.is_empty() {
                    mismatched.push(name.clone());
                }
            }
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                return (false, format!("{name}: {e}"))
            }
        }
    }
    (
        mismatched.is_empty(),
        format!(
            "{} Monte Carlo invocations run three times each (same seed; second repeat with --threads 2): {}",
            runs.len(),
            if mismatched.is_empty() {
                "all byte-identical".to_string()
            } else {
                format!("differences in {}", mismatched.join(", "))
            }
        ),
    )
}

fn main() {
    let mut report = Report::default();
    report.record(timed("1", "closed-form oracle equivalence", closed_form_equivalence));
    report.record(timed("2", "standard-QM revival", standard_revival));
    report.record(timed("3", "Baker–Hausdorff operator identity", baker_hausdorff));
    report.record(timed("4", "unravelling equivalence", unravelling_equivalence));
    report.record(timed("5", "Gaussian-ansatz pipeline", gaussian_pipeline));
    report.record(timed("6", "Itô suite", ito_suite));

    let csl_start = Instant::now();
    report.record(timed("7a", "CSL quadratic regime", csl_quadratic));
    report.record(timed("7b", "CSL linear regime", csl_linear));
    report.record(timed("7c", "CSL crossover", csl_crossover));
    let csl_total = secs(csl_start.elapsed());
    report.record(timed("7t", "CSL runtime", || {
        (csl_total <= 60.0, format!("7a–7c took {csl_total:.1} s (≤ 60 s)"))
    }));

    report.record(timed("8", "exact-C asymptotics", csl_asymptotics));
    report.record(timed("9", "reproducibility", reproducibility));

    println!("{}", report.summary());
    if !report.failed().is_empty() {
        std::process::exit(1);
    }
}
