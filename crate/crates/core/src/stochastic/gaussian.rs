//! Gaussian-ansatz solution of the linear unravelling in the position
//! representation, `φ(x) = (Mω_m/π)^{1/4} exp(−a x² + b x + c)`.

use num_complex::Complex64;

use crate::experiment::ExperimentParams;

use super::wiener::WienerPath;
use super::StochasticError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianAnsatz {
    pub t: f64,
    /// Units 1/length².
    pub a: Complex64,
    /// Units 1/length.
    pub b: Complex64,
    pub c: Complex64,
    /// 0: free arm, 1: displaced arm.
    pub branch: u8,
    /// `Mω_m/2`, fixing the normalization prefactor.
    pub a_ref: f64,
}

impl GaussianAnsatz {
    pub fn initial(p: &ExperimentParams, branch: u8) -> Self {
        let a_ref = ground_width(p);
        Self {
            t: 0.0,
            a: a_ref.into(),
            b: Complex64::new(0.0, 0.0),
            c: Complex64::new(0.0, 0.0),
            branch,
            a_ref,
        }
    }

    /// `φ(x)`.
    pub fn eval(&self, x: f64) -> Complex64 {
        (2.0 * self.a_ref / std::f64::consts::PI).powf(0.25)
            * (-self.a * x * x + self.b * x + self.c).exp()
    }
}

/// `a = Mω_m/2 = 1/(4σ²)`.
pub fn ground_width(p: &ExperimentParams) -> f64 {
    0.25 / (p.sigma * p.sigma)
}

/// Drift of `a`: `−(2i/M) a² + iMω_m²/2`.
fn a_rhs(a: Complex64, mass: f64, omega: f64) -> Complex64 {
    Complex64::new(0.0, -2.0 / mass) * a * a + Complex64::new(0.0, 0.5 * mass * omega * omega)
}

/// Evolves the ansatz coefficients for branch `n` along `path`.
///
/// `a` is integrated with RK4 from its stationary value, `b` by the exact
/// left-point convolution `I_{k+1} = e^{−iω dt}(I_k + dW_k)`, and `c` by
/// trapezoidal quadrature of `(i/2M)(b² − 2a)`.
pub fn gaussian_evolve(
    branch: u8,
    path: &WienerPath,
    p: &ExperimentParams,
    eta: f64,
) -> Result<Vec<GaussianAnsatz>, StochasticError> {
    let mut out = Vec::with_capacity(path.t_grid().len());
    let mut ev = GaussianEvolver::new(branch, p, eta)?;
    out.push(ev.state());
    for (k, dw) in path.increments().iter().enumerate() {
        let t = path.t_grid();
        ev.step(t[k + 1] - t[k], *dw);
        out.push(ev.state());
    }
    Ok(out)
}

/// Incremental form of [`gaussian_evolve`].
#[derive(Debug, Clone)]
pub struct GaussianEvolver {
    s: GaussianAnsatz,
    mass: f64,
    omega: f64,
    drive: f64,
    sqrt_eta: f64,
    /// `∫₀ᵗ e^{−iω(t−s)} dW_s`.
    conv: Complex64,
    c_rate: Complex64,
}

impl GaussianEvolver {
    pub fn new(branch: u8, p: &ExperimentParams, eta: f64) -> Result<Self, StochasticError> {
        if branch > 1 {
            return Err(StochasticError::BadBranch(branch));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(StochasticError::BadEta(eta));
        }
        let s = GaussianAnsatz::initial(p, branch);
        let mass = p.effective_mass();
        let mut e = Self {
            s,
            mass,
            omega: p.omega_m,
            drive: branch as f64 * p.g(),
            sqrt_eta: eta.sqrt(),
            conv: Complex64::new(0.0, 0.0),
            c_rate: Complex64::new(0.0, 0.0),
        };
        e.c_rate = e.rate();
        Ok(e)
    }

    fn rate(&self) -> Complex64 {
        Complex64::new(0.0, 0.5 / self.mass) * (self.s.b * self.s.b - 2.0 * self.s.a)
    }

    pub fn state(&self) -> GaussianAnsatz {
        self.s
    }

    pub fn step(&mut self, dt: f64, dw: f64) {
        let (m, w) = (self.mass, self.omega);
        let a = self.s.a;
        let k1 = a_rhs(a, m, w);
        let k2 = a_rhs(a + 0.5 * dt * k1, m, w);
        let k3 = a_rhs(a + 0.5 * dt * k2, m, w);
        let k4 = a_rhs(a + dt * k3, m, w);
        self.s.a = a + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        self.conv = Complex64::from_polar(1.0, -w * dt) * (self.conv + dw);
        self.s.t += dt;
        let det = self.drive / w * (1.0 - Complex64::from_polar(1.0, -w * self.s.t));
        self.s.b = det + Complex64::new(0.0, self.sqrt_eta) * self.conv;

        let next = self.rate();
        self.s.c += 0.5 * dt * (self.c_rate + next);
        self.c_rate = next;
    }
}

/// `∫ φ⁰(x)* φ¹(x) dx` in closed form.
pub fn branch_overlap(
    phi0: &GaussianAnsatz,
    phi1: &GaussianAnsatz,
) -> Result<Complex64, StochasticError> {
    let s = phi0.a.conj() + phi1.a;
    if !(phi0.a.re > 0.0 && phi1.a.re > 0.0 && s.re > 0.0) {
        return Err(StochasticError::NotNormalizable(phi0.a.re.min(phi1.a.re)));
    }
    let beta = phi0.b.conj() + phi1.b;
    let norm = (4.0 * phi0.a_ref * phi1.a_ref).sqrt() / s;
    Ok(norm.sqrt() * (beta * beta / (4.0 * s) + phi0.c.conj() + phi1.c).exp())
}

/// `z_k = ∫₀^{t_k} sin ω(t_k − s) dW_s` with left-point increments.
pub fn z_process(path: &WienerPath, omega_m: f64) -> Vec<f64> {
    let t = path.t_grid();
    let mut j = Complex64::new(0.0, 0.0);
    let mut out = Vec::with_capacity(t.len());
    out.push(0.0);
    for (k, dw) in path.increments().iter().enumerate() {
        j = Complex64::from_polar(1.0, omega_m * (t[k + 1] - t[k])) * (j + dw);
        out.push(j.im);
    }
    out
}

/// `K(t, s) = E[z_t z_s]`.
pub fn correlation_kernel(t: f64, s: f64, omega_m: f64) -> f64 {
    let m = t.min(s);
    0.5 * m * (omega_m * (t - s)).cos()
        - ((omega_m * (t + s)).sin() - (omega_m * (t - s).abs()).sin()) / (4.0 * omega_m)
}

/// `∫₀ᵗ∫₀ᵗ K(s₁, s₂) ds₁ ds₂`.
pub fn kernel_double_integral(t: f64, omega_m: f64) -> f64 {
    let x = omega_m * t;
    if x.abs() < 1e-2 {
        // Leading terms cancel; series x^5/20 − x^7/168.
        let x2 = x * x;
        return x2 * x2 * x * (1.0 / 20.0 - x2 / 168.0) / omega_m.powi(3);
    }
    (1.5 * t - 2.0 * x.sin() / omega_m + (2.0 * x).sin() / (4.0 * omega_m)) / (omega_m * omega_m)
}

/// Coupling of `∫ z ds` in the stochastic phase, `√η g/(Mω_m)`.
pub fn phase_coupling(p: &ExperimentParams, eta: f64) -> f64 {
    eta.sqrt() * p.g() / (p.effective_mass() * p.omega_m)
}

/// Deterministic factor, stochastic factor and their product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factorized {
    pub f_d: Complex64,
    pub f_s: f64,
    pub f: Complex64,
}

/// Built from the integral forms: `f_D = exp[i g²/(2Mω²) ∫₀ᵗ (1 − e^{−iωs}) ds]`
/// and `f_S` through the kernel of `z`. Independent of [`f_closed_form`].
///
/// [`f_closed_form`]: crate::experiment::f_closed_form
pub fn f_factorized(p: &ExperimentParams, eta: f64, t: f64) -> Factorized {
    let w = p.omega_m;
    let g = p.g();
    let a = g * g / (2.0 * p.effective_mass() * w * w);
    let i = Complex64::i();
    // ∫₀ᵗ (1 − e^{−iωs}) ds = t − (1 − e^{−iωt})/(iω)
    let integral = t - (1.0 - (-i * w * t).exp()) / (i * w);
    let f_d = (i * a * integral).exp();
    let f_s = f_s_from_kernel(p, eta, t);
    Factorized {
        f_d,
        f_s,
        f: f_d * f_s,
    }
}

/// `f_S` as the characteristic functional of `z`, through its kernel.
pub fn f_s_from_kernel(p: &ExperimentParams, eta: f64, t: f64) -> f64 {
    let k = phase_coupling(p, eta);
    (-0.5 * k * k * kernel_double_integral(t, p.omega_m)).exp()
}

/// Per-path value `exp(i k ∫₀ᵗ z ds)` with trapezoidal time integral.
pub fn f_s_sample(p: &ExperimentParams, eta: f64, path: &WienerPath) -> Complex64 {
    let z = z_process(path, p.omega_m);
    let t = path.t_grid();
    let integral: f64 = (0..z.len() - 1)
        .map(|k| 0.5 * (z[k] + z[k + 1]) * (t[k + 1] - t[k]))
        .sum();
    Complex64::from_polar(1.0, phase_coupling(p, eta) * integral)
}
