//! One-dimensional adaptive quadrature.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("no convergence to {tol:e} on [{a}, {b}] (estimate {estimate:e})")]
    NoConvergence {
        a: f64,
        b: f64,
        tol: f64,
        estimate: f64,
    },
    #[error("integrand is not finite near x = {0}")]
    NonFinite(f64),
}

const MAX_DEPTH: u32 = 48;

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson with Richardson correction. `tol` is absolute.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadError::NonFinite(x))
        }
    };
    let fa = eval(a)?;
    let fb = eval(b)?;
    let fm = eval(0.5 * (a + b))?;
    let root = Panel {
        a,
        b,
        fa,
        fm,
        fb,
        whole: simpson(a, b, fa, fm, fb),
    };
    // Explicit stack instead of recursion; the pieces are summed in
    // left-to-right order so the result does not depend on scheduling.
    let mut stack = vec![(root, tol, 0u32)];
    let mut total = 0.0;
    while let Some((p, eps, depth)) = stack.pop() {
        let m = 0.5 * (p.a + p.b);
        let lm = 0.5 * (p.a + m);
        let rm = 0.5 * (m + p.b);
        let flm = eval(lm)?;
        let frm = eval(rm)?;
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let delta = left + right - p.whole;
        if delta.abs() <= 15.0 * eps || depth >= MAX_DEPTH {
            if depth >= MAX_DEPTH && delta.abs() > 15.0 * eps {
                return Err(QuadError::NoConvergence {
                    a,
                    b,
                    tol,
                    estimate: delta.abs(),
                });
            }
            total += left + right + delta / 15.0;
            continue;
        }
        stack.push((
            Panel {
                a: m,
                b: p.b,
                fa: p.fm,
                fm: frm,
                fb: p.fb,
                whole: right,
            },
            0.5 * eps,
            depth + 1,
        ));
        stack.push((
            Panel {
                a: p.a,
                b: m,
                fa: p.fa,
                fm: flm,
                fb: p.fm,
                whole: left,
            },
            0.5 * eps,
            depth + 1,
        ));
    }
    Ok(total)
}

pub const GAUSS_ORDER: usize = 64;

fn rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(NonZeroUsize::new(GAUSS_ORDER).unwrap()))
}

/// Adaptive Gauss–Legendre (order 64 panels, bisected until the two
/// halves agree with the whole to `tol`, absolute).
pub fn adaptive_gauss_legendre<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let g = rule();
    let panel = |lo: f64, hi: f64| g.integrate(lo, hi, &f);
    let mut stack = vec![(a, b, panel(a, b), tol, 0u32)];
    let mut total = 0.0;
    while let Some((lo, hi, whole, eps, depth)) = stack.pop() {
        if !whole.is_finite() {
            return Err(QuadError::NonFinite(0.5 * (lo + hi)));
        }
        let mid = 0.5 * (lo + hi);
        let left = panel(lo, mid);
        let right = panel(mid, hi);
        let delta = (left + right - whole).abs();
        if delta <= eps {
            total += left + right;
            continue;
        }
        if depth >= MAX_DEPTH {
            return Err(QuadError::NoConvergence {
                a,
                b,
                tol,
                estimate: delta,
            });
        }
        stack.push((mid, hi, right, 0.5 * eps, depth + 1));
        stack.push((lo, mid, left, 0.5 * eps, depth + 1));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn simpson_polynomials_and_trig() {
        let v = adaptive_simpson(|x| x * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let v = adaptive_simpson(|x| x.sin(), 0.0, PI, 1e-11).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        let v = adaptive_simpson(|x| (-x * x).exp(), -8.0, 8.0, 1e-12).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-10);
        assert_eq!(adaptive_simpson(|x| x, 1.0, 1.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn simpson_reversed_interval() {
        let v = adaptive_simpson(|x| x.exp(), 1.0, 0.0, 1e-12).unwrap();
        assert!((v + (1f64.exp() - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn simpson_rejects_nan() {
        let r = adaptive_simpson(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, 1e-6);
        assert!(matches!(r, Err(QuadError::NonFinite(_))));
    }

    #[test]
    fn gauss_legendre_smooth_and_kinked() {
        let v = adaptive_gauss_legendre(|x| (-x * x).exp(), -30.0, 30.0, 1e-14).unwrap();
        assert!((v - PI.sqrt()).abs() < 1e-13);
        let v = adaptive_gauss_legendre(|x: f64| x.abs(), -1.0, 3.0, 1e-12).unwrap();
        assert!((v - 5.0).abs() < 1e-11);
        let v = adaptive_gauss_legendre(libm::erf, -4.0, 4.0, 1e-14).unwrap();
        assert!(v.abs() < 1e-13);
    }
}
