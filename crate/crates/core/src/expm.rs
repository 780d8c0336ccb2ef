//! Dense complex matrix exponential via scaling-and-squaring with a
//! degree-13 Padé approximant (Higham 2005, "The Scaling and Squaring Method
//! for the Matrix Exponential Revisited").

use ndarray::{Array2, Zip};
use num_complex::Complex64;

/// Inputs with a 1-norm above this are rejected: the squaring phase would
/// need more than ~11 doublings and the result loses all relative accuracy.
pub const MAX_EXP_NORM: f64 = 1.0e4;

const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpmFailure {
    NotSquare,
    NormTooLarge(f64),
    Singular,
    NonFinite,
}

pub fn one_norm(a: &Array2<Complex64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(a)` for a square complex matrix.
pub fn expm(a: &Array2<Complex64>) -> Result<Array2<Complex64>, ExpmFailure> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(ExpmFailure::NotSquare);
    }
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(ExpmFailure::NonFinite);
    }
    if norm > MAX_EXP_NORM {
        return Err(ExpmFailure::NormTooLarge(norm));
    }

    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scale = Complex64::new(2f64.powi(-squarings), 0.0);
    let a = a.mapv(|z| z * scale);

    let ident = Array2::<Complex64>::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = |k: usize| Complex64::new(PADE_13[k], 0.0);

    let inner_u = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u = a.dot(&(a6.dot(&inner_u) + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + &ident * b(1)));
    let inner_v = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = a6.dot(&inner_v) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + &ident * b(0);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = lu_solve(q, p).ok_or(ExpmFailure::Singular)?;
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    if r.iter().any(|z| !z.is_finite()) {
        return Err(ExpmFailure::NonFinite);
    }
    Ok(r)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot vanishes.
pub(crate) fn lu_solve(
    mut a: Array2<Complex64>,
    mut b: Array2<Complex64>,
) -> Option<Array2<Complex64>> {
    let n = a.nrows();
    for k in 0..n {
        let (pivot, pmag) = (k..n)
            .map(|i| (i, a[[i, k]].norm()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if pmag == 0.0 || !pmag.is_finite() {
            return None;
        }
        if pivot != k {
            for j in 0..n {
                a.swap([k, j], [pivot, j]);
            }
            for j in 0..b.ncols() {
                b.swap([k, j], [pivot, j]);
            }
        }
        let inv = a[[k, k]].inv();
        for i in (k + 1)..n {
            let factor = a[[i, k]] * inv;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in k..n {
                let akj = a[[k, j]];
                a[[i, j]] -= factor * akj;
            }
            for j in 0..b.ncols() {
                let bkj = b[[k, j]];
                b[[i, j]] -= factor * bkj;
            }
        }
    }
    for k in (0..n).rev() {
        let inv = a[[k, k]].inv();
        for j in 0..b.ncols() {
            let mut acc = b[[k, j]];
            for i in (k + 1)..n {
                acc -= a[[k, i]] * b[[i, j]];
            }
            b[[k, j]] = acc * inv;
        }
    }
    Some(b)
}

/// Frobenius norm of `a - b`.
pub(crate) fn frobenius_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    let mut acc = 0.0;
    Zip::from(a).and(b).for_each(|x, y| acc += (x - y).norm_sqr());
    acc.sqrt()
}
