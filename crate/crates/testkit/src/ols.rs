//! Exact-arithmetic least squares on the raw (uncentered) normal equations.

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite sample")
}

/// Coefficients β₀..β_d solving (XᵀX)β = Xᵀy in rational arithmetic, or
/// `None` when XᵀX is singular.
#[allow(clippy::needless_range_loop)]
pub fn oracle_fit(points: &[(f64, f64)], degree: usize) -> Option<Vec<BigRational>> {
    let m = degree + 1;
    let mut a = vec![vec![BigRational::zero(); m + 1]; m];
    for &(x, y) in points {
        let x = exact(x);
        let y = exact(y);
        let mut powers = Vec::with_capacity(2 * m);
        let mut p = BigRational::one();
        for _ in 0..2 * m {
            powers.push(p.clone());
            p *= &x;
        }
        for r in 0..m {
            for c in 0..m {
                a[r][c] += &powers[r + c];
            }
            a[r][m] += &powers[r] * &y;
        }
    }
    for col in 0..m {
        let pivot = (col..m).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        for r in 0..m {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = &a[r][col] / &a[col][col];
            for k in col..=m {
                let delta = &f * &a[col][k];
                a[r][k] -= delta;
            }
        }
    }
    Some((0..m).map(|r| &a[r][m] / &a[r][r]).collect())
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn oracle_predict(beta: &[BigRational], x: f64) -> BigRational {
    let x = exact(x);
    beta.iter().rev().fold(BigRational::zero(), |acc, b| acc * &x + b)
}

/// |a - b| / |b|, or |a| when b is zero.
pub fn relative_error(a: f64, b: &BigRational) -> f64 {
    let diff = (exact(a) - b).abs();
    if b.is_zero() {
        to_f64(&diff)
    } else {
        to_f64(&(diff / b.abs()))
    }
}

/// Sample set from a random polynomial with noise: `(points, degree)`.
pub fn random_samples<R: Rng>(rng: &mut R, max_n: usize) -> (Vec<(f64, f64)>, usize) {
    let degree = rng.random_range(0..=4usize);
    let n = rng.random_range(degree + 2..=max_n.max(degree + 2));
    let lo: f64 = rng.random_range(-5.0..5.0);
    let width: f64 = rng.random_range(1.0..20.0);
    let truth: Vec<f64> = (0..=degree).map(|_| rng.random_range(-3.0..3.0)).collect();
    let noise: f64 = rng.random_range(0.0..0.5);
    let points = (0..n)
        .map(|_| {
            let x = lo + width * rng.random::<f64>();
            let y = truth.iter().rev().fold(0.0, |acc, c| acc * x + c) + noise * (rng.random::<f64>() - 0.5);
            (x, y)
        })
        .collect();
    (points, degree)
}

/// Degree-d data through exactly d+1 distinct abscissae.
pub fn interpolation_samples<R: Rng>(rng: &mut R, degree: usize) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = Vec::new();
    while xs.len() < degree + 1 {
        let x = (rng.random_range(-40..40) as f64) * 0.25;
        if !xs.contains(&x) {
            xs.push(x);
        }
    }
    xs.into_iter().map(|x| (x, rng.random_range(-100.0..100.0))).collect()
}
