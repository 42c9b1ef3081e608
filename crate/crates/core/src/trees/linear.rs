use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Regressor;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Ridge term that was needed to make the system solvable (0 if none).
    pub ridge: f64,
}

impl Regressor for LinearModel {
    fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept + x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// In-place Cholesky of a symmetric `p x p` matrix; `false` if not positive definite.
fn cholesky(a: &mut [f64], p: usize) -> bool {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = libm::sqrt(d);
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], p: usize, b: &mut [f64]) {
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= l[k * p + i] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}

/// Ordinary least squares with intercept via the normal equations on
/// centered data. A rank-deficient system gets a ridge term starting at
/// 1e-8 (relative to the mean diagonal), raised tenfold until it factors.
pub fn fit_linear(x: &Matrix, y: &[f64]) -> Result<LinearModel> {
    let (n, p) = (x.rows(), x.cols());
    if n == 0 {
        return Err(Error::InsufficientData("no rows".into()));
    }
    if y.len() != n {
        return Err(Error::shape("fit_linear", format!("{n} rows, {} targets", y.len())));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut x_mean = vec![0.0; p];
    for i in 0..n {
        for (m, v) in x_mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut row = vec![0.0; p];
    for i in 0..n {
        for (r, (v, m)) in row.iter_mut().zip(x.row(i).iter().zip(&x_mean)) {
            *r = v - m;
        }
        let yc = y[i] - y_mean;
        for a in 0..p {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            rhs[a] += ra * yc;
            for b in 0..=a {
                gram[a * p + b] += ra * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[b * p + a] = gram[a * p + b];
        }
    }
    let scale = ((0..p).map(|j| gram[j * p + j]).sum::<f64>() / p.max(1) as f64).max(1.0);
    let mut ridge = 0.0;
    let mut factor = gram.clone();
    while !cholesky(&mut factor, p) {
        ridge = if ridge == 0.0 { 1e-8 * scale } else { ridge * 10.0 };
        if ridge > scale {
            return Err(Error::NonFinite("normal equations could not be factored".into()));
        }
        factor.copy_from_slice(&gram);
        for j in 0..p {
            factor[j * p + j] += ridge;
        }
    }
    let mut beta = rhs;
    cholesky_solve(&factor, p, &mut beta);
    let intercept = y_mean - beta.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearModel { intercept, coefficients: beta, ridge })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn exact_line() {
        let x = Matrix::new(5, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let y: Vec<f64> = (0..5).map(|i| 2.0 * i as f64 + 1.0).collect();
        let m = fit_linear(&x, &y).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((m.intercept - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Matrix::new(10, 2, (0..20).map(|_| rng.random::<f64>()).collect()).unwrap();
        let m = fit_linear(&x, &[3.5; 10]).unwrap();
        assert!((m.intercept - 3.5).abs() < 1e-12);
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn residuals_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::new(20, 3, (0..60).map(|_| rng.random::<f64>()).collect()).unwrap();
        let y: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let m = fit_linear(&x, &y).unwrap();
        assert_eq!(m.ridge, 0.0);
        let r: Vec<f64> = m.predict(&x).iter().zip(&y).map(|(p, t)| t - p).collect();
        assert!(r.iter().sum::<f64>().abs() < 1e-8);
        for j in 0..3 {
            let dot: f64 = (0..20).map(|i| r[i] * x.get(i, j)).sum();
            assert!(dot.abs() < 1e-8, "{dot}");
        }
    }

    #[test]
    fn rank_deficient_uses_ridge() {
        // duplicated column plus an all-zero column
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rows = Vec::new();
        for _ in 0..15 {
            let a = rng.random::<f64>();
            rows.push(vec![a, a, 0.0]);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 * r[0] + 1.0).collect();
        let m = fit_linear(&x, &y).unwrap();
        assert!(m.ridge > 0.0);
        for (p, t) in m.predict(&x).iter().zip(&y) {
            assert!((p - t).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_input() {
        assert!(fit_linear(&Matrix::zeros(0, 2), &[]).is_err());
    }
}
