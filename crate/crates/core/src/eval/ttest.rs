use alloc::format;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if libm::fabs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if libm::fabs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if libm::fabs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if libm::fabs(del - 1.0) < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x` in `[0, 1]`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !(0.0..=1.0).contains(&x) {
        return Err(Error::param("incomplete beta", format!("a={a} b={b} x={x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    Ok(if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    })
}

/// Student-t distribution function with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) || t.is_nan() {
        return Err(Error::param("student_t_cdf", format!("t={t} df={df}")));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    let tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t))?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTestResult {
    pub n: usize,
    pub degrees_of_freedom: usize,
    pub mean_difference: f64,
    /// `None` when the differences have zero variance.
    pub t_statistic: Option<f64>,
    /// Two-sided; `None` when degenerate.
    pub p_value: Option<f64>,
    pub degenerate: bool,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTestResult> {
    if a.len() != b.len() {
        return Err(Error::shape("paired_t_test", format!("{} vs {} values", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} pairs, the t-test needs at least 2")));
    }
    let nf = n as f64;
    let mean = a.iter().zip(b).map(|(x, y)| x - y).sum::<f64>() / nf;
    let var = a.iter().zip(b).map(|(x, y)| (x - y - mean) * (x - y - mean)).sum::<f64>() / (nf - 1.0);
    let df = n - 1;
    if !(var > 0.0) {
        return Ok(PairedTTestResult {
            n,
            degrees_of_freedom: df,
            mean_difference: mean,
            t_statistic: None,
            p_value: None,
            degenerate: true,
        });
    }
    let t = mean / libm::sqrt(var / nf);
    let dff = df as f64;
    let p = regularized_incomplete_beta(0.5 * dff, 0.5, dff / (dff + t * t))?;
    Ok(PairedTTestResult {
        n,
        degrees_of_freedom: df,
        mean_difference: mean,
        t_statistic: Some(t),
        p_value: Some(p),
        degenerate: false,
    })
}

/// The table marking rule: significant iff `p < 0.05`.
pub fn significant(result: &PairedTTestResult) -> bool {
    result.p_value.is_some_and(|p| p < SIGNIFICANCE_LEVEL)
}
