//! Independent reference implementations used as test oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ND written as a single loop over paired terms.
pub fn brute_nd(y: &[f64], yhat: &[f64]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut i = 0;
    while i < y.len() {
        let e = yhat[i] - y[i];
        num += if e < 0.0 { -e } else { e };
        den += if y[i] < 0.0 { -y[i] } else { y[i] };
        i += 1;
    }
    (den > 0.0).then(|| num / den)
}

/// NRMSE from the raw sums: sqrt(sse / n) / (sum|y| / n).
pub fn brute_nrmse(y: &[f64], yhat: &[f64]) -> Option<f64> {
    let n = y.len() as f64;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    let abs: f64 = y.iter().map(|a| a.abs()).sum();
    (abs > 0.0).then(|| (sse / n).sqrt() * n / abs)
}

/// 50 `(y, yhat)` pairs: the worked example followed by random pairs of
/// varying length, some with zero or negative entries.
pub fn metric_pairs() -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = vec![(vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 2.0, 2.0, 4.0])];
    while out.len() < 50 {
        let n = rng.random_range(1..=48);
        let y: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..10) {
                0 => 0.0,
                1 => -rng.random::<f64>(),
                _ => rng.random::<f64>() * 50.0,
            })
            .collect();
        let yhat = y.iter().map(|v| v + rng.random_range(-5.0..5.0)).collect();
        if y.iter().any(|v| *v != 0.0) {
            out.push((y, yhat));
        }
    }
    out
}

pub struct TtestCase {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// The 25 reference cases; p-values come from 40-digit arithmetic.
pub fn ttest_cases() -> Vec<TtestCase> {
    let v: serde_json::Value = serde_json::from_str(include_str!("../data/ttest_oracle.json")).unwrap();
    v["cases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            let f = |key: &str| c[key].as_f64().unwrap();
            let (a, b) = match c.get("k") {
                Some(k) => {
                    let k = k.as_u64().unwrap() as usize;
                    let n = c["n"].as_u64().unwrap() as usize;
                    let a = (0..n).map(|i| ((37 * i + 11 * k) % 101) as f64 / 10.0).collect();
                    let b = (0..n)
                        .map(|i| ((53 * i + 7 * k) % 97) as f64 / 10.0 + ((k % 7) as f64 - 3.0) * 0.9)
                        .collect();
                    (a, b)
                }
                None => {
                    let arr = |key: &str| c[key].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
                    (arr("a"), arr("b"))
                }
            };
            TtestCase { a, b, t: f("t"), df: f("df"), p: f("p") }
        })
        .collect()
}
