use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    libm::sqrt(ss / (values.len() - 1) as f64)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = libm::exp(a * libm::log(x) + b * libm::log1p(-x) - ln_beta(a, b));
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability `P(|T| >= |t|)` for Student's t.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided(t, df);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
}

/// Paired t-test on per-fold values. Identical inputs give `t = 0, p = 1`;
/// a constant non-zero difference gives an infinite `t` and `p = 0`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Input(alloc::format!("paired samples differ in length: {} vs {}", a.len(), b.len())));
    }
    let k = a.len();
    if k < 2 {
        return Err(Error::Input("paired t-test needs at least two pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(TTest { t: 0.0, p: 1.0 });
    }
    let m = mean(&diffs);
    let sd = sample_std(&diffs);
    if sd == 0.0 {
        return Ok(TTest { t: if m > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY }, p: 0.0 });
    }
    let t = m / (sd / libm::sqrt(k as f64));
    Ok(TTest { t, p: student_t_two_sided(t, (k - 1) as f64) })
}

/// Pairwise tests between approaches. `t[i][j]` tests row `i` against
/// column `j`; the diagonal holds `t = 0, p = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestMatrix {
    pub t: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
}

pub fn ttest_matrix(series: &[&[f64]]) -> Result<TTestMatrix> {
    let n = series.len();
    let mut t = alloc::vec![alloc::vec![0.0; n]; n];
    let mut p = alloc::vec![alloc::vec![1.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let r = paired_ttest(series[i], series[j])?;
                t[i][j] = r.t;
                p[i][j] = r.p;
            }
        }
    }
    Ok(TTestMatrix { t, p })
}
