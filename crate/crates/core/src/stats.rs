//! Upper-tail Welch tests and notched box-plot summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// `P(T > t)` for Student's t with `dof` degrees of freedom.
pub fn t_distribution_upper_tail(t: f64, dof: f64) -> Result<f64> {
    if dof.is_nan() || dof <= 0.0 {
        return Err(Error::Undefined(format!("degrees of freedom {dof} must be positive")));
    }
    if t.is_nan() {
        return Err(Error::Undefined("t statistic is NaN".into()));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 0.0 } else { 1.0 });
    }
    let x = dof / (dof + t * t);
    let tail = 0.5 * regularized_incomplete_beta(x, 0.5 * dof, 0.5);
    Ok(if t >= 0.0 { tail } else { 1.0 - tail })
}

/// The `t` with `P(T > t) = upper` (bisection on the monotone tail).
pub fn t_upper_quantile(upper: f64, dof: f64) -> Result<f64> {
    if !(upper > 0.0 && upper < 1.0) {
        return Err(Error::Undefined(format!("tail probability {upper} outside (0, 1)")));
    }
    if upper > 0.5 {
        return Ok(-t_upper_quantile(1.0 - upper, dof)?);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while t_distribution_upper_tail(hi, dof)? > upper {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if t_distribution_upper_tail(mid, dof)? > upper {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub mean_difference: f64,
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    /// Upper-tail probability of the observed `t`.
    pub p_value: f64,
    /// Lower bound of the one-sided `1 - alpha` confidence interval for the
    /// mean difference.
    pub min_difference: f64,
    pub alpha: f64,
}

impl WelchResult {
    pub fn significant(&self) -> bool {
        self.p_value < self.alpha
    }
}

/// One-sided Welch test of `mean(a) > mean(b)`.
pub fn welch_upper_tail(sample_a: &[f64], sample_b: &[f64], alpha: f64) -> Result<WelchResult> {
    if sample_a.len() < 2 || sample_b.len() < 2 {
        return Err(Error::Undefined("Welch test needs two observations per sample".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    if sample_a.iter().chain(sample_b).any(|v| !v.is_finite()) {
        return Err(Error::Undefined("non-finite observation".into()));
    }
    let (na, nb) = (sample_a.len() as f64, sample_b.len() as f64);
    let (va, vb) = (sample_variance(sample_a) / na, sample_variance(sample_b) / nb);
    let diff = mean(sample_a) - mean(sample_b);
    let se2 = va + vb;
    if se2 == 0.0 {
        if diff == 0.0 {
            return Err(Error::Undefined("both samples are constant and equal".into()));
        }
        // constant samples with distinct means: the difference is certain
        return Ok(WelchResult {
            mean_difference: diff,
            t_statistic: diff.signum() * f64::INFINITY,
            degrees_of_freedom: na + nb - 2.0,
            p_value: if diff > 0.0 { 0.0 } else { 1.0 },
            min_difference: diff,
            alpha,
        });
    }
    let se = se2.sqrt();
    let t = diff / se;
    let dof = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    Ok(WelchResult {
        mean_difference: diff,
        t_statistic: t,
        degrees_of_freedom: dof,
        p_value: t_distribution_upper_tail(t, dof)?,
        min_difference: diff - t_upper_quantile(alpha, dof)? * se,
        alpha,
    })
}

/// Type-7 quantile (linear interpolation between order statistics) of a
/// sorted sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub const NOTCH_CONSTANT: f64 = 1.57;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Lowest observation within `Q1 - 1.5·IQR`.
    pub lower_whisker: f64,
    /// Highest observation within `Q3 + 1.5·IQR`.
    pub upper_whisker: f64,
    pub notch_half_width: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn notch(&self) -> (f64, f64) {
        (self.median - self.notch_half_width, self.median + self.notch_half_width)
    }
}

pub fn box_stats(sample: &[f64]) -> Result<BoxStats> {
    if sample.len() < 5 {
        return Err(Error::Undefined(format!("box plot of {} values, need 5", sample.len())));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::Undefined("non-finite observation".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let upper_whisker = sorted
        .iter()
        .rev()
        .find(|v| **v <= hi_fence)
        .copied()
        .unwrap_or(q3)
        .max(q3);
    let lower_whisker = sorted.iter().find(|v| **v >= lo_fence).copied().unwrap_or(q1).min(q1);
    let outliers = sorted
        .iter()
        .filter(|v| **v < lo_fence || **v > hi_fence)
        .copied()
        .collect();
    Ok(BoxStats {
        n: sample.len(),
        median,
        q1,
        q3,
        lower_whisker,
        upper_whisker,
        notch_half_width: NOTCH_CONSTANT * iqr / (sample.len() as f64).sqrt(),
        outliers,
    })
}
