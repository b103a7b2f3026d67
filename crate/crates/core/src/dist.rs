//! Standard normal and Student-t distribution functions, plus the log-gamma
//! based binomial coefficients shared by the bound computations.
//!
//! The normal CDF is built on the FreeBSD-derived `erfc` from `libm`, which is
//! accurate to about one ulp over the whole real line, so tail probabilities
//! keep full relative precision down to ~1e-300.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(domain(format!("probability must lie in [0, 1], got {value}")))
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to 1 so a broken bound is never
    /// reported as small.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Probability(1.0)
        } else {
            Probability(value.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Φ(x).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// 1 − Φ(x), without cancellation for large positive x.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// ln(1 − Φ(x)). Stays finite far beyond the point where `erfc` underflows.
pub fn log_std_normal_sf(x: f64) -> f64 {
    if x < 30.0 {
        return std_normal_sf(x).ln();
    }
    // Asymptotic series of the Mills ratio; at x >= 30 the truncation error is
    // below 1e-16.
    let r = 1.0 / (x * x);
    let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
    -0.5 * x * x - x.ln() - LN_SQRT_2PI + series.ln()
}

// Rational approximation of the normal quantile (P. J. Acklam), relative
// error 1.15e-9 before refinement.
#[allow(clippy::excessive_precision)]
const QA: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const QB: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const QC: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const QD: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

/// Initial guess for Φ⁻¹(q) with q ≤ 0.5.
fn lower_quantile_guess(q: f64) -> f64 {
    if q < 0.02425 {
        let r = (-2.0 * q.ln()).sqrt();
        (((((QC[0] * r + QC[1]) * r + QC[2]) * r + QC[3]) * r + QC[4]) * r + QC[5])
            / ((((QD[0] * r + QD[1]) * r + QD[2]) * r + QD[3]) * r + 1.0)
    } else {
        let d = q - 0.5;
        let r = d * d;
        (((((QA[0] * r + QA[1]) * r + QA[2]) * r + QA[3]) * r + QA[4]) * r + QA[5]) * d
            / (((((QB[0] * r + QB[1]) * r + QB[2]) * r + QB[3]) * r + QB[4]) * r + 1.0)
    }
}

/// Φ⁻¹(q) for q in (0, 0.5], refined by two Halley steps on the lower tail
/// where Φ has full relative precision.
fn lower_quantile(q: f64) -> f64 {
    let mut x = lower_quantile_guess(q);
    for _ in 0..2 {
        let e = std_normal_cdf(x) - q;
        let u = e / std_normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("normal quantile requires p in (0, 1), got {p}")));
    }
    if p <= 0.5 {
        Ok(lower_quantile(p))
    } else {
        Ok(-lower_quantile(1.0 - p))
    }
}

/// Φ⁻¹(1 − q), computed from the upper-tail mass `q` directly so that tiny
/// tail probabilities do not lose precision through `1 − q`.
pub fn std_normal_upper_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(domain(format!("upper-tail mass must lie in (0, 1), got {q}")));
    }
    if q <= 0.5 {
        Ok(-lower_quantile(q))
    } else {
        Ok(lower_quantile(1.0 - q))
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// ln C(n, m); −∞ when m > n.
pub fn ln_choose(n: u64, m: u64) -> f64 {
    if m > n {
        return f64::NEG_INFINITY;
    }
    if m == 0 || m == n {
        return 0.0;
    }
    let (n, m) = (n as f64, m as f64);
    ln_gamma(n + 1.0) - ln_gamma(m + 1.0) - ln_gamma(n - m + 1.0)
}

/// Regularized incomplete beta I_x(a, b). Takes both `x` and `1 − x` so that
/// callers can pass a complement computed without cancellation.
pub(crate) fn regularized_beta(a: f64, b: f64, x: f64, one_minus_x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if one_minus_x <= 0.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * one_minus_x.ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_continued_fraction(a, b, x) / a).min(1.0)
    } else {
        (1.0 - ln_front.exp() * beta_continued_fraction(b, a, one_minus_x) / b).max(0.0)
    }
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 20_000;

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
    for m in 1..=MAX_ITER {
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

/// P(T ≤ −|x|) for T ~ t_df: the smaller tail, accurate in relative terms.
fn student_t_lower_tail(x: f64, df: u32) -> f64 {
    let nu = df as f64;
    let x2 = x * x;
    // df/(df + x²) and its complement, each formed without subtraction.
    let w = nu / (nu + x2);
    let w_c = x2 / (nu + x2);
    0.5 * regularized_beta(0.5 * nu, 0.5, w, w_c)
}

/// Student-t CDF with `df` degrees of freedom.
pub fn student_t_cdf(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(domain("student-t requires df >= 1"));
    }
    if x.is_nan() {
        return Err(domain("student-t CDF of NaN"));
    }
    if x.is_infinite() {
        return Ok(if x > 0.0 { 1.0 } else { 0.0 });
    }
    let tail = student_t_lower_tail(x, df);
    Ok(if x > 0.0 { 1.0 - tail } else { tail })
}

/// Φ⁻¹(F_df(x)), evaluated through the smaller tail so that large |x| maps
/// to a finite z-score instead of saturating at F = 1.
pub fn t_to_normal_score(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(domain("student-t requires df >= 1"));
    }
    if !x.is_finite() {
        return Err(domain(format!("t statistic must be finite, got {x}")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let tail = student_t_lower_tail(x, df);
    if tail <= 0.0 {
        return Err(domain(format!("t statistic {x} is beyond the representable tail")));
    }
    let z = -lower_quantile(tail);
    Ok(if x > 0.0 { z } else { -z })
}
