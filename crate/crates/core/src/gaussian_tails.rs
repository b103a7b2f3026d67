//! Upper-orthant probabilities of equicorrelated standard normals.
//!
//! Two independent routes are provided for the bivariate case: the
//! one-dimensional integral representation of the bivariate normal CDF in ρ,
//! and the one-factor reduction X_i = √ρ·Z₀ + √(1−ρ)·Z_i integrated over Z₀
//! by Gauss–Hermite quadrature. The factor route extends to any m.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{log_std_normal_sf, std_normal_sf};
use crate::error::{domain, Result};
use crate::quadrature::{integrate_adaptive, GaussHermite};

/// Largest equicorrelation accepted by the factor quadrature. Beyond it the
/// conditional tail (c − √ρ·z)/√(1−ρ) becomes too steep for a fixed rule.
pub const MAX_FACTOR_RHO: f64 = 0.999;

/// J(ρ, x) = ∫₀^ρ (1−z²)^{−1/2} e^{−x²/(1+z)} dz together with its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonhorIntegral {
    pub rho: f64,
    pub x: f64,
    pub value: f64,
}

impl MonhorIntegral {
    pub fn evaluate(rho: f64, x: f64) -> Result<Self> {
        Ok(MonhorIntegral { rho, x, value: monhor_raw_integral(rho, x)? })
    }

    /// J/(2π): the correction to Φ(x)² in P(X ≤ x, Y ≤ x).
    pub fn correction(&self) -> f64 {
        self.value / (2.0 * PI)
    }
}

/// m-wise upper-orthant probability a_m = P(X₁ > c, …, X_m > c) under
/// equicorrelation ρ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthantProb {
    pub m: usize,
    pub c: f64,
    pub rho: f64,
    pub value: f64,
    pub log_value: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(domain(format!("correlation must lie in [0, 1), got {rho}")));
    }
    Ok(())
}

fn check_factor_rho(rho: f64) -> Result<()> {
    check_rho(rho)?;
    if rho > MAX_FACTOR_RHO {
        return Err(domain(format!(
            "equicorrelation above {MAX_FACTOR_RHO} is not supported by the factor quadrature, got {rho}"
        )));
    }
    Ok(())
}

/// J(ρ, x) = ∫₀^ρ (1−z²)^{−1/2} e^{−x²/(1+z)} dz.
///
/// Evaluated after the substitution z = sin θ, which removes the endpoint
/// singularity: J = ∫₀^{asin ρ} e^{−x²/(1+sin θ)} dθ.
pub fn monhor_raw_integral(rho: f64, x: f64) -> Result<f64> {
    check_rho(rho)?;
    if !x.is_finite() {
        return Err(domain(format!("threshold must be finite, got {x}")));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let x2 = x * x;
    let upper = rho.asin();
    Ok(integrate_adaptive(|t: f64| (-x2 / (1.0 + t.sin())).exp(), 0.0, upper, 0.0, 1e-13))
}

/// P(X > c, Y > c) for standard bivariate normals with correlation ρ ≥ 0:
/// (1 − Φ(c))² + J(ρ, c)/(2π).
pub fn bivariate_upper_orthant(rho: f64, c: f64) -> Result<f64> {
    let j = monhor_raw_integral(rho, c)?;
    let tail = std_normal_sf(c);
    Ok(tail * tail + j / (2.0 * PI))
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// a_m for m = 1..=max_m in one pass over the quadrature nodes.
///
/// Uses P(all m exceed c) = E_Z[(1 − Φ((c − √ρ·Z)/√(1−ρ)))^m] with the
/// integrand kept in the log domain, since the conditional tail raised to
/// m ≈ 75 underflows long before the integral does.
pub fn joint_tails_equicorr(max_m: usize, c: f64, rho: f64) -> Result<Vec<OrthantProb>> {
    check_factor_rho(rho)?;
    if max_m == 0 {
        return Err(domain("orthant order m must be at least 1"));
    }
    if c.is_nan() {
        return Err(domain("threshold is NaN"));
    }
    let marginal = std_normal_sf(c);
    let log_marginal = log_std_normal_sf(c);
    let make = |m: usize, log_value: f64| {
        let value = if m == 1 && marginal > 0.0 { marginal } else { log_value.exp() };
        OrthantProb { m, c, rho, value, log_value }
    };
    if rho == 0.0 {
        return Ok((1..=max_m).map(|m| make(m, m as f64 * log_marginal)).collect());
    }
    let rule = GaussHermite::standard();
    let (sr, sc) = (rho.sqrt(), (1.0 - rho).sqrt());
    let nodes: Vec<(f64, f64)> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&z, &w)| (w.ln(), log_std_normal_sf((c - sr * z) / sc)))
        .collect();
    let mut out = Vec::with_capacity(max_m);
    // The marginal does not depend on ρ; use the exact value.
    out.push(make(1, log_marginal));
    for m in 2..=max_m {
        let mf = m as f64;
        let log_value = log_sum_exp(nodes.iter().map(|&(lw, ls)| lw + mf * ls));
        out.push(make(m, log_value));
    }
    Ok(out)
}

/// a_m = P(X₁ > c, …, X_m > c) for equicorrelated standard normals.
pub fn joint_tail_equicorr(m: usize, c: f64, rho: f64) -> Result<OrthantProb> {
    Ok(*joint_tails_equicorr(m, c, rho)?.last().expect("m >= 1"))
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: u64,
}

impl McEstimate {
    pub(crate) fn from_count(hits: u64, reps: u64) -> Self {
        let p = hits as f64 / reps as f64;
        McEstimate { estimate: p, std_error: (p * (1.0 - p) / reps as f64).sqrt(), reps }
    }
}

const MC_CHUNK: u64 = 1 << 16;

/// Monte Carlo oracle for a_m using the one-factor sampler.
///
/// Replicates are split into fixed-size chunks; chunk `i` draws from ChaCha
/// stream `i` of `seed`, so the result depends only on (seed, reps) and not on
/// how rayon schedules the chunks.
pub fn mc_joint_tail(m: usize, c: f64, rho: f64, reps: u64, seed: u64) -> Result<McEstimate> {
    check_rho(rho)?;
    if m == 0 || reps == 0 {
        return Err(domain("m and reps must be at least 1"));
    }
    let (sr, sc) = (rho.sqrt(), (1.0 - rho).sqrt());
    let chunks = reps.div_ceil(MC_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let len = MC_CHUNK.min(reps - chunk * MC_CHUNK);
            let mut hits = 0u64;
            for _ in 0..len {
                let z0: f64 = StandardNormal.sample(&mut rng);
                let shared = sr * z0;
                let all = (0..m).all(|_| {
                    let zi: f64 = StandardNormal.sample(&mut rng);
                    shared + sc * zi > c
                });
                hits += all as u64;
            }
            hits
        })
        .sum();
    Ok(McEstimate::from_count(hits, reps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::std_normal_cdf;
    use proptest::prelude::*;

    const C_LR: f64 = 3.023_341_439_739_147;

    #[test]
    fn monhor_reference_values() {
        assert_eq!(monhor_raw_integral(0.0, 2.5).unwrap(), 0.0);
        // High-precision quadrature oracle values.
        let cases = [
            (0.2, C_LR, 5.327_989_772_128_439e-5),
            (0.1, C_LR, 1.697_013_942_719_994e-5),
            (0.5, 1.0, 0.234_630_507_756_502_83),
            (0.999, 0.0, 1.526_071_239_626_163),
            (0.3, 2.5, 1.406_719_370_842_689_3e-3),
        ];
        for (rho, x, want) in cases {
            let got = monhor_raw_integral(rho, x).unwrap();
            assert!(((got - want) / want).abs() < 1e-9, "J({rho}, {x}) = {got}, want {want}");
        }
    }

    #[test]
    fn monhor_limit_at_perfect_correlation() {
        let j = monhor_raw_integral(1.0 - 1e-15, 0.0).unwrap();
        assert!((j - PI / 2.0).abs() < 1e-6);
        let p = 0.25 + j / (2.0 * PI);
        assert!((p - 0.5).abs() < 1e-6);
    }

    #[test]
    fn monhor_domain() {
        assert!(monhor_raw_integral(-0.1, 1.0).is_err());
        assert!(monhor_raw_integral(1.0, 1.0).is_err());
        assert!(monhor_raw_integral(0.5, f64::NAN).is_err());
        let m = MonhorIntegral::evaluate(0.5, 1.0).unwrap();
        assert!((m.correction() - m.value / (2.0 * PI)).abs() < 1e-18);
    }

    #[test]
    fn bivariate_reference_values() {
        let tail = std_normal_sf(C_LR);
        assert_eq!(bivariate_upper_orthant(0.0, C_LR).unwrap(), tail * tail);
        let near_one = bivariate_upper_orthant(0.999, 0.0).unwrap();
        assert!((near_one - 0.492_881_781_296_880_17).abs() < 1e-10);
    }

    #[test]
    fn factor_route_trivial_cases() {
        for rho in [0.0, 0.2, 0.7] {
            let a1 = joint_tail_equicorr(1, C_LR, rho).unwrap();
            assert_eq!(a1.value, std_normal_sf(C_LR));
        }
        let a3 = joint_tail_equicorr(3, 1.2, 0.0).unwrap();
        let want = std_normal_sf(1.2).powi(3);
        assert!((a3.value / want - 1.0).abs() < 1e-14);
        assert!((a3.log_value - want.ln()).abs() < 1e-13);
    }

    #[test]
    fn factor_route_matches_bivariate_formula() {
        for (rho, c) in [(0.2, C_LR), (0.1, C_LR), (0.5, 1.0), (0.3, -0.7), (0.9, 2.0)] {
            let a2 = joint_tail_equicorr(2, c, rho).unwrap().value;
            let b = bivariate_upper_orthant(rho, c).unwrap();
            assert!((a2 - b).abs() < 1e-8, "rho={rho} c={c}: {a2} vs {b}");
        }
    }

    #[test]
    fn factor_route_rejects_extreme_rho() {
        assert!(joint_tail_equicorr(2, 1.0, 0.9995).is_err());
        assert!(joint_tail_equicorr(2, 1.0, -0.2).is_err());
        assert!(joint_tail_equicorr(0, 1.0, 0.2).is_err());
    }

    #[test]
    fn log_domain_survives_high_order() {
        let tails = joint_tails_equicorr(75, C_LR, 0.1).unwrap();
        let a75 = tails[74];
        assert!(a75.value > 0.0 && a75.value < 1e-30);
        // Independent route: direct adaptive integration over the factor.
        let (sr, sc) = (0.1f64.sqrt(), 0.9f64.sqrt());
        let direct = integrate_adaptive(
            |z: f64| (-0.5 * z * z + 75.0 * log_std_normal_sf((C_LR - sr * z) / sc)).exp(),
            -15.0,
            25.0,
            0.0,
            1e-12,
        ) / (2.0 * PI).sqrt();
        assert!((a75.value / direct - 1.0).abs() < 1e-9, "{} vs {}", a75.value, direct);
    }

    #[test]
    fn mc_trivial_cases() {
        let est = mc_joint_tail(1, 1.0, 0.3, 1_000_000, 11).unwrap();
        assert!((est.estimate - std_normal_sf(1.0)).abs() < 3.0 * est.std_error);
        let est = mc_joint_tail(5, 0.0, 0.0, 1_000_000, 12).unwrap();
        assert!((est.estimate - 1.0 / 32.0).abs() < 3.0 * est.std_error);
    }

    #[test]
    fn mc_is_deterministic() {
        let a = mc_joint_tail(2, 1.0, 0.4, 200_000, 5).unwrap();
        let b = mc_joint_tail(2, 1.0, 0.4, 200_000, 5).unwrap();
        assert_eq!(a, b);
        let c = mc_joint_tail(2, 1.0, 0.4, 200_000, 6).unwrap();
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn bivariate_cdf_identity() {
        // P(X ≤ x, Y ≤ x) = Φ(x)² + J/(2π); the upper orthant follows by
        // inclusion–exclusion, so both sides must agree.
        for (rho, x) in [(0.3, 0.5), (0.6, 1.7)] {
            let lower = std_normal_cdf(x).powi(2) + monhor_raw_integral(rho, x).unwrap() / (2.0 * PI);
            let upper = bivariate_upper_orthant(rho, x).unwrap();
            let via_lower = 1.0 - 2.0 * std_normal_cdf(x) + lower;
            assert!((upper - via_lower).abs() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn monhor_bounded_and_monotone(rho in 0.0f64..0.99, x in -4.0f64..6.0, step in 0.001f64..0.01) {
            let j = monhor_raw_integral(rho, x).unwrap();
            prop_assert!(j >= 0.0);
            prop_assert!(j <= rho.asin() * (1.0 + 1e-12));
            prop_assert!(monhor_raw_integral(rho + step, x).unwrap() >= j);
        }

        #[test]
        fn orthant_monotone_in_m_and_rho(c in 0.1f64..4.0, rho in 0.01f64..0.6) {
            let tails = joint_tails_equicorr(40, c, rho).unwrap();
            for w in tails.windows(2) {
                prop_assert!(w[1].value <= w[0].value);
            }
            let indep = joint_tails_equicorr(40, c, 0.0).unwrap();
            for (dep, ind) in tails.iter().zip(&indep) {
                prop_assert!(dep.value >= ind.value * (1.0 - 1e-12));
            }
        }

        #[test]
        fn log_ratio_non_decreasing(c in 0.5f64..4.0, rho in 0.02f64..0.6) {
            let tails = joint_tails_equicorr(60, c, rho).unwrap();
            let ratios: Vec<f64> = tails.windows(2).map(|w| w[1].log_value - w[0].log_value).collect();
            for w in ratios.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9, "{} then {}", w[0], w[1]);
            }
        }
    }
}
