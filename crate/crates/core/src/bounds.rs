//! Upper bounds on the generalized familywise error rate.
//!
//! For n one-sided z-tests at level α, the Lehmann–Romano rule rejects when
//! X_i > Φ⁻¹(1 − kα/n). This module evaluates the pairwise-correlation bounds
//! f and g, solves for the inflated level α* they permit, the closed-form α*
//! values available under independence and negative dependence, the
//! Chernoff and Hoeffding tail bounds, and the moment-based bound min{A, B}
//! specialized to equicorrelated normals.

use std::collections::HashMap;
use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::dist::{ln_choose, std_normal_sf, std_normal_upper_quantile};
use crate::error::{domain, Error, Result};
use crate::gaussian_tails::{joint_tails_equicorr, monhor_raw_integral};
use crate::inequalities::{self, EventMoments};

/// A multiple-testing instance: n hypotheses, generalized-FWER order k, level α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub n: u64,
    pub k: u64,
    pub alpha: f64,
}

impl TestConfig {
    pub fn new(n: u64, k: u64, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if k == 0 || k > n {
            return Err(Error::InvalidConfig(format!("k must satisfy 1 <= k <= n (got k = {k}, n = {n})")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(TestConfig { n, k, alpha })
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    fn kf(&self) -> f64 {
        self.k as f64
    }

    fn require_k_at_least_two(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("this bound requires k >= 2, got k = {}", self.k)));
        }
        Ok(())
    }
}

/// A symmetric correlation matrix with unit diagonal and off-diagonal
/// entries in [0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CorrMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidConfig("correlation matrix is empty".into()));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::InvalidConfig(format!("row {i} has {} entries, expected {n}", r.len())));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let m = CorrMatrix { n, data };
        for i in 0..n {
            if m.get(i, i) != 1.0 {
                return Err(Error::InvalidConfig(format!("diagonal entry ({i}, {i}) must be 1")));
            }
            for j in 0..i {
                let (a, b) = (m.get(i, j), m.get(j, i));
                if (a - b).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(format!("matrix is not symmetric at ({i}, {j})")));
                }
                if !(0.0..1.0).contains(&a) {
                    return Err(Error::InvalidConfig(format!(
                        "off-diagonal entries must lie in [0, 1), found {a} at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Every off-diagonal entry equal to `rho`.
    pub fn constant(n: usize, rho: f64) -> Result<Self> {
        Self::from_rows((0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { rho }).collect()).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// argmax_i Σ_{j≠i} ρ_ij, first index on ties.
    pub fn i_star(&self) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..self.n {
            let s: f64 = (0..self.n).filter(|&j| j != i).map(|j| self.get(i, j)).sum();
            if s > best.1 {
                best = (i, s);
            }
        }
        best.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorrelationModel {
    Equicorrelated(f64),
    Matrix(CorrMatrix),
}

impl CorrelationModel {
    pub fn validate_for(&self, config: &TestConfig) -> Result<()> {
        match self {
            CorrelationModel::Equicorrelated(rho) => {
                if !(0.0..1.0).contains(rho) {
                    return Err(domain(format!("correlation must lie in [0, 1), got {rho}")));
                }
            }
            CorrelationModel::Matrix(m) => {
                if m.n() as u64 != config.n {
                    return Err(Error::InvalidConfig(format!(
                        "correlation matrix is {0}x{0} but n = {1}",
                        m.n(),
                        config.n
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Which index pairs enter the double sum of f.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairRange {
    /// All unordered pairs 1 ≤ i < j ≤ n.
    #[default]
    AllPairs,
    /// 1 ≤ i < j < n, i.e. pairs involving the last hypothesis are dropped.
    ExcludeLast,
}

/// Φ⁻¹(1 − kβ/n).
pub fn cutoff_at(config: &TestConfig, beta: f64) -> Result<f64> {
    let tail = config.kf() * beta / config.nf();
    if !(tail > 0.0 && tail < 1.0) {
        return Err(domain(format!("k*beta/n must lie in (0, 1), got {tail}")));
    }
    std_normal_upper_quantile(tail)
}

/// The Lehmann–Romano cutoff Φ⁻¹(1 − kα/n).
pub fn lr_cutoff(config: &TestConfig) -> Result<f64> {
    cutoff_at(config, config.alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FgValues {
    pub beta: f64,
    pub cutoff: f64,
    pub f: f64,
    pub g: f64,
}

impl FgValues {
    pub fn min(&self) -> f64 {
        self.f.min(self.g)
    }
}

/// Correlation values entering f and g, grouped by distinct value so that
/// each needs a single integral per cutoff.
struct PairProfile {
    f_pairs: Vec<(f64, f64)>,
    g_row: Vec<(f64, f64)>,
}

impl PairProfile {
    fn build(config: &TestConfig, model: &CorrelationModel, range: PairRange) -> Self {
        let n = config.nf();
        match model {
            CorrelationModel::Equicorrelated(rho) => {
                let f_count = match range {
                    PairRange::AllPairs => n * (n - 1.0) / 2.0,
                    PairRange::ExcludeLast => (n - 1.0) * (n - 2.0) / 2.0,
                };
                PairProfile { f_pairs: vec![(*rho, f_count)], g_row: vec![(*rho, n - 1.0)] }
            }
            CorrelationModel::Matrix(m) => {
                let j_end = match range {
                    PairRange::AllPairs => m.n(),
                    PairRange::ExcludeLast => m.n() - 1,
                };
                let mut f_counts: HashMap<u64, f64> = HashMap::new();
                for i in 0..m.n() {
                    for j in (i + 1)..j_end {
                        *f_counts.entry(m.get(i, j).to_bits()).or_default() += 1.0;
                    }
                }
                let star = m.i_star();
                let mut g_counts: HashMap<u64, f64> = HashMap::new();
                for j in (0..m.n()).filter(|&j| j != star) {
                    *g_counts.entry(m.get(star, j).to_bits()).or_default() += 1.0;
                }
                let sorted = |h: HashMap<u64, f64>| {
                    let mut v: Vec<(f64, f64)> = h.into_iter().map(|(b, c)| (f64::from_bits(b), c)).collect();
                    v.sort_by(|a, b| a.0.total_cmp(&b.0));
                    v
                };
                PairProfile { f_pairs: sorted(f_counts), g_row: sorted(g_counts) }
            }
        }
    }

    /// (Σ over f's pairs of J, Σ over g's row of J) at cutoff c.
    fn integral_sums(&self, c: f64) -> Result<(f64, f64)> {
        let mut cache: HashMap<u64, f64> = HashMap::new();
        let mut j = |rho: f64| -> Result<f64> {
            if let Some(v) = cache.get(&rho.to_bits()) {
                return Ok(*v);
            }
            let v = monhor_raw_integral(rho, c)?;
            cache.insert(rho.to_bits(), v);
            Ok(v)
        };
        let mut f_sum = 0.0;
        for &(rho, count) in &self.f_pairs {
            f_sum += count * j(rho)?;
        }
        let mut g_sum = 0.0;
        for &(rho, count) in &self.g_row {
            g_sum += count * j(rho)?;
        }
        Ok((f_sum, g_sum))
    }
}

fn fg_from_profile(config: &TestConfig, profile: &PairProfile, beta: f64) -> Result<FgValues> {
    let (n, k) = (config.nf(), config.kf());
    let c = cutoff_at(config, beta)?;
    let (f_sum, g_sum) = profile.integral_sums(c)?;
    let f = (n - 1.0) * k / (n * (k - 1.0)) * beta * beta + f_sum / (PI * k * (k - 1.0));
    let g = beta * (n + k - 1.0) / n - (n - 1.0) / n * k * beta * beta / n - g_sum / (2.0 * PI * k);
    Ok(FgValues { beta, cutoff: c, f, g })
}

/// f and g evaluated at level β.
pub fn fg_values(config: &TestConfig, model: &CorrelationModel, beta: f64) -> Result<FgValues> {
    fg_values_with(config, model, beta, PairRange::AllPairs)
}

pub fn fg_values_with(config: &TestConfig, model: &CorrelationModel, beta: f64, range: PairRange) -> Result<FgValues> {
    config.require_k_at_least_two()?;
    model.validate_for(config)?;
    fg_from_profile(config, &PairProfile::build(config, model, range), beta)
}

const SOLVER_GRID: usize = 400;

/// α* = the largest β in (0, 1) with min{f, g}(β) ≤ α.
///
/// min{f, g} is not known to be monotone, so β is first scanned on a
/// logarithmic grid over (α, min(1, n/k)); the last qualifying grid point is
/// then refined by bisection against its non-qualifying neighbour. The
/// returned value always satisfies min{f, g} ≤ α. When no β above α
/// qualifies, α itself is returned.
pub fn alpha_star_fg(config: &TestConfig, model: &CorrelationModel) -> Result<f64> {
    alpha_star_fg_with(config, model, PairRange::AllPairs)
}

pub fn alpha_star_fg_with(config: &TestConfig, model: &CorrelationModel, range: PairRange) -> Result<f64> {
    config.require_k_at_least_two()?;
    model.validate_for(config)?;
    let profile = PairProfile::build(config, model, range);
    let alpha = config.alpha;
    let qualifies = |beta: f64| -> Result<bool> { Ok(fg_from_profile(config, &profile, beta)?.min() <= alpha) };

    let upper = (config.nf() / config.kf()).min(1.0) * (1.0 - 1e-12);
    if upper <= alpha {
        return Ok(alpha);
    }
    let ratio = (upper / alpha).ln();
    let grid: Vec<f64> = (0..=SOLVER_GRID)
        .map(|i| if i == SOLVER_GRID { upper } else { alpha * (ratio * i as f64 / SOLVER_GRID as f64).exp() })
        .collect();
    let mut last = None;
    for (i, &beta) in grid.iter().enumerate() {
        if qualifies(beta)? {
            last = Some(i);
        }
    }
    let Some(i) = last else {
        return Ok(alpha);
    };
    if i == SOLVER_GRID {
        return Ok(upper);
    }
    let (mut lo, mut hi) = (grid[i], grid[i + 1]);
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if qualifies(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo.max(alpha))
}

/// Closed-form α* under independence, √(n(k−1)α/((n−1)k)), valid when
/// α ≤ n(k−1)/((n−1)k).
pub fn alpha_star_independent(config: &TestConfig) -> Result<f64> {
    config.require_k_at_least_two()?;
    let (n, k) = (config.nf(), config.kf());
    let limit = n * (k - 1.0) / ((n - 1.0) * k);
    if config.alpha > limit {
        return Err(Error::InvalidConfig(format!(
            "closed-form alpha* under independence requires alpha <= n(k-1)/((n-1)k) = {limit}, got {}",
            config.alpha
        )));
    }
    Ok((limit * config.alpha).sqrt())
}

/// α* = [n / (k·C(n,k)^{1/k})]·α^{1/k} for negatively dependent statistics,
/// evaluated in the log domain and capped at 1.
pub fn alpha_star_negdep(config: &TestConfig) -> f64 {
    let k = config.kf();
    let ln = config.nf().ln() - k.ln() - ln_choose(config.n, config.k) / k + config.alpha.ln() / k;
    ln.exp().min(1.0)
}

/// The optimized Chernoff bound [e^δ/(1+δ)^{1+δ}]^{np} on P(Bin(n, p) ≥ a)
/// with δ = a/(np) − 1. Returns 1 when a ≤ np.
pub fn chernoff_tail(n: u64, p: f64, a: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("p must lie in (0, 1), got {p}")));
    }
    let mean = n as f64 * p;
    if a <= mean {
        return Ok(1.0);
    }
    let delta = a / mean - 1.0;
    Ok((mean * (delta - (1.0 + delta) * delta.ln_1p())).exp())
}

/// α* = α^{1/k}/e from the Chernoff bound.
pub fn alpha_star_chernoff(k: u64, alpha: f64) -> f64 {
    alpha.powf(1.0 / k as f64) / E
}

/// Hoeffding bound e^{−2k²(1−α*)²/n} on the k-FWER of the modified procedure
/// under independence.
pub fn hoeffding_kfwer(config: &TestConfig, alpha_star: f64) -> Result<f64> {
    if !(alpha_star > 0.0 && alpha_star < 1.0) {
        return Err(domain(format!("alpha* must lie in (0, 1), got {alpha_star}")));
    }
    let k = config.kf();
    let gap = 1.0 - alpha_star;
    Ok((-2.0 * k * k * gap * gap / config.nf()).exp())
}

/// Moment sequences of the events {X_i > c} for equicorrelated normals.
/// Index 0 of every vector corresponds to m = 1 (m = 2 for `s_prime`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquicorrMoments {
    pub beta: f64,
    pub rho: f64,
    pub cutoff: f64,
    pub a: Vec<f64>,
    pub log_a: Vec<f64>,
    /// ln S_m = ln C(n, m) + ln a_m.
    pub log_s: Vec<f64>,
    pub s_prime: Vec<f64>,
    /// r_m = ((n−m)/(k−m))·a_{m+1}/a_m for m = 1..k−1.
    pub r: Vec<f64>,
    /// Smallest m with r_m ≥ 1.
    pub m_star: Option<usize>,
}

impl EquicorrMoments {
    pub fn event_moments(&self, config: &TestConfig) -> Result<EventMoments> {
        EventMoments::exchangeable(config.n as usize, config.k as usize, &self.log_a)
    }
}

pub fn equicorr_moments(config: &TestConfig, rho: f64, beta: f64) -> Result<EquicorrMoments> {
    config.require_k_at_least_two()?;
    let c = cutoff_at(config, beta)?;
    let k = config.k as usize;
    let tails = joint_tails_equicorr(k, c, rho)?;
    let a: Vec<f64> = tails.iter().map(|t| t.value).collect();
    let log_a: Vec<f64> = tails.iter().map(|t| t.log_value).collect();
    let log_s = (1..=k).map(|m| ln_choose(config.n, m as u64) + log_a[m - 1]).collect();
    let s_prime = (2..=k).map(|m| (config.n as usize - m + 1) as f64 * a[m - 1]).collect();
    let (n, kf) = (config.nf(), config.kf());
    let r: Vec<f64> = (1..k)
        .map(|m| {
            let mf = m as f64;
            (((n - mf) / (kf - mf)).ln() + log_a[m] - log_a[m - 1]).exp()
        })
        .collect();
    let m_star = r.iter().position(|&x| x >= 1.0).map(|i| i + 1);
    Ok(EquicorrMoments { beta, rho, cutoff: c, a, log_a, log_s, s_prime, r, m_star })
}

/// Every bound computed for one instance. Probability-valued fields are
/// clamped to [0, 1]; `bound_a` and `bound_b` are the raw minima.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: u64,
    pub k: u64,
    pub alpha: f64,
    /// Common correlation, absent for a full matrix.
    pub rho: Option<f64>,
    pub cutoff: f64,
    pub f_value: f64,
    pub g_value: f64,
    pub existing_bound: f64,
    pub bound_a: f64,
    pub bound_a_argmin: usize,
    pub bound_b: f64,
    pub bound_b_argmin: usize,
    /// Highest intersection order used for A and B.
    pub moment_order: usize,
    pub m_star: Option<usize>,
    pub proposed_bound: f64,
    pub alpha_star_fg: f64,
    pub alpha_star_indep: Option<f64>,
    pub alpha_star_negdep: f64,
    pub alpha_star_chernoff: f64,
    /// Hoeffding bound evaluated at `alpha_star_fg`.
    pub hoeffding: f64,
}

fn assemble_report(
    config: &TestConfig,
    model: &CorrelationModel,
    fg: FgValues,
    parts: inequalities::BoundDecomposition,
    moment_order: usize,
    m_star: Option<usize>,
) -> Result<BoundReport> {
    let existing = fg.min();
    let proposed = parts.a.min(parts.b).min(existing);
    let alpha_star_fg = alpha_star_fg(config, model)?;
    Ok(BoundReport {
        n: config.n,
        k: config.k,
        alpha: config.alpha,
        rho: match model {
            CorrelationModel::Equicorrelated(r) => Some(*r),
            CorrelationModel::Matrix(_) => None,
        },
        cutoff: fg.cutoff,
        f_value: fg.f,
        g_value: fg.g,
        existing_bound: existing.clamp(0.0, 1.0),
        bound_a: parts.a,
        bound_a_argmin: parts.a_argmin,
        bound_b: parts.b,
        bound_b_argmin: parts.b_argmin,
        moment_order,
        m_star,
        proposed_bound: proposed.clamp(0.0, 1.0),
        alpha_star_fg,
        alpha_star_indep: alpha_star_independent(config).ok(),
        alpha_star_negdep: alpha_star_negdep(config),
        alpha_star_chernoff: alpha_star_chernoff(config.k, config.alpha),
        hoeffding: hoeffding_kfwer(config, alpha_star_fg.min(1.0 - 1e-15))?,
    })
}

/// Existing and proposed bounds at level α for equicorrelation ρ.
///
/// The proposed bound is min{A, B, f, g}: the moment bounds use the
/// exchangeable closed forms S_m = C(n,m)·a_m, S′_m = (n−m+1)·a_m and
/// largest (m−1)-wise intersection a_{m−1}, and it never exceeds the
/// existing bound min{f, g}.
pub fn proposed_bound_equicorr(config: &TestConfig, rho: f64) -> Result<BoundReport> {
    let model = CorrelationModel::Equicorrelated(rho);
    let fg = fg_values(config, &model, config.alpha)?;
    let moments = equicorr_moments(config, rho, config.alpha)?;
    let parts = inequalities::combined_bound(&moments.event_moments(config)?)?;
    assemble_report(config, &model, fg, parts, config.k as usize, moments.m_star)
}

/// [`proposed_bound_equicorr`] for either model. With a full matrix only
/// pairwise intersections are available, so A and B use orders m ≤ 2, each
/// pair probability coming from the bivariate orthant formula.
pub fn bound_report(config: &TestConfig, model: &CorrelationModel) -> Result<BoundReport> {
    model.validate_for(config)?;
    let m = match model {
        CorrelationModel::Equicorrelated(rho) => return proposed_bound_equicorr(config, *rho),
        CorrelationModel::Matrix(m) => m,
    };
    let fg = fg_values(config, model, config.alpha)?;
    let c = fg.cutoff;
    let p1 = std_normal_sf(c);
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut pair = |rho: f64| -> Result<f64> {
        if let Some(v) = cache.get(&rho.to_bits()) {
            return Ok(*v);
        }
        let v = p1 * p1 + monhor_raw_integral(rho, c)? / (2.0 * PI);
        cache.insert(rho.to_bits(), v);
        Ok(v)
    };
    let n = m.n();
    let mut s2 = 0.0;
    let mut row_max: f64 = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let p = pair(m.get(i, j))?;
            row += p;
            if j > i {
                s2 += p;
            }
        }
        row_max = row_max.max(row);
    }
    let order = (config.k as usize).min(2);
    let s: Vec<f64> = [n as f64 * p1, s2].into_iter().take(order).collect();
    let (s_prime, max_inter) = if order == 2 { (vec![row_max], vec![p1]) } else { (vec![], vec![]) };
    let moments = EventMoments::new(n, config.k as usize, s, s_prime, max_inter)?;
    let parts = inequalities::combined_bound_available(&moments)?;
    assemble_report(config, model, fg, parts, order, None)
}

/// C(n,k)·(kα*/n)^k · max over k-tuples of (1 + (c²/2)·Σ_{l≠m} ρ_lm) with
/// c = Φ⁻¹(1 − kα*/n).
///
/// The tuple sum runs over ordered pairs. Under equicorrelation every tuple
/// gives k(k−1)ρ; for a full matrix the maximum is replaced by the sum of
/// the k(k−1) largest off-diagonal entries, which can only enlarge the bound.
pub fn nearly_indep_bound(config: &TestConfig, model: &CorrelationModel, alpha_star: f64) -> Result<f64> {
    model.validate_for(config)?;
    let c = cutoff_at(config, alpha_star)?;
    let k = config.k as usize;
    let tuple_sum = match model {
        CorrelationModel::Equicorrelated(rho) => (k * (k - 1)) as f64 * rho,
        CorrelationModel::Matrix(m) => {
            let mut off: Vec<f64> = (0..m.n())
                .flat_map(|i| (0..m.n()).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m.get(i, j))
                .collect();
            let take = (k * (k - 1)).min(off.len());
            if take == 0 {
                0.0
            } else {
                off.select_nth_unstable_by(take - 1, |a, b| b.total_cmp(a));
                off[..take].iter().sum()
            }
        }
    };
    let kf = config.kf();
    let ln = ln_choose(config.n, config.k) + kf * (kf * alpha_star / config.nf()).ln() + (0.5 * c * c * tuple_sum).ln_1p();
    Ok(ln.exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: u64, k: u64, alpha: f64) -> TestConfig {
        TestConfig::new(n, k, alpha).unwrap()
    }

    #[test]
    fn config_validation() {
        let err = TestConfig::new(10, 12, 0.05).unwrap_err().to_string();
        assert!(err.contains("k <= n"), "{err}");
        assert!(TestConfig::new(10, 0, 0.05).is_err());
        assert!(TestConfig::new(10, 2, 1.0).is_err());
        assert!(TestConfig::new(0, 1, 0.05).is_err());
    }

    #[test]
    fn lr_cutoffs() {
        assert!((lr_cutoff(&cfg(1000, 25, 0.05)).unwrap() - 3.023_341_439_739_147).abs() < 1e-12);
        assert!((lr_cutoff(&cfg(10, 5, 0.05)).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        let bonf = lr_cutoff(&cfg(200, 1, 0.05)).unwrap();
        assert!((bonf - std_normal_upper_quantile(0.05 / 200.0).unwrap()).abs() < 1e-15);
        assert!(lr_cutoff(&cfg(10, 10, 0.5)).is_ok());
        // kα/n ≥ 1 is out of the domain.
        assert!(cutoff_at(&cfg(10, 10, 0.5), 1.0).is_err());
    }

    #[test]
    fn fg_independent_closed_form() {
        for (n, k, beta) in [(1000u64, 25u64, 0.05), (10, 2, 0.2), (50, 7, 0.11)] {
            let c = cfg(n, k, 0.05);
            let v = fg_values(&c, &CorrelationModel::Equicorrelated(0.0), beta).unwrap();
            let (nf, kf) = (n as f64, k as f64);
            let f = (nf - 1.0) * kf / (nf * (kf - 1.0)) * beta * beta;
            let g = beta * (nf + kf - 1.0) / nf - (nf - 1.0) * kf * beta * beta / (nf * nf);
            assert!((v.f - f).abs() < 1e-15);
            assert!((v.g - g).abs() < 1e-15);
        }
    }

    #[test]
    fn fg_requires_k_two() {
        assert!(fg_values(&cfg(10, 1, 0.05), &CorrelationModel::Equicorrelated(0.1), 0.05).is_err());
    }

    #[test]
    fn matrix_mode_matches_equicorr() {
        let c = cfg(60, 5, 0.05);
        let m = CorrelationModel::Matrix(CorrMatrix::constant(60, 0.2).unwrap());
        let e = CorrelationModel::Equicorrelated(0.2);
        for beta in [0.05, 0.13] {
            let a = fg_values(&c, &m, beta).unwrap();
            let b = fg_values(&c, &e, beta).unwrap();
            assert!((a.f - b.f).abs() < 1e-12 && (a.g - b.g).abs() < 1e-12);
            let a = fg_values_with(&c, &m, beta, PairRange::ExcludeLast).unwrap();
            let b = fg_values_with(&c, &e, beta, PairRange::ExcludeLast).unwrap();
            assert!((a.f - b.f).abs() < 1e-12);
        }
    }

    #[test]
    fn exclude_last_range_drops_last_row() {
        let c = cfg(1000, 25, 0.05);
        let e = CorrelationModel::Equicorrelated(0.1);
        let all = fg_values(&c, &e, 0.05).unwrap();
        let text = fg_values_with(&c, &e, 0.05, PairRange::ExcludeLast).unwrap();
        assert!(text.f < all.f);
        assert!((text.f / all.f - 1.0).abs() < 0.01);
        assert_eq!(text.g, all.g);
    }

    #[test]
    fn i_star_picks_heaviest_row() {
        let rows = vec![vec![1.0, 0.1, 0.0], vec![0.1, 1.0, 0.3], vec![0.0, 0.3, 1.0]];
        assert_eq!(CorrMatrix::from_rows(rows).unwrap().i_star(), 1);
    }

    #[test]
    fn matrix_validation() {
        assert!(CorrMatrix::from_rows(vec![vec![1.0, 0.2], vec![0.3, 1.0]]).is_err());
        assert!(CorrMatrix::from_rows(vec![vec![1.0, -0.2], vec![-0.2, 1.0]]).is_err());
        assert!(CorrMatrix::from_rows(vec![vec![0.9, 0.2], vec![0.2, 1.0]]).is_err());
        assert!(CorrMatrix::from_rows(vec![vec![1.0, 0.2]]).is_err());
        let m = CorrelationModel::Matrix(CorrMatrix::constant(4, 0.1).unwrap());
        assert!(m.validate_for(&cfg(5, 2, 0.05)).is_err());
    }

    #[test]
    fn alpha_star_independent_values() {
        let v = alpha_star_independent(&cfg(1000, 25, 0.05)).unwrap();
        assert!((v - 0.219_198_649_740_476_4).abs() < 1e-15);
        let v = alpha_star_independent(&cfg(2, 2, 0.05)).unwrap();
        assert!((v - 0.05f64.sqrt()).abs() < 1e-15);
        // Fixed point at the boundary of the admissible range.
        let limit = 10.0 * 2.0 / (9.0 * 3.0);
        let v = alpha_star_independent(&cfg(10, 3, limit)).unwrap();
        assert!((v - limit).abs() < 1e-15);
        let err = alpha_star_independent(&cfg(10, 2, 0.6)).unwrap_err().to_string();
        assert!(err.contains("n(k-1)/((n-1)k)"));
    }

    #[test]
    fn alpha_star_solver_matches_closed_form() {
        let c = cfg(1000, 25, 0.05);
        let solved = alpha_star_fg(&c, &CorrelationModel::Equicorrelated(0.0)).unwrap();
        assert!((solved - 0.219_198_649_740_476_4).abs() < 1e-6);
        let check = fg_values(&c, &CorrelationModel::Equicorrelated(0.0), solved).unwrap();
        assert!(check.min() <= 0.05);
    }

    #[test]
    fn alpha_star_solver_contract() {
        for (n, k, rho) in [(1000u64, 2u64, 0.9), (10, 2, 0.9), (3, 3, 0.5), (5, 5, 0.0), (200, 20, 0.3)] {
            let c = cfg(n, k, 0.05);
            let model = CorrelationModel::Equicorrelated(rho);
            let a = alpha_star_fg(&c, &model).unwrap();
            assert!(a >= 0.05);
            assert!(fg_values(&c, &model, a).unwrap().min() <= 0.05);
        }
    }

    #[test]
    fn negdep_values() {
        for n in [1u64, 7, 1000] {
            let c = cfg(n, 1, 0.05);
            assert!((alpha_star_negdep(&c) - 0.05).abs() < 1e-14);
        }
        assert!((alpha_star_negdep(&cfg(4, 2, 0.05)) - 0.182_574_185_835_055_37).abs() < 1e-14);
        let c = cfg(1000, 25, 0.05);
        assert!(alpha_star_negdep(&c) >= alpha_star_chernoff(25, 0.05));
    }

    #[test]
    fn chernoff_values() {
        assert!((alpha_star_chernoff(1, 0.05) - 0.05 / E).abs() < 1e-16);
        assert!((alpha_star_chernoff(2, 0.05) - 0.082_260_343_798_397_99).abs() < 1e-15);
        assert_eq!(chernoff_tail(100, 0.1, 10.0).unwrap(), 1.0);
        assert!(chernoff_tail(100, 0.0, 10.0).is_err());
        // At δ = 1/α* − 1, p = kα*/n, a = k the bound is (e^{1−α*}·α*)^k.
        for (n, k, a_star) in [(1000u64, 25u64, 0.1), (50, 3, 0.3)] {
            let p = k as f64 * a_star / n as f64;
            let got = chernoff_tail(n, p, k as f64).unwrap();
            let want = ((1.0 - a_star).exp() * a_star).powi(k as i32);
            assert!((got / want - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chernoff_dominates_exact_tail_and_raw_infimum() {
        // Oracles: exact binomial tail, and a grid minimum of the unoptimized form.
        let (n, p) = (40u64, 0.05);
        for a in [4.0, 6.0, 10.0] {
            let bound = chernoff_tail(n, p, a).unwrap();
            let exact: f64 = (a as u64..=n)
                .map(|j| (ln_choose(n, j) + j as f64 * p.ln() + (n - j) as f64 * (1.0 - p).ln()).exp())
                .sum();
            assert!(exact <= bound);
            let raw_inf = (1..4000)
                .map(|i| {
                    let t = i as f64 * 1e-3;
                    (-t * a + n as f64 * (1.0 - p + p * t.exp()).ln()).exp()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(raw_inf <= bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn hoeffding_values() {
        let c = cfg(1000, 75, 0.05);
        let got = hoeffding_kfwer(&c, 0.219).unwrap();
        assert!((got - (-2.0 * 5625.0 * 0.781f64.powi(2) / 1000.0).exp()).abs() < 1e-16);
        assert!((got - 1.046_754_085_541_284e-3).abs() < 1e-15);
        let c = cfg(100, 10, 0.05);
        assert!((hoeffding_kfwer(&c, 1e-12).unwrap() - (-2.0f64).exp()).abs() < 1e-10);
        assert!(hoeffding_kfwer(&c, 1.0).is_err());
        let mut prev = 1.0;
        for k in 1..50 {
            let b = hoeffding_kfwer(&cfg(100, k, 0.05), 0.2).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn equicorr_moments_independent_r() {
        let c = cfg(200, 10, 0.05);
        let mm = equicorr_moments(&c, 0.0, 0.05).unwrap();
        let a1 = mm.a[0];
        for (i, r) in mm.r.iter().enumerate() {
            let m = (i + 1) as f64;
            assert!((r / ((200.0 - m) / (10.0 - m) * a1) - 1.0).abs() < 1e-12);
        }
        for w in mm.r.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn equicorr_moments_small_correlation_conditions() {
        let mm = equicorr_moments(&cfg(1000, 25, 0.05), 0.1, 0.05).unwrap();
        assert!(mm.r[0] < 1.0);
        let mm = equicorr_moments(&cfg(1000, 50, 0.05), 0.2, 0.05).unwrap();
        assert_eq!(mm.r.len(), 49);
        for w in mm.r.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for (sp, s1) in mm.s_prime.iter().zip(std::iter::repeat(mm.log_s[0].exp())) {
            assert!(*sp <= s1);
        }
    }

    #[test]
    fn proposed_never_exceeds_existing() {
        for rho in [0.0, 0.05, 0.3] {
            let r = proposed_bound_equicorr(&cfg(300, 10, 0.05), rho).unwrap();
            assert!(r.proposed_bound <= r.existing_bound + 1e-12);
        }
    }

    #[test]
    fn matrix_report_uses_pairwise_orders() {
        let c = cfg(40, 4, 0.05);
        let matrix = CorrelationModel::Matrix(CorrMatrix::constant(40, 0.15).unwrap());
        let r = bound_report(&c, &matrix).unwrap();
        assert_eq!(r.moment_order, 2);
        assert!(r.rho.is_none());
        // Same truncated bound from the equicorrelated route.
        let mm = equicorr_moments(&c, 0.15, 0.05).unwrap();
        let em = mm.event_moments(&c).unwrap();
        let b2 = em.b_term(1).unwrap().min(em.b_term(2).unwrap());
        assert!((r.bound_b - b2).abs() < 1e-10 * b2);
        assert!((r.bound_a - em.a_term(2).unwrap()).abs() < 1e-12);
        assert!(r.proposed_bound <= r.existing_bound);
    }

    #[test]
    fn nearly_independent_forms() {
        let c = cfg(500, 5, 0.05);
        let a_star = 0.2;
        let boole = (ln_choose(500, 5) + 5.0 * (5.0 * a_star / 500.0f64).ln()).exp();
        let zero = nearly_indep_bound(&c, &CorrelationModel::Equicorrelated(0.0), a_star).unwrap();
        assert!((zero / boole - 1.0).abs() < 1e-12);
        let rho = 0.01;
        let cut = cutoff_at(&c, a_star).unwrap();
        let want = boole * (1.0 + 0.5 * cut * cut * 20.0 * rho);
        let equi = nearly_indep_bound(&c, &CorrelationModel::Equicorrelated(rho), a_star).unwrap();
        assert!((equi / want - 1.0).abs() < 1e-12);
        let mat = CorrelationModel::Matrix(CorrMatrix::constant(500, rho).unwrap());
        let via_matrix = nearly_indep_bound(&c, &mat, a_star).unwrap();
        assert!((via_matrix / equi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearly_independent_matrix_bound_dominates_every_tuple() {
        // Brute force over all 3-tuples of a small heterogeneous matrix.
        let n = 7;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.01 * ((i + j) % 5) as f64 }).collect())
            .collect();
        let m = CorrMatrix::from_rows(rows).unwrap();
        let c = cfg(7, 3, 0.05);
        let a_star = 0.1;
        let cut = cutoff_at(&c, a_star).unwrap();
        let mut best: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                for l in j + 1..n {
                    let s = 2.0 * (m.get(i, j) + m.get(i, l) + m.get(j, l));
                    best = best.max(s);
                }
            }
        }
        let exact = (ln_choose(7, 3) + 3.0 * (3.0 * a_star / 7.0f64).ln()).exp() * (1.0 + 0.5 * cut * cut * best);
        let got = nearly_indep_bound(&c, &CorrelationModel::Matrix(m), a_star).unwrap();
        assert!(got >= exact * (1.0 - 1e-12));
    }

    #[test]
    fn nearly_independent_correction_vanishes() {
        // ρ_ij = 1/n with k fixed: the correlation factor tends to 1.
        let mut factors = Vec::new();
        for n in [100u64, 1000, 10_000] {
            let c = cfg(n, 5, 0.05);
            let a_star = 0.2;
            let rho = 1.0 / n as f64;
            let with = nearly_indep_bound(&c, &CorrelationModel::Equicorrelated(rho), a_star).unwrap();
            let without = nearly_indep_bound(&c, &CorrelationModel::Equicorrelated(0.0), a_star).unwrap();
            factors.push(with / without);
        }
        assert!(factors.windows(2).all(|w| w[1] < w[0]));
        assert!(factors[2] - 1.0 < 0.05);
    }

    const RHOS: [f64; 5] = [0.1, 0.15, 0.2, 0.25, 0.3];
    const TABLE_EXISTING: [(u64, [f64; 5]); 3] = [
        (25, [0.007098, 0.011068, 0.01672, 0.02456, 0.03522]),
        (50, [0.006185, 0.009164, 0.01321, 0.01857, 0.02557]),
        (75, [0.005739, 0.008254, 0.01157, 0.01587, 0.02134]),
    ];
    const TABLE_PROPOSED: [(u64, [f64; 5]); 3] = [
        (25, [0.001392, 0.006829, 0.01672, 0.02456, 0.03522]),
        (50, [0.000447, 0.003484, 0.00962, 0.01857, 0.02557]),
        (75, [0.000191, 0.002094, 0.00681, 0.01374, 0.02134]),
    ];

    #[test]
    fn table_one_bounds() {
        for ((k, existing), (_, proposed)) in TABLE_EXISTING.iter().zip(TABLE_PROPOSED.iter()) {
            for (i, rho) in RHOS.iter().enumerate() {
                let r = proposed_bound_equicorr(&cfg(1000, *k, 0.05), *rho).unwrap();
                let e_err = r.existing_bound / existing[i] - 1.0;
                let p_err = r.proposed_bound / proposed[i] - 1.0;
                assert!(e_err.abs() < 0.02, "existing k={k} rho={rho}");
                assert!(p_err.abs() < 0.05, "proposed k={k} rho={rho}");
                assert!(r.proposed_bound <= r.existing_bound);
                assert!(r.alpha_star_fg >= 0.05);
            }
        }
    }

    #[test]
    fn table_one_r_sequence() {
        for k in [25u64, 50, 75] {
            for rho in RHOS {
                let c = cfg(1000, k, 0.05);
                let mm = equicorr_moments(&c, rho, 0.05).unwrap();
                assert!(mm.r[0] < 1.0);
                assert!(mm.r.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)), "k={k} rho={rho}");
                if let Some(m_star) = mm.m_star {
                    let b = inequalities::bound_b(&mm.event_moments(&c).unwrap()).unwrap();
                    assert_eq!(b.argmin, m_star);
                }
            }
        }
    }
}
