//! Bounds on P(at least k of n events occur) from partial moment information,
//! and an exact enumeration oracle for small event systems.
//!
//! With S_m the sum of all m-wise intersection probabilities,
//! S′_m = max over (m−1)-tuples U of Σ_{j∉U} P(A_j ∩ ⋂U), and M_{m−1} the
//! largest (m−1)-wise intersection probability:
//!
//! * A = min_{2≤m≤k} (S₁ − S′_m)/k + ((k−m+1)/k)·M_{m−1}
//! * B = min_{1≤m≤k} S_m / C(k, m)
//!
//! and the probability is at most min{A, B}.

use serde::{Deserialize, Serialize};

use crate::dist::ln_choose;
use crate::error::{Error, Result};

const MOMENT_TOL: f64 = 1e-9;

/// Moment information about an event system A₁, …, A_n.
///
/// Vectors are indexed from their first order: `s[0]` is S₁, `s_prime[0]`
/// is S′₂, `max_inter[0]` is the largest single-event probability. They may
/// be shorter than `k` requires; the bounds then report which moment is
/// missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMoments {
    pub n: usize,
    pub k: usize,
    pub s: Vec<f64>,
    #[serde(default)]
    pub s_prime: Vec<f64>,
    #[serde(default)]
    pub max_inter: Vec<f64>,
}

impl EventMoments {
    pub fn new(n: usize, k: usize, s: Vec<f64>, s_prime: Vec<f64>, max_inter: Vec<f64>) -> Result<Self> {
        let moments = EventMoments { n, k, s, s_prime, max_inter };
        moments.validate()?;
        Ok(moments)
    }

    /// Moments of an exchangeable system where every m-wise intersection has
    /// probability a_m; `log_a[m − 1]` holds ln a_m for m = 1..=k.
    pub fn exchangeable(n: usize, k: usize, log_a: &[f64]) -> Result<Self> {
        if log_a.len() < k {
            return Err(Error::MissingMoment { what: "a_m", m: log_a.len() + 1 });
        }
        let s = (1..=k).map(|m| (ln_choose(n as u64, m as u64) + log_a[m - 1]).exp()).collect();
        let s_prime = (2..=k).map(|m| (n - m + 1) as f64 * log_a[m - 1].exp()).collect();
        let max_inter = (1..k).map(|m| log_a[m - 1].exp()).collect();
        Self::new(n, k, s, s_prime, max_inter)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 || self.k == 0 {
            return bad("n and k must be at least 1".into());
        }
        if self.k > self.n {
            return bad(format!("k = {} must satisfy k <= n = {}", self.k, self.n));
        }
        let all = self.s.iter().chain(&self.s_prime).chain(&self.max_inter);
        if let Some(v) = all.clone().find(|v| v.is_nan() || **v < 0.0) {
            return bad(format!("moments must be non-negative, found {v}"));
        }
        if self.max_inter.iter().any(|v| *v > 1.0 + MOMENT_TOL) {
            return bad("intersection probabilities cannot exceed 1".into());
        }
        if self.max_inter.windows(2).any(|w| w[1] > w[0] * (1.0 + MOMENT_TOL) + MOMENT_TOL * 1e-3) {
            return bad("largest intersection probabilities must be non-increasing in m".into());
        }
        if let Some(&s1) = self.s.first() {
            if s1 > self.n as f64 * (1.0 + MOMENT_TOL) {
                return bad(format!("S_1 = {s1} exceeds n = {}", self.n));
            }
            if self.s_prime.iter().any(|v| *v > s1 * (1.0 + MOMENT_TOL) + 1e-15) {
                return bad("S'_m cannot exceed S_1".into());
            }
        }
        Ok(())
    }

    fn s1(&self) -> Result<f64> {
        self.s.first().copied().ok_or(Error::MissingMoment { what: "S", m: 1 })
    }

    /// The A term for a single order m in 2..=k.
    pub fn a_term(&self, m: usize) -> Result<f64> {
        let k = self.k as f64;
        let s1 = self.s1()?;
        let sp = *self.s_prime.get(m.wrapping_sub(2)).ok_or(Error::MissingMoment { what: "S'", m })?;
        let mi = *self
            .max_inter
            .get(m.wrapping_sub(2))
            .ok_or(Error::MissingMoment { what: "max intersection", m: m - 1 })?;
        Ok((s1 - sp) / k + (k - m as f64 + 1.0) / k * mi)
    }

    /// S_m / C(k, m) for a single order m in 1..=k.
    pub fn b_term(&self, m: usize) -> Result<f64> {
        let sm = *self.s.get(m.wrapping_sub(1)).ok_or(Error::MissingMoment { what: "S", m })?;
        Ok(sm / ln_choose(self.k as u64, m as u64).exp())
    }

    /// Highest order for which the A term can be formed.
    fn a_order(&self) -> usize {
        self.k.min(self.s_prime.len() + 1).min(self.max_inter.len() + 1)
    }

    fn b_order(&self) -> usize {
        self.k.min(self.s.len())
    }
}

/// A bound value with the order m that attains it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Minimized {
    pub value: f64,
    pub argmin: usize,
}

/// Minimum over `orders`, ties resolved toward the smaller m.
fn minimize(orders: impl Iterator<Item = usize>, term: impl Fn(usize) -> Result<f64>) -> Result<Minimized> {
    let mut best: Option<Minimized> = None;
    for m in orders {
        let value = term(m)?;
        if best.is_none_or(|b| value < b.value) {
            best = Some(Minimized { value, argmin: m });
        }
    }
    best.ok_or_else(|| Error::InvalidConfig("no admissible order m".into()))
}

fn require_k_at_least_two(moments: &EventMoments) -> Result<()> {
    if moments.k < 2 {
        return Err(Error::InvalidConfig(format!("bound A requires k >= 2, got k = {}", moments.k)));
    }
    Ok(())
}

/// A = min over 2 ≤ m ≤ k of (S₁ − S′_m)/k + ((k−m+1)/k)·M_{m−1}. Unclamped.
pub fn bound_a(moments: &EventMoments) -> Result<Minimized> {
    require_k_at_least_two(moments)?;
    minimize(2..=moments.k, |m| moments.a_term(m))
}

/// B = min over 1 ≤ m ≤ k of S_m / C(k, m). Unclamped.
pub fn bound_b(moments: &EventMoments) -> Result<Minimized> {
    minimize(1..=moments.k, |m| moments.b_term(m))
}

/// A restricted to the orders whose moments are present. Still a valid upper
/// bound, since every individual term is.
pub fn bound_a_available(moments: &EventMoments) -> Result<Minimized> {
    require_k_at_least_two(moments)?;
    minimize(2..=moments.a_order(), |m| moments.a_term(m))
}

/// B restricted to the orders whose moments are present.
pub fn bound_b_available(moments: &EventMoments) -> Result<Minimized> {
    minimize(1..=moments.b_order(), |m| moments.b_term(m))
}

/// Both bounds and their minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundDecomposition {
    pub a: f64,
    pub a_argmin: usize,
    pub b: f64,
    pub b_argmin: usize,
    /// min{A, B} clamped to [0, 1].
    pub combined: f64,
}

impl BoundDecomposition {
    fn from_parts(a: Minimized, b: Minimized) -> Self {
        BoundDecomposition {
            a: a.value,
            a_argmin: a.argmin,
            b: b.value,
            b_argmin: b.argmin,
            combined: a.value.min(b.value).clamp(0.0, 1.0),
        }
    }
}

pub fn combined_bound(moments: &EventMoments) -> Result<BoundDecomposition> {
    Ok(BoundDecomposition::from_parts(bound_a(moments)?, bound_b(moments)?))
}

/// [`combined_bound`] over whatever orders the moments cover.
pub fn combined_bound_available(moments: &EventMoments) -> Result<BoundDecomposition> {
    Ok(BoundDecomposition::from_parts(bound_a_available(moments)?, bound_b_available(moments)?))
}

/// Largest system size the enumeration oracle accepts.
pub const MAX_ORACLE_EVENTS: usize = 12;

/// An explicit joint distribution over the 2ⁿ atoms of n events. Bit i of an
/// atom index is set when event i occurs.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSystem {
    n: usize,
    atoms: Vec<f64>,
}

impl EventSystem {
    pub fn new(n: usize, atoms: Vec<f64>) -> Result<Self> {
        let bad = |msg: String| Err(Error::MalformedSystem(msg));
        if n == 0 || n > MAX_ORACLE_EVENTS {
            return bad(format!("n must lie in 1..={MAX_ORACLE_EVENTS}, got {n}"));
        }
        if atoms.len() != 1 << n {
            return bad(format!("expected {} atoms, got {}", 1usize << n, atoms.len()));
        }
        if let Some(a) = atoms.iter().find(|a| a.is_nan() || **a < 0.0) {
            return bad(format!("atom probabilities must be non-negative, found {a}"));
        }
        let total: f64 = atoms.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("atoms sum to {total}, not 1"));
        }
        Ok(EventSystem { n, atoms })
    }

    /// Independent events with the given marginals.
    pub fn independent(probs: &[f64]) -> Result<Self> {
        let n = probs.len();
        let atoms = (0..1usize << n)
            .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { probs[i] } else { 1.0 - probs[i] }).product())
            .collect();
        Self::new(n, atoms)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    /// P(⋂_{i∈T} A_i) for every subset mask T (superset-sum transform).
    pub fn intersection_probs(&self) -> Vec<f64> {
        let mut q = self.atoms.clone();
        for i in 0..self.n {
            for mask in 0..q.len() {
                if mask >> i & 1 == 0 {
                    q[mask] += q[mask | 1 << i];
                }
            }
        }
        q
    }
}

/// Exact P(at least k events occur).
pub fn exact_at_least_k(system: &EventSystem, k: usize) -> f64 {
    system
        .atoms
        .iter()
        .enumerate()
        .filter(|(mask, _)| mask.count_ones() as usize >= k)
        .map(|(_, p)| p)
        .sum()
}

/// Exact S_m, S′_m and largest intersections for m up to k, by enumeration.
pub fn moments_from_system(system: &EventSystem, k: usize) -> Result<EventMoments> {
    let n = system.n;
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("k must lie in 1..={n}, got {k}")));
    }
    let q = system.intersection_probs();
    let mut s = vec![0.0; k];
    let mut max_inter = vec![0.0f64; k.saturating_sub(1)];
    let mut s_prime = vec![0.0f64; k.saturating_sub(1)];
    for (mask, &p) in q.iter().enumerate() {
        let size = mask.count_ones() as usize;
        if size == 0 || size > k {
            continue;
        }
        s[size - 1] += p;
        if size < k {
            max_inter[size - 1] = max_inter[size - 1].max(p);
        }
        // mask plays the role of the (m−1)-tuple U with m = size + 1.
        if size < k {
            let extended: f64 = (0..n).filter(|j| mask >> j & 1 == 0).map(|j| q[mask | 1 << j]).sum();
            s_prime[size - 1] = s_prime[size - 1].max(extended);
        }
    }
    EventMoments::new(n, k, s, s_prime, max_inter)
}
