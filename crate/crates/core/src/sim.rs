//! Seeded Monte Carlo estimation of the k-FWER under the equicorrelated
//! global null.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{alpha_star_fg, cutoff_at, lr_cutoff, proposed_bound_equicorr, CorrelationModel, TestConfig};
use crate::error::{domain, Error, Result};

pub const MIN_REPS: u64 = 100;
pub const DEFAULT_REPS: u64 = 10_000;

/// Which cutoff the simulated procedure rejects at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffMode {
    /// Φ⁻¹(1 − kα/n).
    #[default]
    Lr,
    /// Φ⁻¹(1 − kα*/n) with α* solved from min{f, g}.
    Modified,
}

impl CutoffMode {
    pub fn other(self) -> Self {
        match self {
            CutoffMode::Lr => CutoffMode::Modified,
            CutoffMode::Modified => CutoffMode::Lr,
        }
    }

    pub fn cutoff(self, config: &TestConfig, rho: f64) -> Result<f64> {
        match self {
            CutoffMode::Lr => lr_cutoff(config),
            CutoffMode::Modified => {
                let a = alpha_star_fg(config, &CorrelationModel::Equicorrelated(rho))?;
                cutoff_at(config, a)
            }
        }
    }
}

impl fmt::Display for CutoffMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CutoffMode::Lr => "lr",
            CutoffMode::Modified => "modified",
        })
    }
}

impl FromStr for CutoffMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(CutoffMode::Lr),
            "modified" => Ok(CutoffMode::Modified),
            other => Err(Error::InvalidConfig(format!("unknown cutoff mode '{other}' (expected lr or modified)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimSpec {
    pub config: TestConfig,
    pub rho: f64,
    /// May be ±∞ for the degenerate procedures.
    pub cutoff: f64,
    pub reps: u64,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(config: TestConfig, rho: f64, cutoff: f64, reps: u64, seed: u64) -> Result<Self> {
        check_rho(rho)?;
        if cutoff.is_nan() {
            return Err(domain("cutoff must not be NaN"));
        }
        if reps < MIN_REPS {
            return Err(Error::InvalidConfig(format!("reps must be at least {MIN_REPS}, got {reps}")));
        }
        Ok(SimSpec { config, rho, cutoff, reps, seed })
    }

    pub fn with_mode(config: TestConfig, rho: f64, mode: CutoffMode, reps: u64, seed: u64) -> Result<Self> {
        check_rho(rho)?;
        Self::new(config, rho, mode.cutoff(&config, rho)?, reps, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub estimate: f64,
    pub std_error: f64,
    pub reps: u64,
    /// Entry j counts replicates with exactly j exceedances, j = 0..=n.
    pub exceed_counts_histogram: Vec<u64>,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(domain(format!("correlation must lie in [0, 1), got {rho}")));
    }
    Ok(())
}

/// The generator for replicate `rep`: ChaCha8 keyed by `seed`, on stream `rep`.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// One draw of X = √ρ·Z₀ + √(1−ρ)·Z under H₀.
pub fn sample_equicorr_null<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_rho(rho)?;
    let (sr, sc) = (rho.sqrt(), (1.0 - rho).sqrt());
    let z0: f64 = StandardNormal.sample(rng);
    Ok((0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sr * z0 + sc * z
        })
        .collect())
}

fn count_exceedances(n: usize, rho: f64, cutoff: f64, rng: &mut ChaCha8Rng) -> usize {
    let (sr, sc) = (rho.sqrt(), (1.0 - rho).sqrt());
    let z0: f64 = StandardNormal.sample(rng);
    let shared = sr * z0;
    (0..n)
        .filter(|_| {
            let z: f64 = StandardNormal.sample(rng);
            shared + sc * z > cutoff
        })
        .count()
}

/// Fraction of replicates in which at least k statistics exceed the cutoff.
/// The result depends only on the spec, never on thread scheduling.
pub fn estimate_kfwer(spec: &SimSpec) -> SimResult {
    let n = spec.config.n as usize;
    let hist = (0..spec.reps)
        .into_par_iter()
        .fold(
            || vec![0u64; n + 1],
            |mut h, rep| {
                let mut rng = replicate_rng(spec.seed, rep);
                h[count_exceedances(n, spec.rho, spec.cutoff, &mut rng)] += 1;
                h
            },
        )
        .reduce(
            || vec![0u64; n + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let hits: u64 = hist[spec.config.k as usize..].iter().sum();
    let p = hits as f64 / spec.reps as f64;
    SimResult {
        estimate: p,
        std_error: (p * (1.0 - p) / spec.reps as f64).sqrt(),
        reps: spec.reps,
        exceed_counts_histogram: hist,
    }
}

pub const TABLE1_N: u64 = 1000;
pub const TABLE1_KS: [u64; 3] = [25, 50, 75];
pub const TABLE1_RHOS: [f64; 5] = [0.1, 0.15, 0.2, 0.25, 0.3];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeEstimate {
    pub mode: CutoffMode,
    pub cutoff: f64,
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Cell {
    pub k: u64,
    pub rho: f64,
    pub seed: u64,
    pub cutoff: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub existing_bound: f64,
    pub proposed_bound: f64,
    /// The estimate under the other cutoff mode, in verbose runs.
    pub alternate: Option<ModeEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1 {
    pub n: u64,
    pub alpha: f64,
    pub reps: u64,
    pub seed: u64,
    pub cutoff_mode: CutoffMode,
    /// Row-major: k outer, ρ inner.
    pub cells: Vec<Table1Cell>,
}

impl Table1 {
    pub fn cell(&self, k: u64, rho: f64) -> Option<&Table1Cell> {
        self.cells.iter().find(|c| c.k == k && c.rho == rho)
    }
}

/// Seed for grid cell `index`, drawn from its own stream of the master seed.
pub fn cell_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// Estimates, existing bounds and proposed bounds over the 3×5 grid.
pub fn table1_run(alpha: f64, reps: u64, seed: u64, mode: CutoffMode, verbose: bool) -> Result<Table1> {
    let grid: Vec<(u64, u64, f64)> = TABLE1_KS
        .iter()
        .flat_map(|&k| TABLE1_RHOS.iter().map(move |&rho| (k, rho)))
        .enumerate()
        .map(|(i, (k, rho))| (i as u64, k, rho))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(index, k, rho)| {
            let config = TestConfig::new(TABLE1_N, k, alpha)?;
            let report = proposed_bound_equicorr(&config, rho)?;
            let seed = cell_seed(seed, index);
            let spec = SimSpec::with_mode(config, rho, mode, reps, seed)?;
            let main = estimate_kfwer(&spec);
            let alternate = if verbose {
                let alt = SimSpec::with_mode(config, rho, mode.other(), reps, seed)?;
                let r = estimate_kfwer(&alt);
                Some(ModeEstimate { mode: mode.other(), cutoff: alt.cutoff, estimate: r.estimate, std_error: r.std_error })
            } else {
                None
            };
            Ok(Table1Cell {
                k,
                rho,
                seed,
                cutoff: spec.cutoff,
                estimate: main.estimate,
                std_error: main.std_error,
                existing_bound: report.existing_bound,
                proposed_bound: report.proposed_bound,
                alternate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table1 { n: TABLE1_N, alpha, reps, seed, cutoff_mode: mode, cells })
}
