//! Two-group expression analysis: pooled-variance t statistics, the
//! t-to-normal score transform, and rejection counts of the three cutoff
//! rules.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{alpha_star_fg, alpha_star_negdep, cutoff_at, CorrelationModel, TestConfig};
use crate::dist::{student_t_cdf, t_to_normal_score};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Csv,
    Tsv,
}

impl DataFormat {
    /// `.tsv` and `.txt` are tab separated, anything else comma separated.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("tsv") | Some("txt") => DataFormat::Tsv,
            _ => DataFormat::Csv,
        }
    }

    fn delimiter(self) -> u8 {
        match self {
            DataFormat::Csv => b',',
            DataFormat::Tsv => b'\t',
        }
    }
}

/// Genes in rows, subjects in columns; the first `n1` columns form group 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionDataset {
    rows: Vec<Vec<f64>>,
    n1: usize,
    n2: usize,
    gene_ids: Option<Vec<String>>,
}

impl ExpressionDataset {
    pub fn new(rows: Vec<Vec<f64>>, n1: usize, n2: usize, gene_ids: Option<Vec<String>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Malformed("dataset has no genes".into()));
        }
        if n1 < 2 || n2 < 2 {
            return Err(Error::InvalidConfig(format!("each group needs at least 2 subjects, got ({n1}, {n2})")));
        }
        let width = n1 + n2;
        if let Some(i) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::Malformed(format!(
                "gene {} has {} values but the group sizes sum to {width}",
                i + 1,
                rows[i].len()
            )));
        }
        if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::Malformed(format!("gene {} has a non-finite value", i + 1)));
        }
        if let Some(ids) = &gene_ids {
            if ids.len() != rows.len() {
                return Err(Error::Malformed(format!("{} gene ids for {} genes", ids.len(), rows.len())));
            }
        }
        Ok(ExpressionDataset { rows, n1, n2, gene_ids })
    }

    pub fn n_genes(&self) -> usize {
        self.rows.len()
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn gene_ids(&self) -> Option<&[String]> {
        self.gene_ids.as_deref()
    }

    /// The id of gene `i`, or its 1-based index when ids are absent.
    pub fn gene_label(&self, i: usize) -> String {
        match &self.gene_ids {
            Some(ids) => ids[i].clone(),
            None => format!("gene {}", i + 1),
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Sizes of the two contiguous label runs, if the labels form exactly two.
fn label_runs(labels: &[String]) -> Option<(usize, usize)> {
    let first = labels.first()?;
    let split = labels.iter().position(|l| l != first)?;
    let second = &labels[split];
    labels[split..].iter().all(|l| l == second).then_some((split, labels.len() - split))
}

/// Reads an expression matrix.
///
/// An optional first row of column labels is recognised by containing a
/// non-numeric value; when its labels form two contiguous runs they give the
/// group sizes. An optional leading gene-id column is recognised by a
/// non-numeric first value in the last row. Explicit `n1`/`n2` override or
/// complete the header; one of them alone fixes the other from the width.
/// Non-numeric data cells are reported with their 1-based file line.
pub fn load_expression_matrix(
    path: &Path,
    format: DataFormat,
    n1: Option<usize>,
    n2: Option<usize>,
) -> Result<ExpressionDataset> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut text = String::new();
    File::open(path).and_then(|mut f| f.read_to_string(&mut text)).map_err(io)?;
    parse_expression_matrix(&text, format, n1, n2)
}

pub fn parse_expression_matrix(
    text: &str,
    format: DataFormat,
    n1: Option<usize>,
    n2: Option<usize>,
) -> Result<ExpressionDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(format.delimiter())
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Malformed(e.to_string()))?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line() as usize);
        records.push((line, rec.iter().map(|c| c.trim().to_string()).collect::<Vec<_>>()));
    }
    let Some((_, last)) = records.last() else {
        return Err(Error::Malformed("input is empty".into()));
    };
    let id_col = last.first().is_some_and(|c| parse_number(c).is_none());
    let skip = id_col as usize;
    let has_header = records[0].1.iter().skip(skip).any(|c| parse_number(c).is_none());
    if has_header && records.len() == 1 {
        return Err(Error::Malformed("input has a header but no data rows".into()));
    }
    let header_sizes = if has_header { label_runs(&records[0].1[skip.min(records[0].1.len())..]) } else { None };
    let body = &records[has_header as usize..];
    let width = body[0].1.len().saturating_sub(skip);

    let mut rows = Vec::with_capacity(body.len());
    let mut ids = id_col.then(Vec::new);
    for (line, cells) in body {
        if cells.len() != width + skip {
            return Err(Error::Malformed(format!(
                "line {line} has {} columns, expected {}",
                cells.len(),
                width + skip
            )));
        }
        if let Some(ids) = ids.as_mut() {
            ids.push(cells[0].clone());
        }
        let row = cells[skip..]
            .iter()
            .enumerate()
            .map(|(j, c)| {
                parse_number(c).ok_or_else(|| Error::NonNumeric { row: *line, column: j + skip + 1, value: c.clone() })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }

    let (g1, g2) = match (n1, n2) {
        (Some(a), Some(b)) => (a, b),
        (Some(a), None) => (a, width.saturating_sub(a)),
        (None, Some(b)) => (width.saturating_sub(b), b),
        (None, None) => header_sizes.ok_or_else(|| {
            Error::InvalidConfig("group sizes are not given and the header does not declare two groups".into())
        })?,
    };
    if g1 + g2 != width {
        return Err(Error::InvalidConfig(format!("group sizes {g1} + {g2} do not match the {width} data columns")));
    }
    if let Some(h) = header_sizes {
        if h != (g1, g2) {
            return Err(Error::InvalidConfig(format!(
                "group sizes ({g1}, {g2}) disagree with the header labels ({}, {})",
                h.0, h.1
            )));
        }
    }
    ExpressionDataset::new(rows, g1, g2, ids)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestStatistics {
    pub t: Vec<f64>,
    /// Empty until [`t_to_z`] fills it.
    pub z: Vec<f64>,
    pub df: u32,
    /// Genes whose t CDF rounds to 0 or 1 in double precision. Their z-scores
    /// come from the tail probability and remain finite and rank-preserving.
    pub saturated: Vec<usize>,
}

/// t_i = (mean₂ − mean₁)/S_i with S_i² = (SS₁ + SS₂)/(N₁ + N₂ − 2)·(1/N₁ + 1/N₂).
pub fn two_sample_t(data: &ExpressionDataset) -> Result<TestStatistics> {
    let (n1, n2) = data.group_sizes();
    let df = n1 + n2 - 2;
    let scale = (1.0 / n1 as f64 + 1.0 / n2 as f64) / df as f64;
    let stats: Vec<Option<f64>> = data
        .rows()
        .par_iter()
        .map(|row| {
            let (a, b) = row.split_at(n1);
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (ma, mb) = (mean(a), mean(b));
            let ss: f64 =
                a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() + b.iter().map(|x| (x - mb).powi(2)).sum::<f64>();
            let s2 = ss * scale;
            (s2 > 0.0).then(|| (mb - ma) / s2.sqrt())
        })
        .collect();
    let bad: Vec<String> =
        stats.iter().enumerate().filter(|(_, t)| t.is_none()).map(|(i, _)| data.gene_label(i)).collect();
    if !bad.is_empty() {
        return Err(Error::ZeroVariance { genes: bad });
    }
    Ok(TestStatistics { t: stats.into_iter().flatten().collect(), z: Vec::new(), df: df as u32, saturated: Vec::new() })
}

/// Fills z_i = Φ⁻¹(F_df(t_i)).
pub fn t_to_z(mut stats: TestStatistics) -> Result<TestStatistics> {
    stats.z = stats.t.iter().map(|&t| t_to_normal_score(t, stats.df)).collect::<Result<_>>()?;
    stats.saturated = Vec::new();
    for (i, &t) in stats.t.iter().enumerate() {
        let f = student_t_cdf(t, stats.df)?;
        if f == 0.0 || f == 1.0 {
            stats.saturated.push(i);
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionRow {
    pub k: u64,
    pub alpha_star_fg: f64,
    pub alpha_star_negdep: f64,
    pub cutoff_lr: f64,
    pub cutoff_fg: f64,
    pub cutoff_proposed: f64,
    pub lr: usize,
    pub fg: usize,
    pub proposed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionTable {
    pub n: u64,
    pub alpha: f64,
    pub rho: f64,
    pub rows: Vec<RejectionRow>,
}

/// Counts z_i above the Lehmann–Romano cutoff, the min{f, g} cutoff and the
/// negative-dependence cutoff for each configuration. For k = 1 the f/g
/// bounds are undefined and that rule falls back to α.
pub fn run_procedures(stats: &TestStatistics, configs: &[TestConfig], rho: f64) -> Result<RejectionTable> {
    if stats.z.len() != stats.t.len() {
        return Err(Error::InvalidConfig("z-scores have not been computed".into()));
    }
    let n = stats.z.len() as u64;
    let mut rows = Vec::with_capacity(configs.len());
    for c in configs {
        if c.n != n {
            return Err(Error::InvalidConfig(format!("configuration has n = {} but there are {n} statistics", c.n)));
        }
        let a_fg = if c.k >= 2 { alpha_star_fg(c, &CorrelationModel::Equicorrelated(rho))? } else { c.alpha };
        let a_nd = alpha_star_negdep(c);
        let cutoff = |a: f64| cutoff_at(c, a);
        let (lr, fg, prop) = (cutoff(c.alpha)?, cutoff(a_fg)?, cutoff(a_nd)?);
        let count = |cut: f64| stats.z.iter().filter(|&&z| z > cut).count();
        rows.push(RejectionRow {
            k: c.k,
            alpha_star_fg: a_fg,
            alpha_star_negdep: a_nd,
            cutoff_lr: lr,
            cutoff_fg: fg,
            cutoff_proposed: prop,
            lr: count(lr),
            fg: count(fg),
            proposed: count(prop),
        });
    }
    let alpha = configs.first().map_or(f64::NAN, |c| c.alpha);
    Ok(RejectionTable { n, alpha, rho, rows })
}

/// Independent N(0, 1) expression values with the first `signal` genes
/// shifted up by `effect` in group 2.
pub fn synthetic_dataset(
    n_genes: usize,
    n1: usize,
    n2: usize,
    signal: usize,
    effect: f64,
    seed: u64,
) -> Result<ExpressionDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n_genes)
        .map(|i| {
            (0..n1 + n2)
                .map(|j| {
                    let x: f64 = StandardNormal.sample(&mut rng);
                    if i < signal && j >= n1 {
                        x + effect
                    } else {
                        x
                    }
                })
                .collect()
        })
        .collect();
    let ids = (1..=n_genes).map(|i| format!("gene{i}")).collect();
    ExpressionDataset::new(rows, n1, n2, Some(ids))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCorrelation {
    /// Signed mean of the sampled Pearson correlations.
    pub mean: f64,
    pub mean_abs: f64,
    pub pairs: usize,
}

/// Mean Pearson correlation between genes over `pairs` uniformly sampled
/// distinct gene pairs, computed on values centred within each group so that
/// the group effect does not masquerade as correlation. Constant genes are
/// left out.
pub fn mean_pairwise_correlation(data: &ExpressionDataset, pairs: usize, seed: u64) -> Result<PairCorrelation> {
    let (n1, _) = data.group_sizes();
    let unit: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .filter_map(|row| {
            let (a, b) = row.split_at(n1);
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            let v: Vec<f64> = a.iter().map(|x| x - ma).chain(b.iter().map(|x| x - mb)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            (norm > 0.0).then(|| v.into_iter().map(|x| x / norm).collect())
        })
        .collect();
    let g = unit.len();
    if g < 2 || pairs == 0 {
        return Err(Error::InvalidConfig("need at least two non-constant genes and one pair".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_abs) = (0.0, 0.0);
    for _ in 0..pairs {
        let i = rng.random_range(0..g);
        let mut j = rng.random_range(0..g - 1);
        if j >= i {
            j += 1;
        }
        let r: f64 = unit[i].iter().zip(&unit[j]).map(|(x, y)| x * y).sum();
        sum += r;
        sum_abs += r.abs();
    }
    Ok(PairCorrelation { mean: sum / pairs as f64, mean_abs: sum_abs / pairs as f64, pairs })
}
