//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the rendered output and exit code without touching the
//! process, so it can be driven from tests.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bounds::{bound_report, CorrMatrix, CorrelationModel, PairRange, TestConfig};
use crate::error::{Error, Result};
use crate::genomics::{
    load_expression_matrix, mean_pairwise_correlation, run_procedures, t_to_z, two_sample_t, DataFormat,
    PairCorrelation, RejectionTable,
};
use crate::inequalities::{bound_a_available, bound_b_available, EventMoments, Minimized};
use crate::sim::{estimate_kfwer, table1_run, CutoffMode, SimSpec, Table1, DEFAULT_REPS, TABLE1_RHOS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "kfwer", version, about = "Generalized familywise error rate bounds and simulations")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,

    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "KFWER_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Existing and proposed k-FWER bounds for one configuration.
    Bounds(BoundsArgs),
    /// Bounds on P(at least k events) from a JSON moments file.
    Ineq(IneqArgs),
    /// Monte Carlo k-FWER estimate under the equicorrelated null.
    Simulate(SimulateArgs),
    /// The full n = 1000 grid of estimates and bounds.
    Table1(Table1Args),
    /// Rejection counts for a two-group expression matrix.
    Analyze(AnalyzeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Bounds(_) => "bounds",
            Command::Ineq(_) => "ineq",
            Command::Simulate(_) => "simulate",
            Command::Table1(_) => "table1",
            Command::Analyze(_) => "analyze",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Simulate(a) => Some(a.seed),
            Command::Table1(a) => Some(a.seed),
            Command::Analyze(a) => Some(a.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum PairRangeArg {
    All,
    ExcludeLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Lr,
    Modified,
}

impl From<ModeArg> for CutoffMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Lr => CutoffMode::Lr,
            ModeArg::Modified => CutoffMode::Modified,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum DataFormatArg {
    Csv,
    Tsv,
}

#[derive(Debug, Args, Serialize)]
struct BoundsArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    k: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Common correlation.
    #[arg(long, conflicts_with = "matrix")]
    rho: Option<f64>,
    /// Correlation matrix as headerless CSV.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Pairs entering f: all i < j, or only i < j < n.
    #[arg(long, value_enum, default_value_t = PairRangeArg::All)]
    pair_range: PairRangeArg,
}

#[derive(Debug, Args, Serialize)]
struct IneqArgs {
    /// JSON object with n, k, s, s_prime and max_inter.
    #[arg(long)]
    moments: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    k: u64,
    #[arg(long)]
    rho: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Lr)]
    cutoff_mode: ModeArg,
}

#[derive(Debug, Args, Serialize)]
struct Table1Args {
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Lr)]
    cutoff_mode: ModeArg,
    /// Also estimate under the other cutoff mode.
    #[arg(long)]
    verbose: bool,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    data_format: Option<DataFormatArg>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "2,10,20,40,60")]
    k_list: Vec<u64>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Correlation used by the min{f, g} rule.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Gene pairs sampled for the correlation estimate.
    #[arg(long, default_value_t = 100_000)]
    correlation_pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
}

fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// A result in three renderings.
struct Rendered {
    json: Value,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    /// Layout for `--format table` when it differs from the CSV rows.
    text: Option<(Vec<String>, Vec<Vec<String>>)>,
}

/// Shortest decimal form of `x` rounded to 12 significant digits.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    format!("{:.11e}", x).parse::<f64>().map_or_else(|_| x.to_string(), |v| v.to_string())
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(String::new, fmt_num)
}

fn opt_int(x: Option<usize>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn kv_rows(pairs: Vec<(&str, String)>) -> (Vec<String>, Vec<Vec<String>>) {
    (
        vec!["quantity".into(), "value".into()],
        pairs.into_iter().map(|(k, v)| vec![k.to_string(), v]).collect(),
    )
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0; cols];
    for r in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |r: &[String]| {
        r.iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = width[i]) } else { format!("{c:>w$}", w = width[i]) })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn render(format: OutputFormat, manifest: &RunManifest, out: Rendered) -> Result<String> {
    match format {
        OutputFormat::Json => {
            let doc = json!({ "manifest": manifest, "result": out.json });
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Error::Malformed(e.to_string());
            w.write_record(&out.header).map_err(io)?;
            for r in &out.rows {
                w.write_record(r).map_err(io)?;
            }
            let body = String::from_utf8(w.into_inner().map_err(|e| Error::Malformed(e.to_string()))?)
                .map_err(|e| Error::Malformed(e.to_string()))?;
            Ok(format!("# manifest: {}\n{body}", serde_json::to_string(manifest)?))
        }
        OutputFormat::Table => {
            let (header, rows) = out.text.unwrap_or((out.header, out.rows));
            Ok(format!("# manifest: {}\n{}", serde_json::to_string(manifest)?, aligned(&header, &rows)))
        }
    }
}

fn read_matrix(path: &Path) -> Result<CorrMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
            other => Error::Malformed(format!("{other:?}")),
        })?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Malformed(e.to_string()))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, c)| {
                c.trim().parse::<f64>().map_err(|_| Error::NonNumeric { row: i + 1, column: j + 1, value: c.to_string() })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    CorrMatrix::from_rows(rows)
}

fn cmd_bounds(a: &BoundsArgs) -> Result<Rendered> {
    let config = TestConfig::new(a.n, a.k, a.alpha)?;
    let model = match &a.matrix {
        Some(path) => CorrelationModel::Matrix(read_matrix(path)?),
        None => CorrelationModel::Equicorrelated(a.rho.unwrap_or(0.0)),
    };
    let mut report = bound_report(&config, &model)?;
    if a.pair_range == PairRangeArg::ExcludeLast {
        let fg = crate::bounds::fg_values_with(&config, &model, a.alpha, PairRange::ExcludeLast)?;
        report.f_value = fg.f;
        report.existing_bound = fg.min().clamp(0.0, 1.0);
        report.proposed_bound = report.proposed_bound.min(report.existing_bound);
        report.alpha_star_fg = crate::bounds::alpha_star_fg_with(&config, &model, PairRange::ExcludeLast)?;
        report.hoeffding = crate::bounds::hoeffding_kfwer(&config, report.alpha_star_fg.min(1.0 - 1e-15))?;
    }
    let (header, rows) = kv_rows(vec![
        ("n", report.n.to_string()),
        ("k", report.k.to_string()),
        ("alpha", fmt_num(report.alpha)),
        ("rho", opt_num(report.rho)),
        ("cutoff", fmt_num(report.cutoff)),
        ("f_value", fmt_num(report.f_value)),
        ("g_value", fmt_num(report.g_value)),
        ("existing_bound", fmt_num(report.existing_bound)),
        ("bound_a", fmt_num(report.bound_a)),
        ("bound_a_argmin", report.bound_a_argmin.to_string()),
        ("bound_b", fmt_num(report.bound_b)),
        ("bound_b_argmin", report.bound_b_argmin.to_string()),
        ("moment_order", report.moment_order.to_string()),
        ("m_star", opt_int(report.m_star)),
        ("proposed_bound", fmt_num(report.proposed_bound)),
        ("alpha_star_fg", fmt_num(report.alpha_star_fg)),
        ("alpha_star_indep", opt_num(report.alpha_star_indep)),
        ("alpha_star_negdep", fmt_num(report.alpha_star_negdep)),
        ("alpha_star_chernoff", fmt_num(report.alpha_star_chernoff)),
        ("hoeffding", fmt_num(report.hoeffding)),
    ]);
    Ok(Rendered { json: serde_json::to_value(&report)?, header, rows, text: None })
}

#[derive(Debug, Serialize)]
struct IneqReport {
    n: usize,
    k: usize,
    bound_a: Option<Minimized>,
    bound_b: Minimized,
    combined_bound: f64,
}

fn cmd_ineq(a: &IneqArgs) -> Result<Rendered> {
    let text = std::fs::read_to_string(&a.moments).map_err(|source| Error::Io { path: a.moments.clone(), source })?;
    let moments: EventMoments = serde_json::from_str(&text)?;
    moments.validate()?;
    let bound_a = if moments.k >= 2 && !moments.s_prime.is_empty() && !moments.max_inter.is_empty() {
        Some(bound_a_available(&moments)?)
    } else {
        None
    };
    let bound_b = bound_b_available(&moments)?;
    let combined = bound_a.map_or(bound_b.value, |x| x.value.min(bound_b.value)).clamp(0.0, 1.0);
    let report = IneqReport { n: moments.n, k: moments.k, bound_a, bound_b, combined_bound: combined };
    let (header, rows) = kv_rows(vec![
        ("n", report.n.to_string()),
        ("k", report.k.to_string()),
        ("bound_a", opt_num(bound_a.map(|x| x.value))),
        ("bound_a_argmin", opt_int(bound_a.map(|x| x.argmin))),
        ("bound_b", fmt_num(bound_b.value)),
        ("bound_b_argmin", bound_b.argmin.to_string()),
        ("combined_bound", fmt_num(combined)),
    ]);
    Ok(Rendered { json: serde_json::to_value(&report)?, header, rows, text: None })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Rendered> {
    let config = TestConfig::new(a.n, a.k, a.alpha)?;
    let spec = SimSpec::with_mode(config, a.rho, a.cutoff_mode.into(), a.reps, a.seed)?;
    let result = estimate_kfwer(&spec);
    let mut pairs = vec![
        ("n", a.n.to_string()),
        ("k", a.k.to_string()),
        ("rho", fmt_num(a.rho)),
        ("alpha", fmt_num(a.alpha)),
        ("cutoff", fmt_num(spec.cutoff)),
        ("reps", result.reps.to_string()),
        ("estimate", fmt_num(result.estimate)),
        ("std_error", fmt_num(result.std_error)),
    ];
    let hist: Vec<(String, String)> = result
        .exceed_counts_histogram
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(j, c)| (format!("exceedances_{j}"), c.to_string()))
        .collect();
    let (header, mut rows) = kv_rows(std::mem::take(&mut pairs));
    rows.extend(hist.into_iter().map(|(k, v)| vec![k, v]));
    let json = json!({ "cutoff_mode": CutoffMode::from(a.cutoff_mode), "cutoff": spec.cutoff, "sim": result });
    Ok(Rendered { json, header, rows, text: None })
}

fn table1_text(t: &Table1) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["k".to_string(), "row".to_string()];
    header.extend(TABLE1_RHOS.iter().map(|r| fmt_num(*r)));
    let mut rows = Vec::new();
    for k in crate::sim::TABLE1_KS {
        let cells: Vec<_> = TABLE1_RHOS.iter().filter_map(|r| t.cell(k, *r)).collect();
        let mut push = |label: String, f: &dyn Fn(&crate::sim::Table1Cell) -> String| {
            let mut row = vec![k.to_string(), label];
            row.extend(cells.iter().map(|c| f(c)));
            rows.push(row);
        };
        push(format!("estimate ({})", t.cutoff_mode), &|c| format!("{:.4}", c.estimate));
        if cells.iter().any(|c| c.alternate.is_some()) {
            push(format!("estimate ({})", t.cutoff_mode.other()), &|c| {
                c.alternate.as_ref().map_or_else(String::new, |m| format!("{:.4}", m.estimate))
            });
        }
        push("existing bound".into(), &|c| fmt_num(c.existing_bound));
        push("proposed bound".into(), &|c| fmt_num(c.proposed_bound));
    }
    (header, rows)
}

fn cmd_table1(a: &Table1Args) -> Result<Rendered> {
    let table = table1_run(a.alpha, a.reps, a.seed, a.cutoff_mode.into(), a.verbose)?;
    let header: Vec<String> = [
        "k",
        "rho",
        "seed",
        "cutoff",
        "estimate",
        "std_error",
        "existing_bound",
        "proposed_bound",
        "alternate_cutoff",
        "alternate_estimate",
        "alternate_std_error",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = table
        .cells
        .iter()
        .map(|c| {
            vec![
                c.k.to_string(),
                fmt_num(c.rho),
                c.seed.to_string(),
                fmt_num(c.cutoff),
                fmt_num(c.estimate),
                fmt_num(c.std_error),
                fmt_num(c.existing_bound),
                fmt_num(c.proposed_bound),
                opt_num(c.alternate.as_ref().map(|m| m.cutoff)),
                opt_num(c.alternate.as_ref().map(|m| m.estimate)),
                opt_num(c.alternate.as_ref().map(|m| m.std_error)),
            ]
        })
        .collect();
    Ok(Rendered { json: serde_json::to_value(&table)?, header, rows, text: Some(table1_text(&table)) })
}

#[derive(Debug, Serialize)]
struct AnalyzeReport {
    genes: usize,
    group_sizes: (usize, usize),
    df: u32,
    saturated_genes: usize,
    correlation: Option<PairCorrelation>,
    table: RejectionTable,
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<Rendered> {
    let format = match a.data_format {
        Some(DataFormatArg::Csv) => DataFormat::Csv,
        Some(DataFormatArg::Tsv) => DataFormat::Tsv,
        None => DataFormat::from_path(&a.data),
    };
    let data = load_expression_matrix(&a.data, format, a.n1, a.n2)?;
    let stats = t_to_z(two_sample_t(&data)?)?;
    let n = data.n_genes() as u64;
    let configs = a.k_list.iter().map(|&k| TestConfig::new(n, k, a.alpha)).collect::<Result<Vec<_>>>()?;
    let table = run_procedures(&stats, &configs, a.rho)?;
    let correlation = if a.correlation_pairs > 0 && data.n_genes() >= 2 {
        mean_pairwise_correlation(&data, a.correlation_pairs, a.seed).ok()
    } else {
        None
    };
    let header: Vec<String> =
        ["k", "lr", "fg", "proposed", "cutoff_lr", "cutoff_fg", "cutoff_proposed", "alpha_star_fg", "alpha_star_negdep"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    let rows = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.lr.to_string(),
                r.fg.to_string(),
                r.proposed.to_string(),
                fmt_num(r.cutoff_lr),
                fmt_num(r.cutoff_fg),
                fmt_num(r.cutoff_proposed),
                fmt_num(r.alpha_star_fg),
                fmt_num(r.alpha_star_negdep),
            ]
        })
        .collect();
    let mut text_header = vec!["k".to_string()];
    text_header.extend(table.rows.iter().map(|r| r.k.to_string()));
    let method_row = |label: &str, f: &dyn Fn(&crate::genomics::RejectionRow) -> usize| {
        let mut row = vec![label.to_string()];
        row.extend(table.rows.iter().map(|r| f(r).to_string()));
        row
    };
    let text_rows =
        vec![method_row("Lehmann-Romano", &|r| r.lr), method_row("min{f,g}", &|r| r.fg), method_row("proposed", &|r| r.proposed)];
    let report = AnalyzeReport {
        genes: data.n_genes(),
        group_sizes: data.group_sizes(),
        df: stats.df,
        saturated_genes: stats.saturated.len(),
        correlation,
        table,
    };
    Ok(Rendered { json: serde_json::to_value(&report)?, header, rows, text: Some((text_header, text_rows)) })
}

fn execute(cli: &Cli) -> Result<String> {
    let out = match &cli.command {
        Command::Bounds(a) => cmd_bounds(a)?,
        Command::Ineq(a) => cmd_ineq(a)?,
        Command::Simulate(a) => cmd_simulate(a)?,
        Command::Table1(a) => cmd_table1(a)?,
        Command::Analyze(a) => cmd_analyze(a)?,
    };
    let parameters = match serde_json::to_value(&cli.command)? {
        Value::Object(mut m) => m.remove(cli.command.name()).unwrap_or(Value::Null),
        other => other,
    };
    let manifest = RunManifest {
        subcommand: cli.command.name().to_string(),
        parameters,
        seed: cli.command.seed(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: timestamp(),
    };
    render(cli.format, &manifest, out)
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome { code: EXIT_USAGE, stdout: String::new(), stderr: text }
            } else {
                Outcome { code: EXIT_OK, stdout: text, stderr: String::new() }
            };
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidConfig("--threads must be at least 1".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))
            .and_then(|pool| pool.install(|| execute(&cli))),
        None => execute(&cli),
    };
    match result {
        Ok(stdout) => Outcome { code: EXIT_OK, stdout, stderr: String::new() },
        Err(e) => Outcome {
            code: if e.is_validation() { EXIT_USAGE } else { EXIT_RUNTIME },
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}
