//! Command-line front end.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::estimator::{self, EstimateError, EstimatorConfig, WeightScheme};
use crate::evalbench::{self, BenchError, ErrorSummary, Scenario};
use crate::ingest::{self, CsvSchema, IngestError, RawLog};
use crate::model::{FingerprintDatabase, Observation, Timing};
use crate::preprocess::{self, PreprocessError};
use crate::select::{self, SelectError, SelectionConfig, SelectionTable};
use crate::similarity::{self, AlignMode, MetricKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "beaconfp",
    version,
    about = "RSS fingerprint localisation toolkit"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// JSON file whose keys mirror the flags of the chosen subcommand.
    /// Flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a fingerprint database from a survey log.
    BuildDb(BuildDbArgs),
    /// Compute per-grid beacon selection sets and store them in the database.
    Select(SelectArgs),
    /// Localise a test log and write error reports.
    Evaluate(EvaluateArgs),
    /// Training cost of every selection size in a range.
    SweepS(SweepSArgs),
    /// Generate a synthetic log from a path-loss scenario.
    Synth(SynthArgs),
    /// Turn a raw log into observations (JSON lines).
    Consolidate(ConsolidateArgs),
}

#[derive(Debug, Args)]
pub struct BuildDbArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Column mapping; defaults to the layout written by `synth`.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = preprocess::DEFAULT_WINDOW)]
    pub window: usize,
    /// Advertising interval, seconds.
    #[arg(long, default_value_t = 0.1)]
    pub ta: f64,
    /// Survey scanning duration per grid point, seconds.
    #[arg(long, default_value_t = 30.0)]
    pub td: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub s: u64,
    #[arg(long, default_value_t = 0.2)]
    pub eta: f64,
    /// Write the augmented database here instead of in place.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Protocol {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

impl Protocol {
    fn tag(self) -> &'static str {
        match self {
            Protocol::One => "1",
            Protocol::Two => "2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    Intersection,
    Impute,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricArg {
    All,
    One(MetricKind),
}

fn parse_metric(s: &str) -> Result<MetricArg, String> {
    if s == "all" {
        return Ok(MetricArg::All);
    }
    s.parse::<MetricKind>()
        .map(MetricArg::One)
        .map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaArg {
    Auto,
    Value(f64),
}

fn parse_sigma(s: &str) -> Result<SigmaArg, String> {
    if s == "auto" {
        return Ok(SigmaArg::Auto);
    }
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(SigmaArg::Value(v)),
        _ => Err(format!("expected `auto` or a positive number, got {s:?}")),
    }
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let a: usize = a.trim().parse().map_err(|_| format!("bad range {s:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range {s:?}"))?;
    if a == 0 || b < a {
        return Err(format!(
            "range must be `lo-hi` with 1 <= lo <= hi, got {s:?}"
        ));
    }
    Ok((a, b))
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "2")]
    pub protocol: Protocol,
    /// Metric name, or `all` for the comparison table.
    #[arg(long, value_parser = parse_metric, default_value = "kernel")]
    pub metric: MetricArg,
    /// Gaussian width in dBm, or `auto` for a grid search.
    #[arg(long, value_parser = parse_sigma, default_value = "auto")]
    pub sigma: SigmaArg,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Also sweep k over `lo-hi`, with and without selection.
    #[arg(long, value_parser = parse_range)]
    pub k_range: Option<(usize, usize)>,
    #[arg(long, value_parser = ["uniform", "similarity"], default_value = "uniform")]
    pub weights: String,
    #[arg(long, value_enum, default_value = "on")]
    pub selection: Switch,
    #[arg(long, value_enum, default_value = "intersection")]
    pub align: AlignArg,
    /// Value used for missing beacons with `--align impute`, dBm.
    #[arg(long, default_value_t = similarity::DEFAULT_FLOOR_DBM, allow_negative_numbers = true)]
    pub floor: f64,
    /// Survey log used to tune sigma when the database has none stored.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepSArgs {
    #[arg(long)]
    pub db: PathBuf,
    /// Training log; defaults to the fingerprints themselves.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_parser = parse_metric, default_value = "kernel")]
    pub metric: MetricArg,
    #[arg(long, value_parser = parse_sigma, default_value = "4")]
    pub sigma: SigmaArg,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, value_parser = parse_range)]
    pub s_range: (usize, usize),
    #[arg(long, default_value_t = 0.2)]
    pub eta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario JSON; the built-in floor plan when absent.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generate a test walk over the grid with this dwell time (seconds)
    /// instead of a survey.
    #[arg(long)]
    pub dwell: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the matching CSV schema here.
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
    /// Write the scenario actually used here.
    #[arg(long)]
    pub dump_scenario: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConsolidateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "2")]
    pub protocol: Protocol,
    /// Database whose beacon universe protocol 1 waits for; defaults to the
    /// beacons present in the log.
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        let code = match e {
            PreprocessError::NotUnique { .. } => EXIT_INVARIANT,
            _ => EXIT_INPUT,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<SelectError> for CliError {
    fn from(e: SelectError) -> Self {
        match e {
            SelectError::InfeasibleGrids { s, grids } => CliError {
                code: EXIT_INFEASIBLE,
                message: format!(
                    "s = {s} is infeasible at {} grid point(s): {}",
                    grids.len(),
                    grids.join(", ")
                ),
            },
            SelectError::Infeasible { .. } => CliError {
                code: EXIT_INFEASIBLE,
                message: e.to_string(),
            },
            other => CliError::input(other.to_string()),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Select(s) => s.into(),
            other => CliError::input(other.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Estimate(e) => e.into(),
            BenchError::Preprocess(e) => e.into(),
            BenchError::Select(e) => e.into(),
            other => CliError::input(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

/// Expand `--config FILE` into flags placed right after the subcommand name,
/// so explicit flags that follow override them.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = it.next().map(PathBuf::from);
            if path.is_none() {
                return Err(CliError::input("--config needs a file"));
            }
        } else if let Some(p) = a.to_str().and_then(|s| s.strip_prefix("--config=")) {
            path = Some(PathBuf::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
    let obj = value
        .as_object()
        .ok_or_else(|| io_err(&path, "config must be a JSON object"))?;
    let mut injected = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        match v {
            serde_json::Value::Null => {}
            serde_json::Value::Bool(true) => injected.push(OsString::from(flag)),
            serde_json::Value::Bool(false) => {}
            serde_json::Value::String(s) => {
                injected.push(OsString::from(format!("{flag}={s}")));
            }
            serde_json::Value::Number(n) => {
                injected.push(OsString::from(format!("{flag}={n}")));
            }
            _ => return Err(io_err(&path, format!("unsupported value for {key:?}"))),
        }
    }
    // program name, then subcommand
    let pos = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|p| p + 2)
        .ok_or_else(|| CliError::input("no subcommand given"))?;
    let tail = rest.split_off(pos);
    rest.extend(injected);
    rest.extend(tail);
    Ok(rest)
}

/// Parse and run; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", e.message);
            return e.code;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::BuildDb(a) => build_db(a),
        Command::Select(a) => cmd_select(a),
        Command::Evaluate(a) => evaluate(a),
        Command::SweepS(a) => sweep_s(a),
        Command::Synth(a) => synth(a),
        Command::Consolidate(a) => consolidate(a),
    }
}

fn load_schema(path: Option<&Path>) -> Result<CsvSchema, CliError> {
    match path {
        Some(p) => Ok(CsvSchema::from_json_file(p)?),
        None => Ok(CsvSchema {
            session: None,
            ..CsvSchema::default()
        }),
    }
}

fn load_log(path: &Path, schema: Option<&Path>) -> Result<RawLog, CliError> {
    let schema = load_schema(schema)?;
    Ok(ingest::parse_csv(path, &schema)?)
}

fn load_db(path: &Path) -> Result<FingerprintDatabase, CliError> {
    Ok(preprocess::load_database(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

fn build_db(a: BuildDbArgs) -> Result<(), CliError> {
    let timing = Timing { ta: a.ta, td: a.td };
    if !(timing.ta > 0.0 && timing.td > 0.0) {
        return Err(CliError::input("--ta and --td must be positive"));
    }
    let log = load_log(&a.input, a.schema.as_deref())?;
    let db = preprocess::build_database(&log, a.window, timing)?;
    preprocess::save_database(&db, &a.out)?;
    println!("{} fingerprints, {} beacons", db.len(), db.n_beacons);
    Ok(())
}

fn cmd_select(a: SelectArgs) -> Result<(), CliError> {
    let mut db = load_db(&a.db)?;
    let cfg = SelectionConfig {
        s: a.s as usize,
        eta: a.eta,
        timing: db.timing,
    };
    let table = select::select_all(&db, &cfg)?;
    println!(
        "selected {} beacons at {} grid points (gamma = {})",
        cfg.s,
        table.sets.len(),
        select::gamma(&cfg)
    );
    db.selection = Some(table);
    preprocess::save_database(&db, a.out.as_deref().unwrap_or(&a.db))?;
    Ok(())
}

fn consolidate_log(
    log: &RawLog,
    protocol: Protocol,
    db: Option<&FingerprintDatabase>,
) -> Vec<Observation> {
    match protocol {
        Protocol::One => {
            let universe: BTreeSet<_> = match db {
                Some(db) => db.beacons.iter().copied().collect(),
                None => log.beacon_universe(),
            };
            ingest::consolidate_protocol1(log, &universe)
        }
        Protocol::Two => ingest::consolidate_protocol2(log, ingest::PROTOCOL2_WINDOW_S),
    }
}

fn consolidate(a: ConsolidateArgs) -> Result<(), CliError> {
    let log = load_log(&a.input, a.schema.as_deref())?;
    let db = a.db.as_deref().map(load_db).transpose()?;
    let obs = consolidate_log(&log, a.protocol, db.as_ref());
    let mut w = create(&a.out)?;
    ingest::write_jsonl(&obs, &mut w)?;
    w.flush().map_err(|e| io_err(&a.out, e))?;
    println!("{} observations", obs.len());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let scenario: Scenario = match &a.scenario {
        Some(p) => {
            let f = File::open(p).map_err(|e| io_err(p, e))?;
            serde_json::from_reader(BufReader::new(f)).map_err(|e| io_err(p, e))?
        }
        None => Scenario::default(),
    };
    let log = match a.dwell {
        Some(dwell) => evalbench::synth_walk(&scenario, &scenario.grid, dwell, "test", a.seed)?,
        None => evalbench::synth_log(&scenario, a.seed)?,
    };
    let mut w = create(&a.out)?;
    log.write_csv(&mut w)?;
    w.flush().map_err(|e| io_err(&a.out, e))?;
    if let Some(p) = &a.schema_out {
        write_json(p, &log.csv_schema())?;
    }
    if let Some(p) = &a.dump_scenario {
        write_json(p, &scenario)?;
    }
    println!("{} records", log.len());
    Ok(())
}

fn weight_scheme(s: &str) -> WeightScheme {
    s.parse().unwrap_or_default()
}

fn align_mode(a: AlignArg, floor: f64) -> AlignMode {
    match a {
        AlignArg::Intersection => AlignMode::Intersection,
        AlignArg::Impute => AlignMode::Impute { floor_dbm: floor },
    }
}

fn needs_sigma(metric: MetricArg) -> bool {
    matches!(
        metric,
        MetricArg::All | MetricArg::One(MetricKind::Gaussian { .. })
    )
}

fn with_sigma(metric: MetricKind, sigma: f64) -> MetricKind {
    match metric {
        MetricKind::Gaussian { .. } => MetricKind::Gaussian { sigma },
        m => m,
    }
}

#[derive(Debug, Serialize)]
struct SigmaReport {
    source: &'static str,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Serialize)]
struct EvaluateSummary {
    metric: String,
    protocol: &'static str,
    k: usize,
    weights: WeightScheme,
    selection: bool,
    align: AlignMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<SigmaReport>,
    observations: usize,
    failed: usize,
    mean_error_cm: Option<f64>,
    errors: Option<ErrorSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<Vec<evalbench::MetricRow>>,
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let db = load_db(&a.db)?;
    if a.k == 0 || a.k > db.len() {
        return Err(CliError::input(format!("--k must lie in 1..={}", db.len())));
    }
    let selection: Option<&SelectionTable> = match a.selection {
        Switch::On => Some(db.selection.as_ref().ok_or_else(|| {
            CliError::input(
                "database has no selection sets; run `select` first or pass --selection off",
            )
        })?),
        Switch::Off => None,
    };
    let log = load_log(&a.test, a.schema.as_deref())?;
    let obs = consolidate_log(&log, a.protocol, Some(&db));
    let base = EstimatorConfig {
        metric: match a.metric {
            MetricArg::One(m) => m,
            MetricArg::All => MetricKind::Gaussian { sigma: 4.0 },
        },
        k: a.k,
        scheme: weight_scheme(&a.weights),
        align: align_mode(a.align, a.floor),
    };

    let sigma = if needs_sigma(a.metric) {
        Some(match a.sigma {
            SigmaArg::Value(v) => SigmaReport {
                source: "flag",
                value: v,
                table: None,
            },
            SigmaArg::Auto => match (&a.train, db.sigma) {
                (Some(train), _) => {
                    let train_log = load_log(train, a.schema.as_deref())?;
                    let samples =
                        estimator::training_from_log(&train_log, ingest::PROTOCOL2_WINDOW_S);
                    let t = estimator::tune_sigma(
                        &samples,
                        &db,
                        &base,
                        selection,
                        &similarity::SIGMA_GRID,
                    )?;
                    SigmaReport {
                        source: "tuned",
                        value: t.sigma,
                        table: Some(t.table),
                    }
                }
                (None, Some(v)) => SigmaReport {
                    source: "database",
                    value: v,
                    table: None,
                },
                (None, None) => {
                    return Err(CliError::input(
                        "--sigma auto needs --train or a database with a stored sigma",
                    ))
                }
            },
        })
    } else {
        None
    };
    let sigma_value = sigma.as_ref().map(|s| s.value).unwrap_or(4.0);
    let config = EstimatorConfig {
        metric: with_sigma(base.metric, sigma_value),
        ..base
    };

    fs::create_dir_all(&a.report).map_err(|e| io_err(&a.report, e))?;
    let outcome = estimator::evaluate_observations(&db, &obs, &config, selection)?;

    let metrics = if a.metric == MetricArg::All {
        let mut suite = MetricKind::baseline_suite(sigma_value, 3.0);
        suite.retain(|m| !matches!(m, MetricKind::Gaussian { .. }));
        suite.push(MetricKind::Gaussian { sigma: sigma_value });
        let rows = evalbench::run_metric_comparison(
            &db,
            &obs,
            &suite,
            &config,
            selection,
            a.protocol.tag(),
        )?;
        let mut w = create(&a.report.join("metrics.csv"))?;
        evalbench::write_metric_table(&rows, &mut w)?;
        w.flush().map_err(|e| io_err(&a.report, e))?;
        Some(rows)
    } else {
        None
    };

    if let Some((lo, hi)) = a.k_range {
        let hi = hi.min(db.len());
        let ks: Vec<usize> = (lo..=hi).collect();
        let sweep = evalbench::run_k_sweep(&db, &obs, &config, &ks, db.selection.as_ref())?;
        let mut w = create(&a.report.join("k_sweep.csv"))?;
        evalbench::write_k_table(&sweep, &mut w)?;
        w.flush().map_err(|e| io_err(&a.report, e))?;
    }

    let errors = outcome.errors();
    let summary = EvaluateSummary {
        metric: config.metric.to_string(),
        protocol: a.protocol.tag(),
        k: config.k,
        weights: config.scheme,
        selection: selection.is_some(),
        align: config.align,
        sigma,
        observations: obs.len(),
        failed: outcome.failed,
        mean_error_cm: outcome.mean_error(),
        errors: ErrorSummary::from_errors(&errors),
        metrics,
    };
    write_json(&a.report.join("summary.json"), &summary)?;
    let mut w = create(&a.report.join("errors.jsonl"))?;
    evalbench::write_errors_jsonl(&outcome.samples, &mut w)?;
    w.flush().map_err(|e| io_err(&a.report, e))?;
    let mut w = create(&a.report.join("cdf.csv"))?;
    evalbench::write_cdf_csv(&evalbench::error_cdf(&errors), &mut w)?;
    w.flush().map_err(|e| io_err(&a.report, e))?;

    match summary.mean_error_cm {
        Some(m) => println!(
            "{}: mean error {m:.2} cm over {} observations",
            summary.metric,
            errors.len()
        ),
        None => println!("{}: no observation could be localised", summary.metric),
    }
    Ok(())
}

fn sweep_s(a: SweepSArgs) -> Result<(), CliError> {
    let db = load_db(&a.db)?;
    let metric = match a.metric {
        MetricArg::One(m) => m,
        MetricArg::All => return Err(CliError::input("sweep-s takes a single metric")),
    };
    let sigma = match a.sigma {
        SigmaArg::Value(v) => v,
        SigmaArg::Auto => db.sigma.unwrap_or(4.0),
    };
    let train = match &a.train {
        Some(p) => estimator::training_from_log(
            &load_log(p, a.schema.as_deref())?,
            ingest::PROTOCOL2_WINDOW_S,
        ),
        None => estimator::training_from_fingerprints(&db),
    };
    let cfg = EstimatorConfig::new(with_sigma(metric, sigma), a.k);
    let (lo, hi) = a.s_range;
    let rows = estimator::validate_s(&train, &db, &cfg, lo..=hi, a.eta)?;
    let mut wtr = csv::Writer::from_writer(create(&a.out)?);
    let csv_err = |e: csv::Error| io_err(&a.out, e);
    wtr.write_record(["s", "feasible", "cost_cm2", "mean_error_cm", "failed"])
        .map_err(csv_err)?;
    for r in &rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        wtr.write_record([
            r.s.to_string(),
            r.feasible.to_string(),
            opt(r.cost),
            opt(r.mean_error_cm),
            r.failed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| io_err(&a.out, e))?;
    if let Some(best) = rows
        .iter()
        .filter_map(|r| r.cost.map(|c| (r.s, c)))
        .min_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)))
    {
        println!("lowest training cost at s = {}", best.0);
    }
    Ok(())
}
