//! Command-line front end: `simulate`, `sweep` and `validate`.
//!
//! Exit codes: 0 success, 1 usage error or unreadable input file, 2 invalid
//! configuration or cost model (nothing is written), 3 runtime failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{self, ConfigError, Severity, SimConfig, Violation};
use crate::engine::{self, io as data_io, DataCell, EngineError, SearchResult};
use crate::merge::MergeError;
use crate::perf::{self, ArchitectureSpec, CostModel, Operation, PerfError, PerfReport};
use crate::variation::VariationError;

#[derive(Debug, Parser)]
#[command(name = "camsim", version, about = "CAM search accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the stored data, run every query and report results.
    Simulate(SimulateArgs),
    /// Run a Cartesian sweep over configuration values and write a CSV.
    Sweep(SweepArgs),
    /// Check a configuration file and list violations.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    config: PathBuf,
    /// Stored entries, one per CSV line.
    #[arg(long)]
    stored: PathBuf,
    /// Queries, one per CSV line.
    #[arg(long)]
    query: PathBuf,
    /// Integer labels: one per stored entry followed by one per query, or
    /// only the stored labels when --query-labels is given.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    query_labels: Option<PathBuf>,
    #[arg(long)]
    cost_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Overrides the device seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON object mapping dotted config paths to value lists.
    #[arg(long)]
    sweep: PathBuf,
    /// Variation draws averaged per design point (seeds seed, seed+1, ...).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    repeats: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Invalid(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Invalid(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<PerfError> for CliError {
    fn from(e: PerfError) -> Self {
        match e {
            PerfError::FileNotFound { .. } | PerfError::Io { .. } => CliError::Usage(e.to_string()),
            PerfError::FormatError(_) | PerfError::NegativeCost(_) | PerfError::Mapping(_) => {
                CliError::Invalid(e.to_string())
            }
            PerfError::MissingCostKey(_) | PerfError::NoQueries => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match &e {
            EngineError::InvalidConfig(_)
            | EngineError::Merge(MergeError::BadScheme { .. })
            | EngineError::Variation(
                VariationError::FormatError { .. } | VariationError::EmptyTable { .. },
            ) => CliError::Invalid(e.to_string()),
            EngineError::Variation(
                VariationError::FileNotFound { .. } | VariationError::Io { .. },
            ) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

/// Runs the command line given by `args` (including the program name) and
/// returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Validate(a) => validate(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

fn read_text(path: &Path, what: &str) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {what} {}: {e}", path.display())))
}

fn print_violations(violations: &[Violation]) {
    for v in violations {
        let tag = match v.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        eprintln!("{tag}[{}]: {}", v.code, v.message);
    }
}

fn config_error(path: &Path, e: ConfigError) -> CliError {
    CliError::Invalid(format!("{}: {e}", path.display()))
}

/// Parses and validates a configuration, printing every violation.
fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = read_text(path, "config")?;
    let (cfg, mut violations) =
        config::parse_config_with_warnings(&text).map_err(|e| config_error(path, e))?;
    violations.extend(config::validate(&cfg));
    print_violations(&violations);
    if config::has_errors(&violations) {
        return Err(CliError::Invalid(format!(
            "{} failed validation",
            path.display()
        )));
    }
    Ok(cfg)
}

struct Inputs {
    stored: Array2<DataCell>,
    queries: Array2<f64>,
    labels: Option<(Vec<i64>, Vec<i64>)>,
    cost_model: Option<CostModel>,
}

fn data_error(path: &Path, e: data_io::DataError) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

fn load_inputs(a: &DataArgs) -> Result<Inputs, CliError> {
    let stored = data_io::read_data_file(&a.stored).map_err(|e| data_error(&a.stored, e))?;
    let queries = data_io::read_query_file(&a.query).map_err(|e| data_error(&a.query, e))?;
    let labels = match &a.labels {
        None => None,
        Some(path) => {
            let mut all = data_io::read_labels(path).map_err(|e| data_error(path, e))?;
            let k = stored.nrows();
            let q = queries.nrows();
            let query_labels = match &a.query_labels {
                Some(qp) => data_io::read_labels(qp).map_err(|e| data_error(qp, e))?,
                None if all.len() == k + q => all.split_off(k),
                None => {
                    return Err(CliError::Usage(format!(
                        "{}: expected {} labels ({k} stored + {q} queries), found {}",
                        path.display(),
                        k + q,
                        all.len()
                    )))
                }
            };
            if all.len() != k || query_labels.len() != q {
                return Err(CliError::Usage(format!(
                    "label counts {} / {} do not match {k} stored entries and {q} queries",
                    all.len(),
                    query_labels.len()
                )));
            }
            Some((all, query_labels))
        }
    };
    let cost_model = a
        .cost_model
        .as_deref()
        .map(perf::load_cost_model)
        .transpose()?;
    Ok(Inputs {
        stored,
        queries,
        labels,
        cost_model,
    })
}

struct Outcome {
    results: Vec<SearchResult>,
    accuracy: Option<f64>,
}

fn run_point(cfg: &SimConfig, inputs: &Inputs) -> Result<Outcome, EngineError> {
    let state = engine::write(&inputs.stored, cfg)?;
    let results = engine::query(&state, &inputs.queries)?;
    let accuracy = match &inputs.labels {
        Some((stored, query)) => Some(engine::evaluate_accuracy(&results, stored, query)?),
        None => None,
    };
    Ok(Outcome { results, accuracy })
}

#[derive(Serialize)]
struct Performance {
    search: PerfReport,
    write: PerfReport,
}

#[derive(Serialize)]
struct Report<'a> {
    config: Value,
    results: &'a [SearchResult],
    #[serde(skip_serializing_if = "Option::is_none")]
    accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    performance: Option<Performance>,
    architecture: &'a ArchitectureSpec,
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&a.data.config)?;
    if let Some(seed) = a.seed {
        cfg.device.seed = seed;
    }
    let inputs = load_inputs(&a.data)?;
    let outcome = run_point(&cfg, &inputs)?;
    let arch = perf::estimate_architecture(&cfg, inputs.stored.nrows(), inputs.stored.ncols())?;
    let performance = match &inputs.cost_model {
        Some(cm) => Some(Performance {
            search: perf::predict(&arch, cm, Operation::Search, inputs.queries.nrows().max(1))?,
            write: perf::predict(&arch, cm, Operation::Write, 1)?,
        }),
        None => None,
    };
    let report = Report {
        config: config::config_to_value(&cfg),
        results: &outcome.results,
        accuracy: outcome.accuracy,
        performance,
        architecture: &arch,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_output(&a.out, &text)
}

fn validate(a: &ValidateArgs) -> Result<(), CliError> {
    load_config(&a.config)?;
    println!("{}: ok", a.config.display());
    Ok(())
}

/// Sets `path` (dot separated) in a JSON object, creating intermediate
/// objects as needed.
pub fn set_dotted(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("bad parameter path `{path}`"));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = root;
    for p in parents {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| format!("`{path}`: `{p}` is not inside an object"))?;
        cur = obj
            .entry(p.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    cur.as_object_mut()
        .ok_or_else(|| format!("`{path}`: parent is not an object"))?
        .insert(last.to_string(), value);
    Ok(())
}

/// Parameter paths and value lists from a sweep document, in file order.
pub fn parse_sweep_spec(text: &str) -> Result<Vec<(String, Vec<Value>)>, String> {
    let doc: Value = serde_json::from_str(text).map_err(|e| format!("sweep spec: {e}"))?;
    let obj = doc
        .as_object()
        .ok_or("sweep spec must be a JSON object of value lists")?;
    obj.iter()
        .map(|(k, v)| match v.as_array() {
            Some(vals) if !vals.is_empty() => Ok((k.clone(), vals.clone())),
            Some(_) => Err(format!("sweep parameter `{k}` has no values")),
            None => Err(format!("sweep parameter `{k}` must be a list")),
        })
        .collect()
}

/// Cartesian product of value indices, last parameter varying fastest.
pub fn sweep_points(lens: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = lens.iter().product();
    (0..total)
        .map(|mut n| {
            let mut idx = vec![0; lens.len()];
            for (slot, len) in idx.iter_mut().zip(lens).rev() {
                *slot = n % len;
                n /= len;
            }
            idx
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    Unsupported,
    Invalid,
}

impl Status {
    fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Unsupported => "unsupported",
            Status::Invalid => "invalid",
        }
    }
}

struct Row {
    status: Status,
    accuracy: Option<f64>,
    perf: Option<(f64, f64, f64)>,
    approximate: bool,
}

impl Row {
    fn failed(status: Status) -> Self {
        Row {
            status,
            accuracy: None,
            perf: None,
            approximate: false,
        }
    }
}

fn sweep_row(
    base: &Value,
    assignments: &[(&str, &Value)],
    inputs: &Inputs,
    repeats: u64,
) -> Result<(Row, Vec<String>), CliError> {
    let mut doc = base.clone();
    for (path, v) in assignments {
        set_dotted(&mut doc, path, (*v).clone()).map_err(CliError::Invalid)?;
    }
    let label = assignments
        .iter()
        .map(|(p, v)| format!("{p}={v}"))
        .collect::<Vec<_>>()
        .join(", ");
    let (mut cfg, mut violations) = match config::config_from_value(&doc) {
        Ok(x) => x,
        Err(e) => return Ok((Row::failed(Status::Invalid), vec![format!("{label}: {e}")])),
    };
    violations.extend(config::validate(&cfg));
    let notes: Vec<String> = violations.iter().map(|v| format!("{label}: {v}")).collect();
    if config::has_errors(&violations) {
        return Ok((Row::failed(Status::Invalid), notes));
    }

    let runs = if cfg.device.variation_enabled {
        repeats
    } else {
        1
    };
    let base_seed = cfg.device.seed;
    let mut acc_sum = 0.0;
    let mut approximate = false;
    let mut have_acc = false;
    for r in 0..runs {
        cfg.device.seed = base_seed.wrapping_add(r);
        match run_point(&cfg, inputs) {
            Ok(o) => {
                approximate |= o.results.iter().any(|x| x.approximate);
                if let Some(a) = o.accuracy {
                    acc_sum += a;
                    have_acc = true;
                }
            }
            Err(EngineError::Merge(MergeError::UnsupportedMerge(m))) => {
                return Ok((
                    Row::failed(Status::Unsupported),
                    vec![format!("{label}: unsupported merge: {m}")],
                ))
            }
            Err(e) => match CliError::from(e) {
                CliError::Runtime(m) => return Err(CliError::Runtime(format!("{label}: {m}"))),
                other => {
                    return Ok((
                        Row::failed(Status::Invalid),
                        vec![format!("{label}: {}", other.message())],
                    ))
                }
            },
        }
    }
    let perf = match &inputs.cost_model {
        Some(cm) => {
            let arch =
                perf::estimate_architecture(&cfg, inputs.stored.nrows(), inputs.stored.ncols())?;
            let r = perf::predict(&arch, cm, Operation::Search, inputs.queries.nrows().max(1))?;
            Some((r.latency, r.energy, r.edp))
        }
        None => None,
    };
    Ok((
        Row {
            status: Status::Ok,
            accuracy: have_acc.then(|| acc_sum / runs as f64),
            perf,
            approximate,
        },
        notes,
    ))
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let text = read_text(&a.data.config, "config")?;
    let base: Value = serde_json::from_str(&text).map_err(|e| {
        config_error(
            &a.data.config,
            ConfigError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
        )
    })?;
    let spec_text = read_text(&a.sweep, "sweep spec")?;
    let params = parse_sweep_spec(&spec_text).map_err(CliError::Invalid)?;
    let inputs = load_inputs(&a.data)?;

    let lens: Vec<usize> = params.iter().map(|(_, v)| v.len()).collect();
    let points = sweep_points(&lens);
    let rows: Vec<(Row, Vec<String>)> = points
        .par_iter()
        .map(|idx| {
            let assignments: Vec<(&str, &Value)> = params
                .iter()
                .zip(idx)
                .map(|((p, vals), i)| (p.as_str(), &vals[*i]))
                .collect();
            sweep_row(&base, &assignments, &inputs, a.repeats)
        })
        .collect::<Result<_, _>>()?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = params.iter().map(|(p, _)| p.clone()).collect();
    header.extend(
        [
            "status",
            "accuracy",
            "latency_ns",
            "energy_pj",
            "edp",
            "approximate",
        ]
        .map(String::from),
    );
    let csv_err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    let mut notes = String::new();
    for (idx, (row, row_notes)) in points.iter().zip(&rows) {
        let mut rec: Vec<String> = params
            .iter()
            .zip(idx)
            .map(|((_, vals), i)| cell(&vals[*i]))
            .collect();
        rec.push(row.status.as_str().to_string());
        rec.push(opt(row.accuracy));
        rec.push(opt(row.perf.map(|p| p.0)));
        rec.push(opt(row.perf.map(|p| p.1)));
        rec.push(opt(row.perf.map(|p| p.2)));
        rec.push(row.approximate.to_string());
        w.write_record(&rec).map_err(csv_err)?;
        for n in row_notes {
            let _ = writeln!(notes, "{n}");
        }
    }
    eprint!("{notes}");
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_output(
        &a.out,
        &String::from_utf8(bytes).expect("csv output is utf-8"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn product_order_last_fastest() {
        assert_eq!(
            sweep_points(&[2, 3]),
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 1],
                vec![1, 2]
            ]
        );
        assert_eq!(sweep_points(&[]), vec![Vec::<usize>::new()]);
        assert_eq!(sweep_points(&[3, 2, 4]).len(), 24);
    }

    #[test]
    fn dotted_paths() {
        let mut v = json!({"circuit": {"rows": 32}});
        set_dotted(&mut v, "circuit.columns", json!(64)).unwrap();
        set_dotted(&mut v, "device.variation_std", json!(0.1)).unwrap();
        assert_eq!(
            v,
            json!({"circuit": {"rows": 32, "columns": 64}, "device": {"variation_std": 0.1}})
        );
        assert!(set_dotted(&mut v, "circuit..rows", json!(1)).is_err());
        assert!(set_dotted(&mut v, "circuit.rows.x", json!(1)).is_err());
    }

    #[test]
    fn sweep_spec_shape() {
        let p = parse_sweep_spec(
            r#"{"circuit.columns": [32, 64], "application.match_type": ["best"]}"#,
        )
        .unwrap();
        assert_eq!(p[0].0, "circuit.columns");
        assert_eq!(p[1].1, vec![json!("best")]);
        assert!(parse_sweep_spec(r#"{"a": []}"#).is_err());
        assert!(parse_sweep_spec(r#"{"a": 3}"#).is_err());
        assert!(parse_sweep_spec("[1]").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_from(["camsim"]), 1);
        assert_eq!(run_from(["camsim", "simulate", "--config", "x.json"]), 1);
        assert_eq!(run_from(["camsim", "bogus"]), 1);
        assert_eq!(run_from(["camsim", "--help"]), 0);
    }
}
