//! Command-line front end: runs the refinement pipeline and writes
//! distributions, per-level reports and plot-ready marginals.
//!
//! Two entry points are exposed so that tests can drive the pipeline without
//! spawning a process: [`run`] for a full run and [`diff`] for comparing two
//! distribution files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::Partition;
use crate::bounds::{statewise_bounds, BoundsError, IntervalResult};
use crate::model::{parse_model, ModelError, ReactionNetwork};
use crate::oracle::{
    analytic_outside_mass, analytic_pmf, analytic_reference, ssa_occupancy, OccupancyEstimate, OracleError,
};
use crate::refinement::{refine, IterationReport, RefinementConfig, RefinementError, RefinementResult};
use crate::solver::SolverMethod;

pub const SCHEMA_VERSION: u64 = 1;
pub const SUMMARY_SCHEMA: &str = include_str!("../schema/summary.schema.json");

/// Cap on partition size unless `--deep` is given.
pub const DEFAULT_MAX_STATES: usize = 250_000;
pub const DEEP_MAX_STATES: usize = 20_000_000;
const SSA_MAX_JUMPS: u64 = 2_000_000_000;
/// Smallest marginal probability kept when exporting a closed-form reference.
const ANALYTIC_EXPORT_TOLERANCE: f64 = 1e-20;

static SUMMARY_VALIDATOR: LazyLock<jsonschema::Validator> = LazyLock::new(|| {
    let schema: Value = serde_json::from_str(SUMMARY_SCHEMA).expect("shipped schema is valid JSON");
    jsonschema::validator_for(&schema).expect("shipped schema compiles")
});

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("model {path}: {source}")]
    Model { path: PathBuf, source: ModelError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("refinement: {0}")]
    Refinement(#[from] RefinementError),
    #[error("bounds: {0}")]
    Bounds(#[from] BoundsError),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("{path}: malformed distribution file: {message}")]
    Table { path: PathBuf, message: String },
    #[error("dimension mismatch: {a} has {da} species columns, {b} has {db}")]
    DimensionMismatch { a: PathBuf, da: usize, b: PathBuf, db: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("summary does not match the shipped schema: {0}")]
    Schema(String),
}

impl CliError {
    /// 2 for bad input, 1 for numerical or output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. }
            | CliError::Model { .. }
            | CliError::Config(_)
            | CliError::Table { .. }
            | CliError::DimensionMismatch { .. } => 2,
            CliError::Refinement(e) if e.is_input_error() => 2,
            CliError::Oracle(OracleError::Unsupported(_)) => 2,
            CliError::Bounds(BoundsError::NoTargets) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    #[default]
    None,
    Analytic,
    Ssa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Auto,
    Dense,
    Iterative,
}

impl From<SolverArg> for SolverMethod {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Auto => SolverMethod::Auto,
            SolverArg::Dense => SolverMethod::Dense,
            SolverArg::Iterative => SolverMethod::Iterative,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "steadytrunc",
    version,
    about = "Stationary distributions of reaction networks on adaptively refined truncations"
)]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare two distribution files.
    Diff { a: PathBuf, b: PathBuf },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Truncation threshold.
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
    /// Lyapunov threshold for the initial region.
    #[arg(long = "epsilon-l", default_value_t = 1e-4)]
    epsilon_l: f64,
    /// Initial cell width is 2^m.
    #[arg(long = "init-exponent", short = 'm', default_value_t = 7)]
    init_exponent: u32,
    #[arg(long, value_enum, default_value = "auto")]
    solver: SolverArg,
    /// Compute state-wise bounds on the final truncation.
    #[arg(long)]
    bounds: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for the simulation oracle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "none")]
    oracle: OracleKind,
    /// Lyapunov function, overriding the one in the model file.
    #[arg(long)]
    lyapunov: Option<String>,
    /// Cells per population axis of the initial grid (one value or one per species).
    #[arg(long = "grid-cells", value_delimiter = ',')]
    grid_cells: Option<Vec<i64>>,
    /// Upper corner of the initial region, one bound per species.
    #[arg(long = "box", value_delimiter = ',')]
    initial_box: Option<Vec<i64>>,
    /// Stop after this many refinement levels.
    #[arg(long = "max-levels")]
    max_levels: Option<u32>,
    /// Largest partition the run may build.
    #[arg(long = "max-states")]
    max_states: Option<usize>,
    /// Allow runs with very large partitions.
    #[arg(long)]
    deep: bool,
    /// Simulated time for the simulation oracle.
    #[arg(long = "ssa-horizon", default_value_t = 1e5)]
    ssa_horizon: f64,
    /// Fraction of the horizon discarded as burn-in.
    #[arg(long = "ssa-burn-in", default_value_t = 0.1)]
    ssa_burn_in: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub model: PathBuf,
    pub epsilon: f64,
    pub epsilon_l: f64,
    pub init_exponent: u32,
    pub solver: SolverMethod,
    pub bounds: bool,
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub oracle: OracleKind,
    pub lyapunov: Option<String>,
    pub grid_cells: Option<Vec<i64>>,
    pub initial_box: Option<Vec<i64>>,
    pub max_levels: Option<u32>,
    pub max_states: usize,
    pub ssa_horizon: f64,
    pub ssa_burn_in: f64,
}

impl RunConfig {
    pub fn new(model: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        let defaults = RefinementConfig::default();
        RunConfig {
            model: model.into(),
            epsilon: defaults.epsilon,
            epsilon_l: defaults.epsilon_l,
            init_exponent: defaults.init_exponent,
            solver: SolverMethod::Auto,
            bounds: false,
            out: out.into(),
            seed: 0,
            oracle: OracleKind::None,
            lyapunov: None,
            grid_cells: None,
            initial_box: None,
            max_levels: None,
            max_states: DEFAULT_MAX_STATES,
            ssa_horizon: 1e5,
            ssa_burn_in: 0.1,
        }
    }

    fn refinement(&self) -> RefinementConfig {
        RefinementConfig {
            epsilon: self.epsilon,
            init_exponent: self.init_exponent,
            epsilon_l: self.epsilon_l,
            max_states: self.max_states,
            solver: self.solver,
            initial_box: self.initial_box.clone(),
            grid_cells: self.grid_cells.clone(),
            max_levels: self.max_levels,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        self.refinement().validate()?;
        if self.bounds && self.max_levels.is_some() {
            return Err(CliError::Config("--bounds needs a run to unit cells; drop --max-levels".into()));
        }
        if self.oracle == OracleKind::Ssa {
            if !(self.ssa_horizon > 0.0 && self.ssa_horizon.is_finite()) {
                return Err(CliError::Config(format!("SSA horizon must be positive, got {}", self.ssa_horizon)));
            }
            if !(0.0..1.0).contains(&self.ssa_burn_in) {
                return Err(CliError::Config(format!(
                    "SSA burn-in fraction must lie in [0, 1), got {}",
                    self.ssa_burn_in
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelInfo {
    pub species: Vec<String>,
    pub reactions: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovInfo {
    pub function: String,
    pub epsilon_l: f64,
    pub c: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OracleSummary {
    Analytic {
        outside_mass: f64,
        /// Sum over all states, outside mass included.
        total_abs_error: f64,
        max_abs_error: f64,
    },
    Ssa {
        outside_mass: f64,
        horizon: f64,
        burn_in: f64,
        seed: u64,
        jumps: u64,
        visited_states: usize,
    },
}

impl OracleSummary {
    pub fn outside_mass(&self) -> f64 {
        match self {
            OracleSummary::Analytic { outside_mass, .. } | OracleSummary::Ssa { outside_mass, .. } => *outside_mass,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsSummary {
    pub total_width: f64,
    pub max_width: f64,
    pub targets: usize,
    pub failed_targets: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u64,
    pub tool: ToolInfo,
    pub config: RunConfig,
    pub model: ModelInfo,
    pub lyapunov: Option<LyapunovInfo>,
    pub initial_cells: usize,
    /// Decimal string; the count can exceed 64 bits.
    pub initial_micro_states: String,
    pub complete: bool,
    pub final_size: usize,
    pub total_probability: f64,
    pub iterations: Vec<IterationReport>,
    pub oracle: Option<OracleSummary>,
    pub bounds: Option<BoundsSummary>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

/// Everything a run produces, before it is written out.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub network: ReactionNetwork,
    pub result: RefinementResult,
    pub bounds: Option<IntervalResult>,
    /// Oracle probabilities keyed by state, in the distribution CSV layout.
    pub oracle_distribution: Option<Vec<(Vec<i64>, f64)>>,
    pub summary: RunSummary,
}

/// Loads a model file, appending `lyapunov` as a Lyapunov declaration.
pub fn load_model(path: &Path, lyapunov: Option<&str>) -> Result<ReactionNetwork, CliError> {
    let mut text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    if let Some(g) = lyapunov {
        text.push_str(&format!("\nlyapunov g = {g};\n"));
    }
    parse_model(&text).map_err(|source| CliError::Model { path: path.to_path_buf(), source })
}

/// Runs the pipeline without touching the output directory.
pub fn execute(config: &RunConfig) -> Result<RunOutput, CliError> {
    let started = Instant::now();
    config.validate()?;
    let network = load_model(&config.model, config.lyapunov.as_deref())?;
    let result = refine(&network, &config.refinement())?;
    let mut warnings = result.warnings.clone();
    if !result.complete {
        warnings.push(format!(
            "stopped before unit cells; last partition has cells of width {:?}",
            result.partition.widths()
        ));
    }

    let (oracle, oracle_distribution) = match config.oracle {
        OracleKind::None => (None, None),
        OracleKind::Analytic => {
            let (s, d) = analytic_oracle(&network, &result)?;
            (Some(s), Some(d))
        }
        OracleKind::Ssa => {
            let (s, d) = ssa_oracle(&network, &result, config)?;
            (Some(s), Some(d))
        }
    };

    let (bounds, bounds_summary) = if config.bounds {
        let t = Instant::now();
        let truncation =
            result.truncation().ok_or_else(|| CliError::Config("bounds need a run to unit cells".into()))?;
        let (b, _) = statewise_bounds(&network, &truncation, config.solver)?;
        if b.is_partial() {
            warnings.push(format!("{} bound solves failed; the envelope omits them", b.failed_targets.len()));
        }
        let s = BoundsSummary {
            total_width: b.total_width,
            max_width: b.max_width,
            targets: b.targets.len(),
            failed_targets: b.failed_targets.len(),
            wall_time_s: t.elapsed().as_secs_f64(),
        };
        (Some(b), Some(s))
    } else {
        (None, None)
    };

    let names = network.species_names();
    let lyapunov = result.lyapunov.as_ref().map(|l| LyapunovInfo {
        function: l.g.display_with(&names).to_string(),
        epsilon_l: l.epsilon_l,
        c: l.c,
        threshold: l.threshold(),
    });
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        tool: ToolInfo { name: env!("CARGO_PKG_NAME").into(), version: env!("CARGO_PKG_VERSION").into() },
        config: config.clone(),
        model: ModelInfo { species: names, reactions: network.reactions().len() },
        lyapunov,
        initial_cells: result.initial_cells,
        initial_micro_states: result.initial_micro_states.to_string(),
        complete: result.complete,
        final_size: result.final_size(),
        total_probability: result.distribution.total(),
        iterations: result.reports.clone(),
        oracle,
        bounds: bounds_summary,
        warnings,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { network, result, bounds, oracle_distribution, summary })
}

fn analytic_oracle(
    network: &ReactionNetwork,
    result: &RefinementResult,
) -> Result<(OracleSummary, Vec<(Vec<i64>, f64)>), CliError> {
    let truncation =
        result.truncation().ok_or_else(|| CliError::Config("the analytic oracle needs a run to unit cells".into()))?;
    let pmf = analytic_pmf(network, &truncation)?;
    let outside_mass = analytic_outside_mass(network, &truncation)?;
    let (inside, max_abs_error) = pmf
        .iter()
        .zip(&result.distribution.values)
        .map(|(a, p)| (a - p).abs())
        .fold((0.0, 0.0f64), |(s, m), d| (s + d, m.max(d)));
    let summary = OracleSummary::Analytic { outside_mass, total_abs_error: inside + outside_mass, max_abs_error };
    Ok((summary, analytic_reference(network, ANALYTIC_EXPORT_TOLERANCE)?))
}

fn ssa_oracle(
    network: &ReactionNetwork,
    result: &RefinementResult,
    config: &RunConfig,
) -> Result<(OracleSummary, Vec<(Vec<i64>, f64)>), CliError> {
    let values = &result.distribution.values;
    let mode = (0..values.len()).max_by(|&a, &b| values[a].total_cmp(&values[b]).then(b.cmp(&a))).unwrap_or(0);
    let x0 = result.partition.cell(mode).lower().to_vec();
    let burn_in = config.ssa_burn_in * config.ssa_horizon;
    let occ = ssa_occupancy(network, &x0, config.ssa_horizon, burn_in, config.seed, SSA_MAX_JUMPS)?;
    let outside_mass = occupancy_outside(&occ, &result.partition);
    let summary = OracleSummary::Ssa {
        outside_mass,
        horizon: occ.horizon,
        burn_in: occ.burn_in,
        seed: occ.seed,
        jumps: occ.jumps,
        visited_states: occ.occupancy.len(),
    };
    let mut rows: Vec<(Vec<i64>, f64)> = occ.occupancy.into_iter().collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    Ok((summary, rows))
}

/// Occupancy outside the cells of `partition`.
pub fn occupancy_outside(occ: &OccupancyEstimate, partition: &Partition) -> f64 {
    let inside: f64 = occ.occupancy.iter().filter(|(x, _)| partition.locate(x).is_some()).map(|(_, p)| p).sum();
    (1.0 - inside).max(0.0)
}

/// Runs the pipeline and writes all artifacts to `config.out`. Nothing is
/// written if the run fails.
pub fn run(config: &RunConfig) -> Result<RunSummary, CliError> {
    let output = execute(config)?;
    let summary_json = summary_value(&output.summary)?;
    write_artifacts(&config.out, &output, &summary_json)?;
    Ok(output.summary)
}

/// Serializes `summary` and checks it against the shipped schema.
pub fn summary_value(summary: &RunSummary) -> Result<Value, CliError> {
    check_finite(summary)?;
    let value = serde_json::to_value(summary).map_err(|e| CliError::NonFinite(e.to_string()))?;
    validate_summary(&value)?;
    Ok(value)
}

pub fn validate_summary(value: &Value) -> Result<(), CliError> {
    let errors: Vec<String> =
        SUMMARY_VALIDATOR.iter_errors(value).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Schema(errors.join("; ")))
    }
}

fn check_finite(s: &RunSummary) -> Result<(), CliError> {
    let mut fields = vec![("total_probability", s.total_probability), ("wall_time_s", s.wall_time_s)];
    for r in &s.iterations {
        fields.extend([
            ("iterations.residual", r.residual),
            ("iterations.kept_mass", r.kept_mass),
            ("iterations.micro_states", r.micro_states),
        ]);
    }
    if let Some(l) = &s.lyapunov {
        fields.extend([("lyapunov.c", l.c), ("lyapunov.threshold", l.threshold)]);
    }
    match &s.oracle {
        Some(OracleSummary::Analytic { outside_mass, total_abs_error, max_abs_error }) => fields.extend([
            ("oracle.outside_mass", *outside_mass),
            ("oracle.total_abs_error", *total_abs_error),
            ("oracle.max_abs_error", *max_abs_error),
        ]),
        Some(OracleSummary::Ssa { outside_mass, .. }) => fields.push(("oracle.outside_mass", *outside_mass)),
        None => {}
    }
    if let Some(b) = &s.bounds {
        fields.extend([("bounds.total_width", b.total_width), ("bounds.max_width", b.max_width)]);
    }
    match fields.iter().find(|(_, v)| !v.is_finite()) {
        Some((name, _)) => Err(CliError::NonFinite((*name).to_string())),
        None => Ok(()),
    }
}

fn write_artifacts(dir: &Path, output: &RunOutput, summary: &Value) -> Result<(), CliError> {
    let werr = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Write { path, source }
    };
    fs::create_dir_all(dir).map_err(werr(dir))?;
    let names = output.network.species_names();
    let result = &output.result;
    let values = &result.distribution.values;

    if let Some(truncation) = result.truncation() {
        let rows: Vec<(Vec<i64>, f64)> = truncation.states().iter().cloned().zip(values.iter().copied()).collect();
        write_distribution(&dir.join("distribution.csv"), &names, &rows)?;
        for (i, name) in names.iter().enumerate() {
            let mut marginal: BTreeMap<i64, f64> = BTreeMap::new();
            for (x, p) in &rows {
                *marginal.entry(x[i]).or_default() += p;
            }
            let path = dir.join(format!("marginal_{name}.csv"));
            let mut text = String::from("value,probability\n");
            for (v, p) in marginal {
                text.push_str(&format!("{v},{}\n", format_probability(p)));
            }
            fs::write(&path, text).map_err(werr(&path))?;
        }
    } else {
        let path = dir.join("macro_distribution.csv");
        let mut header: Vec<String> = names.iter().flat_map(|n| [format!("{n}_lo"), format!("{n}_hi")]).collect();
        header.push("probability".into());
        let mut text = header.join(",") + "\n";
        for (cell, p) in result.partition.cells().iter().zip(values) {
            for (l, u) in cell.lower().iter().zip(cell.upper()) {
                text.push_str(&format!("{l},{u},"));
            }
            text.push_str(&format_probability(*p));
            text.push('\n');
        }
        fs::write(&path, text).map_err(werr(&path))?;
        for (i, name) in names.iter().enumerate() {
            let mut marginal: BTreeMap<(i64, i64), f64> = BTreeMap::new();
            for (cell, p) in result.partition.cells().iter().zip(values) {
                *marginal.entry((cell.lower()[i], cell.upper()[i])).or_default() += p;
            }
            let path = dir.join(format!("marginal_{name}.csv"));
            let mut text = String::from("lo,hi,probability\n");
            for ((l, u), p) in marginal {
                text.push_str(&format!("{l},{u},{}\n", format_probability(p)));
            }
            fs::write(&path, text).map_err(werr(&path))?;
        }
    }

    let path = dir.join("iterations.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Write { path: path.clone(), source: e.into() })?;
    for r in &result.reports {
        w.serialize(r).map_err(|e| CliError::Write { path: path.clone(), source: e.into() })?;
    }
    w.flush().map_err(werr(&path))?;

    if let (Some(b), Some(truncation)) = (&output.bounds, result.truncation()) {
        let path = dir.join("bounds.csv");
        let mut text = names.join(",") + ",lower,upper,probability\n";
        for (i, x) in truncation.states().iter().enumerate() {
            let counts: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            text.push_str(&format!(
                "{},{},{},{}\n",
                counts.join(","),
                format_probability(b.lower[i]),
                format_probability(b.upper[i]),
                format_probability(values[i])
            ));
        }
        fs::write(&path, text).map_err(werr(&path))?;
    }

    if let Some(rows) = &output.oracle_distribution {
        write_distribution(&dir.join("oracle_distribution.csv"), &names, rows)?;
    }

    let path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(summary).map_err(|e| CliError::NonFinite(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(werr(&path))?;
    Ok(())
}

/// Probability with 17 significant digits, enough to round-trip an `f64`.
pub fn format_probability(p: f64) -> String {
    format!("{p:.16e}")
}

/// A distribution file: species names and one `(counts, probability)` row
/// per state.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable {
    pub species: Vec<String>,
    pub rows: Vec<(Vec<i64>, f64)>,
}

pub fn write_distribution(path: &Path, species: &[String], rows: &[(Vec<i64>, f64)]) -> Result<(), CliError> {
    let mut text = species.join(",") + ",probability\n";
    for (x, p) in rows {
        for v in x {
            text.push_str(&v.to_string());
            text.push(',');
        }
        text.push_str(&format_probability(*p));
        text.push('\n');
    }
    fs::write(path, text).map_err(|source| CliError::Write { path: path.to_path_buf(), source })
}

pub fn read_distribution(path: &Path) -> Result<DistributionTable, CliError> {
    let bad = |message: String| CliError::Table { path: path.to_path_buf(), message };
    let file = fs::File::open(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().next_back() != Some("probability") {
        return Err(bad("last column must be `probability`".into()));
    }
    let species: Vec<String> = header.iter().take(header.len() - 1).map(String::from).collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let counts = (0..species.len())
            .map(|i| record[i].parse::<i64>().map_err(|e| bad(format!("row {}: {e}", line + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        let p: f64 = record[species.len()].parse().map_err(|e| bad(format!("row {}: {e}", line + 1)))?;
        if !p.is_finite() {
            return Err(bad(format!("row {}: non-finite probability", line + 1)));
        }
        rows.push((counts, p));
    }
    Ok(DistributionTable { species, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub total_abs_diff: f64,
    pub max_abs_diff: f64,
    /// Mass of both distributions on states only one of them contains.
    pub mass_outside_intersection: f64,
    pub union_size: usize,
    pub intersection_size: usize,
}

/// Compares two tables over the union of their supports, missing states
/// counting as zero.
pub fn diff_tables(a: &DistributionTable, b: &DistributionTable) -> DiffReport {
    let mut joined: BTreeMap<&[i64], (Option<f64>, Option<f64>)> = BTreeMap::new();
    for (x, p) in &a.rows {
        let e = joined.entry(x.as_slice()).or_default();
        e.0 = Some(e.0.unwrap_or(0.0) + p);
    }
    for (x, p) in &b.rows {
        let e = joined.entry(x.as_slice()).or_default();
        e.1 = Some(e.1.unwrap_or(0.0) + p);
    }
    let mut report = DiffReport {
        total_abs_diff: 0.0,
        max_abs_diff: 0.0,
        mass_outside_intersection: 0.0,
        union_size: joined.len(),
        intersection_size: 0,
    };
    for (pa, pb) in joined.values() {
        let d = (pa.unwrap_or(0.0) - pb.unwrap_or(0.0)).abs();
        report.total_abs_diff += d;
        report.max_abs_diff = report.max_abs_diff.max(d);
        match (pa, pb) {
            (Some(_), Some(_)) => report.intersection_size += 1,
            _ => report.mass_outside_intersection += pa.unwrap_or(0.0) + pb.unwrap_or(0.0),
        }
    }
    report
}

pub fn diff(a: &Path, b: &Path) -> Result<DiffReport, CliError> {
    let ta = read_distribution(a)?;
    let tb = read_distribution(b)?;
    if ta.species.len() != tb.species.len() {
        return Err(CliError::DimensionMismatch {
            a: a.to_path_buf(),
            da: ta.species.len(),
            b: b.to_path_buf(),
            db: tb.species.len(),
        });
    }
    if ta.species != tb.species {
        log::warn!("species names differ: {:?} vs {:?}; comparing by column position", ta.species, tb.species);
    }
    Ok(diff_tables(&ta, &tb))
}

fn configure_threads() {
    let Ok(raw) = std::env::var("STEADYTRUNC_THREADS") else {
        return;
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the worker pool: {e}");
            }
        }
        _ => log::warn!("ignoring STEADYTRUNC_THREADS={raw:?}: expected a positive integer"),
    }
}

fn run_config_from(args: RunArgs) -> Result<RunConfig, CliError> {
    let model = args.model.ok_or_else(|| CliError::Config("--model is required".into()))?;
    let max_states = args.max_states.unwrap_or(if args.deep { DEEP_MAX_STATES } else { DEFAULT_MAX_STATES });
    Ok(RunConfig {
        model,
        epsilon: args.epsilon,
        epsilon_l: args.epsilon_l,
        init_exponent: args.init_exponent,
        solver: args.solver.into(),
        bounds: args.bounds,
        out: args.out,
        seed: args.seed,
        oracle: args.oracle,
        lyapunov: args.lyapunov,
        grid_cells: args.grid_cells,
        initial_box: args.initial_box,
        max_levels: args.max_levels,
        max_states,
        ssa_horizon: args.ssa_horizon,
        ssa_burn_in: args.ssa_burn_in,
    })
}

/// Parses `args`, runs the requested command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    configure_threads();

    let outcome = match cli.command {
        Some(Command::Diff { a, b }) => diff(&a, &b).map(|report| {
            println!("{}", serde_json::to_string_pretty(&report).expect("diff report serializes"));
        }),
        None => run_config_from(cli.run).and_then(|config| {
            run(&config).map(|summary| {
                println!(
                    "{} states after {} levels ({}), total probability {:.6}; wrote {}",
                    summary.final_size,
                    summary.iterations.len(),
                    if summary.complete { "complete" } else { "stopped early" },
                    summary.total_probability,
                    config.out.display()
                );
                if let Some(o) = &summary.oracle {
                    println!("oracle outside mass {:.4e}", o.outside_mass());
                }
                if let Some(b) = &summary.bounds {
                    println!("bounds: total width {:.4e}, max width {:.4e}", b.total_width, b.max_width);
                }
            })
        }),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&[i64], f64)]) -> DistributionTable {
        DistributionTable { species: vec!["A".into()], rows: rows.iter().map(|(x, p)| (x.to_vec(), *p)).collect() }
    }

    #[test]
    fn identical_tables_have_zero_diff() {
        let t = table(&[(&[0], 0.25), (&[1], 0.75)]);
        let r = diff_tables(&t, &t);
        assert_eq!((r.total_abs_diff, r.max_abs_diff, r.mass_outside_intersection), (0.0, 0.0, 0.0));
    }

    #[test]
    fn disjoint_supports_differ_by_two() {
        let r = diff_tables(&table(&[(&[0], 0.5), (&[1], 0.5)]), &table(&[(&[2], 1.0)]));
        assert_eq!(r.total_abs_diff, 2.0);
        assert_eq!(r.max_abs_diff, 1.0);
        assert_eq!(r.mass_outside_intersection, 2.0);
        assert_eq!(r.intersection_size, 0);
    }

    #[test]
    fn probabilities_keep_seventeen_digits() {
        assert_eq!(format_probability(0.1), "1.0000000000000001e-1");
        for p in [1.0 / 3.0, 5e-324, 0.999_999_999_999_999_9, 0.0] {
            assert_eq!(format_probability(p).parse::<f64>().unwrap().to_bits(), p.to_bits());
        }
    }

    #[test]
    fn input_errors_map_to_exit_code_two() {
        let e = CliError::Read { path: "x".into(), source: std::io::Error::from(std::io::ErrorKind::NotFound) };
        assert_eq!(e.exit_code(), 2);
        assert_eq!(CliError::NonFinite("x".into()).exit_code(), 1);
    }
}
