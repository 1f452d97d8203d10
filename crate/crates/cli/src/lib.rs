//! Command-line front end: analyses, simulations, chain dumps, schedules and
//! figure reproduction. Every command writes its CSV files and a
//! `manifest.json` into the output directory.
//!
//! Exit codes: 0 ok, 1 I/O failure, 2 usage or invalid input values,
//! 3 capacity exceeded, 4 input that cannot be parsed.

pub mod output;
pub mod svg;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cera_core::chain::build_transition_model_with_cap;
use cera_core::planner::{default_candidates, envelope, first_crossing, threshold_schedule, CandidateSet};
use cera_core::simulator::{run_batch, ScenarioConfig, ScenarioDocument, UserLoad};
use cera_core::{CodebookSpec, Mode};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::output::{curve_csv, simulation_row, write_atomic, RunManifest, SIMULATION_HEADER};
use crate::svg::{line_plot, Series};

pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;
pub const EXIT_PARSE: i32 = 4;

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_INSPECT_STATES: u64 = 10_000;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    pub fn capacity(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CAPACITY, message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        CliError { code: EXIT_PARSE, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<cera_core::Error> for CliError {
    fn from(e: cera_core::Error) -> Self {
        use cera_core::Error::*;
        match e {
            SizeExceedsCap { .. } | StateSpaceTooLarge { .. } | EnumerationTooLarge { .. } => {
                CliError::capacity(e.to_string())
            }
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError { code: EXIT_IO, message: format!("{e:#}") }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "cera", version, about = "Code-expanded random access analysis")]
pub struct Cli {
    /// Output directory for CSV, SVG and manifest files.
    #[arg(long, global = true, default_value = "cera-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic efficiency curve for one codebook.
    Analyze(AnalyzeArgs),
    /// Monte Carlo contention trials.
    Simulate(SimulateArgs),
    /// Dump the Markov chain states and transition counts.
    InspectChain(InspectArgs),
    /// Load-adaptive codebook schedule.
    Thresholds(ThresholdArgs),
    /// Regenerate the data behind one of the standard comparison figures.
    Reproduce(ReproduceArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Inline spec (`L=2,m=2,2,mode=expanded`) or path to a JSON spec.
    #[arg(long)]
    pub spec: String,
    /// Load grid `A:B[:step]`; defaults to `1:10·size`.
    #[arg(long)]
    pub n_range: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON scenario `{spec, N, trials, master_seed}`.
    #[arg(long, conflicts_with = "spec")]
    pub scenario: Option<PathBuf>,
    #[arg(long, requires = "n_range")]
    pub spec: Option<String>,
    #[arg(long)]
    pub n_range: Option<String>,
    /// Overrides the scenario's trial count.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Overrides the scenario's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub spec: String,
    /// Refuse to dump chains with more states than this.
    #[arg(long, default_value_t = DEFAULT_INSPECT_STATES)]
    pub max_states: u64,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Frame length for the default candidate set.
    #[arg(long, short = 'L', requires = "preambles")]
    pub frame_len: Option<usize>,
    /// Preamble count for the default candidate set.
    #[arg(long, short = 'M', requires = "frame_len")]
    pub preambles: Option<u32>,
    /// Explicit candidate spec; repeatable.
    #[arg(long = "candidate")]
    pub candidates: Vec<String>,
    #[arg(long)]
    pub n_range: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// One of `comparison`, `adaptive-l2m4`, `adaptive-l4m4`, `application-l4`.
    #[arg(long)]
    pub figure: String,
    #[arg(long)]
    pub n_range: Option<String>,
    /// Monte Carlo trials per load (comparison figure only).
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: u64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Files produced by one command.
#[derive(Debug)]
pub struct RunReport {
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Parses `args` (without the program name) and runs the command.
pub fn run<I, S>(args: I) -> CliResult<RunReport>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(std::iter::once("cera".to_string()).chain(args.iter().cloned())).map_err(
        |e| match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                CliError { code: 0, message: e.to_string() }
            }
            _ => CliError::usage(e.to_string()),
        },
    )?;
    execute(cli, strip_out(&args))
}

/// Removes `--out DIR` / `--out=DIR` so a manifest can be replayed elsewhere.
fn strip_out(args: &[String]) -> Vec<String> {
    let mut kept = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            kept.push(a.clone());
        }
    }
    kept
}

fn execute(cli: Cli, args: Vec<String>) -> CliResult<RunReport> {
    let started = Instant::now();
    let out = cli.out.clone();
    let (name, parameters, seed, outputs) = match cli.command {
        Command::Analyze(a) => {
            let (params, file) = analyze(&a, &out)?;
            ("analyze", params, None, vec![file])
        }
        Command::Simulate(a) => {
            let (params, seed, files) = simulate(&a, &out)?;
            ("simulate", params, Some(seed), files)
        }
        Command::InspectChain(a) => {
            let (params, files) = inspect(&a, &out)?;
            ("inspect-chain", params, None, files)
        }
        Command::Thresholds(a) => {
            let (params, files) = thresholds(&a, &out)?;
            ("thresholds", params, None, files)
        }
        Command::Reproduce(a) => {
            let (params, seed, files) = reproduce(&a, &out)?;
            ("reproduce", params, seed, files)
        }
        Command::Replay(a) => return replay(&a, &out),
    };
    let manifest = RunManifest {
        command: name.to_string(),
        args,
        parameters,
        master_seed: seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: outputs
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        duration_ms: started.elapsed().as_secs_f64() * 1000.0,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let manifest_path = write_atomic(&out, "manifest.json", &(text + "\n"))?;
    Ok(RunReport { outputs, manifest: manifest_path })
}

/// Inline spec, or a JSON spec file when `value` names an existing file.
pub fn resolve_spec(value: &str) -> CliResult<CodebookSpec> {
    let path = Path::new(value);
    if path.is_file() {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::parse(format!("reading {value}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| {
            if e.is_data() {
                CliError::usage(format!("invalid spec in {value}: {e}"))
            } else {
                CliError::parse(format!("malformed JSON in {value}: {e}"))
            }
        })
    } else {
        value.parse().map_err(|e: cera_core::Error| CliError::usage(e.to_string()))
    }
}

/// `A:B[:step]` inclusive grid.
pub fn parse_range(value: &str) -> CliResult<Vec<u64>> {
    let parts: Vec<&str> = value.split(':').collect();
    let num =
        |s: &str| s.trim().parse::<u64>().map_err(|_| CliError::usage(format!("invalid n-range `{value}`")));
    let (start, end, step) = match parts.as_slice() {
        [a, b] => (num(a)?, num(b)?, 1),
        [a, b, s] => (num(a)?, num(b)?, num(s)?),
        _ => return Err(CliError::usage(format!("n-range must be A:B[:step], got `{value}`"))),
    };
    if start == 0 || end < start || step == 0 {
        return Err(CliError::usage(format!("n-range `{value}` must satisfy 1 <= A <= B, step >= 1")));
    }
    Ok((start..=end).step_by(step as usize).collect())
}

fn grid_or_default(range: Option<&str>, codewords: u64) -> CliResult<Vec<u64>> {
    match range {
        Some(r) => parse_range(r),
        None => Ok((1..=codewords.saturating_mul(10).max(1)).collect()),
    }
}

fn grid_json(grid: &[u64]) -> serde_json::Value {
    let step = if grid.len() > 1 { grid[1] - grid[0] } else { 1 };
    json!({ "start": grid[0], "end": grid[grid.len() - 1], "step": step })
}

/// Analytic curve for a spec: closed form for reference, Markov chain for expanded.
pub fn analytic_curve(spec: &CodebookSpec, grid: &[u64]) -> CliResult<Vec<(u64, f64)>> {
    Ok(cera_core::planner::efficiency_curve(spec, grid)?)
}

fn analyze(a: &AnalyzeArgs, out: &Path) -> CliResult<(serde_json::Value, PathBuf)> {
    let spec = resolve_spec(&a.spec)?;
    let grid = grid_or_default(a.n_range.as_deref(), spec.size())?;
    let curve = analytic_curve(&spec, &grid)?;
    let path = write_atomic(out, "analyze.csv", &curve_csv(&curve))?;
    Ok((json!({ "spec": spec.to_inline(), "grid": grid_json(&grid) }), path))
}

fn load_scenario(path: &Path) -> CliResult<ScenarioDocument> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::parse(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        if e.is_data() {
            CliError::usage(format!("invalid scenario {}: {e}", path.display()))
        } else {
            CliError::parse(format!("malformed JSON in {}: {e}", path.display()))
        }
    })
}

/// Simulation CSV for a list of scenarios, in order.
pub fn simulation_csv(scenarios: &[ScenarioConfig]) -> CliResult<String> {
    let mut csv = String::from(SIMULATION_HEADER);
    csv.push('\n');
    for s in scenarios {
        let stats = run_batch(s)?;
        csv.push_str(&simulation_row(s.users, &stats));
        csv.push('\n');
    }
    Ok(csv)
}

fn simulate(a: &SimulateArgs, out: &Path) -> CliResult<(serde_json::Value, u64, Vec<PathBuf>)> {
    let mut doc = match (&a.scenario, &a.spec) {
        (Some(path), _) => load_scenario(path)?,
        (None, Some(spec)) => ScenarioDocument {
            spec: resolve_spec(spec)?,
            users: UserLoad::Many(parse_range(a.n_range.as_deref().unwrap_or_default())?),
            trials: DEFAULT_TRIALS,
            master_seed: DEFAULT_SEED,
        },
        (None, None) => return Err(CliError::usage("simulate needs --scenario or --spec")),
    };
    if let Some(t) = a.trials {
        doc.trials = t;
    }
    if let Some(s) = a.seed {
        doc.master_seed = s;
    }
    let scenarios = doc.scenarios()?;
    let csv = simulation_csv(&scenarios)?;
    let path = write_atomic(out, "simulate.csv", &csv)?;
    let params = json!({
        "spec": doc.spec.to_inline(),
        "N": scenarios.iter().map(|s| s.users).collect::<Vec<_>>(),
        "trials": doc.trials,
    });
    Ok((params, doc.master_seed, vec![path]))
}

fn inspect(a: &InspectArgs, out: &Path) -> CliResult<(serde_json::Value, Vec<PathBuf>)> {
    let spec = resolve_spec(&a.spec)?;
    if spec.mode() != Mode::Expanded {
        return Err(CliError::usage("inspect-chain requires an expanded spec"));
    }
    if spec.size() > a.max_states {
        return Err(CliError::capacity(format!(
            "chain has {} states, more than --max-states {}",
            spec.size(),
            a.max_states
        )));
    }
    let model = build_transition_model_with_cap(&spec, a.max_states + 1)?;
    let path = write_atomic(out, "chain.csv", &model.dump_csv())?;
    Ok((json!({ "spec": spec.to_inline(), "max_states": a.max_states }), vec![path]))
}

fn candidate_set(a: &ThresholdArgs) -> CliResult<Vec<CodebookSpec>> {
    let mut candidates = Vec::new();
    if let (Some(l), Some(m)) = (a.frame_len, a.preambles) {
        candidates.extend(default_candidates(l, m)?);
    }
    for c in &a.candidates {
        candidates.push(resolve_spec(c)?);
    }
    if candidates.is_empty() {
        return Err(CliError::usage("thresholds needs -L/-M or at least one --candidate"));
    }
    Ok(candidates)
}

fn thresholds(a: &ThresholdArgs, out: &Path) -> CliResult<(serde_json::Value, Vec<PathBuf>)> {
    let candidates = candidate_set(a)?;
    let largest = candidates.iter().map(CodebookSpec::size).max().unwrap_or(1);
    let grid = grid_or_default(a.n_range.as_deref(), largest)?;
    let set = CandidateSet::new(candidates, grid.clone())?;
    let schedule = threshold_schedule(&set)?;
    let path = write_atomic(out, "schedule.csv", &schedule.to_csv())?;
    let params = json!({
        "candidates": set.candidates().iter().map(CodebookSpec::to_inline).collect::<Vec<_>>(),
        "grid": grid_json(&grid),
    });
    Ok((params, vec![path]))
}

type Curve = (String, Vec<(u64, f64)>, bool);

pub const FIGURES: [&str; 4] = ["comparison", "adaptive-l2m4", "adaptive-l4m4", "application-l4"];

fn reproduce(a: &ReproduceArgs, out: &Path) -> CliResult<(serde_json::Value, Option<u64>, Vec<PathBuf>)> {
    let fig = a.figure.as_str();
    let mut files = Vec::new();
    // (label, points, dashed)
    let mut curves: Vec<Curve> = Vec::new();
    let mut seed = None;
    let title;
    let grid;

    match fig {
        "comparison" => {
            title = "Reference vs code-expanded random access, L=2, M=2";
            let reference = CodebookSpec::reference(2, 2)?;
            let expanded = CodebookSpec::uniform_expanded(2, 2)?;
            grid = grid_or_default(a.n_range.as_deref(), expanded.size())?;
            curves.push(("reference".into(), analytic_curve(&reference, &grid)?, false));
            curves.push(("expanded".into(), analytic_curve(&expanded, &grid)?, false));
            let scenarios: Vec<ScenarioConfig> = grid
                .iter()
                .map(|&n| ScenarioConfig {
                    spec: expanded.clone(),
                    users: n,
                    trials: a.trials,
                    master_seed: a.seed,
                })
                .collect();
            for s in &scenarios {
                s.validate()?;
            }
            let csv = simulation_csv(&scenarios)?;
            let mc: Vec<(u64, f64)> = csv
                .lines()
                .skip(1)
                .map(|line| {
                    let mut cells = line.split(',');
                    let n = cells.next().unwrap().parse().unwrap();
                    let e = cells.nth(3).unwrap().parse().unwrap();
                    (n, e)
                })
                .collect();
            files.push(write_atomic(out, "comparison-expanded-mc.csv", &csv)?);
            curves.push(("expanded (Monte Carlo)".into(), mc, true));
            seed = Some(a.seed);
        }
        "adaptive-l2m4" | "adaptive-l4m4" => {
            let (l, m) = if fig == "adaptive-l2m4" { (2, 4) } else { (4, 4) };
            title =
                if l == 2 { "Adaptive random access, L=2, M=4" } else { "Adaptive random access, L=4, M=4" };
            let candidates = default_candidates(l, m)?;
            let largest = candidates.iter().map(CodebookSpec::size).max().unwrap_or(1);
            grid = grid_or_default(a.n_range.as_deref(), largest)?;
            let set = CandidateSet::new(candidates, grid.clone())?;
            for (spec, curve) in set.candidates().iter().zip(set.curves()?) {
                let label = match spec.mode() {
                    Mode::Reference => "reference".to_string(),
                    Mode::Expanded => format!("a{}", spec.size()),
                };
                curves.push((label, curve, false));
            }
            curves.push(("adaptive".into(), envelope(&set)?, true));
            let schedule = threshold_schedule(&set)?;
            files.push(write_atomic(out, &format!("{fig}-schedule.csv"), &schedule.to_csv())?);
        }
        "application-l4" => {
            title = "Application example, L=4, M_r=32, M_e in {3,4}";
            let reference = CodebookSpec::reference(32, 4)?;
            let e3 = CodebookSpec::uniform_expanded(3, 4)?;
            let e4 = CodebookSpec::uniform_expanded(4, 4)?;
            grid = grid_or_default(a.n_range.as_deref(), e4.size())?;
            curves.push(("reference".into(), analytic_curve(&reference, &grid)?, false));
            curves.push(("expanded-m3".into(), analytic_curve(&e3, &grid)?, false));
            curves.push(("expanded-m4".into(), analytic_curve(&e4, &grid)?, false));
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown figure `{other}`; expected one of {}",
                FIGURES.join(", ")
            )))
        }
    }

    for (label, curve, _) in &curves {
        if label.contains("Monte Carlo") {
            continue;
        }
        files.push(write_atomic(out, &format!("{fig}-{label}.csv"), &curve_csv(curve))?);
    }
    if fig == "comparison" {
        if let Some(first) = curves.iter().position(|c| c.0 == "reference") {
            let crossing = first_crossing(&curves[first].1, &curves[1].1);
            println!("comparison: expanded overtakes reference at N = {crossing:?}");
        }
    }
    let series: Vec<Series<'_>> = curves
        .iter()
        .map(|(label, points, dashed)| Series { label: label.clone(), points, dashed: *dashed })
        .collect();
    let svg = line_plot(title, "number of users N", "efficiency", &series);
    files.push(write_atomic(out, &format!("{fig}.svg"), &svg)?);

    let mut params = json!({ "figure": fig, "grid": grid_json(&grid) });
    if fig == "comparison" {
        params["trials"] = json!(a.trials);
    }
    Ok((params, seed, files))
}

fn replay(a: &ReplayArgs, out: &Path) -> CliResult<RunReport> {
    let manifest = RunManifest::load(&a.manifest).map_err(|e| CliError::parse(format!("{e:#}")))?;
    let mut args = manifest.args.clone();
    args.push("--out".into());
    args.push(out.to_string_lossy().into_owned());
    run(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1:5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_range("2:10:4").unwrap(), vec![2, 6, 10]);
        assert_eq!(parse_range("1:1").unwrap(), vec![1]);
        for bad in ["0:3", "5:1", "1:3:0", "a:b", "1"] {
            assert_eq!(parse_range(bad).unwrap_err().code, EXIT_USAGE, "{bad}");
        }
    }

    #[test]
    fn out_is_stripped() {
        let args: Vec<String> =
            ["analyze", "--out", "x", "--spec", "L=1,m=1", "--out=y"].iter().map(|s| s.to_string()).collect();
        assert_eq!(strip_out(&args), vec!["analyze", "--spec", "L=1,m=1"]);
    }

    #[test]
    fn error_codes() {
        let cap: CliError = cera_core::Error::StateSpaceTooLarge { states: 2, cap: 1 }.into();
        assert_eq!(cap.code, EXIT_CAPACITY);
        let usage: CliError = cera_core::Error::NotUniform.into();
        assert_eq!(usage.code, EXIT_USAGE);
    }
}
