//! The `pdcq` command line.
//!
//! Exit codes: 0 success, 1 divergence or missing data, 2 usage or
//! configuration error, 3 I/O or format error. Failures also print one JSON
//! object on stderr: `{"error": kind, "exit_code": n, "message": text}`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{const_velocity_forecast, last_seen_forecast, ObservedWindow};
use crate::error::Error;
use crate::ingest::{
    forecast_targets, load_manifest, plan_eval_frames, read_depth, read_panoptic, write_sequence, EvalSpec,
    Manifest, PredictionLayout, SequenceRecord,
};
use crate::pdcq::{finalize, frame_stats_all, StatAccumulator};
use crate::report::{to_csv, to_json, to_markdown, Coverage, EvaluationOutput};
use crate::synth::oracle::{differential_check, FaultInjection, MAX_ORACLE_SIZE};
use crate::synth::{default_scene, render_sequence, SceneSpec};
use crate::types::{validate, Aggregation, FilterMode, InlierBoundary, PdcqConfig};

pub const THREADS_ENV: &str = "PDCQ_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pdcq", version, about = "Panoptic-depth forecasting evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against a ground-truth manifest.
    Evaluate(EvaluateArgs),
    /// Render a synthetic scene into a ground-truth directory with a manifest.
    Synth(SynthArgs),
    /// Write forecasts of a non-learned baseline for every target of a manifest.
    Baseline(BaselineArgs),
    /// Compare the pipeline against the brute-force reference on random cases.
    OracleCheck(OracleCheckArgs),
    /// Check every ground-truth (and optionally prediction) pair for invariant violations.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Csv,
    Markdown,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    /// Method name shown in report rows.
    #[arg(long, default_value = "method")]
    pub method: String,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
    #[arg(long, env = THREADS_ENV, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
}

#[derive(Debug, Default, Args)]
pub struct ConfigOverrides {
    /// Comma-separated depth thresholds.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Comma-separated forecast horizons; defaults to the manifest's.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<u32>>,
    #[arg(long)]
    pub min_depth: Option<f64>,
    #[arg(long)]
    pub max_depth: Option<f64>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    #[arg(long, value_enum)]
    pub filter_mode: Option<FilterModeArg>,
    #[arg(long, value_enum)]
    pub inlier_boundary: Option<BoundaryArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AggregationArg {
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FilterModeArg {
    PerPixel,
    SegmentMean,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BoundaryArg {
    Inclusive,
    Exclusive,
}

impl ConfigOverrides {
    pub fn apply(&self, manifest_deltas: &[u32]) -> PdcqConfig {
        let mut config = PdcqConfig {
            deltas: manifest_deltas.to_vec(),
            ..PdcqConfig::default()
        };
        if let Some(l) = &self.lambdas {
            config.lambdas = l.clone();
        }
        if let Some(d) = &self.deltas {
            config.deltas = d.clone();
        }
        if let Some(v) = self.min_depth {
            config.min_depth = v;
        }
        if let Some(v) = self.max_depth {
            config.max_depth = v;
        }
        if let Some(a) = self.aggregation {
            config.overall_aggregation = match a {
                AggregationArg::Mean => Aggregation::Mean,
                AggregationArg::Sum => Aggregation::Sum,
            };
        }
        if let Some(f) = self.filter_mode {
            config.filter_mode = match f {
                FilterModeArg::PerPixel => FilterMode::PerPixel,
                FilterModeArg::SegmentMean => FilterMode::SegmentMean,
            };
        }
        if let Some(b) = self.inlier_boundary {
            config.inlier_boundary = match b {
                BoundaryArg::Inclusive => InlierBoundary::Inclusive,
                BoundaryArg::Exclusive => InlierBoundary::Exclusive,
            };
        }
        config
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene spec JSON; one sequence per file. The bundled default scene when omitted.
    #[arg(long)]
    pub spec: Vec<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub observed_window: u32,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5])]
    pub deltas: Vec<u32>,
    #[arg(long, default_value = "synthetic")]
    pub dataset_name: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineName {
    LastSeen,
    ConstVelocity,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(value_enum)]
    pub name: BaselineName,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Defaults to the manifest's horizons.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<u32>>,
    #[arg(long, env = THREADS_ENV, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
}

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.25, 0.5])]
    pub lambdas: Vec<f64>,
    /// Adds this offset to the pipeline's scores in the first trial.
    #[arg(long, hide = true)]
    pub inject_fault: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Also check every prediction pair this directory provides.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<u32>>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    exit_code: i32,
    message: &'a str,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
        }
    }

    fn data(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            kind,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorLine {
            error: self.kind,
            exit_code: self.code,
            message: &self.message,
        })
        .expect("error line serializes")
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Io { .. } => (EXIT_IO, "io"),
            Error::PngDecode { .. }
            | Error::PngEncode { .. }
            | Error::WrongBitDepth { .. }
            | Error::WrongChannelCount { .. }
            | Error::Unencodable { .. }
            | Error::DepthOutOfRange { .. }
            | Error::DimensionMismatch { .. }
            | Error::ClassTableMismatch
            | Error::Json { .. }
            | Error::Manifest(_) => (EXIT_IO, "format"),
            Error::InvalidLambda(_)
            | Error::InvalidConfig(_)
            | Error::InvalidClassTable(_)
            | Error::InvalidSpec(_)
            | Error::MapTooLarge { .. }
            | Error::WindowTooShort { .. } => (EXIT_USAGE, "config"),
            Error::EmptyAccumulator => (EXIT_DATA, "no_data"),
        };
        Self {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult<T = i32> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            if code != EXIT_OK {
                eprintln!("{}", CliError::usage(e.kind().to_string()).to_json());
            }
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.code
        }
    }
}

pub fn execute(command: Command) -> CliResult {
    match command {
        Command::Evaluate(args) => cmd_evaluate(&args),
        Command::Synth(args) => cmd_synth(&args),
        Command::Baseline(args) => cmd_baseline(&args),
        Command::OracleCheck(args) => cmd_oracle_check(&args),
        Command::Validate(args) => cmd_validate(&args),
    }
}

fn thread_pool(threads: Option<u32>) -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n as usize);
    }
    builder
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker pool: {e}")))
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Scores every available prediction and returns the output document. Work
/// runs on a pool of `threads` workers; results are identical for any count.
pub fn evaluate(
    manifest: &Manifest,
    predictions: &Path,
    config: &PdcqConfig,
    method: &str,
    threads: Option<u32>,
) -> CliResult<EvaluationOutput> {
    config.validate()?;
    let plan = plan_eval_frames(manifest, &PredictionLayout::new(predictions), config);
    let classes = &manifest.class_table;
    let pool = thread_pool(threads)?;
    let acc = pool.install(|| {
        plan.tasks
            .par_iter()
            .map(|task| frame_stats_all(&task.load(classes)?, classes, config))
            .try_reduce(
                || StatAccumulator::new(classes),
                |mut a, b| {
                    a.merge_from(&b)?;
                    Ok(a)
                },
            )
    })?;
    let report = if acc.is_empty() {
        None
    } else {
        Some(finalize(&acc, classes, config)?)
    };
    Ok(EvaluationOutput {
        method: method.to_string(),
        coverage: Coverage {
            expected: plan.expected(),
            evaluated: plan.tasks.len(),
            missing: plan.missing,
        },
        report,
    })
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult {
    let manifest = load_manifest(&args.manifest)?;
    let config = args.overrides.apply(&manifest.eval.deltas);
    let output = evaluate(&manifest, &args.predictions, &config, &args.method, args.threads)?;

    let text = match (args.format, &output.report) {
        (OutputFormat::Json, _) => to_json(&output),
        (OutputFormat::Csv, Some(report)) => to_csv(report)?,
        (OutputFormat::Markdown, Some(report)) => to_markdown(&[(output.method.as_str(), report)]),
        // Nothing was scored; the coverage document is the only useful output.
        (_, None) => to_json(&output),
    };
    write_output(args.output.as_deref(), &text)?;

    let coverage = &output.coverage;
    if coverage.is_complete() && coverage.expected > 0 {
        return Ok(EXIT_OK);
    }
    for m in &coverage.missing {
        eprintln!("missing prediction: sequence {} t={} delta={}", m.sequence_id, m.t, m.delta);
    }
    Err(CliError::data(
        "missing_predictions",
        format!(
            "{} of {} expected forecasts have no prediction",
            coverage.missing.len(),
            coverage.expected
        ),
    ))
}

fn load_spec(path: &Path) -> CliResult<SceneSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|source| {
            Error::Json {
                path: path.into(),
                source,
            }
            .into()
        })
}

/// Renders each spec as one sequence under `{output}/gt/` and writes
/// `{output}/manifest.json`. Returns the manifest path.
pub fn synthesize(
    specs: &[(String, SceneSpec)],
    output: &Path,
    eval: EvalSpec,
    dataset_name: &str,
) -> crate::Result<PathBuf> {
    let Some((_, first)) = specs.first() else {
        return Err(Error::InvalidSpec("no scene given".into()));
    };
    let class_table = first.class_table.clone();
    let mut sequences = Vec::new();
    for (id, spec) in specs {
        if spec.class_table != class_table {
            return Err(Error::InvalidSpec(format!("scene {id} uses a different class table")));
        }
        let frames = render_sequence(spec)?;
        let rel = Path::new("gt").join(id);
        let records = write_sequence(output, &rel, &frames, 0, &class_table)?;
        sequences.push(SequenceRecord {
            id: id.clone(),
            frames: records,
        });
    }
    let manifest = Manifest {
        dataset_name: dataset_name.to_string(),
        class_table,
        eval,
        sequences,
        root: output.to_path_buf(),
    };
    let path = output.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    let specs: Vec<(String, SceneSpec)> = if args.spec.is_empty() {
        vec![("scene".into(), default_scene())]
    } else {
        let mut specs = Vec::new();
        for (i, path) in args.spec.iter().enumerate() {
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
            let id = if args.spec.len() == 1 {
                stem.unwrap_or_else(|| "scene".into())
            } else {
                format!("{:03}_{}", i, stem.unwrap_or_default())
            };
            specs.push((id, load_spec(path)?));
        }
        specs
    };
    let eval = EvalSpec {
        observed_window: args.observed_window,
        deltas: args.deltas.clone(),
    };
    let path = synthesize(&specs, &args.output, eval, &args.dataset_name)?;
    println!("{}", path.display());
    Ok(EXIT_OK)
}

/// Writes forecasts for every target the manifest supports. Returns the
/// number of forecasts and how many fell back to last-seen.
pub fn write_baseline(
    name: BaselineName,
    manifest: &Manifest,
    output: &Path,
    deltas: &[u32],
) -> crate::Result<(usize, usize)> {
    let classes = &manifest.class_table;
    let layout = PredictionLayout::new(output);
    let window_len = manifest.eval.observed_window as usize;
    let targets = forecast_targets(manifest, deltas);
    let fallbacks = targets
        .par_iter()
        .map(|&(seq, pos, delta, _)| {
            let frames = seq.frames[pos - window_len..=pos]
                .iter()
                .map(|f| {
                    Ok((
                        read_panoptic(manifest.resolve(&f.panoptic), classes)?,
                        read_depth(manifest.resolve(&f.depth))?,
                    ))
                })
                .collect::<crate::Result<Vec<_>>>()?;
            let window = ObservedWindow::new(frames)?;
            let t = seq.frames[pos].index;
            let (forecast, fell_back) = match name {
                BaselineName::LastSeen => (last_seen_forecast(&window, delta), false),
                BaselineName::ConstVelocity if window.len() < 2 => (last_seen_forecast(&window, delta), true),
                BaselineName::ConstVelocity => (const_velocity_forecast(&window, delta, classes)?, false),
            };
            layout.write(&seq.id, t, delta, &forecast.0, &forecast.1, classes)?;
            Ok(usize::from(fell_back))
        })
        .collect::<crate::Result<Vec<usize>>>()?;
    Ok((targets.len(), fallbacks.iter().sum()))
}

fn cmd_baseline(args: &BaselineArgs) -> CliResult {
    let manifest = load_manifest(&args.manifest)?;
    let deltas = args.deltas.clone().unwrap_or_else(|| manifest.eval.deltas.clone());
    let pool = thread_pool(args.threads)?;
    let (written, fallbacks) = pool.install(|| write_baseline(args.name, &manifest, &args.output, &deltas))?;
    if fallbacks > 0 {
        eprintln!(
            "const-velocity: {fallbacks} of {written} forecasts had a single observed frame; used last-seen for those"
        );
    }
    eprintln!("wrote {written} forecasts to {}", args.output.display());
    Ok(EXIT_OK)
}

fn cmd_oracle_check(args: &OracleCheckArgs) -> CliResult {
    if args.size > MAX_ORACLE_SIZE {
        return Err(CliError::usage(format!(
            "size {} exceeds the oracle limit of {MAX_ORACLE_SIZE}",
            args.size
        )));
    }
    let fault = args.inject_fault.map(|offset| FaultInjection { trial: 0, offset });
    let summary = differential_check(args.size, args.trials, args.seed, &args.lambdas, fault)?;
    println!(
        "{}",
        serde_json::to_string(&summary).expect("summary serializes")
    );
    match summary.divergence {
        None => Ok(EXIT_OK),
        Some(d) => Err(CliError::data("divergence", d.to_string())),
    }
}

#[derive(Serialize)]
struct ValidationEntry {
    path: PathBuf,
    violations: usize,
    first: Option<crate::types::Violation>,
}

fn check_pair(pan: &Path, depth: &Path, manifest: &Manifest) -> crate::Result<ValidationEntry> {
    let report = validate(&read_panoptic(pan, &manifest.class_table)?, &read_depth(depth)?, &manifest.class_table);
    Ok(ValidationEntry {
        path: pan.to_path_buf(),
        violations: report.len(),
        first: report.violations.into_iter().next(),
    })
}

fn cmd_validate(args: &ValidateArgs) -> CliResult {
    let manifest = load_manifest(&args.manifest)?;
    let mut pairs: Vec<(PathBuf, PathBuf)> = manifest
        .sequences
        .iter()
        .flat_map(|s| &s.frames)
        .map(|f| (manifest.resolve(&f.panoptic), manifest.resolve(&f.depth)))
        .collect();
    let mut missing = 0;
    if let Some(preds) = &args.predictions {
        let config = PdcqConfig {
            deltas: args.deltas.clone().unwrap_or_else(|| manifest.eval.deltas.clone()),
            ..PdcqConfig::default()
        };
        let plan = plan_eval_frames(&manifest, &PredictionLayout::new(preds), &config);
        missing = plan.missing.len();
        pairs.extend(plan.tasks.into_iter().map(|t| (t.pred_pan, t.pred_depth)));
    }
    let entries = pairs
        .par_iter()
        .map(|(pan, depth)| check_pair(pan, depth, &manifest))
        .collect::<crate::Result<Vec<_>>>()?;
    let bad: Vec<&ValidationEntry> = entries.iter().filter(|e| e.violations > 0).collect();
    println!(
        "{}",
        serde_json::json!({
            "checked": entries.len(),
            "invalid": bad.len(),
            "missing_predictions": missing,
            "files": bad,
        })
    );
    if !bad.is_empty() {
        return Err(CliError::data("invalid_data", format!("{} file pair(s) violate invariants", bad.len())));
    }
    if missing > 0 {
        return Err(CliError::data("missing_predictions", format!("{missing} forecasts have no prediction")));
    }
    Ok(EXIT_OK)
}
