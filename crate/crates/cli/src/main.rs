use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use halide_core::bench::{
    predict_dataset, read_predictions, records_to_jsonl, run_bench, write_bench, write_report, BenchError,
};
use halide_core::dataset::{load_dataset, write_dataset, DataError, DatasetManifest};
use halide_core::evaluation::{evaluate_grid, EvalError};
use halide_core::pipeline::{
    halide_fit, segment_dataset, train_on_segmentation, DataAxis, PipelineError, RunConfig, SegmentationArtifact,
    TrainedModel, WeightAxis,
};
use halide_core::ranking::{rank_dataset, GroupSpec, RankError, RankingRecord};
use halide_core::segmentation::{Assignment, SubTrajectory};
use halide_core::synthetic::{generate, GeneratorSpec, SyntheticError};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "halide", version, about = "Hierarchical apprenticeship learning from mixed-quality demonstrations")]
struct Cli {
    /// Master seed; overrides the seed in any config or spec file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log level for the JSON log stream on stderr.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-trajectory NLG, standardized score, weight and QLG label.
    Rank(RankArgs),
    /// Fit the segmentation model and write per-trajectory assignments.
    Segment(SegmentArgs),
    /// Fit policy clusters and the regulator on an existing segmentation.
    Train(TrainArgs),
    /// Run the full training loop for one configuration.
    Fit(FitArgs),
    /// Per-step action distributions from a trained model.
    Predict(PredictArgs),
    /// Metrics, rank tests and CD tables for a prediction directory.
    Eval(EvalArgs),
    /// Generate a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Temporal cross-validation of the full method grid.
    Bench(BenchArgs),
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// `terciles` or `fixed:c1,c2`.
    #[arg(long, default_value = "terciles")]
    groups: GroupSpec,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Assignments as JSONL; the cluster models go to `<stem>.models.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seg: PathBuf,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Ranking records; computed from the data when the config needs them
    /// and none are given.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    preds: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// CD table for F1.
    #[arg(long)]
    cd: PathBuf,
    /// CD table for Jaccard.
    #[arg(long)]
    cd_jaccard: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    outdir: PathBuf,
}

enum Failure {
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<RankError> for Failure {
    fn from(e: RankError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<SyntheticError> for Failure {
    fn from(e: SyntheticError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type CmdResult = Result<Manifest, Failure>;

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Timing {
    started_unix_s: f64,
    duration_s: f64,
}

/// Provenance record written beside each output. Everything outside
/// `timing` is a function of the inputs.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    tool_version: String,
    config_hash: Option<String>,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
    timing: Timing,
}

/// What a command reports back for its manifest.
struct Manifest {
    config_hash: Option<String>,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    /// Where the manifest goes.
    path: PathBuf,
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

fn digest(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(format!("{:x}", Sha256::digest(bytes)))
}

/// `dir/name.ext` -> `dir/name.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut cfg: RunConfig = match path {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| Failure::Data(format!("config {}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_weights(path: &Path) -> Result<Vec<RankingRecord>, Failure> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Failure::Data(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn weights_jsonl(records: &[RankingRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

fn needs_ranking(cfg: &RunConfig) -> bool {
    cfg.weight_axis == WeightAxis::Ranked || cfg.data_axis == DataAxis::ExpertOnly
}

fn path_list(paths: &[&Path]) -> Vec<PathBuf> {
    paths.iter().map(|p| p.to_path_buf()).collect()
}

fn cmd_rank(a: &RankArgs) -> CmdResult {
    let d = load_dataset(&a.data)?;
    let records = rank_dataset(&d, a.alpha, a.groups)?;
    write_text(&a.out, &weights_jsonl(&records))?;
    let params = serde_json::json!({"alpha": a.alpha, "groups": a.groups.to_string()}).to_string();
    Ok(Manifest {
        config_hash: Some(format!("{:x}", Sha256::digest(params))),
        seed: None,
        inputs: path_list(&[&a.data]),
        outputs: path_list(&[&a.out]),
        path: sibling(&a.out, "manifest.json"),
    })
}

/// One line of `seg.jsonl`.
#[derive(Serialize, Deserialize)]
struct SegmentLine {
    id: String,
    labels: Vec<usize>,
    /// `[start, end)` step ranges with their cluster.
    segments: Vec<SegmentBounds>,
}

#[derive(Serialize, Deserialize)]
struct SegmentBounds {
    start: usize,
    end: usize,
    cluster: usize,
}

/// Contents of `<stem>.models.json`.
#[derive(Serialize, Deserialize)]
struct SegmentModels {
    config_hash: String,
    state_mean: Vec<f64>,
    segmentation: SegmentationArtifact,
    objective_trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

fn cmd_segment(a: &SegmentArgs, seed: Option<u64>) -> CmdResult {
    let cfg = load_config(a.config.as_deref(), seed)?;
    let d = load_dataset(&a.data)?;
    let (fit, mean) = segment_dataset(&d, &cfg)?;
    let mut lines = String::new();
    for (traj, asg) in d.trajectories.iter().zip(&fit.assignments) {
        let segments = halide_core::segmentation::cut_subtrajectories(traj, &asg.labels)
            .iter()
            .map(|s: &SubTrajectory| SegmentBounds {
                start: s.start,
                end: s.end,
                cluster: s.high_state,
            })
            .collect();
        let line = SegmentLine {
            id: asg.trajectory_id.clone(),
            labels: asg.labels.clone(),
            segments,
        };
        lines.push_str(&serde_json::to_string(&line).expect("segments serialize"));
        lines.push('\n');
    }
    let models = SegmentModels {
        config_hash: cfg.hash(),
        state_mean: mean,
        segmentation: SegmentationArtifact {
            penalty: fit.penalty(cfg.seg.reward_coupling),
            models: fit.models.clone(),
            omega: cfg.seg.omega,
        },
        objective_trace: fit.objective_trace.clone(),
        iterations: fit.iterations,
        converged: fit.converged,
    };
    let models_path = sibling(&a.out, "models.json");
    write_text(&a.out, &lines)?;
    write_text(&models_path, &(serde_json::to_string(&models).expect("models serialize") + "\n"))?;
    let mut inputs = path_list(&[&a.data]);
    inputs.extend(a.config.clone());
    Ok(Manifest {
        config_hash: Some(cfg.hash()),
        seed: Some(cfg.seed),
        inputs,
        outputs: vec![a.out.clone(), models_path],
        path: sibling(&a.out, "manifest.json"),
    })
}

fn cmd_train(a: &TrainArgs, seed: Option<u64>) -> CmdResult {
    let cfg = load_config(a.config.as_deref(), seed)?;
    let d = load_dataset(&a.data)?;
    let models_path = sibling(&a.seg, "models.json");
    let models: SegmentModels = serde_json::from_str(&read_text(&models_path)?)
        .map_err(|e| Failure::Data(format!("{}: {e}", models_path.display())))?;
    let assignments = read_text(&a.seg)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<SegmentLine>(l)
                .map(|s| Assignment {
                    trajectory_id: s.id,
                    labels: s.labels,
                })
                .map_err(|e| Failure::Data(format!("{} line {}: {e}", a.seg.display(), i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let weights = match &a.weights {
        Some(p) => Some(load_weights(p)?),
        None if needs_ranking(&cfg) => Some(rank_dataset(&d, cfg.alpha, cfg.groups)?),
        None => None,
    };
    let model = train_on_segmentation(
        &d,
        weights.as_deref(),
        &cfg,
        models.segmentation,
        &models.state_mean,
        &assignments,
    )?;
    write_text(&a.out, &(model.to_json() + "\n"))?;
    let mut inputs = path_list(&[&a.data, &a.seg, &models_path]);
    inputs.extend(a.weights.clone());
    inputs.extend(a.config.clone());
    Ok(Manifest {
        config_hash: Some(cfg.hash()),
        seed: Some(cfg.seed),
        inputs,
        outputs: path_list(&[&a.out]),
        path: sibling(&a.out, "manifest.json"),
    })
}

fn cmd_fit(a: &FitArgs, seed: Option<u64>) -> CmdResult {
    let cfg = load_config(a.config.as_deref(), seed)?;
    let d = load_dataset(&a.data)?;
    let weights = match &a.weights {
        Some(p) => Some(load_weights(p)?),
        None if needs_ranking(&cfg) => Some(rank_dataset(&d, cfg.alpha, cfg.groups)?),
        None => None,
    };
    let model = halide_fit(&d, weights.as_deref(), &cfg)?;
    write_text(&a.out, &(model.to_json() + "\n"))?;
    let mut inputs = path_list(&[&a.data]);
    inputs.extend(a.weights.clone());
    inputs.extend(a.config.clone());
    Ok(Manifest {
        config_hash: Some(cfg.hash()),
        seed: Some(cfg.seed),
        inputs,
        outputs: path_list(&[&a.out]),
        path: sibling(&a.out, "manifest.json"),
    })
}

fn cmd_predict(a: &PredictArgs) -> CmdResult {
    let model = TrainedModel::from_json(&read_text(&a.model)?)?;
    let d = load_dataset(&a.data)?;
    let records = predict_dataset(&model, &d)?;
    write_text(&a.out, &records_to_jsonl(&records))?;
    Ok(Manifest {
        config_hash: Some(model.config_hash.clone()),
        seed: Some(model.seed),
        inputs: path_list(&[&a.model, &a.data]),
        outputs: path_list(&[&a.out]),
        path: sibling(&a.out, "manifest.json"),
    })
}

fn cmd_eval(a: &EvalArgs) -> CmdResult {
    let (index, preds) = read_predictions(&a.preds)?;
    let report = evaluate_grid(&index.methods, &index.folds, &preds)?;
    write_report(&report, &a.out, &a.cd, a.cd_jaccard.as_deref())?;
    let mut outputs = path_list(&[&a.out, &a.cd]);
    outputs.extend(a.cd_jaccard.clone());
    Ok(Manifest {
        config_hash: None,
        seed: None,
        inputs: vec![a.preds.join("methods.json")],
        outputs,
        path: sibling(&a.out, "manifest.json"),
    })
}

fn cmd_synth(a: &SynthArgs, seed: Option<u64>) -> CmdResult {
    let mut spec: GeneratorSpec = match &a.spec {
        Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| Failure::Data(format!("spec {}: {e}", p.display())))?,
        None => GeneratorSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (d, truth): (DatasetManifest, _) = generate(&spec)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Data(format!("cannot create {}: {e}", dir.display())))?;
    }
    write_dataset(&d, &a.out)?;
    let mut outputs = path_list(&[&a.out]);
    if let Some(t) = &a.truth {
        write_text(t, &(serde_json::to_string(&truth).expect("truth serializes") + "\n"))?;
        outputs.push(t.clone());
    }
    let spec_json = serde_json::to_string(&spec).expect("spec serializes");
    Ok(Manifest {
        config_hash: Some(format!("{:x}", Sha256::digest(spec_json))),
        seed: Some(spec.seed),
        inputs: a.spec.iter().cloned().collect(),
        outputs,
        path: sibling(&a.out, "manifest.json"),
    })
}

fn cmd_bench(a: &BenchArgs, seed: Option<u64>) -> CmdResult {
    let cfg = load_config(a.config.as_deref(), seed)?;
    let d = load_dataset(&a.data)?;
    let result = run_bench(&d, &cfg)?;
    write_bench(&result, &a.outdir)?;
    let mut inputs = path_list(&[&a.data]);
    inputs.extend(a.config.clone());
    Ok(Manifest {
        config_hash: Some(cfg.hash()),
        seed: Some(cfg.seed),
        inputs,
        outputs: ["preds", "report.csv", "cd_f1.csv", "cd_jaccard.csv", "folds.json"]
            .iter()
            .map(|f| a.outdir.join(f))
            .collect(),
        path: a.outdir.join("manifest.json"),
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Rank(_) => "rank",
        Command::Segment(_) => "segment",
        Command::Train(_) => "train",
        Command::Fit(_) => "fit",
        Command::Predict(_) => "predict",
        Command::Eval(_) => "eval",
        Command::Synth(_) => "synth",
        Command::Bench(_) => "bench",
    }
}

fn init_logging(level: log::LevelFilter) {
    env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, record| {
            let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
            let line = serde_json::json!({
                "ts": ts,
                "level": record.level().as_str(),
                "target": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .target(env_logger::Target::Stderr)
        .init();
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let seed = cli.seed;
    let manifest = match &cli.command {
        Command::Rank(a) => cmd_rank(a)?,
        Command::Segment(a) => cmd_segment(a, seed)?,
        Command::Train(a) => cmd_train(a, seed)?,
        Command::Fit(a) => cmd_fit(a, seed)?,
        Command::Predict(a) => cmd_predict(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::Synth(a) => cmd_synth(a, seed)?,
        Command::Bench(a) => cmd_bench(a, seed)?,
    };
    let inputs = manifest
        .inputs
        .iter()
        .map(|p| {
            Ok(InputDigest {
                path: p.display().to_string(),
                sha256: digest(p)?,
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let record = RunManifest {
        command: command_name(&cli.command).to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: manifest.config_hash,
        seed: manifest.seed,
        inputs,
        outputs: manifest.outputs.iter().map(|p| p.display().to_string()).collect(),
        timing: Timing {
            started_unix_s: started,
            duration_s: clock.elapsed().as_secs_f64(),
        },
    };
    write_text(
        &manifest.path,
        &(serde_json::to_string_pretty(&record).expect("manifest serializes") + "\n"),
    )?;
    log::info!("{} finished in {:.2}s", record.command, record.timing.duration_s);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.log_level);
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("global pool is configured once");
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("{}", f.message());
            ExitCode::from(f.code())
        }
    }
}
