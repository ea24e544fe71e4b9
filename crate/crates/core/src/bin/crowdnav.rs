//! `crowdnav` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crowdnav::bench::{
    eval_predictor, render_frames, run_benchmark, BenchError, BenchmarkConfig, ControllerSpec, DataSource, ImageFormat,
    PredictorSpec, ResultsTable,
};
use crowdnav::dataset::{convert_records, export_trajectories, load_trajectories, ColumnLayout, CrowdConfig, TrajectoryStore};
use crowdnav::grid::{GridSpec, SceneSpec};
use crowdnav::kv::KvFile;
use crowdnav::policy::{train_policy, PolicyError, TrainConfig, TrainingScenario};
use crowdnav::prediction::{fit_forest, split_by_trajectory, training_windows, ForestParams, Sample, WINDOW};
use crowdnav::sim::{parse_event_log, CorridorConfig, EpisodeSampler};

#[derive(Parser)]
#[command(name = "crowdnav", version, about = "Crowd-navigation trajectory-replay benchmark")]
struct Cli {
    /// Subcommand config file (key=value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    episodes: Option<usize>,
    /// Controller spec; repeat to benchmark several controllers on one episode list.
    #[arg(long, global = true)]
    controller: Vec<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Trajectory file to use instead of a synthetic crowd.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Crowd-generator file for synthetic data.
    #[arg(long, global = true)]
    generator: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum Image {
    Ppm,
    Png,
}

#[derive(Subcommand)]
enum Command {
    /// Convert foreign annotation records into the trajectory format.
    Ingest {
        input: PathBuf,
        /// Field order of the input, e.g. `x,y,frame,id`.
        #[arg(long, default_value = "id,frame,x,y")]
        layout: String,
    },
    /// Generate a synthetic crowd (generator file via --config).
    Synth,
    /// Fit a regression forest on the 80% training split (forest keys via --config).
    TrainForest,
    /// Train the recurrent policy with REINFORCE (training keys via --config).
    TrainPolicy,
    /// Run a benchmark (benchmark file via --config, overridable by flags).
    Simulate,
    /// Score a predictor with NMSE on a seeded 80/10/10 split.
    EvalPredictor {
        /// persistence | oracle | forest | forest:<model> | external:<forecasts>
        #[arg(long, default_value = "persistence")]
        predictor: String,
    },
    /// Draw one image per tick of an episode event log.
    Render {
        log: PathBuf,
        #[arg(long, default_value_t = 64)]
        cols: u32,
        #[arg(long, default_value_t = 36)]
        rows: u32,
        #[arg(long, value_enum, default_value_t = Image::Ppm)]
        image: Image,
    },
    /// Merge results tables and export them as CSV or markdown.
    Export { tables: Vec<PathBuf> },
}

enum Failure {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Data(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn require_out(cli: &Cli) -> Result<&Path, Failure> {
    cli.out.as_deref().ok_or_else(|| Failure::Usage("--out is required for this command".into()))
}

fn kv_config(cli: &Cli) -> Result<KvFile, Failure> {
    match &cli.config {
        Some(p) => KvFile::parse(&read(p)?).map_err(data),
        None => Ok(KvFile::default()),
    }
}

fn source(cli: &Cli) -> Result<DataSource, Failure> {
    match (&cli.store, &cli.generator) {
        (Some(_), Some(_)) => Err(Failure::Usage("give --store or --generator, not both".into())),
        (Some(p), None) => Ok(DataSource::Store { path: p.clone(), scene: SceneSpec::default() }),
        (None, Some(g)) => Ok(DataSource::Synth(CrowdConfig::parse(&read(g)?).map_err(data)?)),
        (None, None) => Ok(DataSource::Synth(CrowdConfig::default())),
    }
}

fn load_store(cli: &Cli) -> Result<TrajectoryStore, Failure> {
    Ok(source(cli)?.load()?)
}

fn ingest(cli: &Cli, input: &Path, layout: &str) -> Result<(), Failure> {
    let out = require_out(cli)?;
    let layout = ColumnLayout::parse(layout).map_err(data)?;
    let text = convert_records(&read(input)?, layout).map_err(data)?;
    write(out, &text)?;
    let store = load_trajectories(out, SceneSpec::default()).map_err(data)?;
    let records = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')).count();
    let valid = store.trajectories().iter().filter(|t| t.len() >= WINDOW).count();
    println!("{records} records -> {}", store.summary());
    println!("{valid} trajectories with at least {WINDOW} frames");
    Ok(())
}

fn synth(cli: &Cli) -> Result<(), Failure> {
    let out = require_out(cli)?;
    let mut cfg = match &cli.config {
        Some(p) => CrowdConfig::parse(&read(p)?).map_err(data)?,
        None => CrowdConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let store = crowdnav::dataset::synth_crowd(&cfg, cfg.seed).map_err(data)?;
    export_trajectories(&store, out).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{}", store.summary());
    Ok(())
}

fn forest_params(kv: &KvFile) -> Result<ForestParams, Failure> {
    kv.check_keys(&["n_trees", "max_depth", "min_samples_leaf", "max_features", "bootstrap"]).map_err(data)?;
    let d = ForestParams::default();
    Ok(ForestParams {
        n_trees: kv.get("n_trees").map_err(data)?.unwrap_or(d.n_trees),
        max_depth: kv.get("max_depth").map_err(data)?.or(d.max_depth),
        min_samples_leaf: kv.get("min_samples_leaf").map_err(data)?.unwrap_or(d.min_samples_leaf),
        max_features: kv.get("max_features").map_err(data)?.unwrap_or(d.max_features),
        bootstrap: kv.get("bootstrap").map_err(data)?.unwrap_or(d.bootstrap),
    })
}

fn train_forest(cli: &Cli) -> Result<(), Failure> {
    let out = require_out(cli)?;
    let params = forest_params(&kv_config(cli)?)?;
    let store = load_store(cli)?;
    let seed = cli.seed.unwrap_or(0);
    let eligible: Vec<_> = store.trajectories().iter().filter(|t| t.len() >= WINDOW).collect();
    let split = split_by_trajectory(eligible.len(), seed);
    let samples: Vec<Sample> = split.train.iter().flat_map(|&i| training_windows(eligible[i])).collect();
    let forest = fit_forest(&samples, &params, seed).map_err(data)?;
    forest.save(out).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("fitted {} trees on {} windows from {} trajectories", forest.trees().len(), samples.len(), split.train.len());
    Ok(())
}

const TRAIN_KEYS: [&str; 15] = [
    "scenario",
    "episodes",
    "learning_rate",
    "baseline_decay",
    "grad_clip",
    "entropy_bonus",
    "batch_size",
    "normalize_advantages",
    "goal_reward",
    "step_penalty",
    "collision_penalty",
    "gamma",
    "checkpoint_every",
    "cols",
    "rows",
];

fn train_config(kv: &KvFile) -> Result<(TrainConfig, String), Failure> {
    kv.check_keys(&TRAIN_KEYS).map_err(data)?;
    let mut c = TrainConfig::default();
    let get = |k: &str, d: f64| -> Result<f64, Failure> { Ok(kv.get(k).map_err(data)?.unwrap_or(d)) };
    c.episodes = kv.get("episodes").map_err(data)?.unwrap_or(c.episodes);
    c.learning_rate = get("learning_rate", c.learning_rate)?;
    c.baseline_decay = get("baseline_decay", c.baseline_decay)?;
    let clip = get("grad_clip", c.grad_clip.unwrap_or(0.0))?;
    c.grad_clip = (clip > 0.0).then_some(clip);
    c.entropy_bonus = get("entropy_bonus", c.entropy_bonus)?;
    c.batch_size = kv.get("batch_size").map_err(data)?.unwrap_or(c.batch_size);
    c.normalize_advantages = kv.get("normalize_advantages").map_err(data)?.unwrap_or(c.normalize_advantages);
    c.reward.goal = get("goal_reward", c.reward.goal)?;
    c.reward.step = get("step_penalty", c.reward.step)?;
    c.reward.collision = get("collision_penalty", c.reward.collision)?;
    c.reward.gamma = get("gamma", c.reward.gamma)?;
    c.checkpoint_every = kv.get("checkpoint_every").map_err(data)?;
    Ok((c, kv.get_str("scenario").unwrap_or("corridor").to_string()))
}

fn policy_failure(e: PolicyError) -> Failure {
    match e {
        PolicyError::Io { .. } | PolicyError::Simulation(_) => Failure::Runtime(e.to_string()),
        other => Failure::Data(other.to_string()),
    }
}

fn train(cli: &Cli) -> Result<(), Failure> {
    let out = require_out(cli)?.to_path_buf();
    let kv = kv_config(cli)?;
    let (mut cfg, scenario) = train_config(&kv)?;
    if let Some(n) = cli.episodes {
        cfg.episodes = n as u64;
    }
    cfg.checkpoint_dir = Some(out.clone());
    cfg.log_path = Some(out.join("train_log.csv"));
    let scenario = match scenario.as_str() {
        "corridor" => TrainingScenario::Corridor(CorridorConfig::default()),
        "recording" => {
            let store = load_store(cli)?;
            let grid = GridSpec::new(
                store.scene(),
                kv.get("cols").map_err(data)?.unwrap_or(64),
                kv.get("rows").map_err(data)?.unwrap_or(36),
            )
            .map_err(data)?;
            TrainingScenario::Recording { store: Arc::new(store), grid, sampler: EpisodeSampler::default() }
        }
        other => return Err(Failure::Data(format!("unknown scenario {other:?} (corridor | recording)"))),
    };
    fs::create_dir_all(&out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    let report = train_policy(&scenario, &cfg, cli.seed.unwrap_or(0)).map_err(policy_failure)?;
    let n = report.log.len().max(1) as f64;
    let reached = report.log.iter().filter(|r| r.reached_goal).count() as f64;
    println!("trained {} episodes; goal reached in {:.1}% of rollouts", report.log.len(), 100.0 * reached / n);
    println!("checkpoint: {}", out.join("policy_final.ckpt").display());
    Ok(())
}

fn simulate(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => BenchmarkConfig::load(p)?,
        None => {
            let first = cli.controller.first().ok_or_else(|| Failure::Usage("give --config or --controller".into()))?;
            BenchmarkConfig::new(source(cli)?, first.parse::<ControllerSpec>()?, 1000, 0)
        }
    };
    if cli.config.is_some() && (cli.store.is_some() || cli.generator.is_some()) {
        cfg.source = source(cli)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(n) = cli.episodes {
        cfg.episodes = n;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    let specs: Vec<ControllerSpec> = if cli.controller.is_empty() {
        vec![cfg.controller.clone()]
    } else {
        cli.controller.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    for s in &specs {
        s.load()?;
    }
    let root = cfg.out.clone();
    let mut merged: Option<ResultsTable> = None;
    for (i, spec) in specs.iter().enumerate() {
        let mut c = cfg.clone();
        c.controller = spec.clone();
        if specs.len() > 1 {
            c.out = root.as_ref().map(|r| r.join(format!("controller_{i}")));
        }
        let run = run_benchmark(&c)?;
        match &mut merged {
            None => merged = Some(run.table),
            Some(t) => t.merge(&run.table)?,
        }
    }
    let table = merged.unwrap_or_default();
    if let (Some(r), true) = (&root, specs.len() > 1) {
        write(&r.join("results.csv"), table.to_csv()?)?;
        write(&r.join("results.md"), table.to_markdown())?;
    }
    print!("{}", format_table(&table, cli.format)?);
    Ok(())
}

fn format_table(table: &ResultsTable, format: Format) -> Result<String, Failure> {
    Ok(match format {
        Format::Csv => table.to_csv()?,
        Format::Markdown => table.to_markdown(),
    })
}

fn eval(cli: &Cli, predictor: &str) -> Result<(), Failure> {
    let spec: PredictorSpec = predictor.parse()?;
    let store = load_store(cli)?;
    let report = eval_predictor(&spec, &store, cli.seed.unwrap_or(0))?;
    let text = report.to_string();
    if let Some(out) = &cli.out {
        write(out, &text)?;
    }
    print!("{text}");
    if report.fallbacks > 0 {
        eprintln!("{} windows had no external forecast and were scored as persistence", report.fallbacks);
    }
    Ok(())
}

fn render(cli: &Cli, log: &Path, cols: u32, rows: u32, image: Image) -> Result<(), Failure> {
    let out = require_out(cli)?;
    let log = parse_event_log(&read(log)?).map_err(data)?;
    let store = load_store(cli)?;
    let grid = GridSpec::new(store.scene(), cols, rows).map_err(data)?;
    let format = match image {
        Image::Ppm => ImageFormat::Ppm,
        #[cfg(feature = "png")]
        Image::Png => ImageFormat::Png,
        #[cfg(not(feature = "png"))]
        Image::Png => return Err(Failure::Usage("PNG output needs the `png` feature".into())),
    };
    let paths = render_frames(&log, &store, &grid, out, format)?;
    println!("wrote {} frames to {}", paths.len(), out.display());
    Ok(())
}

fn export(cli: &Cli, tables: &[PathBuf]) -> Result<(), Failure> {
    if tables.is_empty() {
        return Err(Failure::Usage("give at least one results table".into()));
    }
    let mut merged = ResultsTable::load(&tables[0])?;
    for p in &tables[1..] {
        merged.merge(&ResultsTable::load(p)?)?;
    }
    let text = format_table(&merged, cli.format)?;
    match &cli.out {
        Some(out) => write(out, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if cli.workers == Some(0) {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    match &cli.command {
        Command::Ingest { input, layout } => ingest(cli, input, layout),
        Command::Synth => synth(cli),
        Command::TrainForest => train_forest(cli),
        Command::TrainPolicy => train(cli),
        Command::Simulate => simulate(cli),
        Command::EvalPredictor { predictor } => eval(cli, predictor),
        Command::Render { log, cols, rows, image } => render(cli, log, *cols, *rows, *image),
        Command::Export { tables } => export(cli, tables),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
