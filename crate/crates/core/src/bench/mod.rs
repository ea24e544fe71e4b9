//! Benchmark orchestration: controller specs, paired episode runs, results
//! tables, predictor scoring and frame rendering.

mod eval;
mod render;
mod table;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{load_trajectories, synth_crowd, CrowdConfig, DatasetError, TrajectoryStore};
use crate::grid::{GeometryError, GridSpec, SceneSpec};
use crate::kv::{KvError, KvFile};
use crate::policy::{Checkpoint, PolicyError, PolicyNetwork, SelectionMode};
use crate::prediction::{load_external_forecast, PredictionError, RegressionForest};
use crate::sim::{
    make_episodes, run_episode, BaselinePredictor, Controller, DStarController, Episode, EpisodeLog, ExternalPredictor,
    ForestPredictor, PerfectPredictor, PolicyController, Predictor, Replay, SimError,
};

pub use eval::{eval_predictor, NmseReport, PredictorSpec};
pub use render::{render_frames, render_tick, ImageFormat, Raster};
pub use table::{audit_results, ResultRow, ResultsTable, RESULTS_HEADER};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid benchmark config: {0}")]
    Config(String),
    #[error("invalid controller spec {spec:?}: {message}")]
    Spec { spec: String, message: String },
    #[error("model file {0} does not exist")]
    MissingModel(PathBuf),
    #[error("results table: {0}")]
    Table(String),
    #[error("audit mismatch: {0}")]
    Audit(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Prediction(#[from] PredictionError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

impl BenchError {
    /// True for problems with inputs (as opposed to failures while running).
    pub fn is_data_error(&self) -> bool {
        !matches!(self, BenchError::Simulation(_) | BenchError::Pool(_) | BenchError::Io { .. })
    }
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> BenchError {
    BenchError::Io { path: path.display().to_string(), source }
}

/// `dstar+baseline[:r]`, `dstar+forest:<path>`, `dstar+external:<path>`,
/// `dstar+perfect` or `policy+checkpoint:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControllerSpec {
    DStarBaseline { radius: u32 },
    DStarForest { path: PathBuf },
    DStarExternal { path: PathBuf },
    DStarPerfect,
    PolicyCheckpoint { path: PathBuf },
}

impl ControllerSpec {
    pub fn model_path(&self) -> Option<&Path> {
        match self {
            ControllerSpec::DStarForest { path }
            | ControllerSpec::DStarExternal { path }
            | ControllerSpec::PolicyCheckpoint { path } => Some(path),
            _ => None,
        }
    }

    /// Loads any referenced model so episodes can be started cheaply.
    pub fn load(&self) -> Result<LoadedController, BenchError> {
        if let Some(p) = self.model_path() {
            if !p.is_file() {
                return Err(BenchError::MissingModel(p.to_path_buf()));
            }
        }
        Ok(match self {
            ControllerSpec::DStarBaseline { radius } => LoadedController::Planner(Arc::new(BaselinePredictor { radius: *radius })),
            ControllerSpec::DStarPerfect => LoadedController::Planner(Arc::new(PerfectPredictor)),
            ControllerSpec::DStarForest { path } => {
                LoadedController::Planner(Arc::new(ForestPredictor { forest: Arc::new(RegressionForest::load(path)?) }))
            }
            ControllerSpec::DStarExternal { path } => {
                LoadedController::Planner(Arc::new(ExternalPredictor { forecasts: Arc::new(load_external_forecast(path)?) }))
            }
            ControllerSpec::PolicyCheckpoint { path } => LoadedController::Policy(Arc::new(Checkpoint::load(path)?.network)),
        })
    }
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerSpec::DStarBaseline { radius } => write!(f, "dstar+baseline:{radius}"),
            ControllerSpec::DStarForest { path } => write!(f, "dstar+forest:{}", path.display()),
            ControllerSpec::DStarExternal { path } => write!(f, "dstar+external:{}", path.display()),
            ControllerSpec::DStarPerfect => f.write_str("dstar+perfect"),
            ControllerSpec::PolicyCheckpoint { path } => write!(f, "policy+checkpoint:{}", path.display()),
        }
    }
}

impl FromStr for ControllerSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |message: &str| BenchError::Spec { spec: s.to_string(), message: message.to_string() };
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let path = |arg: Option<&str>| match arg {
            Some(p) if !p.is_empty() => Ok(PathBuf::from(p)),
            _ => Err(bad("expected `<kind>:<path>`")),
        };
        match kind {
            "dstar+baseline" => {
                let radius = match arg {
                    None => 1,
                    Some(r) => r.parse().map_err(|_| bad("radius must be a non-negative integer"))?,
                };
                Ok(ControllerSpec::DStarBaseline { radius })
            }
            "dstar+perfect" if arg.is_none() => Ok(ControllerSpec::DStarPerfect),
            "dstar+perfect" => Err(bad("takes no argument")),
            "dstar+forest" => Ok(ControllerSpec::DStarForest { path: path(arg)? }),
            "dstar+external" => Ok(ControllerSpec::DStarExternal { path: path(arg)? }),
            "policy+checkpoint" => Ok(ControllerSpec::PolicyCheckpoint { path: path(arg)? }),
            _ => Err(bad("unknown controller kind")),
        }
    }
}

/// A controller spec with its models in memory; cheap to instantiate per episode.
#[derive(Clone)]
pub enum LoadedController {
    Planner(Arc<dyn Predictor>),
    Policy(Arc<PolicyNetwork>),
}

impl LoadedController {
    pub fn instantiate(&self) -> Box<dyn Controller> {
        match self {
            LoadedController::Planner(p) => Box::new(DStarController::new(Arc::clone(p))),
            LoadedController::Policy(net) => Box::new(PolicyController::new(Arc::clone(net), SelectionMode::Greedy)),
        }
    }
}

/// Where pedestrians come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Store { path: PathBuf, scene: SceneSpec },
    Synth(CrowdConfig),
}

impl DataSource {
    pub fn load(&self) -> Result<TrajectoryStore, BenchError> {
        Ok(match self {
            DataSource::Store { path, scene } => load_trajectories(path, *scene)?,
            DataSource::Synth(cfg) => synth_crowd(cfg, cfg.seed)?,
        })
    }

    fn describe(&self) -> String {
        match self {
            DataSource::Store { path, .. } => format!("store:{}", path.display()),
            DataSource::Synth(cfg) => format!("synth:{}", cfg.to_kv_string().trim().replace('\n', ";")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub source: DataSource,
    pub controller: ControllerSpec,
    pub episodes: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Worker threads; `None` uses every logical core.
    pub workers: Option<usize>,
    pub cols: u32,
    pub rows: u32,
}

impl BenchmarkConfig {
    pub const KEYS: [&'static str; 11] =
        ["store", "generator", "controller", "episodes", "seed", "out", "workers", "cols", "rows", "scene_width", "scene_height"];

    pub fn new(source: DataSource, controller: ControllerSpec, episodes: usize, seed: u64) -> Self {
        Self { source, controller, episodes, seed, out: None, workers: None, cols: 64, rows: 36 }
    }

    /// Reads a benchmark `key=value` file. `store` names a trajectory file,
    /// `generator` a crowd-generator file; with neither the default crowd is
    /// synthesized. Relative paths resolve against the config's directory.
    pub fn from_kv(kv: &KvFile, base: &Path) -> Result<Self, BenchError> {
        kv.check_keys(&Self::KEYS)?;
        let resolve = |p: &str| base.join(p);
        let scene = SceneSpec::default();
        let scene = SceneSpec::new(
            kv.get("scene_width")?.unwrap_or(scene.width),
            kv.get("scene_height")?.unwrap_or(scene.height),
            scene.fps,
        )?;
        let source = match (kv.get_str("store"), kv.get_str("generator")) {
            (Some(_), Some(_)) => return Err(BenchError::Config("give either `store` or `generator`, not both".into())),
            (Some(p), None) => DataSource::Store { path: resolve(p), scene },
            (None, Some(p)) => {
                let path = resolve(p);
                let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                DataSource::Synth(CrowdConfig::parse(&text)?)
            }
            (None, None) => DataSource::Synth(CrowdConfig::default()),
        };
        let controller = kv
            .get_str("controller")
            .ok_or_else(|| BenchError::Config("missing `controller`".into()))?
            .parse::<ControllerSpec>()?;
        let controller = match controller {
            ControllerSpec::DStarForest { path } => ControllerSpec::DStarForest { path: base.join(path) },
            ControllerSpec::DStarExternal { path } => ControllerSpec::DStarExternal { path: base.join(path) },
            ControllerSpec::PolicyCheckpoint { path } => ControllerSpec::PolicyCheckpoint { path: base.join(path) },
            other => other,
        };
        let mut cfg = Self::new(source, controller, kv.get("episodes")?.unwrap_or(1000), kv.get("seed")?.unwrap_or(0));
        cfg.out = kv.get_str("out").map(resolve);
        cfg.workers = kv.get("workers")?;
        cfg.cols = kv.get("cols")?.unwrap_or(cfg.cols);
        cfg.rows = kv.get("rows")?.unwrap_or(cfg.rows);
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_kv(&KvFile::parse(&text)?, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.episodes == 0 {
            return Err(BenchError::Config("episode count must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(BenchError::Config("worker count must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical text of everything that shapes the results (not the output
    /// location or worker count).
    fn canonical(&self) -> String {
        format!(
            "source={}\ncontroller={}\nepisodes={}\nseed={}\ngrid={}x{}\n",
            self.source.describe(),
            self.controller,
            self.episodes,
            self.seed,
            self.cols,
            self.rows
        )
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One line per episode: `start_col,start_row,goal_col,goal_row,start_frame,seed`.
pub fn episode_list_csv(episodes: &[Episode]) -> String {
    let mut out = String::from("start_col,start_row,goal_col,goal_row,start_frame,seed\n");
    for e in episodes {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.start.col, e.start.row, e.goal.col, e.goal.row, e.start_frame, e.seed
        ));
    }
    out
}

/// SHA-256 of [`episode_list_csv`]; equal hashes mean paired runs.
pub fn episode_list_hash(episodes: &[Episode]) -> String {
    sha256_hex(episode_list_csv(episodes).as_bytes())
}

/// Runs `episodes` with fresh controller instances on a pool of `workers`
/// threads; logs come back in episode order regardless of scheduling.
pub fn run_episodes(
    controller: &LoadedController,
    episodes: &[Episode],
    replay: &Replay<'_>,
    workers: Option<usize>,
) -> Result<Vec<EpisodeLog>, BenchError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| BenchError::Pool(e.to_string()))?;
    let logs: Result<Vec<_>, SimError> = pool.install(|| {
        episodes
            .par_iter()
            .map(|e| {
                let mut c = controller.instantiate();
                run_episode(c.as_mut(), e, replay)
            })
            .collect()
    });
    Ok(logs?)
}

#[derive(Debug, Clone)]
pub struct BenchmarkRun {
    pub episodes: Vec<Episode>,
    pub logs: Vec<EpisodeLog>,
    pub table: ResultsTable,
}

/// Loads data and models, samples the shared episode list and runs it.
/// With `config.out` set, writes `results.csv`, `results.md`,
/// `episodes.csv` and one event log per episode under `logs/`.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkRun, BenchError> {
    config.validate()?;
    let controller = config.controller.load()?;
    let store = config.source.load()?;
    let grid = GridSpec::new(store.scene(), config.cols, config.rows)?;
    let replay = Replay::new(&store, grid)?;
    let episodes = make_episodes(&replay, config.episodes, config.seed)?;
    let logs = run_episodes(&controller, &episodes, &replay, config.workers)?;

    let mut table = ResultsTable::default();
    let meta = [
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("seed", config.seed.to_string()),
        ("episodes", config.episodes.to_string()),
        ("episode_hash", episode_list_hash(&episodes)),
        ("config_hash", config.config_hash()),
        ("source", config.source.describe()),
        ("grid", format!("{}x{}", config.cols, config.rows)),
    ];
    for (k, v) in meta {
        table.metadata.insert(k.to_string(), v);
    }
    if let ControllerSpec::PolicyCheckpoint { path } = &config.controller {
        let r = Checkpoint::load(path)?.reward;
        table.metadata.insert("reward".into(), format!("goal={} step={} collision={} gamma={}", r.goal, r.step, r.collision, r.gamma));
    }
    table.rows.push(ResultRow::from_results(config.controller.to_string(), logs.iter().map(|l| &l.result)));

    if let Some(dir) = &config.out {
        write_outputs(dir, &episodes, &logs, &table)?;
    }
    Ok(BenchmarkRun { episodes, logs, table })
}

fn write_outputs(dir: &Path, episodes: &[Episode], logs: &[EpisodeLog], table: &ResultsTable) -> Result<(), BenchError> {
    let log_dir = dir.join("logs");
    fs::create_dir_all(&log_dir).map_err(|e| io_err(&log_dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| io_err(&p, e))
    };
    write("episodes.csv", episode_list_csv(episodes))?;
    write("results.csv", table.to_csv()?)?;
    write("results.md", table.to_markdown())?;
    for (i, log) in logs.iter().enumerate() {
        log.save(log_dir.join(format!("episode_{i:05}.csv")))?;
    }
    Ok(())
}
