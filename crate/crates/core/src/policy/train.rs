//! REINFORCE with a per-step moving-average baseline and Adam.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    discounted_returns, policy_forward, regularized_gradients, reward, select_action, Checkpoint, PolicyEpisode,
    PolicyError, PolicyNetwork, PolicyShape, RewardSpec, SelectionMode, StepOutcome,
};
use crate::dataset::TrajectoryStore;
use crate::grid::GridSpec;
use crate::sim::{
    corridor_case, max_steps, optimal_steps, policy_observation, CollisionType, CorridorConfig, EpisodeSampler,
    Replay, ScenarioCase, SimError, SimulationState,
};

pub const TRAIN_LOG_HEADER: &str = "episode,return,steps,reached_goal,SR,SP,MRP";

/// Where training episodes come from.
#[derive(Debug, Clone)]
pub enum TrainingScenario {
    /// A fresh corridor crossing per episode.
    Corridor(CorridorConfig),
    /// The same case every episode.
    Fixed(Arc<ScenarioCase>),
    /// Random start, goal and start frame in a recording.
    Recording { store: Arc<TrajectoryStore>, grid: GridSpec, sampler: EpisodeSampler },
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub episodes: u64,
    pub learning_rate: f64,
    /// Decay of the per-step return baseline; 0 disables the baseline memory.
    pub baseline_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Weight of the entropy bonus subtracted from the surrogate loss.
    pub entropy_bonus: f64,
    /// Rollouts per gradient step.
    pub batch_size: usize,
    /// Standardize advantages across each batch.
    pub normalize_advantages: bool,
    pub reward: RewardSpec,
    pub shape: PolicyShape,
    pub checkpoint_every: Option<u64>,
    pub checkpoint_dir: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            learning_rate: 1e-3,
            baseline_decay: 0.9,
            grad_clip: Some(5.0),
            entropy_bonus: 0.0,
            batch_size: 1,
            normalize_advantages: false,
            reward: RewardSpec::default(),
            shape: PolicyShape::default(),
            checkpoint_every: None,
            checkpoint_dir: None,
            log_path: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), PolicyError> {
        self.reward.validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(PolicyError::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(PolicyError::Config("baseline decay must lie in [0, 1)".into()));
        }
        if !(self.entropy_bonus.is_finite() && self.entropy_bonus >= 0.0) {
            return Err(PolicyError::Config("entropy bonus must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(PolicyError::Config("batch size must be positive".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(PolicyError::Config("checkpoint interval must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub episode: u64,
    pub ret: f64,
    pub steps: u32,
    pub reached_goal: bool,
    pub sr: u32,
    pub sp: u32,
    pub mrp: u32,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub log: Vec<TrainLogRow>,
}

impl TrainReport {
    pub fn log_csv(&self) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for r in &self.log {
            let _ = writeln!(out, "{},{},{},{},{},{},{}", r.episode, r.ret, r.steps, r.reached_goal, r.sr, r.sp, r.mrp);
        }
        out
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn draw_case(scenario: &TrainingScenario, seed: u64) -> Result<Arc<ScenarioCase>, SimError> {
    match scenario {
        TrainingScenario::Corridor(cfg) => corridor_case(cfg, seed).map(Arc::new),
        TrainingScenario::Fixed(case) => Ok(Arc::clone(case)),
        TrainingScenario::Recording { store, grid, sampler } => {
            let replay = Replay::new(store, *grid)?;
            let episode = sampler.sample(&replay, 1, seed)?[0];
            let frames = replay.frames();
            Ok(Arc::new(ScenarioCase { store: Arc::clone(store), grid: *grid, episode, frames }))
        }
    }
}

struct Rollout {
    episode: PolicyEpisode,
    rewards: Vec<f64>,
    reached_goal: bool,
    counts: [u32; 3],
}

fn rollout(net: &PolicyNetwork, case: &ScenarioCase, reward_spec: &RewardSpec, rng: ChaCha8Rng) -> Result<Rollout, SimError> {
    let replay = case.replay()?;
    let mut state = SimulationState::new(replay, case.episode)?;
    let cap = max_steps(optimal_steps(case.episode.start, case.episode.goal));
    let mut hidden = net.initial_state();
    let mut mode = SelectionMode::Sample(rng);
    let mut ep = PolicyEpisode { encodings: Vec::new(), masks: Vec::new(), actions: Vec::new(), advantages: Vec::new() };
    let mut rewards = Vec::new();
    while !state.at_goal() && state.tick() < cap && state.can_advance() {
        let (enc, mask) = policy_observation(&state.observation());
        let (dist, next) = policy_forward(net, enc.as_slice(), &hidden, &mask)?;
        hidden = next;
        let action = select_action(&dist, &mut mode);
        let report = state.step(action)?;
        let outcome = StepOutcome { reached_goal: state.at_goal(), collided: !report.events.is_empty() };
        rewards.push(reward(outcome, reward_spec));
        ep.encodings.push(enc.as_slice().to_vec());
        ep.masks.push(mask);
        ep.actions.push(action);
    }
    let counts = [CollisionType::Sr, CollisionType::Sp, CollisionType::Mrp].map(|k| state.count(k));
    Ok(Rollout { episode: ep, rewards, reached_goal: state.at_goal(), counts })
}

/// One Adam step on the mean gradient of the pending rollouts, which are consumed.
fn update(
    net: &mut PolicyNetwork,
    adam: &mut Adam,
    pending: &mut Vec<PolicyEpisode>,
    config: &TrainConfig,
) -> Result<(), PolicyError> {
    if config.normalize_advantages {
        let all: Vec<f64> = pending.iter().flat_map(|e| e.advantages.iter().copied()).collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let std = (all.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        for ep in pending.iter_mut() {
            ep.advantages.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
        }
    }
    let mut grad = regularized_gradients(net, pending, config.entropy_bonus)?;
    let scale = 1.0 / pending.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    if let Some(clip) = config.grad_clip {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > clip {
            grad.iter_mut().for_each(|g| *g *= clip / norm);
        }
    }
    adam.step(net.params_mut(), &grad, config.learning_rate);
    pending.clear();
    Ok(())
}

fn io_err(path: &std::path::Path, source: std::io::Error) -> PolicyError {
    PolicyError::Io { path: path.display().to_string(), source }
}

/// Trains a fresh network for `config.episodes` sampled rollouts.
/// Deterministic for a given seed.
pub fn train_policy(scenario: &TrainingScenario, config: &TrainConfig, seed: u64) -> Result<TrainReport, PolicyError> {
    config.validate()?;
    let mut net = PolicyNetwork::new(config.shape, seed)?;
    let mut adam = Adam::new(net.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut baseline: Vec<f64> = Vec::new();
    let mut log = Vec::with_capacity(config.episodes as usize);
    if let Some(dir) = &config.checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut pending: Vec<PolicyEpisode> = Vec::with_capacity(config.batch_size);
    for episode in 0..config.episodes {
        let case_seed: u64 = rng.random();
        let action_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let case = draw_case(scenario, case_seed).map_err(Box::new)?;
        let Rollout { episode: mut batch, rewards, reached_goal, counts } =
            rollout(&net, &case, &config.reward, action_rng).map_err(Box::new)?;
        let returns = discounted_returns(&rewards, config.reward.gamma);
        if baseline.len() < returns.len() {
            baseline.resize(returns.len(), 0.0);
        }
        batch.advantages = returns.iter().zip(&baseline).map(|(g, b)| g - b).collect();
        for (b, g) in baseline.iter_mut().zip(&returns) {
            *b = config.baseline_decay * *b + (1.0 - config.baseline_decay) * g;
        }
        if !batch.actions.is_empty() {
            pending.push(batch);
        }
        if !pending.is_empty() && (pending.len() == config.batch_size || episode + 1 == config.episodes) {
            update(&mut net, &mut adam, &mut pending, config)?;
        }
        log.push(TrainLogRow {
            episode: episode + 1,
            ret: returns.first().copied().unwrap_or(0.0),
            steps: rewards.len() as u32,
            reached_goal,
            sr: counts[0],
            sp: counts[1],
            mrp: counts[2],
        });
        if let (Some(k), Some(dir)) = (config.checkpoint_every, &config.checkpoint_dir) {
            if (episode + 1) % k == 0 {
                let ckpt = Checkpoint { network: net.clone(), reward: config.reward, episodes: episode + 1, seed };
                ckpt.save(dir.join(format!("policy_{:06}.ckpt", episode + 1)))?;
            }
        }
    }
    let report =
        TrainReport { checkpoint: Checkpoint { network: net, reward: config.reward, episodes: config.episodes, seed }, log };
    if let Some(dir) = &config.checkpoint_dir {
        report.checkpoint.save(dir.join("policy_final.ckpt"))?;
    }
    if let Some(path) = &config.log_path {
        fs::write(path, report.log_csv()).map_err(|e| io_err(path, e))?;
    }
    Ok(report)
}
