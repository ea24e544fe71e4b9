//! Discrete-action recurrent navigation policy and its REINFORCE trainer.

mod checkpoint;
mod encoding;
mod network;
mod raster;
mod train;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{Action, ActionMask};

pub use checkpoint::Checkpoint;
pub use encoding::{
    encode_joint_state, AgentObservation, JointStateEncoding, JOINT_STATE_LEN, NEARBY, PED_BLOCK, ROBOT_BLOCK,
};
pub use network::{entropy, masked_softmax, policy_forward, ActionDistribution, PolicyNetwork, PolicyShape, RecurrentState};
pub use raster::rasterize_continuous_path;
pub use train::{train_policy, TrainConfig, TrainLogRow, TrainReport, TrainingScenario, TRAIN_LOG_HEADER};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid reward spec: {0}")]
    Reward(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("episode batch is empty")]
    EmptyBatch,
    #[error("episode {episode}: {message}")]
    Episode { episode: usize, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Simulation(#[from] Box<crate::sim::SimError>),
}

pub enum SelectionMode {
    Greedy,
    Sample(ChaCha8Rng),
}

/// Greedy picks the most probable action, earliest in [`Action::ALL`] on
/// ties; sampling draws from the distribution with the mode's generator.
pub fn select_action(dist: &ActionDistribution, mode: &mut SelectionMode) -> Action {
    match mode {
        SelectionMode::Greedy => greedy(dist),
        SelectionMode::Sample(rng) => sample(dist, rng),
    }
}

fn greedy(dist: &ActionDistribution) -> Action {
    let mut best = 0;
    for i in 1..Action::COUNT {
        if dist.0[i] > dist.0[best] {
            best = i;
        }
    }
    Action::ALL[best]
}

fn sample(dist: &ActionDistribution, rng: &mut impl Rng) -> Action {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, &p) in dist.0.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(i);
        if u < acc {
            return Action::ALL[i];
        }
    }
    Action::ALL[last.unwrap_or(0)]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    pub goal: f64,
    pub step: f64,
    pub collision: f64,
    pub gamma: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self { goal: 1.0, step: -0.01, collision: -0.25, gamma: 0.99 }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Reward(m.into()));
        if !(self.goal.is_finite() && self.goal > 0.0) {
            return bad("goal reward must be positive");
        }
        if !(self.step.is_finite() && self.step <= 0.0 && self.collision.is_finite() && self.collision <= 0.0) {
            return bad("penalties must be non-positive");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepOutcome {
    pub reached_goal: bool,
    pub collided: bool,
}

/// Goal steps earn the goal reward, other steps the step penalty; a
/// collision adds the collision penalty either way.
pub fn reward(outcome: StepOutcome, spec: &RewardSpec) -> f64 {
    let base = if outcome.reached_goal { spec.goal } else { spec.step };
    if outcome.collided {
        base + spec.collision
    } else {
        base
    }
}

/// `G_t = r_t + gamma * G_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// One rollout prepared for a gradient step; `advantages[t]` weights
/// `-log pi(actions[t] | encodings[..=t])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEpisode {
    pub encodings: Vec<Vec<f64>>,
    pub masks: Vec<ActionMask>,
    pub actions: Vec<Action>,
    pub advantages: Vec<f64>,
}

impl PolicyEpisode {
    fn check(&self, index: usize) -> Result<(), PolicyError> {
        let n = self.encodings.len();
        let err = |message: String| PolicyError::Episode { episode: index, message };
        if self.masks.len() != n || self.actions.len() != n || self.advantages.len() != n {
            return Err(err("encodings, masks, actions and advantages differ in length".into()));
        }
        for (t, (a, m)) in self.actions.iter().zip(&self.masks).enumerate() {
            if !m.allows(*a) {
                return Err(err(format!("step {t}: action {} is masked", a.name())));
            }
        }
        Ok(())
    }
}

/// Surrogate loss `sum_episodes sum_t -A_t log pi(a_t | s_t)`.
pub fn surrogate_loss(net: &PolicyNetwork, batch: &[PolicyEpisode]) -> Result<f64, PolicyError> {
    regularized_loss(net, batch, 0.0)
}

/// Exact gradient of [`surrogate_loss`] with respect to the flat parameters.
pub fn policy_gradients(net: &PolicyNetwork, batch: &[PolicyEpisode]) -> Result<Vec<f64>, PolicyError> {
    regularized_gradients(net, batch, 0.0)
}

/// [`surrogate_loss`] minus `beta` times the summed policy entropy.
pub fn regularized_loss(net: &PolicyNetwork, batch: &[PolicyEpisode], beta: f64) -> Result<f64, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let mut loss = 0.0;
    for (i, ep) in batch.iter().enumerate() {
        ep.check(i)?;
        let caches = net.forward_episode(&ep.encodings, &ep.masks)?;
        for (t, d) in net.distributions(&caches).iter().enumerate() {
            loss -= ep.advantages[t] * d.prob(ep.actions[t]).ln() + beta * entropy(&d.0);
        }
    }
    Ok(loss)
}

/// Exact gradient of [`regularized_loss`].
pub fn regularized_gradients(net: &PolicyNetwork, batch: &[PolicyEpisode], beta: f64) -> Result<Vec<f64>, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let mut grad = vec![0.0; net.params().len()];
    for (i, ep) in batch.iter().enumerate() {
        ep.check(i)?;
        let caches = net.forward_episode(&ep.encodings, &ep.masks)?;
        net.backward_episode(&caches, &ep.actions, &ep.advantages, beta, &mut grad);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn greedy_ties_and_unique_max() {
        let uniform = ActionDistribution([1.0 / 9.0; 9]);
        assert_eq!(select_action(&uniform, &mut SelectionMode::Greedy), Action::Stay);
        let mut d = [0.1; 9];
        d[4] = 0.2;
        assert_eq!(select_action(&ActionDistribution(d), &mut SelectionMode::Greedy).index(), 4);
        let mut tie = [0.0; 9];
        tie[3] = 0.5;
        tie[7] = 0.5;
        assert_eq!(select_action(&ActionDistribution(tie), &mut SelectionMode::Greedy).index(), 3);
    }

    #[test]
    fn sampling_is_reproducible_and_respects_zeros() {
        let mut p = [0.0; 9];
        p[2] = 0.25;
        p[5] = 0.75;
        let d = ActionDistribution(p);
        let draw = |seed| {
            let mut mode = SelectionMode::Sample(ChaCha8Rng::seed_from_u64(seed));
            (0..200).map(|_| select_action(&d, &mut mode)).collect::<Vec<_>>()
        };
        let a = draw(3);
        assert_eq!(a, draw(3));
        assert!(a.iter().all(|x| x.index() == 2 || x.index() == 5));
        assert!(a.iter().any(|x| x.index() == 2) && a.iter().any(|x| x.index() == 5));
    }

    #[test]
    fn reward_composition() {
        let s = RewardSpec::default();
        assert_eq!(reward(StepOutcome { reached_goal: true, collided: false }, &s), 1.0);
        assert_eq!(reward(StepOutcome::default(), &s), -0.01);
        assert!((reward(StepOutcome { reached_goal: false, collided: true }, &s) + 0.26).abs() < 1e-15);
        assert!(RewardSpec { gamma: 0.0, ..s }.validate().is_err());
        assert!(RewardSpec { step: 0.1, ..s }.validate().is_err());
        assert!(RewardSpec { goal: 0.0, ..s }.validate().is_err());
        assert!(s.validate().is_ok());
    }

    #[test]
    fn returns_are_discounted_backwards() {
        assert_eq!(discounted_returns(&[1.0, 1.0, 1.0], 0.5), vec![1.75, 1.5, 1.0]);
        assert!(discounted_returns(&[], 0.9).is_empty());
    }

    #[test]
    fn zero_advantage_gives_zero_gradient() {
        let shape = PolicyShape { input: 4, hidden: 3, dense1: 5, dense2: 4, actions: 9 };
        let net = PolicyNetwork::new(shape, 1).unwrap();
        let ep = PolicyEpisode {
            encodings: vec![vec![0.1, 0.2, 0.3, 0.4]; 3],
            masks: vec![ActionMask::ALL_LEGAL; 3],
            actions: vec![Action::E, Action::N, Action::Stay],
            advantages: vec![0.0; 3],
        };
        assert!(policy_gradients(&net, std::slice::from_ref(&ep)).unwrap().iter().all(|&g| g == 0.0));
        assert!(matches!(policy_gradients(&net, &[]), Err(PolicyError::EmptyBatch)));
        let mut masked = ep;
        masked.masks[0].0[Action::E.index()] = false;
        assert!(matches!(policy_gradients(&net, &[masked]), Err(PolicyError::Episode { episode: 0, .. })));
    }
}
