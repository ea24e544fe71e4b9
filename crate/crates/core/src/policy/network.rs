//! Recurrent policy network: one LSTM layer followed by three dense layers
//! and a masked softmax over the nine grid actions.
//!
//! All parameters live in one flat `Vec<f64>`, in this order:
//!
//! | block     | shape                 | notes                                   |
//! |-----------|-----------------------|-----------------------------------------|
//! | `lstm_w`  | `4H x (D + H)`        | row-major; gate rows `i`, `f`, `g`, `o`; columns `[x; h_prev]` |
//! | `lstm_b`  | `4H`                  | same gate order                         |
//! | `w1`,`b1` | `F1 x H`, `F1`        | tanh                                    |
//! | `w2`,`b2` | `F2 x F1`, `F2`       | tanh                                    |
//! | `w3`,`b3` | `A x F2`, `A`         | logits                                  |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoding::JOINT_STATE_LEN;
use super::PolicyError;
use crate::grid::{Action, ActionMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyShape {
    pub input: usize,
    pub hidden: usize,
    pub dense1: usize,
    pub dense2: usize,
    pub actions: usize,
}

impl Default for PolicyShape {
    fn default() -> Self {
        Self { input: JOINT_STATE_LEN, hidden: 64, dense1: 64, dense2: 32, actions: Action::COUNT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Offsets {
    lstm_w: usize,
    lstm_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

impl PolicyShape {
    fn offsets(&self) -> Offsets {
        let (d, h, f1, f2, a) = (self.input, self.hidden, self.dense1, self.dense2, self.actions);
        let lstm_w = 0;
        let lstm_b = lstm_w + 4 * h * (d + h);
        let w1 = lstm_b + 4 * h;
        let b1 = w1 + f1 * h;
        let w2 = b1 + f1;
        let b2 = w2 + f2 * f1;
        let w3 = b2 + f2;
        let b3 = w3 + a * f2;
        Offsets { lstm_w, lstm_b, w1, b1, w2, b2, w3, b3, end: b3 + a }
    }

    pub fn param_count(&self) -> usize {
        self.offsets().end
    }

    /// Named parameter blocks as `(name, range)`, in layout order.
    pub fn blocks(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        let o = self.offsets();
        vec![
            ("lstm_w", o.lstm_w..o.lstm_b),
            ("lstm_b", o.lstm_b..o.w1),
            ("w1", o.w1..o.b1),
            ("b1", o.b1..o.w2),
            ("w2", o.w2..o.b2),
            ("b2", o.b2..o.w3),
            ("w3", o.w3..o.b3),
            ("b3", o.b3..o.end),
        ]
    }

    fn validate(&self) -> Result<(), PolicyError> {
        if self.input == 0 || self.hidden == 0 || self.dense1 == 0 || self.dense2 == 0 {
            return Err(PolicyError::Shape("layer sizes must be positive".into()));
        }
        if self.actions != Action::COUNT {
            return Err(PolicyError::Shape(format!("expected {} actions, got {}", Action::COUNT, self.actions)));
        }
        Ok(())
    }
}

/// LSTM hidden and cell state carried between steps of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Probabilities over [`Action::ALL`]; masked actions hold exactly 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionDistribution(pub [f64; Action::COUNT]);

impl ActionDistribution {
    pub fn prob(&self, a: Action) -> f64 {
        self.0[a.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    shape: PolicyShape,
    params: Vec<f64>,
}

/// Intermediate values of one forward step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    probs: [f64; Action::COUNT],
    mask: ActionMask,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out = W v + b` for row-major `W` of shape `out.len() x v.len()`.
fn affine(w: &[f64], b: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(v).map(|(a, x)| a * x).sum::<f64>();
    }
}

/// Shannon entropy in nats; zero-probability entries contribute nothing.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Softmax over the legal entries of `logits`, computed after subtracting the legal maximum.
pub fn masked_softmax(logits: &[f64], mask: &ActionMask) -> [f64; Action::COUNT] {
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.0[*i])
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; Action::COUNT];
    let mut sum = 0.0;
    for (i, &z) in logits.iter().enumerate() {
        if mask.0[i] {
            p[i] = (z - max).exp();
            sum += p[i];
        }
    }
    for v in &mut p {
        *v /= sum;
    }
    p
}

impl PolicyNetwork {
    /// Uniform initialization in `[-0.08, 0.08]`, forget-gate biases set to 1.
    pub fn new(shape: PolicyShape, seed: u64) -> Result<Self, PolicyError> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params: Vec<f64> = (0..shape.param_count()).map(|_| rng.random_range(-0.08..=0.08)).collect();
        let o = shape.offsets();
        let h = shape.hidden;
        for v in &mut params[o.lstm_b + h..o.lstm_b + 2 * h] {
            *v = 1.0;
        }
        Ok(Self { shape, params })
    }

    pub fn from_params(shape: PolicyShape, params: Vec<f64>) -> Result<Self, PolicyError> {
        shape.validate()?;
        if params.len() != shape.param_count() {
            return Err(PolicyError::Shape(format!(
                "expected {} parameters, got {}",
                shape.param_count(),
                params.len()
            )));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn initial_state(&self) -> RecurrentState {
        RecurrentState::zeros(self.shape.hidden)
    }

    pub(crate) fn step(&self, x: &[f64], state: &RecurrentState, mask: &ActionMask) -> Result<StepCache, PolicyError> {
        let s = &self.shape;
        if x.len() != s.input {
            return Err(PolicyError::Shape(format!("encoding has {} values, network expects {}", x.len(), s.input)));
        }
        if state.h.len() != s.hidden || state.c.len() != s.hidden {
            return Err(PolicyError::Shape("recurrent state size does not match the network".into()));
        }
        let o = s.offsets();
        let h = s.hidden;
        let p = &self.params;
        let mut xh = Vec::with_capacity(s.input + h);
        xh.extend_from_slice(x);
        xh.extend_from_slice(&state.h);

        let mut z = vec![0.0; 4 * h];
        affine(&p[o.lstm_w..o.lstm_b], &p[o.lstm_b..o.w1], &xh, &mut z);
        let mut gates = z;
        for (k, v) in gates.iter_mut().enumerate() {
            *v = if (2 * h..3 * h).contains(&k) { v.tanh() } else { sigmoid(*v) };
        }
        let mut c = vec![0.0; h];
        let mut tanh_c = vec![0.0; h];
        let mut hn = vec![0.0; h];
        for j in 0..h {
            let (i, f, g, og) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            c[j] = f * state.c[j] + i * g;
            tanh_c[j] = c[j].tanh();
            hn[j] = og * tanh_c[j];
        }
        let mut a1 = vec![0.0; s.dense1];
        affine(&p[o.w1..o.b1], &p[o.b1..o.w2], &hn, &mut a1);
        a1.iter_mut().for_each(|v| *v = v.tanh());
        let mut a2 = vec![0.0; s.dense2];
        affine(&p[o.w2..o.b2], &p[o.b2..o.w3], &a1, &mut a2);
        a2.iter_mut().for_each(|v| *v = v.tanh());
        let mut logits = [0.0; Action::COUNT];
        affine(&p[o.w3..o.b3], &p[o.b3..o.end], &a2, &mut logits);
        let probs = masked_softmax(&logits, mask);
        Ok(StepCache { xh, c_prev: state.c.clone(), gates, c, tanh_c, h: hn, a1, a2, probs, mask: *mask })
    }

    /// Raw (pre-softmax) scores for one step; used by tests of selection invariances.
    pub fn logits(&self, x: &[f64], state: &RecurrentState) -> Result<[f64; Action::COUNT], PolicyError> {
        let cache = self.step(x, state, &ActionMask::ALL_LEGAL)?;
        let o = self.shape.offsets();
        let mut logits = [0.0; Action::COUNT];
        affine(&self.params[o.w3..o.b3], &self.params[o.b3..o.end], &cache.a2, &mut logits);
        Ok(logits)
    }

    pub(crate) fn forward_episode(
        &self,
        encodings: &[Vec<f64>],
        masks: &[ActionMask],
    ) -> Result<Vec<StepCache>, PolicyError> {
        let mut state = self.initial_state();
        let mut caches = Vec::with_capacity(encodings.len());
        for (x, m) in encodings.iter().zip(masks) {
            let cache = self.step(x, &state, m)?;
            state = RecurrentState { h: cache.h.clone(), c: cache.c.clone() };
            caches.push(cache);
        }
        Ok(caches)
    }

    pub(crate) fn distributions(&self, caches: &[StepCache]) -> Vec<ActionDistribution> {
        caches.iter().map(|c| ActionDistribution(c.probs)).collect()
    }

    /// Accumulates into `grad` the gradient of
    /// `sum_t (-w_t * log pi(a_t | s_t) - beta * H(pi(. | s_t)))` over one
    /// episode, by backpropagation through time.
    pub(crate) fn backward_episode(
        &self,
        caches: &[StepCache],
        actions: &[Action],
        weights: &[f64],
        beta: f64,
        grad: &mut [f64],
    ) {
        let s = &self.shape;
        let o = s.offsets();
        let (d, h) = (s.input, s.hidden);
        let p = &self.params;
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for t in (0..caches.len()).rev() {
            let cache = &caches[t];
            let w = weights[t];
            let mut dlogits = [0.0; Action::COUNT];
            if w != 0.0 {
                for (k, dl) in dlogits.iter_mut().enumerate() {
                    if cache.mask.0[k] {
                        *dl = w * cache.probs[k];
                    }
                }
                dlogits[actions[t].index()] -= w;
            }
            if beta != 0.0 {
                // dH/dz_k = -p_k (log p_k + H), over legal actions with p_k > 0
                let entropy = entropy(&cache.probs);
                for (k, dl) in dlogits.iter_mut().enumerate() {
                    let pk = cache.probs[k];
                    if cache.mask.0[k] && pk > 0.0 {
                        *dl += beta * pk * (pk.ln() + entropy);
                    }
                }
            }
            // dense 3
            let mut da2 = vec![0.0; s.dense2];
            for (k, &g) in dlogits.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[o.b3 + k] += g;
                let row = o.w3 + k * s.dense2;
                for j in 0..s.dense2 {
                    grad[row + j] += g * cache.a2[j];
                    da2[j] += g * p[row + j];
                }
            }
            // dense 2
            let mut da1 = vec![0.0; s.dense1];
            for k in 0..s.dense2 {
                let g = da2[k] * (1.0 - cache.a2[k] * cache.a2[k]);
                grad[o.b2 + k] += g;
                let row = o.w2 + k * s.dense1;
                for j in 0..s.dense1 {
                    grad[row + j] += g * cache.a1[j];
                    da1[j] += g * p[row + j];
                }
            }
            // dense 1
            let mut dh = dh_next.clone();
            for k in 0..s.dense1 {
                let g = da1[k] * (1.0 - cache.a1[k] * cache.a1[k]);
                grad[o.b1 + k] += g;
                let row = o.w1 + k * h;
                for j in 0..h {
                    grad[row + j] += g * cache.h[j];
                    dh[j] += g * p[row + j];
                }
            }
            // lstm cell
            let mut dz = vec![0.0; 4 * h];
            for j in 0..h {
                let (i, f, g, og) =
                    (cache.gates[j], cache.gates[h + j], cache.gates[2 * h + j], cache.gates[3 * h + j]);
                let d_o = dh[j] * cache.tanh_c[j];
                let dc = dh[j] * og * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]) + dc_next[j];
                dz[j] = dc * g * i * (1.0 - i);
                dz[h + j] = dc * cache.c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dc * i * (1.0 - g * g);
                dz[3 * h + j] = d_o * og * (1.0 - og);
                dc_next[j] = dc * f;
            }
            let cols = d + h;
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[o.lstm_b + r] += g;
                let row = o.lstm_w + r * cols;
                for (j, &xv) in cache.xh.iter().enumerate() {
                    grad[row + j] += g * xv;
                }
                for j in 0..h {
                    dh_next[j] += g * p[row + d + j];
                }
            }
        }
    }
}

/// One step of the policy: masked action distribution and the next recurrent state.
pub fn policy_forward(
    net: &PolicyNetwork,
    encoding: &[f64],
    hidden: &RecurrentState,
    mask: &ActionMask,
) -> Result<(ActionDistribution, RecurrentState), PolicyError> {
    let cache = net.step(encoding, hidden, mask)?;
    Ok((ActionDistribution(cache.probs), RecurrentState { h: cache.h, c: cache.c }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> PolicyNetwork {
        PolicyNetwork::new(PolicyShape::default(), 7).unwrap()
    }

    #[test]
    fn layout_counts() {
        let s = PolicyShape::default();
        let d = JOINT_STATE_LEN;
        assert_eq!(s.param_count(), 4 * 64 * (d + 64) + 4 * 64 + 64 * 64 + 64 + 32 * 64 + 32 + 9 * 32 + 9);
        let blocks = s.blocks();
        assert_eq!(blocks.first().unwrap().1.start, 0);
        assert_eq!(blocks.last().unwrap().1.end, s.param_count());
        let n = net();
        let forget = &n.params()[blocks[1].1.start + 64..blocks[1].1.start + 128];
        assert!(forget.iter().all(|&v| v == 1.0));
        assert!(n.params().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn distribution_sums_to_one_and_is_deterministic() {
        let n = net();
        let x: Vec<f64> = (0..JOINT_STATE_LEN).map(|i| (i as f64 * 0.37).sin()).collect();
        let (d1, s1) = policy_forward(&n, &x, &n.initial_state(), &ActionMask::ALL_LEGAL).unwrap();
        let (d2, s2) = policy_forward(&n, &x, &n.initial_state(), &ActionMask::ALL_LEGAL).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(s1, s2);
        assert!((d1.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn masking_zeroes_and_renormalizes() {
        let n = net();
        let x = vec![0.3; JOINT_STATE_LEN];
        let (full, _) = policy_forward(&n, &x, &n.initial_state(), &ActionMask::ALL_LEGAL).unwrap();
        let mut mask = ActionMask::ALL_LEGAL;
        for a in [Action::N, Action::NE, Action::NW] {
            mask.0[a.index()] = false;
        }
        let (masked, _) = policy_forward(&n, &x, &n.initial_state(), &mask).unwrap();
        let legal: f64 = Action::ALL.iter().filter(|a| mask.allows(**a)).map(|a| full.prob(*a)).sum();
        for a in Action::ALL {
            if mask.allows(a) {
                assert!((masked.prob(a) - full.prob(a) / legal).abs() < 1e-12);
            } else {
                assert_eq!(masked.prob(a), 0.0);
            }
        }
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        let n = net();
        let x = vec![1e200; JOINT_STATE_LEN];
        let (d, _) = policy_forward(&n, &x, &n.initial_state(), &ActionMask::ALL_LEGAL).unwrap();
        assert!(d.0.iter().all(|p| p.is_finite()));
        assert!((d.0.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let n = net();
        assert!(matches!(
            policy_forward(&n, &[0.0; 3], &n.initial_state(), &ActionMask::ALL_LEGAL),
            Err(PolicyError::Shape(_))
        ));
        assert!(PolicyNetwork::from_params(PolicyShape::default(), vec![0.0; 5]).is_err());
    }
}
