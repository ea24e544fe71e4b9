//! Multi-output CART regression forest.
//!
//! Trees are grown on bootstrap resamples with per-split feature
//! subsampling. A split minimizes the summed squared error over all ten
//! targets. Each tree has its own RNG stream derived from the forest seed,
//! so the fitted forest does not depend on the thread schedule.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::features::{FeatureVector, FEATURE_COUNT};
use super::samples::Sample;
use super::{ForecastTargets, PredictionError, TARGET_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Non-constant features examined per split.
    pub max_features: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 5,
            max_features: FEATURE_COUNT.div_ceil(3),
            bootstrap: true,
        }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<(), PredictionError> {
        let bad = |m: &str| Err(PredictionError::InvalidParams(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1");
        }
        if self.max_features == 0 || self.max_features > FEATURE_COUNT {
            return bad("max_features must lie in 1..=31");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split { feature: u16, threshold: f64, left: u32, right: u32, samples: u32 },
    Leaf { value: ForecastTargets, samples: u32 },
}

impl TreeNode {
    pub fn samples(&self) -> u32 {
        match self {
            TreeNode::Split { samples, .. } | TreeNode::Leaf { samples, .. } => *samples,
        }
    }
}

/// Binary tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn predict(&self, f: &FeatureVector) -> &ForecastTargets {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value, .. } => return value,
                TreeNode::Split { feature, threshold, left, right, .. } => {
                    at = if f.0[*feature as usize] <= *threshold { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], at: usize) -> usize {
            match &nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left as usize).max(go(nodes, *right as usize)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionForest {
    trees: Vec<RegressionTree>,
    params: ForestParams,
    seed: u64,
}

impl RegressionForest {
    /// Assembles a forest from already-built trees.
    pub fn from_trees(trees: Vec<RegressionTree>, params: ForestParams, seed: u64) -> Result<Self, PredictionError> {
        if trees.is_empty() {
            return Err(PredictionError::InvalidParams("a forest needs at least one tree".into()));
        }
        Ok(Self { trees, params, seed })
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn predict(&self, f: &FeatureVector) -> ForecastTargets {
        forest_predict(self, f)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PredictionError> {
        codec::decode(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PredictionError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| PredictionError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PredictionError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| PredictionError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

/// Unweighted mean of the per-tree leaf vectors.
pub fn forest_predict(forest: &RegressionForest, f: &FeatureVector) -> ForecastTargets {
    let mut sum = [0.0; TARGET_COUNT];
    for tree in &forest.trees {
        for (s, v) in sum.iter_mut().zip(tree.predict(f).0) {
            *s += v;
        }
    }
    let n = forest.trees.len() as f64;
    ForecastTargets(sum.map(|s| s / n))
}

/// SplitMix64 step; spreads the forest seed into independent per-tree seeds.
fn tree_seed(seed: u64, tree: usize) -> u64 {
    let mut z = seed.wrapping_add((tree as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fit_forest(samples: &[Sample], params: &ForestParams, seed: u64) -> Result<RegressionForest, PredictionError> {
    if samples.is_empty() {
        return Err(PredictionError::EmptyTrainingSet);
    }
    params.validate()?;
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(seed, t));
            let idx: Vec<u32> = if params.bootstrap {
                (0..samples.len()).map(|_| rng.random_range(0..samples.len()) as u32).collect()
            } else {
                (0..samples.len() as u32).collect()
            };
            TreeBuilder { samples, params, rng, nodes: Vec::new() }.build(idx)
        })
        .collect();
    Ok(RegressionForest { trees, params: *params, seed })
}

struct TreeBuilder<'a> {
    samples: &'a [Sample],
    params: &'a ForestParams,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl TreeBuilder<'_> {
    fn build(mut self, idx: Vec<u32>) -> RegressionTree {
        self.grow(idx, 0);
        RegressionTree { nodes: self.nodes }
    }

    fn grow(&mut self, idx: Vec<u32>, depth: usize) -> u32 {
        let at = self.nodes.len() as u32;
        let n = idx.len();
        let pure = self.is_pure(&idx);
        // a pure node keeps its exact target; averaging copies could round
        let value = if pure { self.samples[idx[0] as usize].targets } else { self.mean(&idx) };
        let leaf = TreeNode::Leaf { value, samples: n as u32 };
        let depth_exhausted = self.params.max_depth.is_some_and(|d| depth >= d);
        if depth_exhausted || n < 2 * self.params.min_samples_leaf || pure {
            self.nodes.push(leaf);
            return at;
        }
        let Some(best) = self.best_split(&idx) else {
            self.nodes.push(leaf);
            return at;
        };
        let (left_idx, right_idx): (Vec<u32>, Vec<u32>) =
            idx.iter().partition(|&&i| self.samples[i as usize].features.0[best.feature] <= best.threshold);
        // placeholder, patched once the children exist
        self.nodes.push(leaf);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[at as usize] = TreeNode::Split {
            feature: best.feature as u16,
            threshold: best.threshold,
            left,
            right,
            samples: n as u32,
        };
        at
    }

    fn mean(&self, idx: &[u32]) -> ForecastTargets {
        let mut sum = [0.0; TARGET_COUNT];
        for &i in idx {
            for (s, v) in sum.iter_mut().zip(self.samples[i as usize].targets.0) {
                *s += v;
            }
        }
        let n = idx.len() as f64;
        ForecastTargets(sum.map(|s| s / n))
    }

    fn is_pure(&self, idx: &[u32]) -> bool {
        let first = &self.samples[idx[0] as usize].targets;
        idx.iter().all(|&i| self.samples[i as usize].targets == *first)
    }

    /// Maximizes `sum_d S_L[d]^2 / n_L + S_R[d]^2 / n_R`, which is the same as
    /// minimizing the children's summed squared error.
    fn best_split(&mut self, idx: &[u32]) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut total = [0.0; TARGET_COUNT];
        for &i in idx {
            for (t, v) in total.iter_mut().zip(self.samples[i as usize].targets.0) {
                *t += v;
            }
        }
        let mut order: Vec<usize> = (0..FEATURE_COUNT).collect();
        order.shuffle(&mut self.rng);

        let mut best: Option<BestSplit> = None;
        let mut visited = 0;
        let mut column: Vec<(f64, u32)> = Vec::with_capacity(n);
        for feature in order {
            if visited == self.params.max_features {
                break;
            }
            column.clear();
            column.extend(idx.iter().map(|&i| (self.samples[i as usize].features.0[feature], i)));
            column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if column[0].0 == column[n - 1].0 {
                continue;
            }
            visited += 1;
            let mut left = [0.0; TARGET_COUNT];
            for k in 1..n {
                let targets = &self.samples[column[k - 1].1 as usize].targets.0;
                for (l, v) in left.iter_mut().zip(targets) {
                    *l += v;
                }
                if k < min_leaf || n - k < min_leaf || column[k - 1].0 == column[k].0 {
                    continue;
                }
                let (nl, nr) = (k as f64, (n - k) as f64);
                let score: f64 = left
                    .iter()
                    .zip(&total)
                    .map(|(l, t)| l * l / nl + (t - l) * (t - l) / nr)
                    .sum();
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let (lo, hi) = (column[k - 1].0, column[k].0);
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit { feature, threshold, score });
                }
            }
        }
        best
    }
}

/// Versioned little-endian binary model format.
///
/// ```text
/// "CNFOREST" u32:version
/// u64:n_trees u64:max_depth(u64::MAX = none) u64:min_samples_leaf u64:max_features u8:bootstrap u64:seed
/// per tree:  u64:node_count, then per node
///   u8:0 (leaf)  u32:samples f64[10]:value
///   u8:1 (split) u32:samples u16:feature f64:threshold u32:left u32:right
/// ```
mod codec {
    use super::*;

    const MAGIC: &[u8; 8] = b"CNFOREST";
    const VERSION: u32 = 1;

    pub(super) fn encode(forest: &RegressionForest) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let p = &forest.params;
        for v in [
            forest.trees.len() as u64,
            p.max_depth.map_or(u64::MAX, |d| d as u64),
            p.min_samples_leaf as u64,
            p.max_features as u64,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(u8::from(p.bootstrap));
        out.extend_from_slice(&forest.seed.to_le_bytes());
        for tree in &forest.trees {
            out.extend_from_slice(&(tree.nodes.len() as u64).to_le_bytes());
            for node in &tree.nodes {
                match node {
                    TreeNode::Leaf { value, samples } => {
                        out.push(0);
                        out.extend_from_slice(&samples.to_le_bytes());
                        for v in value.0 {
                            out.extend_from_slice(&v.to_bits().to_le_bytes());
                        }
                    }
                    TreeNode::Split { feature, threshold, left, right, samples } => {
                        out.push(1);
                        out.extend_from_slice(&samples.to_le_bytes());
                        out.extend_from_slice(&feature.to_le_bytes());
                        out.extend_from_slice(&threshold.to_bits().to_le_bytes());
                        out.extend_from_slice(&left.to_le_bytes());
                        out.extend_from_slice(&right.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    struct Reader<'a> {
        bytes: &'a [u8],
        at: usize,
    }

    impl Reader<'_> {
        fn take<const N: usize>(&mut self) -> Result<[u8; N], PredictionError> {
            let end = self.at + N;
            let slice = self
                .bytes
                .get(self.at..end)
                .ok_or_else(|| PredictionError::Model(format!("truncated at byte {}", self.at)))?;
            self.at = end;
            Ok(slice.try_into().expect("slice length is N"))
        }
        fn u8(&mut self) -> Result<u8, PredictionError> {
            Ok(self.take::<1>()?[0])
        }
        fn u16(&mut self) -> Result<u16, PredictionError> {
            Ok(u16::from_le_bytes(self.take()?))
        }
        fn u32(&mut self) -> Result<u32, PredictionError> {
            Ok(u32::from_le_bytes(self.take()?))
        }
        fn u64(&mut self) -> Result<u64, PredictionError> {
            Ok(u64::from_le_bytes(self.take()?))
        }
        fn f64(&mut self) -> Result<f64, PredictionError> {
            Ok(f64::from_bits(self.u64()?))
        }
    }

    pub(super) fn decode(bytes: &[u8]) -> Result<RegressionForest, PredictionError> {
        let bad = |m: String| PredictionError::Model(m);
        let mut r = Reader { bytes, at: 0 };
        if &r.take::<8>()? != MAGIC {
            return Err(bad("not a forest model (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported model version {version}")));
        }
        let n_trees = r.u64()? as usize;
        let max_depth = match r.u64()? {
            u64::MAX => None,
            d => Some(d as usize),
        };
        let min_samples_leaf = r.u64()? as usize;
        let max_features = r.u64()? as usize;
        let bootstrap = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(bad(format!("invalid bootstrap flag {b}"))),
        };
        let seed = r.u64()?;
        let params = ForestParams { n_trees, max_depth, min_samples_leaf, max_features, bootstrap };
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for t in 0..n_trees {
            let count = r.u64()? as usize;
            if count == 0 {
                return Err(bad(format!("tree {t} has no nodes")));
            }
            let mut nodes = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                let node = match r.u8()? {
                    0 => {
                        let samples = r.u32()?;
                        let mut value = [0.0; TARGET_COUNT];
                        for v in &mut value {
                            *v = r.f64()?;
                        }
                        TreeNode::Leaf { value: ForecastTargets(value), samples }
                    }
                    1 => {
                        let samples = r.u32()?;
                        let feature = r.u16()?;
                        let threshold = r.f64()?;
                        let left = r.u32()?;
                        let right = r.u32()?;
                        if feature as usize >= FEATURE_COUNT || left as usize >= count || right as usize >= count {
                            return Err(bad(format!("tree {t} has an out-of-range split")));
                        }
                        TreeNode::Split { feature, threshold, left, right, samples }
                    }
                    tag => return Err(bad(format!("unknown node tag {tag}"))),
                };
                nodes.push(node);
            }
            // children always follow their parent in the arena, so this rejects cycles
            for (i, node) in nodes.iter().enumerate() {
                if let TreeNode::Split { left, right, .. } = node {
                    if *left as usize <= i || *right as usize <= i {
                        return Err(bad(format!("tree {t} node {i} points backwards")));
                    }
                }
            }
            trees.push(RegressionTree { nodes });
        }
        if r.at != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        RegressionForest::from_trees(trees, params, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(x: f64, t: f64) -> Sample {
        let mut f = [0.0; FEATURE_COUNT];
        f[3] = x;
        f[7] = -x * 0.5;
        Sample {
            features: FeatureVector(f),
            targets: ForecastTargets([t; TARGET_COUNT]),
            origin: crate::grid::PixelPoint::default(),
        }
    }

    fn toy() -> Vec<Sample> {
        (0..40).map(|i| sample(i as f64, if i < 20 { 1.0 } else { 5.0 } + (i % 3) as f64)).collect()
    }

    #[test]
    fn depth_zero_tree_predicts_training_mean() {
        let data = toy();
        let params = ForestParams { n_trees: 1, max_depth: Some(0), bootstrap: false, ..Default::default() };
        let forest = fit_forest(&data, &params, 3).unwrap();
        let mean = data.iter().map(|s| s.targets.0[0]).sum::<f64>() / data.len() as f64;
        for s in &data {
            assert!((forest.predict(&s.features).0[4] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn memorizes_with_unbounded_single_tree() {
        let data = toy();
        let params = ForestParams { n_trees: 1, max_depth: None, min_samples_leaf: 1, bootstrap: false, ..Default::default() };
        let forest = fit_forest(&data, &params, 11).unwrap();
        for s in &data {
            assert_eq!(forest.predict(&s.features), s.targets);
        }
    }

    #[test]
    fn leaves_respect_min_samples() {
        let params = ForestParams { n_trees: 3, min_samples_leaf: 4, ..Default::default() };
        let forest = fit_forest(&toy(), &params, 5).unwrap();
        for tree in forest.trees() {
            for node in tree.nodes() {
                if let TreeNode::Leaf { samples, .. } = node {
                    assert!(*samples >= 4);
                }
            }
        }
    }

    #[test]
    fn empty_training_set_and_bad_params() {
        assert!(matches!(fit_forest(&[], &ForestParams::default(), 0), Err(PredictionError::EmptyTrainingSet)));
        let bad = ForestParams { n_trees: 0, ..Default::default() };
        assert!(fit_forest(&toy(), &bad, 0).is_err());
    }

    #[test]
    fn two_tree_average() {
        let data = toy();
        let params = ForestParams { n_trees: 2, min_samples_leaf: 1, ..Default::default() };
        let forest = fit_forest(&data, &params, 21).unwrap();
        let probe = &data[13].features;
        let v = forest.trees()[0].predict(probe).0;
        let w = forest.trees()[1].predict(probe).0;
        let expected: Vec<f64> = v.iter().zip(w).map(|(a, b)| (a + b) / 2.0).collect();
        assert_eq!(forest.predict(probe).0.to_vec(), expected);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let forest = fit_forest(&toy(), &ForestParams { n_trees: 4, ..Default::default() }, 8).unwrap();
        let bytes = forest.to_bytes();
        let back = RegressionForest::from_bytes(&bytes).unwrap();
        assert_eq!(back, forest);
        assert_eq!(back.to_bytes(), bytes);
        assert!(RegressionForest::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(RegressionForest::from_bytes(b"NOTAFORESTFILE").is_err());
    }
}
