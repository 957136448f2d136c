//! Random-forest classifier built from scratch: CART trees grown on Gini
//! impurity, bootstrap bagging, a fresh random feature subset at every node,
//! and majority-vote prediction.
//!
//! Training is deterministic: tree `t` draws everything from the stream
//! derived from `(config.seed, t)`, so the model is a pure function of
//! (training data, config) no matter how many threads run.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

mod io;

pub use io::{load_model, save_model};

/// Hyperparameters. The defaults mirror the classification defaults of the
/// widely used R randomForest implementation: 500 trees, `mtry =
/// floor(sqrt(p))`, node size 1, unlimited depth, bootstrap on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features considered per node; `None` resolves to `floor(sqrt(p))`.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            mtry: None,
            min_node_size: 1,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, feature_len: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| ((feature_len as f64).sqrt().floor() as usize).max(1))
    }

    fn validate(&self, feature_len: usize) -> Result<usize> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(Error::InvalidArgument("min_node_size must be at least 1".into()));
        }
        let mtry = self.resolved_mtry(feature_len);
        if mtry == 0 || mtry > feature_len {
            return Err(Error::InvalidArgument(format!(
                "mtry {mtry} outside [1, {feature_len}]"
            )));
        }
        Ok(mtry)
    }
}

/// Tree node in a flat arena; `left`/`right` index into the owning tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf { class_counts: Vec<u32> },
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

/// One CART tree. `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Routes `features` to a leaf and returns its class counts.
    pub fn leaf_counts(&self, features: &[u8]) -> &[u32] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class_counts } => return class_counts,
                Node::Split { feature, threshold, left, right } => {
                    at = if (features[*feature as usize] as f64) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    /// Majority class at the routed leaf; ties go to the lowest class index.
    pub fn predict(&self, features: &[u8], feature_len: usize) -> Result<usize> {
        if features.len() != feature_len {
            return Err(Error::shape(
                format!("feature length {feature_len}"),
                format!("{}", features.len()),
            ));
        }
        Ok(argmax(self.leaf_counts(features)))
    }
}

/// Index of the largest count; ties resolve to the lowest index.
fn argmax(counts: &[u32]) -> usize {
    let mut best = 0usize;
    for (i, &c) in counts.iter().enumerate().skip(1) {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn argmax_f64(votes: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &v) in votes.iter().enumerate().skip(1) {
        if v > votes[best] {
            best = i;
        }
    }
    best
}

/// Gini impurity `1 - sum((count_i / total)^2)`.
pub fn gini(class_counts: &[u32]) -> Result<f64> {
    let total: u64 = class_counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(Error::InvalidArgument("gini of all-zero counts".into()));
    }
    Ok(gini_unchecked(class_counts, total as f64))
}

fn gini_unchecked(class_counts: &[u32], total: f64) -> f64 {
    let mut sum_sq = 0.0;
    for &c in class_counts {
        let p = c as f64 / total;
        sum_sq += p * p;
    }
    1.0 - sum_sq
}

/// Winning split for a node, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Exhaustive search over `feature_subset` and midpoint thresholds for the
/// split with the largest weighted Gini decrease. Returns `None` when no
/// split has positive gain. Ties break to the lowest feature index, then the
/// lowest threshold (guaranteed by ascending iteration plus strict `>`).
pub fn best_split(train: &Dataset, indices: &[usize], feature_subset: &[usize]) -> Option<Split> {
    let n_classes = train.n_classes();
    let total = indices.len();
    if total < 2 {
        return None;
    }
    let samples = train.samples();

    let mut parent_counts = vec![0u32; n_classes];
    for &i in indices {
        parent_counts[samples[i].label] += 1;
    }
    let parent_gini = gini_unchecked(&parent_counts, total as f64);

    let mut best: Option<Split> = None;
    let mut pairs: Vec<(u8, usize)> = Vec::with_capacity(total);
    for &f in feature_subset {
        pairs.clear();
        pairs.extend(
            indices
                .iter()
                .map(|&i| (samples[i].features.values()[f], samples[i].label)),
        );
        pairs.sort_unstable_by_key(|&(v, _)| v);
        if pairs[0].0 == pairs[total - 1].0 {
            continue; // constant feature, no candidate thresholds
        }

        let mut left_counts = vec![0u32; n_classes];
        let mut right_counts = parent_counts.clone();
        for w in 0..total - 1 {
            let (value, label) = pairs[w];
            left_counts[label] += 1;
            right_counts[label] -= 1;
            if value == pairs[w + 1].0 {
                continue;
            }
            let left_n = (w + 1) as f64;
            let right_n = (total - w - 1) as f64;
            let weighted = (left_n * gini_unchecked(&left_counts, left_n)
                + right_n * gini_unchecked(&right_counts, right_n))
                / total as f64;
            let gain = parent_gini - weighted;
            if gain > 0.0 && best.is_none_or(|b| gain > b.gain) {
                best = Some(Split {
                    feature: f,
                    threshold: (value as f64 + pairs[w + 1].0 as f64) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

/// `n` indices drawn uniformly with replacement from `[0, n)`.
pub fn bootstrap_sample(n: usize, rng: &mut SplitMix64) -> Vec<usize> {
    (0..n).map(|_| rng.next_below(n as u64) as usize).collect()
}

/// Grows one CART tree over `indices`. A node becomes a leaf when it is
/// pure, smaller than `2 * min_node_size`, at the depth limit, or when no
/// split over a fresh mtry-subset yields positive gain.
pub fn grow_tree(
    train: &Dataset,
    indices: Vec<usize>,
    config: &ForestConfig,
    rng: &mut SplitMix64,
) -> Result<Tree> {
    if indices.is_empty() {
        return Err(Error::EmptyInput("cannot grow a tree from no samples".into()));
    }
    let mtry = config.validate(train.feature_len())?;
    let n_classes = train.n_classes();
    let samples = train.samples();

    let placeholder = Node::Leaf { class_counts: Vec::new() };
    let mut nodes = vec![placeholder.clone()];
    // DFS with the left child processed first, so per-node RNG draws happen
    // in a fixed preorder regardless of how the arena fills.
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, indices, 0)];

    while let Some((slot, node_indices, depth)) = stack.pop() {
        let mut counts = vec![0u32; n_classes];
        for &i in &node_indices {
            counts[samples[i].label] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let too_small = node_indices.len() < 2 * config.min_node_size;
        let at_depth_limit = config.max_depth.is_some_and(|d| depth >= d);

        let split = if pure || too_small || at_depth_limit {
            None
        } else {
            let mut subset = rng.sample_indices(train.feature_len(), mtry);
            subset.sort_unstable();
            best_split(train, &node_indices, &subset)
        };

        match split {
            None => nodes[slot] = Node::Leaf { class_counts: counts },
            Some(s) => {
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = node_indices
                    .into_iter()
                    .partition(|&i| (samples[i].features.values()[s.feature] as f64) <= s.threshold);
                let left_slot = nodes.len();
                nodes.push(placeholder.clone());
                let right_slot = nodes.len();
                nodes.push(placeholder.clone());
                nodes[slot] = Node::Split {
                    feature: s.feature as u32,
                    threshold: s.threshold,
                    left: left_slot as u32,
                    right: right_slot as u32,
                };
                stack.push((right_slot, right_idx, depth + 1));
                stack.push((left_slot, left_idx, depth + 1));
            }
        }
    }
    Ok(Tree { nodes })
}

/// Trained ensemble plus everything needed to apply and persist it.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    config: ForestConfig,
    label_names: Vec<String>,
    feature_len: usize,
    /// Per-tree in-bag flags, retained only on freshly trained bootstrap
    /// models (not serialized); empty otherwise.
    in_bag: Vec<Vec<bool>>,
}

impl ForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// The training config with `mtry` resolved.
    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn feature_len(&self) -> usize {
        self.feature_len
    }

    pub fn n_classes(&self) -> usize {
        self.label_names.len()
    }

    fn check_features(&self, features: &[u8]) -> Result<()> {
        if features.len() != self.feature_len {
            return Err(Error::shape(
                format!("feature length {}", self.feature_len),
                format!("{}", features.len()),
            ));
        }
        Ok(())
    }

    fn votes(&self, features: &[u8]) -> Vec<u32> {
        let mut votes = vec![0u32; self.n_classes()];
        for tree in &self.trees {
            votes[argmax(tree.leaf_counts(features))] += 1;
        }
        votes
    }

    /// Majority vote across trees; ties go to the lowest class index.
    pub fn predict(&self, features: &[u8]) -> Result<usize> {
        self.check_features(features)?;
        Ok(argmax(&self.votes(features)))
    }

    /// Per-class vote fractions; sums to 1.
    pub fn predict_proba(&self, features: &[u8]) -> Result<Vec<f64>> {
        self.check_features(features)?;
        let n = self.trees.len() as f64;
        Ok(self.votes(features).iter().map(|&v| v as f64 / n).collect())
    }

    pub fn predict_proba_argmax(&self, features: &[u8]) -> Result<(usize, Vec<f64>)> {
        let proba = self.predict_proba(features)?;
        Ok((argmax_f64(&proba), proba))
    }
}

/// Trains `config.n_trees` trees, each on its own derived RNG stream and
/// (by default) its own bootstrap resample. Trees train in parallel; the
/// resulting model does not depend on thread count.
pub fn train_forest(train: &Dataset, config: &ForestConfig) -> Result<ForestModel> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    let mtry = config.validate(train.feature_len())?;

    let grown: Vec<Result<(Tree, Vec<bool>)>> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = SplitMix64::stream(config.seed, t as u64);
            let (indices, bag) = if config.bootstrap {
                let indices = bootstrap_sample(train.len(), &mut rng);
                let mut bag = vec![false; train.len()];
                for &i in &indices {
                    bag[i] = true;
                }
                (indices, bag)
            } else {
                ((0..train.len()).collect(), Vec::new())
            };
            Ok((grow_tree(train, indices, config, &mut rng)?, bag))
        })
        .collect();

    let mut trees = Vec::with_capacity(config.n_trees);
    let mut in_bag = Vec::with_capacity(if config.bootstrap { config.n_trees } else { 0 });
    for g in grown {
        let (tree, bag) = g?;
        trees.push(tree);
        if config.bootstrap {
            in_bag.push(bag);
        }
    }

    Ok(ForestModel {
        trees,
        config: ForestConfig {
            mtry: Some(mtry),
            ..config.clone()
        },
        label_names: train.label_names().to_vec(),
        feature_len: train.feature_len(),
        in_bag,
    })
}

/// Out-of-bag accuracy: each training sample is voted on only by trees whose
/// bootstrap bag excluded it; samples never out of bag are left out of the
/// denominator.
pub fn oob_accuracy(model: &ForestModel, train: &Dataset) -> Result<f64> {
    if !model.config.bootstrap || model.in_bag.len() != model.trees.len() {
        return Err(Error::NotApplicable(
            "out-of-bag accuracy needs a freshly trained bootstrap model".into(),
        ));
    }
    if train.len() != model.in_bag[0].len() || train.feature_len() != model.feature_len {
        return Err(Error::InvalidArgument(
            "dataset does not match the one the model was trained on".into(),
        ));
    }
    let mut voted = 0usize;
    let mut correct = 0usize;
    for (i, sample) in train.samples().iter().enumerate() {
        let mut votes = vec![0u32; model.n_classes()];
        let mut any = false;
        for (t, tree) in model.trees.iter().enumerate() {
            if !model.in_bag[t][i] {
                votes[argmax(tree.leaf_counts(sample.features.values()))] += 1;
                any = true;
            }
        }
        if any {
            voted += 1;
            if argmax(&votes) == sample.label {
                correct += 1;
            }
        }
    }
    if voted == 0 {
        return Err(Error::Undefined("no sample was ever out of bag".into()));
    }
    Ok(correct as f64 / voted as f64)
}
