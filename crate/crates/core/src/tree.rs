//! Single classification trees.
//!
//! Two growth rules are supported: impurity-guided splits over a random
//! subset of features (the random-forest tree), and completely random
//! splits where both the feature and the threshold are drawn at random.
//! Leaves store weight-normalized class histograms.

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, Rng};

/// Ties in impurity closer than this are resolved by the ordering rule.
pub(crate) const IMPURITY_TIE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeKind {
    /// Best Gini split among a random subset of features.
    RandomSubset,
    /// Uniformly random feature and threshold.
    CompletelyRandom,
}

/// Number of features examined at each split of a random-subset tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCandidates {
    Sqrt,
    All,
    Fixed(usize),
}

impl FeatureCandidates {
    pub fn resolve(self, n_features: usize) -> Result<usize> {
        match self {
            FeatureCandidates::Sqrt => Ok(((n_features as f64).sqrt() as usize).max(1)),
            FeatureCandidates::All => Ok(n_features),
            FeatureCandidates::Fixed(k) if k >= 1 && k <= n_features => Ok(k),
            FeatureCandidates::Fixed(k) => Err(Error::Config(format!(
                "{k} feature candidates requested but data has {n_features} features"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub kind: TreeKind,
    /// Maximum number of splits on any root-to-leaf path. `usize::MAX` means unlimited.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub feature_candidates: FeatureCandidates,
    pub seed: u64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            kind: TreeKind::RandomSubset,
            max_depth: usize::MAX,
            min_samples_leaf: 1,
            feature_candidates: FeatureCandidates::Sqrt,
            seed: 0,
        }
    }
}

impl TreeConfig {
    pub fn random_subset(max_depth: usize, seed: u64) -> Self {
        TreeConfig {
            max_depth,
            seed,
            ..TreeConfig::default()
        }
    }

    pub fn completely_random(max_depth: usize, seed: u64) -> Self {
        TreeConfig {
            kind: TreeKind::CompletelyRandom,
            max_depth,
            seed,
            ..TreeConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if let FeatureCandidates::Fixed(0) = self.feature_candidates {
            return Err(Error::Config("feature candidate count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    /// `offset` indexes the tree's flat leaf-value storage; `mass` is the
    /// training weight that reached the leaf.
    Leaf { offset: u32, mass: f64 },
}

/// A fitted tree. Node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    n_features: usize,
    n_classes: usize,
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
}

impl TreeModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Class distribution stored at a leaf offset.
    pub fn leaf_distribution(&self, offset: u32) -> &[f64] {
        let o = offset as usize;
        &self.leaf_values[o..o + self.n_classes]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Longest root-to-leaf path, counted in splits.
    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((node, d)) = stack.pop() {
            match self.nodes[node] {
                Node::Split { left, right, .. } => {
                    stack.push((left as usize, d + 1));
                    stack.push((right as usize, d + 1));
                }
                Node::Leaf { .. } => max = max.max(d),
            }
        }
        max
    }

    /// Leaf distribution for `x`, checking its width.
    pub fn predict(&self, x: &[f64]) -> Result<&[f64]> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> &[f64] {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
                Node::Leaf { offset, .. } => return self.leaf_distribution(offset),
            }
        }
    }
}

/// Gini impurity of a class-mass vector: `1 - sum p_c^2`.
pub fn gini(class_mass: &[f64]) -> f64 {
    let total: f64 = class_mass.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - class_mass.iter().map(|&w| (w / total) * (w / total)).sum::<f64>()
}

/// Fits a tree on all rows with positive weight.
pub fn fit_tree(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    sample_weights: &[f64],
    config: &TreeConfig,
) -> Result<TreeModel> {
    let m = features.rows();
    if m == 0 || features.cols() == 0 {
        return Err(Error::Data("cannot fit a tree on empty input".into()));
    }
    if labels.len() != m || sample_weights.len() != m {
        return Err(Error::Data(format!(
            "{m} rows but {} labels and {} weights",
            labels.len(),
            sample_weights.len()
        )));
    }
    if let Some(w) = sample_weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::Weights(format!("weight {w} is negative or non-finite")));
    }
    let entries: Vec<(u32, f64)> = sample_weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| (i as u32, w))
        .collect();
    fit_entries(features, labels, n_classes, entries, config)
}

/// Fits on explicit `(row, weight)` entries; every weight must be positive.
pub(crate) fn fit_entries(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    entries: Vec<(u32, f64)>,
    config: &TreeConfig,
) -> Result<TreeModel> {
    config.validate()?;
    if entries.is_empty() {
        return Err(Error::Weights("all sample weights are zero".into()));
    }
    if n_classes == 0 {
        return Err(Error::Data("n_classes must be positive".into()));
    }
    if let Some(&(i, _)) = entries.iter().find(|(i, _)| labels[*i as usize] >= n_classes) {
        return Err(Error::Data(format!(
            "label {} out of range for {n_classes} classes",
            labels[i as usize]
        )));
    }
    let n_candidates = match config.kind {
        TreeKind::RandomSubset => config.feature_candidates.resolve(features.cols())?,
        TreeKind::CompletelyRandom => 1,
    };
    let mut builder = Builder {
        x: features,
        y: labels,
        n_classes,
        config,
        n_candidates,
        rng: rng::seeded(config.seed),
        nodes: Vec::new(),
        leaf_values: Vec::new(),
        pure_offsets: vec![None; n_classes],
        feature_perm: (0..features.cols()).collect(),
        sorted: Vec::new(),
    };
    builder.grow(entries);
    Ok(TreeModel {
        n_features: features.cols(),
        n_classes,
        nodes: builder.nodes,
        leaf_values: builder.leaf_values,
    })
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    config: &'a TreeConfig,
    n_candidates: usize,
    rng: Rng,
    nodes: Vec<Node>,
    leaf_values: Vec<f64>,
    /// Pure leaves of the same class share one stored distribution.
    pure_offsets: Vec<Option<u32>>,
    feature_perm: Vec<usize>,
    sorted: Vec<(f64, usize, f64)>,
}

impl Builder<'_> {
    fn grow(&mut self, mut entries: Vec<(u32, f64)>) {
        // (node index, range start, range end, depth); node slots are reserved before children.
        self.nodes.push(Node::Leaf { offset: 0, mass: 0.0 });
        let mut stack = vec![(0usize, 0usize, entries.len(), 0usize)];
        let mut hist = vec![0.0; self.n_classes];
        while let Some((node, start, end, depth)) = stack.pop() {
            let range = &mut entries[start..end];
            hist.iter_mut().for_each(|h| *h = 0.0);
            for &(i, w) in range.iter() {
                hist[self.y[i as usize]] += w;
            }
            let pure = hist.iter().filter(|&&h| h > 0.0).count() <= 1;
            let too_small = range.len() < 2 * self.config.min_samples_leaf;
            let choice = if pure || too_small || depth >= self.config.max_depth {
                None
            } else {
                match self.config.kind {
                    TreeKind::RandomSubset => self.best_split(range),
                    TreeKind::CompletelyRandom => self.random_split(range),
                }
            };
            match choice {
                None => self.make_leaf(node, &hist),
                Some(SplitChoice { feature, threshold }) => {
                    let n_left = partition(range, |&(i, _)| self.x.get(i as usize, feature) <= threshold);
                    let left = self.nodes.len();
                    self.nodes.push(Node::Leaf { offset: 0, mass: 0.0 });
                    self.nodes.push(Node::Leaf { offset: 0, mass: 0.0 });
                    self.nodes[node] = Node::Split {
                        feature: feature as u32,
                        threshold,
                        left: left as u32,
                        right: left as u32 + 1,
                    };
                    stack.push((left + 1, start + n_left, end, depth + 1));
                    stack.push((left, start, start + n_left, depth + 1));
                }
            }
        }
    }

    fn make_leaf(&mut self, node: usize, hist: &[f64]) {
        let mass: f64 = hist.iter().sum();
        let mut nonzero = hist.iter().enumerate().filter(|(_, &h)| h > 0.0).map(|(c, _)| c);
        let pure_class = match (nonzero.next(), nonzero.next()) {
            (Some(c), None) => Some(c),
            _ => None,
        };
        let offset = match pure_class.and_then(|c| self.pure_offsets[c]) {
            Some(offset) => offset,
            None => {
                let offset = self.leaf_values.len() as u32;
                self.leaf_values.extend(hist.iter().map(|h| h / mass));
                if let Some(c) = pure_class {
                    self.pure_offsets[c] = Some(offset);
                }
                offset
            }
        };
        self.nodes[node] = Node::Leaf { offset, mass };
    }

    /// Lowest weighted child Gini over the drawn features; ties keep the
    /// lower feature index, then the smaller threshold.
    fn best_split(&mut self, range: &[(u32, f64)]) -> Option<SplitChoice> {
        let n = self.x.cols();
        let mut candidates = index::sample(&mut self.rng, n, self.n_candidates).into_vec();
        candidates.sort_unstable();
        let msl = self.config.min_samples_leaf;
        let s = self.n_classes;
        let mut best: Option<(f64, SplitChoice)> = None;
        let mut left = vec![0.0; s];
        let mut right = vec![0.0; s];
        for &f in &candidates {
            self.sorted.clear();
            self.sorted.extend(
                range
                    .iter()
                    .map(|&(i, w)| (self.x.get(i as usize, f), self.y[i as usize], w)),
            );
            self.sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let cnt = self.sorted.len();
            if self.sorted[0].0 == self.sorted[cnt - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|h| *h = 0.0);
            right.iter_mut().for_each(|h| *h = 0.0);
            for &(_, c, w) in &self.sorted {
                right[c] += w;
            }
            let total: f64 = right.iter().sum();
            for k in 0..cnt - 1 {
                let (v, c, w) = self.sorted[k];
                left[c] += w;
                right[c] -= w;
                let next = self.sorted[k + 1].0;
                if v == next || k + 1 < msl || cnt - k - 1 < msl {
                    continue;
                }
                let wl: f64 = left.iter().sum();
                let wr = total - wl;
                let impurity = (wl * gini(&left) + wr * gini(&right)) / total;
                if best.as_ref().is_none_or(|(b, _)| impurity < *b - IMPURITY_TIE_EPS) {
                    best = Some((
                        impurity,
                        SplitChoice {
                            feature: f,
                            threshold: midpoint(v, next),
                        },
                    ));
                }
            }
        }
        best.map(|(_, c)| c)
    }

    /// Uniform feature among those not constant on the node, uniform threshold in `[min, max)`.
    fn random_split(&mut self, range: &[(u32, f64)]) -> Option<SplitChoice> {
        let n = self.x.cols();
        for k in 0..n {
            let j = self.rng.gen_range(k..n);
            self.feature_perm.swap(k, j);
            let f = self.feature_perm[k];
            let (lo, hi) = range
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(i, _)| {
                    let v = self.x.get(i as usize, f);
                    (lo.min(v), hi.max(v))
                });
            if lo < hi {
                let mut threshold = lo + self.rng.gen::<f64>() * (hi - lo);
                if threshold >= hi {
                    threshold = lo;
                }
                let msl = self.config.min_samples_leaf;
                if msl > 1 {
                    let n_left = range
                        .iter()
                        .filter(|&&(i, _)| self.x.get(i as usize, f) <= threshold)
                        .count();
                    if n_left < msl || range.len() - n_left < msl {
                        return None;
                    }
                }
                return Some(SplitChoice { feature: f, threshold });
            }
        }
        None
    }
}

/// Midpoint of two distinct sorted values, kept strictly below `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Moves elements satisfying `pred` to the front; returns how many there are.
fn partition<T>(slice: &mut [T], mut pred: impl FnMut(&T) -> bool) -> usize {
    let mut first = 0;
    for i in 0..slice.len() {
        if pred(&slice[i]) {
            slice.swap(first, i);
            first += 1;
        }
    }
    first
}
