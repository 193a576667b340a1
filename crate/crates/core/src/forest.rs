//! Forests of trees grown on weighted bootstrap resamples.

use rand::distributions::{Distribution, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, derive_seed};
use crate::tree::{self, TreeConfig, TreeModel};

/// Tolerance on the sum of a sample-weight distribution.
pub const DISTRIBUTION_TOL: f64 = 1e-9;

/// How the sample distribution enters tree fitting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleWeighting {
    /// Bootstrap draws proportional to the weights; drawn samples count once per draw.
    #[default]
    Resample,
    /// Uniform bootstrap; the weights scale each sample's contribution to the impurity.
    WeightedImpurity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeConfig,
    pub bootstrap: bool,
    pub weighting: SampleWeighting,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            tree: TreeConfig::default(),
            bootstrap: true,
            weighting: SampleWeighting::Resample,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("a forest needs at least one tree".into()));
        }
        self.tree.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    config: ForestConfig,
}

/// Checks that `weights` is a probability distribution over `m` samples.
pub fn check_distribution(weights: &[f64], m: usize) -> Result<()> {
    if weights.len() != m {
        return Err(Error::Weights(format!("{} weights for {m} samples", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::Weights(format!("weight {w} is negative or non-finite")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(Error::Weights(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Bootstrap draw counts for tree `tree_index`; the RNG depends only on the
/// forest seed and the tree index. Without bootstrap every sample counts once.
pub fn draw_counts(weights: &[f64], config: &ForestConfig, tree_index: usize) -> Vec<u32> {
    let m = weights.len();
    if !config.bootstrap {
        return vec![1; m];
    }
    let mut rng = rng::seeded(derive_seed(config.seed, 2 * tree_index as u64));
    let mut counts = vec![0u32; m];
    match config.weighting {
        SampleWeighting::Resample => {
            let dist = WeightedIndex::new(weights).expect("weights checked to form a distribution");
            for _ in 0..m {
                counts[dist.sample(&mut rng)] += 1;
            }
        }
        SampleWeighting::WeightedImpurity => {
            let dist = rand::distributions::Uniform::new(0, m);
            for _ in 0..m {
                counts[dist.sample(&mut rng)] += 1;
            }
        }
    }
    counts
}

/// `(row, weight)` entries handed to the tree grower.
fn tree_entries(weights: &[f64], config: &ForestConfig, tree_index: usize) -> Vec<(u32, f64)> {
    let m = weights.len() as f64;
    let counts = draw_counts(weights, config, tree_index);
    let resampled = config.bootstrap && config.weighting == SampleWeighting::Resample;
    counts
        .iter()
        .zip(weights)
        .map(|(&c, &w)| if resampled { f64::from(c) } else { f64::from(c) * w * m })
        .enumerate()
        .filter(|(_, w)| *w > 0.0)
        .map(|(i, w)| (i as u32, w))
        .collect()
}

/// Fits `n_trees` trees, each on `m` weighted draws with replacement.
///
/// Trees are grown in parallel; tree `i` uses seeds derived from
/// `(config.seed, i)`, so the result does not depend on scheduling.
pub fn fit_forest(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    sample_weights: &[f64],
    config: &ForestConfig,
) -> Result<ForestModel> {
    config.validate()?;
    let m = features.rows();
    if m == 0 {
        return Err(Error::Data("cannot fit a forest on empty input".into()));
    }
    if labels.len() != m {
        return Err(Error::Data(format!("{m} rows but {} labels", labels.len())));
    }
    check_distribution(sample_weights, m)?;
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let entries = tree_entries(sample_weights, config, t);
            let tree_cfg = TreeConfig {
                seed: derive_seed(config.seed, 2 * t as u64 + 1),
                ..config.tree.clone()
            };
            tree::fit_entries(features, labels, n_classes, entries, &tree_cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        trees,
        config: config.clone(),
    })
}

impl ForestModel {
    /// Builds a forest from already fitted trees.
    pub fn from_trees(trees: Vec<TreeModel>, config: ForestConfig) -> Result<Self> {
        let first = trees
            .first()
            .ok_or_else(|| Error::Config("a forest needs at least one tree".into()))?;
        let (n, s) = (first.n_features(), first.n_classes());
        if trees.iter().any(|t| t.n_features() != n || t.n_classes() != s) {
            return Err(Error::Data("trees disagree on input width or class count".into()));
        }
        Ok(ForestModel { trees, config })
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.trees[0].n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.trees[0].n_classes()
    }

    /// Mean of the tree outputs.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.n_classes()];
        self.accumulate(x, 1.0, &mut out);
        Ok(out)
    }

    /// Adds `scale * predict(x)` to `out` without checking widths.
    pub(crate) fn accumulate(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let w = scale / self.trees.len() as f64;
        for t in &self.trees {
            for (o, p) in out.iter_mut().zip(t.predict_unchecked(x)) {
                *o += w * p;
            }
        }
    }
}
