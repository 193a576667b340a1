//! Cross-fitted forest blocks: the per-layer learner of the cascade.
//!
//! The training set is split into `k` folds. For each fold, every configured
//! forest is fitted on the other `k - 1` folds. A training sample's
//! out-of-fold prediction comes only from the forests that never saw it;
//! unseen inputs are scored by the mean over all `k x |forests|` models.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{self, ForestConfig, ForestModel};
use crate::matrix::Matrix;
use crate::rng::{self, derive_seed};
use crate::tree::{FeatureCandidates, TreeConfig, TreeKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub k_folds: usize,
    pub forests: Vec<ForestConfig>,
    /// Deal folds per class instead of over the whole set.
    pub stratified_folds: bool,
    /// Emit each forest's class vector side by side instead of their mean.
    pub per_forest_concat: bool,
    pub seed: u64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig {
            k_folds: 5,
            forests: default_forests(100, usize::MAX),
            stratified_folds: false,
            per_forest_concat: false,
            seed: 0,
        }
    }
}

/// Two random forests and two completely-random forests.
pub fn default_forests(n_trees: usize, max_depth: usize) -> Vec<ForestConfig> {
    let rf = ForestConfig {
        n_trees,
        tree: TreeConfig {
            kind: TreeKind::RandomSubset,
            max_depth,
            feature_candidates: FeatureCandidates::Sqrt,
            ..TreeConfig::default()
        },
        ..ForestConfig::default()
    };
    let crf = ForestConfig {
        tree: TreeConfig {
            kind: TreeKind::CompletelyRandom,
            ..rf.tree.clone()
        },
        ..rf.clone()
    };
    vec![rf.clone(), rf, crf.clone(), crf]
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::Config(format!("k_folds = {} must be at least 2", self.k_folds)));
        }
        if self.forests.is_empty() {
            return Err(Error::Config("a block needs at least one forest".into()));
        }
        self.forests.iter().try_for_each(ForestConfig::validate)
    }
}

/// A fitted block: `fold_models[i][q]` is forest `q` trained without fold `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestBlock {
    fold_models: Vec<Vec<ForestModel>>,
    fold_assignment: Vec<usize>,
    input_dim: usize,
    n_classes: usize,
    per_forest_concat: bool,
}

/// Result of [`fit_block`].
#[derive(Clone, Debug)]
pub struct BlockFit {
    pub block: ForestBlock,
    /// `m x s` out-of-fold class probabilities.
    pub oof_predictions: Matrix,
    /// `m x output_width` out-of-fold representation; equals
    /// `oof_predictions` unless per-forest concatenation is on.
    pub oof_features: Matrix,
}

/// Random fold labels whose class sizes differ by at most one.
pub fn assign_folds(labels: &[usize], k: usize, stratified: bool, seed: u64) -> Vec<usize> {
    let m = labels.len();
    let mut rng = rng::seeded(seed);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut rng);
    if stratified {
        // stable sort keeps the shuffled order within each class
        order.sort_by_key(|&i| labels[i]);
    }
    let mut folds = vec![0; m];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    folds
}

pub fn fit_block(
    inputs: &Matrix,
    labels: &[usize],
    n_classes: usize,
    sample_weights: &[f64],
    config: &BlockConfig,
) -> Result<BlockFit> {
    config.validate()?;
    let m = inputs.rows();
    if labels.len() != m {
        return Err(Error::Data(format!("{m} rows but {} labels", labels.len())));
    }
    if config.k_folds > m {
        return Err(Error::Config(format!(
            "k_folds = {} exceeds the {m} training samples",
            config.k_folds
        )));
    }
    forest::check_distribution(sample_weights, m)?;
    let k = config.k_folds;
    let q = config.forests.len();
    let folds = assign_folds(labels, k, config.stratified_folds, derive_seed(config.seed, 0));

    let complements: Vec<Vec<usize>> = (0..k).map(|i| (0..m).filter(|&j| folds[j] != i).collect()).collect();
    let train_sets: Vec<(Matrix, Vec<usize>, Vec<f64>)> = complements
        .par_iter()
        .enumerate()
        .map(|(i, rows)| {
            let y: Vec<usize> = rows.iter().map(|&j| labels[j]).collect();
            if y.iter().all(|&c| c == y[0]) {
                log::warn!("fold {i}: training complement holds a single class");
            }
            let mass: f64 = rows.iter().map(|&j| sample_weights[j]).sum();
            let w: Vec<f64> = if mass > 0.0 {
                rows.iter().map(|&j| sample_weights[j] / mass).collect()
            } else {
                vec![1.0 / rows.len() as f64; rows.len()]
            };
            (inputs.select_rows(rows), y, w)
        })
        .collect();

    let flat: Vec<ForestModel> = (0..k * q)
        .into_par_iter()
        .map(|cell| {
            let (i, f) = (cell / q, cell % q);
            let (x, y, w) = &train_sets[i];
            let cfg = ForestConfig {
                seed: derive_seed(derive_seed(config.seed, i as u64 + 1), f as u64) ^ config.forests[f].seed,
                ..config.forests[f].clone()
            };
            forest::fit_forest(x, y, n_classes, w, &cfg)
        })
        .collect::<Result<_>>()?;
    let mut fold_models: Vec<Vec<ForestModel>> = Vec::with_capacity(k);
    let mut it = flat.into_iter();
    for _ in 0..k {
        fold_models.push(it.by_ref().take(q).collect());
    }

    let block = ForestBlock {
        fold_models,
        fold_assignment: folds,
        input_dim: inputs.cols(),
        n_classes,
        per_forest_concat: config.per_forest_concat,
    };

    let width = block.output_width();
    let mut oof_predictions = Matrix::zeros(m, n_classes);
    let mut oof_features = Matrix::zeros(m, width);
    oof_predictions
        .as_rows_mut()
        .zip(oof_features.as_rows_mut())
        .enumerate()
        .for_each(|(j, (pred, feat))| {
            let x = inputs.row(j);
            let models = &block.fold_models[block.fold_assignment[j]];
            for (f, model) in models.iter().enumerate() {
                if block.per_forest_concat {
                    model.accumulate(x, 1.0, &mut feat[f * n_classes..(f + 1) * n_classes]);
                }
                model.accumulate(x, 1.0 / q as f64, pred);
            }
            if !block.per_forest_concat {
                feat.copy_from_slice(pred);
            }
        });

    Ok(BlockFit {
        block,
        oof_predictions,
        oof_features,
    })
}

impl ForestBlock {
    /// A block made of one forest trained on all data (no cross-fitting).
    pub fn single(forest: ForestModel) -> Self {
        ForestBlock {
            input_dim: forest.n_features(),
            n_classes: forest.n_classes(),
            fold_models: vec![vec![forest]],
            fold_assignment: Vec::new(),
            per_forest_concat: false,
        }
    }

    pub fn fold_models(&self) -> &[Vec<ForestModel>] {
        &self.fold_models
    }

    /// Fold index of every training sample (empty for [`ForestBlock::single`]).
    pub fn fold_assignment(&self) -> &[usize] {
        &self.fold_assignment
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_forests(&self) -> usize {
        self.fold_models[0].len()
    }

    pub fn per_forest_concat(&self) -> bool {
        self.per_forest_concat
    }

    /// Width of [`ForestBlock::predict_features`].
    pub fn output_width(&self) -> usize {
        if self.per_forest_concat {
            self.n_classes * self.n_forests()
        } else {
            self.n_classes
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Mean class probabilities over every fold model.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = vec![0.0; self.n_classes];
        let scale = 1.0 / (self.fold_models.len() * self.n_forests()) as f64;
        for models in &self.fold_models {
            for model in models {
                model.accumulate(x, scale, &mut out);
            }
        }
        Ok(out)
    }

    /// The block's representation of `x`: the class-probability mean, or the
    /// per-forest fold means side by side.
    pub fn predict_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = vec![0.0; self.output_width()];
        self.accumulate_features(x, 1.0, &mut out);
        Ok(out)
    }

    /// Adds `scale * predict_features(x)` to `out` without checking widths.
    pub(crate) fn accumulate_features(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let s = self.n_classes;
        let k = self.fold_models.len() as f64;
        let q = self.n_forests() as f64;
        for models in &self.fold_models {
            for (f, model) in models.iter().enumerate() {
                if self.per_forest_concat {
                    model.accumulate(x, scale / k, &mut out[f * s..(f + 1) * s]);
                } else {
                    model.accumulate(x, scale / (k * q), out);
                }
            }
        }
    }
}
