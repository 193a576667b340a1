//! The margin-distribution cascade: trainer and predictor.
//!
//! Layer `t` fits a cross-fitted [`ForestBlock`] on the raw features joined
//! with the augmented feature `f_{t-1}` (the running `alpha`-weighted sum of
//! earlier block outputs), measures each training sample's out-of-fold
//! margin, picks the layer coefficient `alpha_t`, and reweights the samples
//! by the margin-distribution loss of their cumulative margins. Prediction
//! replays the recursion and takes the argmax of `f_T`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{self, BlockConfig, ForestBlock};
use crate::dataset::{self, Dataset, Schema, SplitKind, SplitSpec};
use crate::error::{Error, Result};
use crate::forest::{self, ForestConfig};
use crate::margin::{self, AlphaConfig, MarginState, MarginStats, MdLossParams};
use crate::matrix::{argmax, Matrix};
use crate::rng::derive_seed;
use crate::tree::{FeatureCandidates, TreeConfig, TreeKind};

/// Per-layer maximum tree depth `c * t + c`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DepthSchedule {
    #[serde(rename = "2t+2")]
    Linear2,
    #[default]
    #[serde(rename = "4t+4")]
    Linear4,
    #[serde(rename = "8t+8")]
    Linear8,
    #[serde(rename = "16t+16")]
    Linear16,
}

impl DepthSchedule {
    pub const ALL: [DepthSchedule; 4] = [
        DepthSchedule::Linear2,
        DepthSchedule::Linear4,
        DepthSchedule::Linear8,
        DepthSchedule::Linear16,
    ];

    fn factor(self) -> usize {
        match self {
            DepthSchedule::Linear2 => 2,
            DepthSchedule::Linear4 => 4,
            DepthSchedule::Linear8 => 8,
            DepthSchedule::Linear16 => 16,
        }
    }

    /// Depth for 1-based layer `t`.
    pub fn depth(self, layer: usize) -> usize {
        self.factor() * layer + self.factor()
    }
}

impl fmt::Display for DepthSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.factor();
        write!(f, "{c}t+{c}")
    }
}

impl FromStr for DepthSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DepthSchedule::ALL
            .into_iter()
            .find(|d| d.to_string() == s.trim())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown depth schedule {s:?} (expected 2t+2, 4t+4, 8t+8 or 16t+16)"
                ))
            })
    }
}

/// Structural variant of the cascade.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeMode {
    /// Raw features plus the augmented feature, mixed forest kinds.
    #[default]
    Full,
    /// Every forest in the block is a random forest.
    SameForests,
    /// Layers after the first see only the augmented feature.
    StackingOnly,
    /// Every layer sees only the raw features; scores still accumulate.
    NoPreconc,
    /// A single forest on all data with uniform weights, no cascade.
    BaselineRf,
}

impl CascadeMode {
    pub const ALL: [CascadeMode; 5] = [
        CascadeMode::Full,
        CascadeMode::SameForests,
        CascadeMode::StackingOnly,
        CascadeMode::NoPreconc,
        CascadeMode::BaselineRf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CascadeMode::Full => "full",
            CascadeMode::SameForests => "same_forests",
            CascadeMode::StackingOnly => "stacking_only",
            CascadeMode::NoPreconc => "no_preconc",
            CascadeMode::BaselineRf => "baseline_rf",
        }
    }
}

impl fmt::Display for CascadeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CascadeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CascadeMode::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeConfig {
    pub max_layers: usize,
    pub block: BlockConfig,
    pub loss: MdLossParams,
    pub depth_schedule: DepthSchedule,
    pub mode: CascadeMode,
    /// Stop after this many consecutive layers without improvement; 0 disables early stopping.
    pub early_stop_patience: usize,
    /// Smallest change in the stopping metric that counts as an improvement.
    pub min_improvement: f64,
    /// Fraction of the training set held out to drive early stopping; 0 uses the training objective.
    pub validation_fraction: f64,
    pub alpha: AlphaConfig,
    pub seed: u64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            max_layers: 10,
            block: BlockConfig::default(),
            loss: MdLossParams::default(),
            depth_schedule: DepthSchedule::default(),
            mode: CascadeMode::Full,
            early_stop_patience: 2,
            min_improvement: 1e-4,
            validation_fraction: 0.0,
            alpha: AlphaConfig::default(),
            seed: 42,
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_layers == 0 {
            return Err(Error::Config("max_layers must be at least 1".into()));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction = {} must lie in [0, 1)",
                self.validation_fraction
            )));
        }
        if self.min_improvement.is_nan() || self.min_improvement < 0.0 {
            return Err(Error::Config("min_improvement must be non-negative".into()));
        }
        if self.alpha.alpha_max.is_nan() || self.alpha.alpha_max <= 0.0 {
            return Err(Error::Config("alpha_max must be positive".into()));
        }
        self.loss.validate()?;
        self.block.validate()
    }

    /// Block configuration for 1-based layer `t`: depth from the schedule,
    /// forest kinds from the mode, seeds derived from the cascade seed.
    pub fn layer_block_config(&self, layer: usize) -> BlockConfig {
        let depth = self.depth_schedule.depth(layer);
        let forests = self
            .block
            .forests
            .iter()
            .enumerate()
            .map(|(q, f)| {
                let mut tree = TreeConfig {
                    max_depth: depth,
                    ..f.tree.clone()
                };
                if self.mode == CascadeMode::SameForests && tree.kind == TreeKind::CompletelyRandom {
                    tree.kind = TreeKind::RandomSubset;
                    tree.feature_candidates = FeatureCandidates::Sqrt;
                }
                ForestConfig {
                    tree,
                    seed: derive_seed(f.seed, q as u64),
                    ..f.clone()
                }
            })
            .collect();
        BlockConfig {
            forests,
            seed: derive_seed(self.seed ^ self.block.seed, layer as u64),
            ..self.block.clone()
        }
    }

    /// Total trees in one layer; the baseline forest gets this many.
    pub fn trees_per_layer(&self) -> usize {
        self.block.k_folds * self.block.forests.iter().map(|f| f.n_trees).sum::<usize>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub block: ForestBlock,
    pub alpha: f64,
}

/// Training diagnostics for one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub alpha: f64,
    pub max_depth: usize,
    pub input_dim: usize,
    /// Accuracy of the cumulative out-of-fold scores on the training set.
    pub train_accuracy: f64,
    /// Mean margin-distribution loss of the cumulative margins.
    pub train_objective: f64,
    /// Statistics of `sum_{l <= t} alpha_l * gamma_l(x_i)`.
    pub margin: MarginStats,
    /// Statistics of the margin of the normalized summed score vector.
    pub aggregate_margin: MarginStats,
    pub validation_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeModel {
    layers: Vec<Layer>,
    n_classes: usize,
    raw_dim: usize,
    /// Width of the augmented feature (`n_classes` unless blocks concatenate per forest).
    feature_width: usize,
    config: CascadeConfig,
    training_report: Vec<LayerReport>,
    schema: Option<Schema>,
}

/// A trained model plus per-layer wall-clock times.
#[derive(Clone, Debug)]
pub struct Training {
    pub model: CascadeModel,
    pub layer_times_ms: Vec<u64>,
}

/// Input rows for layer `t` given raw features and the augmented features so far.
fn layer_inputs(mode: CascadeMode, layer: usize, raw: &Matrix, augmented: &Matrix) -> Matrix {
    if layer == 1 {
        return raw.clone();
    }
    match mode {
        CascadeMode::Full | CascadeMode::SameForests => raw.hstack(augmented),
        CascadeMode::StackingOnly => augmented.clone(),
        CascadeMode::NoPreconc | CascadeMode::BaselineRf => raw.clone(),
    }
}

fn layer_input_row(mode: CascadeMode, layer: usize, raw: &[f64], augmented: &[f64], out: &mut Vec<f64>) {
    out.clear();
    match (layer, mode) {
        (1, _) | (_, CascadeMode::NoPreconc | CascadeMode::BaselineRf) => out.extend_from_slice(raw),
        (_, CascadeMode::Full | CascadeMode::SameForests) => {
            out.extend_from_slice(raw);
            out.extend_from_slice(augmented);
        }
        (_, CascadeMode::StackingOnly) => out.extend_from_slice(augmented),
    }
}

/// Averages the per-forest chunks of an augmented feature into class scores.
fn collapse(augmented: &[f64], n_classes: usize) -> Vec<f64> {
    if augmented.len() == n_classes {
        return augmented.to_vec();
    }
    let chunks = (augmented.len() / n_classes) as f64;
    let mut out = vec![0.0; n_classes];
    for chunk in augmented.chunks_exact(n_classes) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v / chunks;
        }
    }
    out
}

fn accuracy(scores: &Matrix, labels: &[usize], n_classes: usize) -> f64 {
    let correct = scores
        .iter_rows()
        .zip(labels)
        .filter(|(row, &y)| argmax(&collapse(row, n_classes)) == y)
        .count();
    correct as f64 / labels.len().max(1) as f64
}

/// Margin of the summed score vector after normalizing by the total coefficient.
fn aggregate_margins(augmented: &Matrix, labels: &[usize], n_classes: usize, alpha_sum: f64) -> Vec<f64> {
    augmented
        .iter_rows()
        .zip(labels)
        .map(|(row, &y)| {
            let scores = collapse(row, n_classes);
            let g = margin::score_margin(&scores, y);
            if alpha_sum > 0.0 {
                g / alpha_sum
            } else {
                g
            }
        })
        .collect()
}

fn add_scaled(target: &mut Matrix, source: &Matrix, alpha: f64) {
    for r in 0..target.rows() {
        for (t, s) in target.row_mut(r).iter_mut().zip(source.row(r)) {
            *t += alpha * s;
        }
    }
}

/// Trains a model; see [`train_timed`].
pub fn train(data: &Dataset, config: &CascadeConfig) -> Result<CascadeModel> {
    train_timed(data, config).map(|t| t.model)
}

/// Trains a cascade layer by layer, recording how long each layer took.
pub fn train_timed(data: &Dataset, config: &CascadeConfig) -> Result<Training> {
    config.validate()?;
    let s = data.n_classes();
    if s < 2 {
        return Err(Error::Data("training needs at least 2 classes".into()));
    }
    if config.mode == CascadeMode::BaselineRf {
        return train_baseline(data, config);
    }

    let (train_set, validation) = if config.validation_fraction > 0.0 {
        let spec = SplitSpec {
            kind: SplitKind::StratifiedHoldout {
                fraction: config.validation_fraction,
            },
            seed: derive_seed(config.seed, u64::MAX),
        };
        let (tr, va) = dataset::split(data, &spec)?;
        (tr, Some(va))
    } else {
        (data.clone(), None)
    };

    let m = train_set.n_samples();
    if m < config.block.k_folds {
        return Err(Error::Config(format!(
            "{m} training samples cannot be split into {} folds",
            config.block.k_folds
        )));
    }
    let raw = train_set.features();
    let labels = train_set.labels();
    let width = if config.block.per_forest_concat {
        s * config.block.forests.len()
    } else {
        s
    };

    let mut state = MarginState::new(m);
    let mut augmented = Matrix::zeros(m, width);
    let mut val_augmented = validation.as_ref().map(|v| Matrix::zeros(v.n_samples(), width));

    let mut layers = Vec::new();
    let mut reports: Vec<LayerReport> = Vec::new();
    let mut times = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut stale = 0;

    for t in 1..=config.max_layers {
        let started = Instant::now();
        let block_cfg = config.layer_block_config(t);
        let inputs = layer_inputs(config.mode, t, raw, &augmented);
        let fit = block::fit_block(&inputs, labels, s, &state.weights, &block_cfg)?;
        let margins: Vec<f64> = fit
            .oof_predictions
            .iter_rows()
            .zip(labels)
            .map(|(p, &y)| margin::score_margin(p, y))
            .collect();
        let degenerate = margins.iter().all(|&g| g == 0.0);
        let alpha = state.push_layer(margins, &config.loss, &config.alpha);
        add_scaled(&mut augmented, &fit.oof_features, alpha);

        let validation_accuracy = match (&validation, &mut val_augmented) {
            (Some(v), Some(val_aug)) => {
                let val_inputs = layer_inputs(config.mode, t, v.features(), val_aug);
                let feats = block_features(&fit.block, &val_inputs);
                add_scaled(val_aug, &feats, alpha);
                Some(accuracy(val_aug, v.labels(), s))
            }
            _ => None,
        };

        let alpha_sum: f64 = state.alphas.iter().sum();
        let report = LayerReport {
            layer: t,
            alpha,
            max_depth: config.depth_schedule.depth(t),
            input_dim: inputs.cols(),
            train_accuracy: accuracy(&augmented, labels, s),
            train_objective: state.objective(&config.loss),
            margin: margin::margin_stats(&state.cumulative_margins),
            aggregate_margin: margin::margin_stats(&aggregate_margins(&augmented, labels, s, alpha_sum)),
            validation_accuracy,
        };
        log::info!(
            "layer {t}: alpha={alpha:.4} train_acc={:.4} objective={:.6} lambda={:.4}{}",
            report.train_accuracy,
            report.train_objective,
            report.margin.lambda_ratio,
            validation_accuracy.map_or(String::new(), |a| format!(" val_acc={a:.4}"))
        );

        // higher is better for both metrics after negating the objective
        let metric = validation_accuracy.unwrap_or(-report.train_objective);
        layers.push(Layer {
            block: fit.block,
            alpha,
        });
        reports.push(report);
        times.push(started.elapsed().as_millis() as u64);

        match best {
            Some((b, _)) if metric <= b + config.min_improvement => stale += 1,
            _ => {
                best = Some((metric, t));
                stale = 0;
            }
        }
        if degenerate {
            log::warn!("layer {t}: every out-of-fold margin is zero; stopping");
            break;
        }
        if config.early_stop_patience > 0 && stale >= config.early_stop_patience {
            log::info!("no improvement for {stale} layers; stopping");
            break;
        }
    }

    if config.early_stop_patience > 0 {
        if let Some((_, best_layer)) = best {
            layers.truncate(best_layer);
            reports.truncate(best_layer);
            times.truncate(best_layer);
        }
    }

    Ok(Training {
        model: CascadeModel {
            layers,
            n_classes: s,
            raw_dim: data.n_features(),
            feature_width: width,
            config: config.clone(),
            training_report: reports,
            schema: Some(data.schema().clone()),
        },
        layer_times_ms: times,
    })
}

fn block_features(block: &ForestBlock, inputs: &Matrix) -> Matrix {
    let width = block.output_width();
    let rows: Vec<f64> = (0..inputs.rows())
        .into_par_iter()
        .flat_map_iter(|r| {
            let mut out = vec![0.0; width];
            block.accumulate_features(inputs.row(r), 1.0, &mut out);
            out
        })
        .collect();
    Matrix::from_vec(inputs.rows(), width, rows)
}

fn train_baseline(data: &Dataset, config: &CascadeConfig) -> Result<Training> {
    let started = Instant::now();
    let s = data.n_classes();
    let m = data.n_samples();
    let template = config
        .block
        .forests
        .iter()
        .find(|f| f.tree.kind == TreeKind::RandomSubset)
        .cloned()
        .unwrap_or_default();
    let forest_cfg = ForestConfig {
        n_trees: config.trees_per_layer(),
        tree: TreeConfig {
            kind: TreeKind::RandomSubset,
            max_depth: usize::MAX,
            ..template.tree
        },
        seed: derive_seed(config.seed, 0),
        ..template
    };
    let weights = vec![1.0 / m as f64; m];
    let forest = forest::fit_forest(data.features(), data.labels(), s, &weights, &forest_cfg)?;
    let block = ForestBlock::single(forest);
    let scores = block_features(&block, data.features());
    let margins: Vec<f64> = scores
        .iter_rows()
        .zip(data.labels())
        .map(|(p, &y)| margin::score_margin(p, y))
        .collect();
    let stats = margin::margin_stats(&margins);
    let report = LayerReport {
        layer: 1,
        alpha: 1.0,
        max_depth: usize::MAX,
        input_dim: data.n_features(),
        train_accuracy: accuracy(&scores, data.labels(), s),
        train_objective: margin::expected_loss(&margins, &config.loss),
        margin: stats.clone(),
        aggregate_margin: stats,
        validation_accuracy: None,
    };
    Ok(Training {
        model: CascadeModel {
            layers: vec![Layer { block, alpha: 1.0 }],
            n_classes: s,
            raw_dim: data.n_features(),
            feature_width: s,
            config: config.clone(),
            training_report: vec![report],
            schema: Some(data.schema().clone()),
        },
        layer_times_ms: vec![started.elapsed().as_millis() as u64],
    })
}

impl CascadeModel {
    /// Assembles a model from fitted layers, checking the width invariants.
    pub fn from_layers(layers: Vec<Layer>, n_classes: usize, raw_dim: usize, config: CascadeConfig) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("a model needs at least one layer".into()))?;
        let width = first.block.output_width();
        for (i, layer) in layers.iter().enumerate() {
            let t = i + 1;
            let expected = match (t, config.mode) {
                (1, _) | (_, CascadeMode::NoPreconc | CascadeMode::BaselineRf) => raw_dim,
                (_, CascadeMode::Full | CascadeMode::SameForests) => raw_dim + width,
                (_, CascadeMode::StackingOnly) => width,
            };
            if layer.block.input_dim() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    got: layer.block.input_dim(),
                });
            }
            if layer.block.n_classes() != n_classes || layer.block.output_width() != width {
                return Err(Error::Data(format!("layer {t} disagrees on output width")));
            }
            if layer.alpha.is_nan() || layer.alpha < 0.0 {
                return Err(Error::Data(format!("layer {t} has negative coefficient")));
            }
        }
        Ok(CascadeModel {
            layers,
            n_classes,
            raw_dim,
            feature_width: width,
            config,
            training_report: Vec::new(),
            schema: None,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.alpha).collect()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn raw_dim(&self) -> usize {
        self.raw_dim
    }

    pub fn feature_width(&self) -> usize {
        self.feature_width
    }

    pub fn config(&self) -> &CascadeConfig {
        &self.config
    }

    pub fn training_report(&self) -> &[LayerReport] {
        &self.training_report
    }

    pub fn schema(&self) -> Option<&Schema> {
        self.schema.as_ref()
    }

    /// Multiplies every layer coefficient by `factor`.
    pub fn scale_alphas(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.alpha *= factor;
        }
    }

    /// Augmented feature `f_t(x)` after each layer `t`.
    pub fn augmented_features(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.raw_dim {
            return Err(Error::DimensionMismatch {
                expected: self.raw_dim,
                got: x.len(),
            });
        }
        let mut augmented = vec![0.0; self.feature_width];
        let mut input = Vec::new();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            layer_input_row(self.config.mode, i + 1, x, &augmented, &mut input);
            layer.block.accumulate_features(&input, layer.alpha, &mut augmented);
            out.push(augmented.clone());
        }
        Ok(out)
    }

    /// Class scores of the first `t` layers, for every `t`.
    pub fn prefix_scores(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .augmented_features(x)?
            .iter()
            .map(|f| collapse(f, self.n_classes))
            .collect())
    }

    /// `f_T(x) = sum_t alpha_t h_t(x)` as class scores (not renormalized).
    pub fn predict_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let features = self.augmented_features(x)?;
        Ok(features
            .last()
            .map(|f| collapse(f, self.n_classes))
            .unwrap_or_else(|| vec![0.0; self.n_classes]))
    }

    /// Argmax of [`CascadeModel::predict_scores`], lowest class on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_scores(x)?))
    }

    /// Scores for every row, computed in parallel.
    pub fn predict_scores_batch(&self, x: &Matrix) -> Result<Matrix> {
        let rows = (0..x.rows())
            .into_par_iter()
            .map(|r| self.predict_scores(x.row(r)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Matrix::from_rows(&rows))
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<usize>> {
        let scores = self.predict_scores_batch(x)?;
        Ok(scores.iter_rows().map(argmax).collect())
    }

    /// Accuracy of [`CascadeModel::predict_batch`] on a dataset.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let pred = self.predict_batch(data.features())?;
        let correct = pred.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
        Ok(correct as f64 / data.n_samples() as f64)
    }

    pub(crate) fn prefix_scores_batch(&self, x: &Matrix) -> Result<Vec<Vec<Vec<f64>>>> {
        (0..x.rows())
            .into_par_iter()
            .map(|r| self.prefix_scores(x.row(r)))
            .collect()
    }

    /// Per-layer evaluation of the first `t` layers on labelled data.
    pub fn evaluate_prefixes(&self, data: &Dataset) -> Result<Vec<PrefixEvaluation>> {
        if data.n_features() != self.raw_dim {
            return Err(Error::DimensionMismatch {
                expected: self.raw_dim,
                got: data.n_features(),
            });
        }
        let x = data.features();
        let y = data.labels();
        let prefix = self.prefix_scores_batch(x)?;
        // per-layer block outputs, for the cumulative per-layer margins
        let layer_margins: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|r| {
                let feats = self.augmented_features(x.row(r)).expect("width checked");
                let mut prev = vec![0.0; self.n_classes];
                let mut out = Vec::with_capacity(feats.len());
                for (layer, f) in self.layers.iter().zip(&feats) {
                    let scores = collapse(f, self.n_classes);
                    if layer.alpha > 0.0 {
                        let h: Vec<f64> = scores.iter().zip(&prev).map(|(a, b)| (a - b) / layer.alpha).collect();
                        out.push(layer.alpha * margin::score_margin(&h, y[r]));
                    } else {
                        out.push(0.0);
                    }
                    prev = scores;
                }
                out
            })
            .collect();

        let mut alpha_sum = 0.0;
        let mut cumulative = vec![0.0; x.rows()];
        let mut result = Vec::with_capacity(self.layers.len());
        for (t, layer) in self.layers.iter().enumerate() {
            alpha_sum += layer.alpha;
            let mut correct = 0;
            let mut aggregate = Vec::with_capacity(x.rows());
            for r in 0..x.rows() {
                cumulative[r] += layer_margins[r][t];
                let scores = &prefix[r][t];
                if argmax(scores) == y[r] {
                    correct += 1;
                }
                let g = margin::score_margin(scores, y[r]);
                aggregate.push(if alpha_sum > 0.0 { g / alpha_sum } else { g });
            }
            result.push(PrefixEvaluation {
                layer: t + 1,
                accuracy: correct as f64 / x.rows() as f64,
                objective: margin::expected_loss(&cumulative, &self.config.loss),
                margin: margin::margin_stats(&cumulative),
                aggregate_margin: margin::margin_stats(&aggregate),
            });
        }
        Ok(result)
    }
}

/// Metrics of the model truncated after `layer` layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixEvaluation {
    pub layer: usize,
    pub accuracy: f64,
    pub objective: f64,
    pub margin: MarginStats,
    pub aggregate_margin: MarginStats,
}
