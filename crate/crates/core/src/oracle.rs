//! Brute-force reference implementations used to check the optimized code.
//!
//! Nothing here calls into the tree, forest or margin modules' numerics:
//! impurity, loss and margin are recomputed from their definitions.

use rand::{Rng as _, SeedableRng};
use serde::Serialize;

use crate::block::{self, BlockConfig, ForestBlock};
use crate::forest::ForestConfig;
use crate::margin::{self, AlphaConfig, MdLossParams, GAMMA_GRID, MU_GRID};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::tree::{self, FeatureCandidates, Node, TreeConfig, TreeKind};

/// Splits whose impurities differ by no more than this are ties; the first
/// one enumerated (lowest feature, then lowest threshold) wins.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSplit {
    pub feature: usize,
    /// Midpoint between the two adjacent distinct values around the cut.
    pub threshold: f64,
    /// Largest feature value sent left and smallest sent right.
    pub gap: (f64, f64),
    pub impurity: f64,
}

fn gini_of(mass: &[f64]) -> f64 {
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - mass.iter().map(|c| (c / total).powi(2)).sum::<f64>()
}

/// Best weighted-Gini axis split by full enumeration.
///
/// Rows with zero weight are ignored. Each side must keep at least
/// `min_samples_leaf` rows. Returns `None` when no valid split exists.
pub fn exhaustive_split(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    weights: &[f64],
    min_samples_leaf: usize,
) -> Option<OracleSplit> {
    let rows: Vec<usize> = (0..features.rows()).filter(|&i| weights[i] > 0.0).collect();
    let mut best: Option<OracleSplit> = None;
    for f in 0..features.cols() {
        let mut values: Vec<f64> = rows.iter().map(|&i| features.get(i, f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let mut left = vec![0.0; n_classes];
            let mut right = vec![0.0; n_classes];
            let (mut n_left, mut n_right) = (0, 0);
            for &i in &rows {
                if features.get(i, f) <= lo {
                    left[labels[i]] += weights[i];
                    n_left += 1;
                } else {
                    right[labels[i]] += weights[i];
                    n_right += 1;
                }
            }
            if n_left < min_samples_leaf || n_right < min_samples_leaf {
                continue;
            }
            let wl: f64 = left.iter().sum();
            let wr: f64 = right.iter().sum();
            let impurity = (wl * gini_of(&left) + wr * gini_of(&right)) / (wl + wr);
            if best.is_none_or(|b| impurity < b.impurity - TIE_EPS) {
                best = Some(OracleSplit {
                    feature: f,
                    threshold: (lo + hi) / 2.0,
                    gap: (lo, hi),
                    impurity,
                });
            }
        }
    }
    best
}

fn loss(z: f64, gamma: f64, mu: f64) -> f64 {
    if z <= gamma {
        ((z - gamma) / gamma).powi(2)
    } else {
        mu * ((z - gamma) / (1.0 - gamma)).powi(2)
    }
}

/// Mean loss of `prev + alpha * margins`, computed from the loss definition.
pub fn objective(prev: &[f64], margins: &[f64], alpha: f64, params: &MdLossParams) -> f64 {
    let total: f64 = prev
        .iter()
        .zip(margins)
        .map(|(p, g)| loss(p + alpha * g, params.gamma, params.mu))
        .sum();
    total / prev.len() as f64
}

/// Minimizer of [`objective`] over `resolution + 1` evenly spaced points of
/// `[0, alpha_max]`, both ends included. Earlier points win exact ties.
pub fn grid_alpha(prev: &[f64], margins: &[f64], params: &MdLossParams, resolution: usize, alpha_max: f64) -> f64 {
    let resolution = resolution.max(1);
    let mut best = (0.0, objective(prev, margins, 0.0, params));
    for i in 1..=resolution {
        let a = alpha_max * i as f64 / resolution as f64;
        let v = objective(prev, margins, a, params);
        if v < best.1 {
            best = (a, v);
        }
    }
    best.0
}

/// Central difference `(f(z + h) - f(z - h)) / 2h`.
pub fn finite_diff(f: impl Fn(f64) -> f64, z: f64, h: f64) -> f64 {
    (f(z + h) - f(z - h)) / (2.0 * h)
}

/// Out-of-fold prediction for each training row, rebuilt from the block's
/// recorded fold assignment: row `i` in fold `j` is scored by the mean of the
/// forests trained without fold `j`.
pub fn manual_oof(block: &ForestBlock, inputs: &Matrix) -> Matrix {
    let s = block.n_classes();
    let mut out = Matrix::zeros(inputs.rows(), s);
    for (i, &fold) in block.fold_assignment().iter().enumerate() {
        let models = &block.fold_models()[fold];
        for model in models {
            for tree in model.trees() {
                let leaf = walk(tree, inputs.row(i));
                for (c, v) in leaf.iter().enumerate() {
                    let prev = out.get(i, c);
                    out.set(i, c, prev + v / (models.len() * model.trees().len()) as f64);
                }
            }
        }
    }
    out
}

fn walk<'a>(tree: &'a tree::TreeModel, x: &[f64]) -> &'a [f64] {
    let mut node = 0usize;
    loop {
        match tree.nodes()[node] {
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => node = if x[feature as usize] <= threshold { left } else { right } as usize,
            Node::Leaf { offset, .. } => return tree.leaf_distribution(offset),
        }
    }
}

/// Multiclass margin from its definition.
pub fn margin_of(scores: &[f64], y: usize) -> f64 {
    let other = scores
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    scores[y] - other
}

/// Random tiny classification problem with a few repeated values.
pub fn random_tiny_dataset(
    rng: &mut Rng,
    max_rows: usize,
    max_features: usize,
    max_classes: usize,
) -> (Matrix, Vec<usize>, usize) {
    let m = rng.gen_range(4..=max_rows);
    let n = rng.gen_range(1..=max_features);
    let s = rng.gen_range(2..=max_classes);
    let data = (0..m * n).map(|_| f64::from(rng.gen_range(0..8)) * 0.5).collect();
    let labels = (0..m).map(|_| rng.gen_range(0..s)).collect();
    (Matrix::from_vec(m, n, data), labels, s)
}

/// Result of one oracle comparison.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Root split of a depth-1 tree with every feature as a candidate.
pub fn tree_root_split(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    weights: &[f64],
    seed: u64,
) -> Option<(usize, f64)> {
    let cfg = TreeConfig {
        kind: TreeKind::RandomSubset,
        max_depth: 1,
        min_samples_leaf: 1,
        feature_candidates: FeatureCandidates::All,
        seed,
    };
    let model = tree::fit_tree(features, labels, n_classes, weights, &cfg).ok()?;
    match model.nodes()[0] {
        Node::Split { feature, threshold, .. } => Some((feature as usize, threshold)),
        Node::Leaf { .. } => None,
    }
}

/// Compares tree root splits with [`exhaustive_split`] on `cases` random sets.
pub fn check_tree_splits(cases: usize, seed: u64) -> CheckOutcome {
    let mut rng = Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..cases {
        let (x, y, s) = random_tiny_dataset(&mut rng, 20, 4, 3);
        let w: Vec<f64> = (0..x.rows()).map(|_| rng.gen_range(0.1..1.0)).collect();
        let oracle = exhaustive_split(&x, &y, s, &w, 1);
        let fitted = tree_root_split(&x, &y, s, &w, seed ^ case as u64);
        let agrees = match (oracle, fitted) {
            (None, None) => true,
            (Some(o), Some((f, t))) => o.feature == f && o.gap.0 <= t && t < o.gap.1,
            _ => false,
        };
        if !agrees {
            failures.push(format!("case {case}: oracle {oracle:?} vs tree {fitted:?}"));
        }
    }
    CheckOutcome {
        name: "tree split vs exhaustive enumeration",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{cases} datasets agree")
        } else {
            failures.join("; ")
        },
    }
}

/// Random instance for the coefficient search: previous cumulative margins and new margins.
pub fn random_alpha_instance(rng: &mut Rng) -> (Vec<f64>, Vec<f64>, MdLossParams) {
    let m = rng.gen_range(5..40);
    let layers = rng.gen_range(0..3);
    let prev = (0..m)
        .map(|_| {
            (0..layers)
                .map(|_| rng.gen_range(0.0..1.5) * rng.gen_range(-1.0..1.0))
                .sum()
        })
        .collect();
    let margins = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let params = MdLossParams {
        gamma: GAMMA_GRID[rng.gen_range(0..GAMMA_GRID.len())],
        mu: MU_GRID[rng.gen_range(0..MU_GRID.len())],
    };
    (prev, margins, params)
}

/// Compares `optimize_alpha` against a dense grid on `cases` random instances:
/// its objective may exceed the grid optimum by at most `tol`.
pub fn check_alpha(cases: usize, seed: u64, tol: f64) -> CheckOutcome {
    let mut rng = Rng::seed_from_u64(seed);
    let cfg = AlphaConfig::default();
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for case in 0..cases {
        let (prev, margins, params) = random_alpha_instance(&mut rng);
        let a = margin::optimize_alpha(&prev, &margins, &params, &cfg);
        let g = grid_alpha(&prev, &margins, &params, 40_000, cfg.alpha_max);
        let gap = objective(&prev, &margins, a, &params) - objective(&prev, &margins, g, &params);
        worst = worst.max(gap);
        if gap > tol || !(0.0..=cfg.alpha_max).contains(&a) {
            failures.push(format!("case {case}: alpha {a} vs grid {g}, excess {gap:e}"));
        }
    }
    CheckOutcome {
        name: "alpha search vs grid",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{cases} instances, worst excess objective {worst:e}")
        } else {
            failures.join("; ")
        },
    }
}

/// Compares the analytic loss derivative with central differences over
/// `z` in `[-2, 3]` for every grid `(gamma, mu)`.
pub fn check_loss_gradient(tol: f64) -> CheckOutcome {
    let mut worst: f64 = 0.0;
    for &gamma in &GAMMA_GRID {
        for &mu in &MU_GRID {
            let p = MdLossParams { gamma, mu };
            for i in 0..=5000 {
                let z = -2.0 + 5.0 * i as f64 / 5000.0;
                // the stencil must not straddle the curvature jump at gamma
                let h = ((z - gamma).abs() / 2.0).clamp(1e-9, 1e-6);
                let numeric = finite_diff(|v| loss(v, gamma, mu), z, h);
                worst = worst.max((numeric - margin::md_loss_grad(z, &p)).abs());
            }
        }
    }
    CheckOutcome {
        name: "loss derivative vs finite differences",
        passed: worst <= tol,
        detail: format!("max abs deviation {worst:e}"),
    }
}

/// Twelve-row, three-class problem with two features.
pub fn twelve_sample_set(rng: &mut Rng) -> (Matrix, Vec<usize>) {
    let x = (0..24).map(|_| f64::from(rng.gen_range(0..10))).collect();
    let y = (0..12).map(|i| i % 3).collect();
    (Matrix::from_vec(12, 2, x), y)
}

/// Rebuilds out-of-fold predictions of a small block from its fold record.
pub fn check_oof(seed: u64) -> CheckOutcome {
    let name = "out-of-fold predictions vs fold record";
    let mut rng = Rng::seed_from_u64(seed);
    let (x, y) = twelve_sample_set(&mut rng);
    let cfg = BlockConfig {
        k_folds: 3,
        forests: vec![ForestConfig {
            n_trees: 4,
            tree: TreeConfig::random_subset(usize::MAX, 0),
            ..ForestConfig::default()
        }],
        seed,
        ..BlockConfig::default()
    };
    match block::fit_block(&x, &y, 3, &[1.0 / 12.0; 12], &cfg) {
        Ok(fit) => {
            let manual = manual_oof(&fit.block, &x);
            let dev = manual
                .as_slice()
                .iter()
                .zip(fit.oof_predictions.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            CheckOutcome {
                name,
                passed: dev <= 1e-12,
                detail: format!("max deviation {dev:e}"),
            }
        }
        Err(e) => CheckOutcome {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Margin and loss identities that can be checked exactly on fixed inputs.
pub fn check_fixed_examples() -> CheckOutcome {
    let p = MdLossParams { gamma: 0.8, mu: 0.1 };
    let w = margin::reweight(&[0.0, 0.8, 1.0], &p);
    let expected = [1.0 / 1.1, 0.0, 0.1 / 1.1];
    let reweight_ok = w.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12);
    let margin_ok = (margin_of(&[0.2, 0.5, 0.3], 1) - 0.2).abs() < 1e-15
        && (margin::score_margin(&[0.2, 0.5, 0.3], 0) - margin_of(&[0.2, 0.5, 0.3], 0)).abs() < 1e-15;
    CheckOutcome {
        name: "fixed margin and reweighting examples",
        passed: reweight_ok && margin_ok,
        detail: format!("weights {w:?}"),
    }
}

/// Every oracle comparison, as run by the command-line self-check.
pub fn self_check() -> Vec<CheckOutcome> {
    vec![
        check_loss_gradient(1e-6),
        check_tree_splits(20, 7),
        check_alpha(50, 11, 1e-6),
        check_oof(3),
        check_fixed_examples(),
    ]
}
