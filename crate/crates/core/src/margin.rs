//! Margin mathematics: the multiclass margin, the margin-distribution loss
//! and its derivative, the per-layer mixture coefficient search, sample
//! reweighting, and summary statistics of a margin distribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a prediction lies on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// Loss sums below this are treated as zero by [`reweight`].
pub const ZERO_LOSS_SUM: f64 = 1e-12;

pub const DEFAULT_ALPHA_MAX: f64 = 4.0;

/// Number of bins in [`MarginStats::histogram`].
pub const HISTOGRAM_BINS: usize = 50;

/// The hyper-parameter grids searched by default.
pub const GAMMA_GRID: [f64; 6] = [0.7, 0.75, 0.8, 0.85, 0.9, 0.95];
pub const MU_GRID: [f64; 3] = [0.01, 0.05, 0.1];

/// Parameters of the margin-distribution loss.
///
/// `gamma` is the target margin mean, `mu` weighs deviations above the
/// target against deviations below it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdLossParams {
    pub gamma: f64,
    pub mu: f64,
}

impl Default for MdLossParams {
    fn default() -> Self {
        MdLossParams { gamma: 0.8, mu: 0.1 }
    }
}

impl MdLossParams {
    pub fn new(gamma: f64, mu: f64) -> Result<Self> {
        let p = MdLossParams { gamma, mu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma = {} must lie in (0, 1)", self.gamma)));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::Config(format!("mu = {} must lie in (0, 1]", self.mu)));
        }
        Ok(())
    }
}

/// True-class score minus the best other-class score, without a simplex check.
pub fn score_margin(scores: &[f64], true_class: usize) -> f64 {
    let other = scores
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != true_class)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if other.is_finite() {
        scores[true_class] - other
    } else {
        scores[true_class]
    }
}

/// Multiclass margin of a probability vector, in `[-1, 1]`.
pub fn multiclass_margin(prediction: &[f64], true_class: usize) -> Result<f64> {
    if true_class >= prediction.len() {
        return Err(Error::Data(format!(
            "class {true_class} out of range for a {}-class prediction",
            prediction.len()
        )));
    }
    let sum: f64 = prediction.iter().sum();
    if prediction.iter().any(|&p| p.is_nan() || p < -SIMPLEX_TOL) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Data(format!(
            "prediction {prediction:?} is not a probability vector"
        )));
    }
    Ok(score_margin(prediction, true_class))
}

/// Margin-distribution loss: quadratic below `gamma`, `mu`-scaled quadratic above.
#[inline]
pub fn md_loss(z: f64, params: &MdLossParams) -> f64 {
    let d = z - params.gamma;
    if z <= params.gamma {
        d * d / (params.gamma * params.gamma)
    } else {
        let r = 1.0 - params.gamma;
        params.mu * d * d / (r * r)
    }
}

#[inline]
pub fn md_loss_grad(z: f64, params: &MdLossParams) -> f64 {
    let d = z - params.gamma;
    if z <= params.gamma {
        2.0 * d / (params.gamma * params.gamma)
    } else {
        let r = 1.0 - params.gamma;
        2.0 * params.mu * d / (r * r)
    }
}

#[inline]
fn md_loss_curvature(z: f64, params: &MdLossParams) -> f64 {
    if z <= params.gamma {
        2.0 / (params.gamma * params.gamma)
    } else {
        let r = 1.0 - params.gamma;
        2.0 * params.mu / (r * r)
    }
}

/// Mean loss over samples at the given cumulative margins.
pub fn expected_loss(cumulative: &[f64], params: &MdLossParams) -> f64 {
    cumulative.iter().map(|&z| md_loss(z, params)).sum::<f64>() / cumulative.len().max(1) as f64
}

/// `(1/m) sum_i loss(prev_i + alpha * margins_i)`.
pub fn alpha_objective(prev: &[f64], margins: &[f64], alpha: f64, params: &MdLossParams) -> f64 {
    prev.iter()
        .zip(margins)
        .map(|(&p, &g)| md_loss(p + alpha * g, params))
        .sum::<f64>()
        / prev.len().max(1) as f64
}

fn alpha_slope(prev: &[f64], margins: &[f64], alpha: f64, params: &MdLossParams) -> f64 {
    prev.iter()
        .zip(margins)
        .map(|(&p, &g)| md_loss_grad(p + alpha * g, params) * g)
        .sum::<f64>()
        / prev.len().max(1) as f64
}

fn alpha_curvature(prev: &[f64], margins: &[f64], alpha: f64, params: &MdLossParams) -> f64 {
    prev.iter()
        .zip(margins)
        .map(|(&p, &g)| md_loss_curvature(p + alpha * g, params) * g * g)
        .sum::<f64>()
        / prev.len().max(1) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaOptimizer {
    /// Projected gradient descent from `alpha = 1` with Armijo backtracking.
    /// The first trial step of each iteration is the inverse local curvature.
    GradientDescent { max_iter: usize },
    /// Bisection on the (monotone) derivative of the convex objective.
    Bisection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaConfig {
    pub alpha_max: f64,
    pub optimizer: AlphaOptimizer,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig {
            alpha_max: DEFAULT_ALPHA_MAX,
            optimizer: AlphaOptimizer::GradientDescent { max_iter: 200 },
        }
    }
}

/// Chooses the layer coefficient in `[0, alpha_max]` minimizing the mean
/// loss of the updated cumulative margins.
///
/// The objective is convex and continuously differentiable in `alpha`. The
/// returned value never has a larger objective than `alpha = 0`; if every
/// layer margin is zero the objective is flat and 0 is returned.
pub fn optimize_alpha(prev: &[f64], margins: &[f64], params: &MdLossParams, cfg: &AlphaConfig) -> f64 {
    assert_eq!(prev.len(), margins.len(), "margin vectors differ in length");
    if margins.iter().all(|&g| g == 0.0) || prev.is_empty() {
        return 0.0;
    }
    let hi = cfg.alpha_max.max(0.0);
    let f = |a: f64| alpha_objective(prev, margins, a, params);
    let slope = |a: f64| alpha_slope(prev, margins, a, params);

    let alpha = match cfg.optimizer {
        AlphaOptimizer::Bisection => {
            if slope(0.0) >= 0.0 {
                0.0
            } else if slope(hi) <= 0.0 {
                hi
            } else {
                let (mut lo, mut up) = (0.0, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + up);
                    if mid <= lo || mid >= up {
                        break;
                    }
                    if slope(mid) < 0.0 {
                        lo = mid;
                    } else {
                        up = mid;
                    }
                }
                0.5 * (lo + up)
            }
        }
        AlphaOptimizer::GradientDescent { max_iter } => {
            let mut a = 1.0f64.clamp(0.0, hi);
            let mut fa = f(a);
            for _ in 0..max_iter {
                let g = slope(a);
                if g == 0.0 {
                    break;
                }
                let curv = alpha_curvature(prev, margins, a, params);
                let mut step = if curv > 0.0 { 1.0 / curv } else { 1.0 };
                let mut moved = false;
                while step > 1e-300 {
                    let cand = (a - step * g).clamp(0.0, hi);
                    if cand == a {
                        break;
                    }
                    let fc = f(cand);
                    // Armijo condition along the projected step
                    if fc <= fa - 1e-4 * g * (a - cand) {
                        a = cand;
                        fa = fc;
                        moved = true;
                        break;
                    }
                    step *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            a
        }
    };
    if f(alpha) <= f(0.0) {
        alpha
    } else {
        0.0
    }
}

/// Next sample distribution: each sample's loss over the total loss.
/// Falls back to uniform when the total loss is (numerically) zero.
pub fn reweight(cumulative: &[f64], params: &MdLossParams) -> Vec<f64> {
    let m = cumulative.len();
    let losses: Vec<f64> = cumulative.iter().map(|&z| md_loss(z, params)).collect();
    let total: f64 = losses.iter().sum();
    if total.is_nan() || total < ZERO_LOSS_SUM {
        return vec![1.0 / m as f64; m];
    }
    losses.into_iter().map(|l| l / total).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

/// Summary of a margin distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    /// Standard deviation over absolute mean; `+inf` when the mean is zero
    /// (written as `null` in JSON).
    #[serde(with = "inf_as_null")]
    pub lambda_ratio: f64,
    pub histogram: Histogram,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

pub fn margin_stats(margins: &[f64]) -> MarginStats {
    let m = margins.len().max(1) as f64;
    let mean = margins.iter().sum::<f64>() / m;
    let variance = margins.iter().map(|&z| (z - mean) * (z - mean)).sum::<f64>() / m;
    let lambda_ratio = if mean != 0.0 {
        variance.sqrt() / mean.abs()
    } else {
        f64::INFINITY
    };
    let lo = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    if lo.is_finite() {
        let width = (hi - lo) / HISTOGRAM_BINS as f64;
        for &z in margins {
            let bin = if width > 0.0 {
                (((z - lo) / width) as usize).min(HISTOGRAM_BINS - 1)
            } else {
                0
            };
            counts[bin] += 1;
        }
    }
    MarginStats {
        mean,
        variance,
        lambda_ratio,
        histogram: Histogram {
            lo: if lo.is_finite() { lo } else { 0.0 },
            hi: if hi.is_finite() { hi } else { 0.0 },
            counts,
        },
    }
}

/// Training-time margin bookkeeping across layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginState {
    /// `sum_{l <= t} alpha_l * gamma_l(x_i)` per sample.
    pub cumulative_margins: Vec<f64>,
    pub per_layer_margins: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    /// Current sample distribution.
    pub weights: Vec<f64>,
}

impl MarginState {
    pub fn new(m: usize) -> Self {
        MarginState {
            cumulative_margins: vec![0.0; m],
            per_layer_margins: Vec::new(),
            alphas: Vec::new(),
            weights: vec![1.0 / m as f64; m],
        }
    }

    /// Records one layer's margins: picks its coefficient, updates the
    /// cumulative margins, and reweights. Returns the coefficient.
    pub fn push_layer(&mut self, margins: Vec<f64>, params: &MdLossParams, cfg: &AlphaConfig) -> f64 {
        let alpha = optimize_alpha(&self.cumulative_margins, &margins, params, cfg);
        for (c, g) in self.cumulative_margins.iter_mut().zip(&margins) {
            *c += alpha * g;
        }
        self.weights = reweight(&self.cumulative_margins, params);
        self.per_layer_margins.push(margins);
        self.alphas.push(alpha);
        alpha
    }

    pub fn objective(&self, params: &MdLossParams) -> f64 {
        expected_loss(&self.cumulative_margins, params)
    }
}
