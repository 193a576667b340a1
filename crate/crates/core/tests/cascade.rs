use mddf::block::{default_forests, BlockConfig};
use mddf::cascade::{self, CascadeConfig, CascadeMode, CascadeModel, Layer};
use mddf::dataset::Dataset;
use mddf::matrix::argmax;
use mddf::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_blobs(m: usize, n: usize, s: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..m).map(|i| i % s).collect();
    let x = labels
        .iter()
        .flat_map(|&y| {
            let centre = y as f64;
            (0..n).map(|_| centre + rng.gen_range(-0.9..0.9)).collect::<Vec<_>>()
        })
        .collect();
    Dataset::new(Matrix::from_vec(m, n, x), labels, s).unwrap()
}

fn config(layers: usize, mode: CascadeMode) -> CascadeConfig {
    CascadeConfig {
        max_layers: layers,
        early_stop_patience: 0,
        mode,
        block: BlockConfig {
            k_folds: 3,
            forests: default_forests(6, usize::MAX),
            ..BlockConfig::default()
        },
        ..CascadeConfig::default()
    }
}

fn unrolled_scores(model: &CascadeModel, x: &[f64]) -> Vec<f64> {
    let s = model.n_classes();
    let mut f = vec![0.0; s];
    for (t, layer) in model.layers().iter().enumerate() {
        let input: Vec<f64> = if t == 0 {
            x.to_vec()
        } else {
            x.iter().chain(&f).copied().collect()
        };
        let h = layer.block.predict(&input).unwrap();
        for (fj, hj) in f.iter_mut().zip(&h) {
            *fj += layer.alpha * hj;
        }
    }
    f
}

#[test]
fn two_layer_model_matches_hand_unrolled_recursion() {
    let data = noisy_blobs(30, 3, 3, 1);
    let model = cascade::train(&data, &config(2, CascadeMode::Full)).unwrap();
    assert_eq!(model.n_layers(), 2);
    for r in 0..data.n_samples() {
        let x = data.features().row(r);
        let expected = unrolled_scores(&model, x);
        let got = model.predict_scores(x).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{got:?} vs {expected:?}");
        }
        assert_eq!(model.predict(x).unwrap(), argmax(&expected));
    }
}

#[test]
fn zero_coefficients_after_the_first_layer_leave_layer_one() {
    let data = noisy_blobs(24, 2, 2, 2);
    let model = cascade::train(&data, &config(3, CascadeMode::Full)).unwrap();
    let layers: Vec<Layer> = model
        .layers()
        .iter()
        .enumerate()
        .map(|(t, l)| Layer {
            block: l.block.clone(),
            alpha: if t == 0 { l.alpha } else { 0.0 },
        })
        .collect();
    let first_alpha = layers[0].alpha;
    let first = layers[0].block.clone();
    let truncated = CascadeModel::from_layers(layers, 2, 2, model.config().clone()).unwrap();
    for r in 0..data.n_samples() {
        let x = data.features().row(r);
        let expected: Vec<f64> = first.predict(x).unwrap().iter().map(|v| first_alpha * v).collect();
        let got = truncated.predict_scores(x).unwrap();
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{got:?} vs {expected:?}");
        }
    }
}

#[test]
fn training_is_deterministic() {
    let data = noisy_blobs(36, 3, 3, 3);
    let cfg = config(3, CascadeMode::Full);
    let a = cascade::train(&data, &cfg).unwrap();
    let b = cascade::train(&data, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn coefficients_are_nonnegative_and_bounded() {
    for seed in 0..4 {
        let data = noisy_blobs(30, 2, 3, seed);
        let model = cascade::train(&data, &config(3, CascadeMode::Full)).unwrap();
        for a in model.alphas() {
            assert!((0.0..=4.0).contains(&a), "alpha {a}");
        }
    }
}

#[test]
fn mode_variants_train_and_predict() {
    let data = noisy_blobs(30, 4, 3, 4);
    for mode in CascadeMode::ALL {
        let model = cascade::train(&data, &config(2, mode)).unwrap();
        let acc = model.accuracy(&data).unwrap();
        assert!((0.0..=1.0).contains(&acc), "{mode}");
        let rebuilt = CascadeModel::from_layers(
            model.layers().to_vec(),
            model.n_classes(),
            model.raw_dim(),
            model.config().clone(),
        );
        assert!(rebuilt.is_ok(), "{mode}: {rebuilt:?}");
    }
}

#[test]
fn per_forest_concatenation_widens_the_augmented_feature() {
    let data = noisy_blobs(30, 2, 3, 5);
    let mut cfg = config(2, CascadeMode::Full);
    cfg.block.per_forest_concat = true;
    let model = cascade::train(&data, &cfg).unwrap();
    assert_eq!(model.feature_width(), 12);
    assert_eq!(model.layers()[1].block.input_dim(), 2 + 12);
    let scores = model.predict_scores(data.features().row(0)).unwrap();
    assert_eq!(scores.len(), 3);
}

#[test]
fn single_class_layer_input_is_rejected() {
    let x = Matrix::from_vec(6, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    assert!(Dataset::new(x, vec![0; 6], 1).is_err());
}

#[test]
fn mismatched_layer_widths_are_rejected() {
    let data = noisy_blobs(24, 2, 2, 6);
    let model = cascade::train(&data, &config(2, CascadeMode::Full)).unwrap();
    let mut cfg = model.config().clone();
    cfg.mode = CascadeMode::StackingOnly;
    assert!(CascadeModel::from_layers(model.layers().to_vec(), 2, 2, cfg).is_err());
}
