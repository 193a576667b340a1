use mddf::block::{self, BlockConfig};
use mddf::cascade::{self, CascadeConfig};
use mddf::dataset::Dataset;
use mddf::forest::{self, ForestConfig};
use mddf::margin::{self, AlphaConfig, MdLossParams, GAMMA_GRID, MU_GRID};
use mddf::matrix::argmax;
use mddf::tree::{self, TreeConfig, TreeKind};
use mddf::Matrix;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = MdLossParams> {
    (0..GAMMA_GRID.len(), 0..MU_GRID.len()).prop_map(|(g, m)| MdLossParams {
        gamma: GAMMA_GRID[g],
        mu: MU_GRID[m],
    })
}

fn tiny_data() -> impl Strategy<Value = (Matrix, Vec<usize>, usize)> {
    (2usize..4, 1usize..4, 4usize..16).prop_flat_map(|(s, n, m)| {
        (
            proptest::collection::vec(0u8..6, m * n),
            proptest::collection::vec(0..s, m),
            Just((s, n, m)),
        )
            .prop_map(|(x, y, (s, n, m))| (Matrix::from_vec(m, n, x.into_iter().map(f64::from).collect()), y, s))
    })
}

fn on_simplex(p: &[f64]) -> bool {
    p.iter().all(|&v| v >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

proptest! {
    #[test]
    fn loss_is_nonnegative_and_zero_only_at_target(z in -3.0f64..3.0, p in params()) {
        let l = margin::md_loss(z, &p);
        prop_assert!(l >= 0.0);
        if (z - p.gamma).abs() > 1e-9 {
            prop_assert!(l > 0.0);
        }
    }

    #[test]
    fn loss_is_convex_along_chords(a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0.0f64..1.0, p in params()) {
        let mid = margin::md_loss(t * a + (1.0 - t) * b, &p);
        let chord = t * margin::md_loss(a, &p) + (1.0 - t) * margin::md_loss(b, &p);
        prop_assert!(mid <= chord + 1e-12);
    }

    #[test]
    fn margins_of_simplex_vectors_lie_in_unit_interval(raw in proptest::collection::vec(0.0f64..1.0, 2..6), y in 0usize..6) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let y = y % p.len();
        let g = margin::multiclass_margin(&p, y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&g));
        prop_assert_eq!(g > 0.0, argmax(&p) == y && p.iter().enumerate().all(|(j, &v)| j == y || v < p[y]));
    }

    #[test]
    fn reweight_is_a_distribution_ordered_by_loss(z in proptest::collection::vec(-1.0f64..2.0, 1..30), p in params()) {
        let w = margin::reweight(&z, &p);
        prop_assert!(on_simplex(&w));
        for i in 0..z.len() {
            for j in 0..z.len() {
                if margin::md_loss(z[i], &p) > margin::md_loss(z[j], &p) {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }

    #[test]
    fn lambda_ratio_ignores_order(mut z in proptest::collection::vec(-1.0f64..1.0, 2..40), seed in any::<u64>()) {
        let before = margin::margin_stats(&z);
        let k = (seed as usize) % z.len();
        z.rotate_left(k);
        z.reverse();
        let after = margin::margin_stats(&z);
        if before.lambda_ratio.is_finite() {
            prop_assert!((before.lambda_ratio - after.lambda_ratio).abs() <= 1e-9 * before.lambda_ratio.max(1.0));
        }
        prop_assert!((before.mean - after.mean).abs() < 1e-12);
    }

    #[test]
    fn alpha_never_worsens_the_objective(
        prev in proptest::collection::vec(-1.0f64..2.0, 1..30),
        seed in any::<u64>(),
        p in params(),
    ) {
        let margins: Vec<f64> = prev.iter().enumerate().map(|(i, _)| ((seed >> (i % 60)) & 7) as f64 / 4.0 - 0.8).collect();
        let a = margin::optimize_alpha(&prev, &margins, &p, &AlphaConfig::default());
        prop_assert!((0.0..=4.0).contains(&a));
        prop_assert!(
            margin::alpha_objective(&prev, &margins, a, &p) <= margin::alpha_objective(&prev, &margins, 0.0, &p)
        );
    }

    #[test]
    fn tree_outputs_lie_on_the_simplex((x, y, s) in tiny_data(), crf in any::<bool>(), seed in any::<u64>(), depth in 1usize..6) {
        let kind = if crf { TreeKind::CompletelyRandom } else { TreeKind::RandomSubset };
        let cfg = TreeConfig { kind, max_depth: depth, seed, ..TreeConfig::default() };
        let w = vec![1.0 / x.rows() as f64; x.rows()];
        let t = tree::fit_tree(&x, &y, s, &w, &cfg).unwrap();
        for r in 0..x.rows() {
            prop_assert!(on_simplex(t.predict(x.row(r)).unwrap()));
        }
    }

    #[test]
    fn forest_outputs_lie_on_the_simplex((x, y, s) in tiny_data(), seed in any::<u64>()) {
        let cfg = ForestConfig { n_trees: 4, seed, ..ForestConfig::default() };
        let w = vec![1.0 / x.rows() as f64; x.rows()];
        let f = forest::fit_forest(&x, &y, s, &w, &cfg).unwrap();
        for r in 0..x.rows() {
            prop_assert!(on_simplex(&f.predict(x.row(r)).unwrap()));
        }
    }

    #[test]
    fn block_outputs_lie_on_the_simplex((x, y, s) in tiny_data(), seed in any::<u64>()) {
        prop_assume!(x.rows() >= 3);
        let cfg = BlockConfig { k_folds: 3, forests: block::default_forests(2, usize::MAX), seed, ..BlockConfig::default() };
        let w = vec![1.0 / x.rows() as f64; x.rows()];
        let fit = block::fit_block(&x, &y, s, &w, &cfg).unwrap();
        for r in 0..x.rows() {
            prop_assert!(on_simplex(fit.oof_predictions.row(r)));
            prop_assert!(on_simplex(&fit.block.predict(x.row(r)).unwrap()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scaling_coefficients_preserves_decisions((x, y, s) in tiny_data(), factor in 0.01f64..100.0) {
        prop_assume!(x.rows() >= 6);
        prop_assume!((0..s).all(|c| y.contains(&c)));
        let data = Dataset::new(x, y, s).unwrap();
        let cfg = CascadeConfig {
            max_layers: 2,
            early_stop_patience: 0,
            block: BlockConfig { k_folds: 3, forests: block::default_forests(3, usize::MAX), ..BlockConfig::default() },
            ..CascadeConfig::default()
        };
        let model = cascade::train(&data, &cfg).unwrap();
        let mut scaled = model.clone();
        scaled.scale_alphas(factor);
        let a = model.predict_scores_batch(data.features()).unwrap();
        let b = scaled.predict_scores_batch(data.features()).unwrap();
        for (ra, rb) in a.iter_rows().zip(b.iter_rows()) {
            // exact ties can be broken differently once rounding enters
            let top: Vec<f64> = {
                let mut v = ra.to_vec();
                v.sort_by(|p, q| q.total_cmp(p));
                v
            };
            if top.len() < 2 || top[0] - top[1] > 1e-9 * top[0].abs().max(1.0) {
                prop_assert_eq!(argmax(ra), argmax(rb));
            }
        }
    }
}
