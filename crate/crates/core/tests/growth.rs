mod common;

use noracl::diagnostics::{effective_plastic_count, locked_fraction};
use noracl::linalg::Matrix;
use noracl::network::LayerParams;
use noracl::rng::stream_rng;
use noracl::trigger::make_fanin;
use noracl::{ConsolidationState, GrowableMlp, GrowthOutcome, InitStrategy, ParamSet};
use proptest::prelude::*;
use rand::Rng;

fn random_model(seed: u64) -> GrowableMlp {
    let mut rng = stream_rng(seed, &[1]);
    let input = rng.gen_range(12..24);
    let depth = rng.gen_range(1..4);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..9)).collect();
    let output = rng.gen_range(2..6);
    GrowableMlp::new(input, &hidden, output, &mut rng).unwrap()
}

fn logits(mlp: &GrowableMlp, x: &Matrix) -> Vec<f64> {
    mlp.forward(x).unwrap().logits.into_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn growth_preserves_logits(seed in any::<u64>(), strat in 0usize..6, k in 1usize..5, layer_pick in any::<usize>()) {
        let mut mlp = random_model(seed);
        let x = Matrix::standard_normal(mlp.input_dim(), 7, &mut stream_rng(seed, &[2]));
        let before = logits(&mlp, &x);
        let l = layer_pick % mlp.num_hidden();
        let out = mlp
            .grow_layer(l, k, InitStrategy::ALL[strat], 0.2, None, &mut stream_rng(seed, &[3]))
            .unwrap();
        let after = logits(&mlp, &x);
        prop_assert!(common::max_abs_diff(&before, &after) <= 1e-12);
        if let GrowthOutcome::Grown { .. } = out {
            prop_assert_eq!(mlp.hidden_widths().iter().sum::<usize>(), random_model(seed).hidden_widths().iter().sum::<usize>() + k);
        }
    }

    #[test]
    fn growth_adds_exact_parameter_count(seed in any::<u64>(), k in 1usize..6) {
        let mut mlp = random_model(seed);
        let l = (seed as usize) % mlp.num_hidden();
        let shapes = mlp.params().shapes();
        let fan_in = shapes[l].1;
        let fan_out = shapes[l + 1].0;
        let n0 = mlp.param_count();
        mlp.grow_layer(l, k, InitStrategy::Qr, 0.2, None, &mut stream_rng(seed, &[4])).unwrap();
        prop_assert_eq!(mlp.param_count(), n0 + k * (fan_in + 1 + fan_out));
    }
}

#[test]
fn hundred_growth_events_across_all_strategies() {
    let mut worst: f64 = 0.0;
    let mut grown = 0;
    for i in 0..100u64 {
        let strategy = InitStrategy::ALL[i as usize % 6];
        let mut mlp = GrowableMlp::new(30, &[4, 3], 4, &mut stream_rng(i, &[5])).unwrap();
        let x = Matrix::standard_normal(30, 9, &mut stream_rng(i, &[6]));
        let before = logits(&mlp, &x);
        let out = mlp.grow_layer(0, 1 + (i as usize % 3), strategy, 0.2, None, &mut stream_rng(i, &[7])).unwrap();
        assert!(matches!(out, GrowthOutcome::Grown { .. }), "{strategy}: {out:?}");
        grown += 1;
        worst = worst.max(common::max_abs_diff(&before, &logits(&mlp, &x)));
    }
    assert_eq!(grown, 100);
    assert!(worst <= 1e-12, "max logit change {worst:e}");
}

#[test]
fn qr_rows_are_scaled_orthonormal() {
    let existing = Matrix::zeros(3, 10);
    let rows = make_fanin(InitStrategy::Qr, 4, 0.2, &existing, &mut stream_rng(0, &[])).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            let d: f64 = rows.row(i).iter().zip(rows.row(j)).map(|(a, b)| a * b).sum();
            let want = if i == j { 0.04 } else { 0.0 };
            assert!((d - want).abs() < 1e-12, "({i},{j}) {d}");
        }
    }
}

#[test]
fn nullspace_rows_avoid_existing_span() {
    let mut rng = stream_rng(1, &[]);
    let existing = Matrix::standard_normal(5, 12, &mut rng);
    let rows = make_fanin(InitStrategy::Nullspace, 4, 0.2, &existing, &mut rng).unwrap();
    for i in 0..4 {
        for r in 0..5 {
            let d: f64 = rows.row(i).iter().zip(existing.row(r)).map(|(a, b)| a * b).sum();
            assert!(d.abs() < 1e-8);
        }
    }
    let full = Matrix::standard_normal(10, 12, &mut rng);
    assert!(make_fanin(InitStrategy::Nullspace, 3, 0.2, &full, &mut rng).is_err());
}

#[test]
fn refused_growth_leaves_model_untouched() {
    let mut mlp = GrowableMlp::new(5, &[4], 2, &mut stream_rng(2, &[])).unwrap();
    let copy = mlp.clone();
    let out = mlp.grow_layer(0, 2, InitStrategy::Nullspace, 0.2, None, &mut stream_rng(3, &[])).unwrap();
    assert!(matches!(out, GrowthOutcome::Refused { .. }));
    assert_eq!(mlp, copy);
    let out = mlp.grow_layer(0, 3, InitStrategy::Qr, 0.2, Some(6), &mut stream_rng(3, &[])).unwrap();
    assert!(matches!(out, GrowthOutcome::Refused { .. }));
    assert_eq!(mlp, copy);
}

#[test]
fn zero_units_stay_dead_under_training() {
    let mut mlp = GrowableMlp::new(6, &[3], 2, &mut stream_rng(4, &[])).unwrap();
    mlp.grow_layer(0, 2, InitStrategy::Zero, 0.2, None, &mut stream_rng(5, &[])).unwrap();
    let cons = ConsolidationState::new(&mlp, 0.9).unwrap();
    let mut rng = stream_rng(6, &[]);
    for _ in 0..20 {
        let x = Matrix::standard_normal(6, 8, &mut rng);
        let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();
        mlp.train_step(&x, &labels, &cons, 0.0, 0.1, 5.0).unwrap();
    }
    let w = &mlp.params().layers[0];
    for r in 3..5 {
        assert!(w.weights.row(r).iter().all(|&v| v == 0.0));
        assert_eq!(w.biases[r], 0.0);
    }
}

fn filled(like: &ParamSet, v: f64) -> ParamSet {
    let mut p = ParamSet::zeros_like(like);
    p.values_mut().for_each(|x| *x = v);
    p
}

#[test]
fn plastic_count_equals_params_with_empty_fisher() {
    let mlp = GrowableMlp::new(10, &[7, 5], 3, &mut stream_rng(7, &[])).unwrap();
    let cons = ConsolidationState::new(&mlp, 0.9).unwrap();
    assert_eq!(effective_plastic_count(&cons, 500.0), mlp.param_count() as f64);
}

#[test]
fn plastic_count_grows_by_added_parameters() {
    let mut mlp = GrowableMlp::new(10, &[7, 5], 3, &mut stream_rng(8, &[])).unwrap();
    let mut cons = ConsolidationState::new(&mlp, 0.9).unwrap();
    cons.consolidate_after_task(&filled(mlp.params(), 0.3), &mlp).unwrap();
    let mut rng = stream_rng(9, &[]);
    for step in 0..12 {
        let before = effective_plastic_count(&cons, 500.0);
        let l = step % 2;
        let k = 1 + step % 3;
        let n0 = mlp.param_count();
        mlp.grow_layer(l, k, InitStrategy::Qr, 0.2, None, &mut rng).unwrap();
        cons.pad_for_growth(l, k).unwrap();
        let added = (mlp.param_count() - n0) as f64;
        let after = effective_plastic_count(&cons, 500.0);
        assert!((after - before - added).abs() < 1e-9, "step {step}: {after} - {before} != {added}");
    }
}

#[test]
fn locked_fraction_example() {
    let layer = LayerParams {
        weights: Matrix::from_vec(1, 2, vec![0.0, 10.0]).unwrap(),
        biases: vec![100.0],
    };
    let fisher = ParamSet { layers: vec![layer] };
    let anchors = ParamSet::zeros_like(&fisher);
    let cons = ConsolidationState::from_parts(fisher, anchors, vec![0.0], 0.9).unwrap();
    assert!((locked_fraction(&cons, 1.0, 0, 0.1) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(locked_fraction(&cons, 0.0, 0, 0.1), 0.0);
}

proptest! {
    #[test]
    fn locked_fraction_in_unit_interval(seed in any::<u64>(), lambda in 0.0f64..1e4) {
        let mlp = random_model(seed);
        let mut rng = stream_rng(seed, &[10]);
        let mut f = ParamSet::zeros_like(mlp.params());
        f.values_mut().for_each(|v| *v = rng.gen_range(0.0..0.1));
        let cons = ConsolidationState::from_parts(f, mlp.params().clone(), vec![0.0; mlp.num_hidden() + 1], 0.9).unwrap();
        for l in 0..=mlp.num_hidden() {
            let v = locked_fraction(&cons, lambda, l, 0.1);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(locked_fraction(&cons, 0.0, l, 0.1), 0.0);
        }
        let n = effective_plastic_count(&cons, lambda);
        prop_assert!(n <= mlp.param_count() as f64 + 1e-9);
    }
}
