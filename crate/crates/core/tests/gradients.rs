mod common;

use noracl::consolidation::estimate_fisher_diag;
use noracl::linalg::Matrix;
use noracl::network::LayerParams;
use noracl::rng::stream_rng;
use noracl::{Batch, ConsolidationState, FisherKind, GrowableMlp, InitStrategy, ParamSet};
use rand::Rng;

fn total_loss(mlp: &GrowableMlp, x: &Matrix, labels: &[usize], cons: &ConsolidationState, lambda: f64) -> f64 {
    mlp.loss_and_grad(x, labels, cons, lambda).unwrap().0
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn setup(seed: u64) -> (GrowableMlp, Matrix, Vec<usize>, ConsolidationState) {
    let mut rng = stream_rng(seed, &[20]);
    let input = rng.gen_range(2..7);
    let depth = rng.gen_range(1..3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..6)).collect();
    let classes = rng.gen_range(2..5);
    let mut mlp = GrowableMlp::new(input, &hidden, classes, &mut rng).unwrap();
    if seed.is_multiple_of(3) {
        mlp.grow_layer(0, 2, InitStrategy::Qr, 0.2, None, &mut rng).unwrap();
    }
    for layer in &mut mlp.params_mut().layers {
        layer.biases.iter_mut().for_each(|b| *b = rng.gen_range(-0.3..0.3));
    }
    let n = rng.gen_range(3..9);
    let x = Matrix::standard_normal(input, n, &mut rng);
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let mut fisher = ParamSet::zeros_like(mlp.params());
    fisher.values_mut().for_each(|f| *f = rng.gen_range(0.0..1e-3));
    let mut anchors = mlp.params().clone();
    anchors.values_mut().for_each(|a| *a += rng.gen_range(-0.1..0.1));
    let cons = ConsolidationState::from_parts(fisher, anchors, vec![0.0; mlp.num_hidden() + 1], 0.9).unwrap();
    (mlp, x, labels, cons)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        for lambda in [0.0, 500.0] {
            let (mlp, x, labels, cons) = setup(seed);
            let (_, grad) = mlp.loss_and_grad(&x, &labels, &cons, lambda).unwrap();
            let analytic: Vec<f64> = grad.values().collect();
            let n = mlp.param_count();
            let mut numeric = Vec::with_capacity(n);
            for i in 0..n {
                let mut plus = mlp.clone();
                *plus.params_mut().values_mut().nth(i).unwrap() += h;
                let mut minus = mlp.clone();
                *minus.params_mut().values_mut().nth(i).unwrap() -= h;
                let d = total_loss(&plus, &x, &labels, &cons, lambda) - total_loss(&minus, &x, &labels, &cons, lambda);
                numeric.push(d / (2.0 * h));
            }
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "seed {seed} λ={lambda}: relative error {err:e}");
            worst = worst.max(err);
        }
    }
    eprintln!("worst relative gradient error {worst:e}");
}

#[test]
fn penalty_value_and_gradient_arithmetic() {
    let layer = LayerParams {
        weights: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
        biases: vec![0.0],
    };
    let params = ParamSet { layers: vec![layer] };
    let mlp = GrowableMlp::from_params(params.clone()).unwrap();
    let mut fisher = ParamSet::zeros_like(&params);
    fisher.layers[0].weights[(0, 0)] = 3.0;
    let anchors = ParamSet::zeros_like(&params);
    let cons = ConsolidationState::from_parts(fisher, anchors, vec![0.0], 0.9).unwrap();
    let (value, grad) = cons.penalty_and_grad(&mlp, 2.0).unwrap();
    assert_eq!(value, 3.0);
    assert_eq!(grad.layers[0].weights[(0, 0)], 6.0);
    assert_eq!(grad.layers[0].biases[0], 0.0);
}

/// Per-sample oracle: one single-column gradient per sample, squared and
/// averaged.
fn per_sample_fisher(mlp: &GrowableMlp, batches: &[Batch]) -> Vec<f64> {
    let mut acc = vec![0.0; mlp.param_count()];
    let mut total = 0;
    for b in batches {
        for j in 0..b.len() {
            let x = Matrix::from_fn(b.x.rows(), 1, |r, _| b.x[(r, j)]);
            let (_, g) = mlp.cross_entropy_grad(&x, &[b.labels[j]]).unwrap();
            for (a, v) in acc.iter_mut().zip(g.values()) {
                *a += v * v;
            }
            total += 1;
        }
    }
    acc.iter().map(|a| a / total as f64).collect()
}

#[test]
fn fisher_matches_per_sample_oracle() {
    for seed in 0..20u64 {
        let (mlp, _, _, _) = setup(seed);
        let mut rng = stream_rng(seed, &[21]);
        let batches: Vec<Batch> = (0..rng.gen_range(1..6))
            .map(|_| {
                let n = rng.gen_range(1..7);
                Batch {
                    x: Matrix::standard_normal(mlp.input_dim(), n, &mut rng),
                    labels: (0..n).map(|_| rng.gen_range(0..mlp.output_dim())).collect(),
                }
            })
            .collect();
        let fast: Vec<f64> = estimate_fisher_diag(&mlp, &batches, FisherKind::Empirical, &mut rng)
            .unwrap()
            .values()
            .collect();
        let oracle = per_sample_fisher(&mlp, &batches);
        assert!(fast.iter().all(|&f| f >= 0.0));
        for (a, b) in fast.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn fisher_of_logistic_model_by_hand() {
    // Two-class softmax on a scalar input: logits w·x + b.
    let layer = LayerParams {
        weights: Matrix::from_vec(2, 1, vec![0.5, -0.25]).unwrap(),
        biases: vec![0.1, 0.0],
    };
    let mlp = GrowableMlp::from_params(ParamSet { layers: vec![layer] }).unwrap();
    let xs = [1.0, -2.0, 0.5];
    let ys = [0usize, 1, 1];
    let batch = Batch {
        x: Matrix::from_vec(1, 3, xs.to_vec()).unwrap(),
        labels: ys.to_vec(),
    };
    let mut expected = [0.0; 4];
    for (&x, &y) in xs.iter().zip(&ys) {
        let z = [0.5 * x + 0.1, -0.25 * x];
        let m = z[0].max(z[1]);
        let e = [(z[0] - m).exp(), (z[1] - m).exp()];
        let p = [e[0] / (e[0] + e[1]), e[1] / (e[0] + e[1])];
        for c in 0..2 {
            let d = p[c] - if c == y { 1.0 } else { 0.0 };
            expected[c] += (d * x) * (d * x) / 3.0;
            expected[2 + c] += d * d / 3.0;
        }
    }
    let f = estimate_fisher_diag(&mlp, &[batch], FisherKind::Empirical, &mut stream_rng(0, &[])).unwrap();
    let got: Vec<f64> = f.values().collect();
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-10, "{got:?} vs {expected:?}");
    }
}

#[test]
fn sampled_fisher_is_nonnegative_and_finite() {
    let (mlp, x, labels, _) = setup(3);
    let batch = Batch { x, labels };
    let f = estimate_fisher_diag(&mlp, &[batch], FisherKind::Sampled, &mut stream_rng(1, &[])).unwrap();
    assert!(f.values().all(|v| v.is_finite() && v >= 0.0));
}

#[test]
fn consolidation_keeps_fisher_bounded() {
    let (mlp, _, _, _) = setup(5);
    let mut cons = ConsolidationState::new(&mlp, 0.9).unwrap();
    let mut rng = stream_rng(5, &[22]);
    let mut sup: f64 = 0.0;
    for _ in 0..30 {
        let mut f = ParamSet::zeros_like(mlp.params());
        f.values_mut().for_each(|v| *v = rng.gen_range(0.0..2.0));
        sup = sup.max(f.values().fold(0.0, f64::max));
        cons.consolidate_after_task(&f, &mlp).unwrap();
        assert!(cons.fisher().values().all(|v| (0.0..=sup).contains(&v)));
    }
}
