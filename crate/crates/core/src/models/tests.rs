use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn xor() -> (DenseMatrix, Vec<bool>) {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..25 {
        for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            rows.push(vec![a, b]);
            y.push((a == 1.0) != (b == 1.0));
        }
    }
    (DenseMatrix::from_rows(&rows), y)
}

fn noisy_linear(n: usize, d: usize, seed: u64) -> (DenseMatrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = 2.0 * row[0] - row[1] + 0.5 * rng.random_range(-1.0..1.0);
        y.push(z > 0.3);
        rows.push(row);
    }
    (DenseMatrix::from_rows(&rows), y)
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("f{j}")).collect()
}

#[test]
fn balanced_weights() {
    let y = [true, false, false, false];
    assert_eq!(class_weights(&y, ClassWeighting::Balanced), (4.0 / 6.0, 2.0));
    assert_eq!(class_weights(&y, ClassWeighting::None), (1.0, 1.0));
}

#[test]
fn sigmoid_and_softplus_do_not_overflow() {
    assert_eq!(sigmoid(1000.0), 1.0);
    assert_eq!(sigmoid(-1000.0), 0.0);
    assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    assert_eq!(softplus(1000.0), 1000.0);
    assert_eq!(softplus(-1000.0), 0.0);
}

#[test]
fn gbt_and_forest_fit_xor() {
    let (x, y) = xor();
    for kind in [ModelKind::Gbt, ModelKind::RandomForest] {
        let m = train(&ModelConfig::preset(kind, 1), &x, &y, &names(2)).unwrap();
        let p = m.predict_proba(&x).unwrap();
        for (pi, yi) in p.iter().zip(&y) {
            assert_eq!(*pi >= 0.5, *yi, "{kind}");
        }
    }
}

#[test]
fn gbt_zero_rounds_is_constant() {
    let (x, y) = noisy_linear(200, 3, 4);
    let cfg = GbtConfig { n_rounds: 0, ..GbtConfig::default() };
    let m = train_gbt(&x, &y, &cfg).unwrap();
    let p = m.predict_proba(&x);
    assert!(p.iter().all(|&v| (v - p[0]).abs() < 1e-15));
    // default positive weight balances the classes
    assert!((p[0] - 0.5).abs() < 1e-12);
}

#[test]
fn gbt_importances_are_consistent() {
    let (x, y) = noisy_linear(300, 4, 5);
    let m = train_gbt(&x, &y, &GbtConfig { n_rounds: 20, ..GbtConfig::default() }).unwrap();
    let imp = m.importance();
    let splits: usize = m
        .trees
        .iter()
        .flat_map(|t| &t.nodes)
        .filter(|n| matches!(n, GbtNode::Split { .. }))
        .count();
    assert_eq!(imp.frequency.iter().sum::<f64>() as usize, splits);
    assert!(imp.total_gain[0] > imp.total_gain[2]);
    assert!(imp.total_gain[0] > imp.total_gain[3]);
}

#[test]
fn forest_importances_sum_to_one() {
    let (x, y) = noisy_linear(300, 5, 6);
    let m = train_forest(&x, &y, &ForestConfig { n_trees: 30, ..ForestConfig::default() }).unwrap();
    assert!((m.importances.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(m.importances.iter().all(|&v| v >= 0.0));
}

#[test]
fn forest_ignores_row_order() {
    let (x, y) = noisy_linear(120, 4, 7);
    let cfg = ForestConfig { n_trees: 15, ..ForestConfig::default() };
    let a = train_forest(&x, &y, &cfg).unwrap();
    let perm: Vec<usize> = (0..x.n_rows()).rev().collect();
    let yp: Vec<bool> = perm.iter().map(|&i| y[i]).collect();
    let b = train_forest(&x.select_rows(&perm), &yp, &cfg).unwrap();
    assert_eq!(a.predict_proba(&x), b.predict_proba(&x));
}

#[test]
fn logreg_reaches_stationary_point() {
    let (x, y) = noisy_linear(250, 3, 8);
    let cfg = LogRegConfig::default();
    let m = train_logreg(&x, &y, &cfg).unwrap();
    let (wn, wp) = class_weights(&y, cfg.class_weight);
    let mut grad = m.coef.clone();
    let mut grad_b = 0.0;
    for (i, row) in x.rows().enumerate() {
        let p = m.decision(row);
        let p = sigmoid(p);
        let s = if y[i] { wp } else { wn };
        let r = cfg.c * s * (p - f64::from(u8::from(y[i])));
        for (g, v) in grad.iter_mut().zip(row) {
            *g += r * v;
        }
        grad_b += r;
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b;
    assert!(norm.sqrt() < 1e-4, "gradient norm {}", norm.sqrt());
}

#[test]
fn logreg_uninformative_feature_gives_half() {
    let x = DenseMatrix::from_rows(&[vec![0.0], vec![0.0], vec![0.0], vec![0.0], vec![0.0]]);
    let y = [true, false, false, false, false];
    let m = train_logreg(&x, &y, &LogRegConfig::default()).unwrap();
    assert_eq!(m.coef, vec![0.0]);
    assert!((m.predict_proba(&x)[0] - 0.5).abs() < 1e-9);
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let (x, y) = noisy_linear(12, 3, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = MlpModel::init(3, &[4, 3], &mut rng);
    let sw: Vec<f64> = (0..12).map(|i| 1.0 + 0.1 * i as f64).collect();
    let (_, grad) = m.loss_and_gradient(&x, &y, &sw, 0.01);
    let theta = m.flat_params();
    assert_eq!(grad.len(), m.n_params());
    let h = 1e-6;
    for k in 0..theta.len() {
        let mut probe = m.clone();
        let mut t = theta.clone();
        t[k] += h;
        probe.set_flat_params(&t);
        let up = probe.loss_and_gradient(&x, &y, &sw, 0.01).0;
        t[k] -= 2.0 * h;
        probe.set_flat_params(&t);
        let down = probe.loss_and_gradient(&x, &y, &sw, 0.01).0;
        let fd = (up - down) / (2.0 * h);
        assert!((fd - grad[k]).abs() < 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", grad[k]);
    }
}

#[test]
fn mlp_learns_linear_boundary() {
    let (x, y) = noisy_linear(400, 3, 10);
    let cfg = MlpConfig { hidden_layers: vec![16], max_epochs: 200, ..MlpConfig::default() };
    let m = train_mlp(&x, &y, &cfg).unwrap();
    let p = m.predict_proba(&x);
    let acc = p.iter().zip(&y).filter(|(p, y)| (**p >= 0.5) == **y).count() as f64 / y.len() as f64;
    assert!(acc > 0.85, "accuracy {acc}");
}

#[test]
fn training_is_deterministic_per_seed() {
    let (x, y) = noisy_linear(150, 3, 11);
    for kind in ModelKind::ALL {
        let cfg = ModelConfig::preset(kind, 5);
        let a = train(&cfg, &x, &y, &names(3)).unwrap();
        let b = train(&cfg, &x, &y, &names(3)).unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn rejects_bad_inputs() {
    let x = DenseMatrix::from_rows(&[vec![1.0], vec![2.0]]);
    let cfg = ModelConfig::preset(ModelKind::Logreg, 0);
    assert!(matches!(train(&cfg, &x, &[true, true], &names(1)), Err(ModelError::SingleClass)));
    assert!(matches!(train(&cfg, &x, &[true], &names(1)), Err(ModelError::LengthMismatch { .. })));
    let bad = DenseMatrix::from_rows(&[vec![1.0], vec![f64::NAN]]);
    assert!(matches!(train(&cfg, &bad, &[true, false], &names(1)), Err(ModelError::NonFinite { row: 1, col: 0 })));
}

#[test]
fn model_file_round_trip_and_column_checks() {
    let (x, y) = noisy_linear(100, 2, 12);
    let m = train(&ModelConfig::preset(ModelKind::Gbt, 1), &x, &y, &names(2)).unwrap();
    let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
    assert_eq!(back.predict_proba(&x).unwrap(), m.predict_proba(&x).unwrap());
    let swapped = vec!["f1".to_owned(), "f0".to_owned()];
    assert!(matches!(m.predict_named(&x, &swapped), Err(ModelError::ColumnMismatch { index: 0, .. })));
    let narrow = x.select_cols(&[0]);
    assert!(matches!(m.predict_proba(&narrow), Err(ModelError::ShapeMismatch { .. })));
    let mut old = m.clone();
    old.format_version = 0;
    assert!(matches!(TrainedModel::from_json(&old.to_json().unwrap()), Err(ModelError::Version(0))));
}

#[test]
fn kind_parses_aliases() {
    assert_eq!("rf".parse::<ModelKind>().unwrap(), ModelKind::RandomForest);
    assert_eq!("gbt".parse::<ModelKind>().unwrap(), ModelKind::Gbt);
    assert!("svm".parse::<ModelKind>().is_err());
}
