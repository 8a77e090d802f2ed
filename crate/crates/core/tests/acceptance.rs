//! Acceptance criteria 1-9, one `criterion N: PASS|FAIL` line each; criterion
//! 10 runs only when `MEMEVIR_PUBLISHED_DATA` names a dataset file.
//! Exits non-zero if any gated criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use meme_virality::eval::{pr_auc, roc_auc};
use meme_virality::experiments::{
    importance_over_time, run_ablation, run_window_sweep, ExperimentConfig, PreparedDataset, SweepRow,
};
use meme_virality::features::{all_modalities, Modality, WindowSpec};
use meme_virality::ingest::{parse_dataset, Category, EngagementSnapshot, PostRecord};
use meme_virality::labeling::{fit_threshold, learn_hybrid_weights, LabelingError, LabelingFeature};
use meme_virality::models::mlp::MlpModel;
use meme_virality::models::{
    train_gbt, train_logreg, ClassWeighting, ForestConfig, GbtConfig, LogRegConfig, ModelKind,
};
use meme_virality::preprocess::PreprocessModel;
use meme_virality::synth::{generate, SynthConfig};
use meme_virality::DenseMatrix;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Average precision by enumerating every distinct score as a threshold.
fn brute_ap(y: &[bool], s: &[f64]) -> f64 {
    let n_pos = y.iter().filter(|&&l| l).count() as f64;
    let mut thresholds = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = s.iter().zip(y).filter(|&(&v, &l)| v >= t && l).count() as f64;
        let predicted = s.iter().filter(|&&v| v >= t).count() as f64;
        let recall = tp / n_pos;
        ap += (recall - prev_recall) * tp / predicted;
        prev_recall = recall;
    }
    ap
}

/// ROC-AUC as the Mann-Whitney pair count, ties scoring one half.
fn brute_roc(y: &[bool], s: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in y.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                wins += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let n = rng.random_range(2..=200);
        let mut y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        y[0] = true;
        y[1] = false;
        // every third set is heavily tied
        let levels = if case % 3 == 0 { 5.0 } else { 1e6 };
        let s: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor() / levels).collect();
        worst = worst.max((pr_auc(&y, &s).unwrap() - brute_ap(&y, &s)).abs());
        worst = worst.max((roc_auc(&y, &s).unwrap() - brute_roc(&y, &s)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-9 && secs < 5.0, format!("max abs diff {worst:.2e}, {secs:.2}s"))
}

/// Rescales engagement, rewrites text fields and category paths of a random
/// subset of test records, keeping creation time and tracking span.
fn mutate_test_records(records: &mut [PostRecord], test: &[usize], rng: &mut ChaCha8Rng) {
    for &i in test {
        if !rng.random_bool(0.5) {
            continue;
        }
        let r = &mut records[i];
        let factor = rng.random_range(0.0..50.0);
        for s in &mut r.snapshots {
            s.score = (s.score as f64 * factor) as i64;
            s.comments = (s.comments as f64 * factor) as u64;
            s.crossposts = rng.random_range(0..1000);
            s.category = [Category::New, Category::Rising, Category::Hot, Category::Top][rng.random_range(0..4)];
        }
        r.title = format!("mutated {}", rng.random::<u32>());
        r.author.total_karma = rng.random_range(0..10_000_000);
        r.subreddit.subscribers = rng.random_range(1..5_000_000);
    }
}

fn fitted_artifacts(records: Vec<PostRecord>, cfg: &ExperimentConfig) -> (Vec<String>, Vec<usize>) {
    let ds = PreparedDataset::prepare(records, cfg, None).unwrap();
    let m = ds.matrix(120.0, &all_modalities()).unwrap();
    let pre = PreprocessModel::fit(&m.select_rows(&ds.split.train_indices)).unwrap();
    let a = &ds.labeling;
    let blobs = vec![
        serde_json::to_string(&a.caps).unwrap(),
        serde_json::to_string(&a.weights).unwrap(),
        serde_json::to_string(&a.threshold).unwrap(),
        pre.to_json(),
    ];
    (blobs, ds.split.test_indices.clone())
}

fn criterion_2() -> Outcome {
    let corpus = generate(&SynthConfig { n_posts: 400, seed: 2, ..SynthConfig::default() }).unwrap();
    let cfg = ExperimentConfig::default();
    let (reference, test) = fitted_artifacts(corpus.records.clone(), &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut changed = 0;
    for _ in 0..20 {
        let mut records = corpus.records.clone();
        mutate_test_records(&mut records, &test, &mut rng);
        let (blobs, _) = fitted_artifacts(records, &cfg);
        if blobs != reference {
            changed += 1;
        }
    }
    outcome(changed == 0, format!("{changed}/20 mutations changed a fitted artifact"))
}

fn criterion_3() -> Outcome {
    let corpus = generate(&SynthConfig { viral_frac: 0.05, ..SynthConfig::well_separated(2000, 3) }).unwrap();
    let ds = PreparedDataset::prepare(corpus.records, &ExperimentConfig::default(), None).unwrap();
    let agree = ds.labels.iter().zip(&corpus.planted).filter(|(a, b)| a == b).count() as f64 / 2000.0;
    let rate = ds.labels.iter().filter(|&&l| l).count() as f64 / ds.labels.len() as f64;
    let pass = ds.labels.len() == 2000 && agree >= 0.95 && (0.03..=0.08).contains(&rate);
    outcome(pass, format!("agreement {:.1}%, positive rate {:.2}%", 100.0 * agree, 100.0 * rate))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (low, high) = (Normal::new(0.0, 1.0).unwrap(), Normal::new(100.0, 1.0).unwrap());
    let mut scores: Vec<f64> = (0..1000).map(|_| low.sample(&mut rng)).collect();
    scores.extend((0..1000).map(|_| high.sample(&mut rng)));
    let tau = fit_threshold(&scores).unwrap().tau;
    let degenerate = matches!(fit_threshold(&[7.0; 50]), Err(LabelingError::DegenerateScores));
    outcome((45.0..=55.0).contains(&tau) && degenerate, format!("tau {tau:.3}, all-equal rejected: {degenerate}"))
}

/// Posts whose comment counts separate the preliminary target; score and
/// crosspost paths are identically distributed noise.
fn planted_comment_corpus(seed: u64) -> (Vec<PostRecord>, Vec<bool>) {
    let template = generate(&SynthConfig { n_posts: 600, seed, ..SynthConfig::default() }).unwrap().records;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prelim = vec![false; template.len()];
    let mut records = Vec::with_capacity(template.len());
    for (i, mut r) in template.into_iter().enumerate() {
        let positive = i % 20 == 0;
        prelim[i] = positive;
        let comment_rate = if positive { rng.random_range(3.0..5.0) } else { rng.random_range(0.0..1.0) };
        let (mut score, mut crossposts) = (0_i64, 0_u64);
        r.subreddit.subscribers = 100_000;
        r.snapshots = (0..=24)
            .map(|k| {
                let t = 5.0 * f64::from(k);
                score += rng.random_range(0..40);
                crossposts += rng.random_range(0..3);
                EngagementSnapshot {
                    t_minutes: t,
                    score,
                    comments: (comment_rate * t) as u64,
                    crossposts,
                    upvote_ratio: None,
                    category: Category::New,
                }
            })
            .collect();
        records.push(r);
    }
    (records, prelim)
}

fn criterion_5() -> Outcome {
    let mut worst_noise: f64 = 0.0;
    let mut informative_ok = true;
    for seed in 0..5 {
        let (records, prelim) = planted_comment_corpus(seed);
        let caps = meme_virality::NormalizationCaps::unbounded();
        let forest = ForestConfig { seed, ..ForestConfig::default() };
        let w = learn_hybrid_weights(&records, &caps, &[30.0, 60.0, 120.0], &prelim, &LabelingFeature::ALL, &forest)
            .unwrap();
        for (name, &beta) in &w.weights {
            if name == "norm_comments" {
                informative_ok &= beta == 1.0;
            } else {
                worst_noise = worst_noise.max(beta);
            }
        }
    }
    outcome(informative_ok && worst_noise < 0.2, format!("informative beta = 1: {informative_ok}, max noise beta {worst_noise:.3}"))
}

fn criterion_6() -> Outcome {
    let xor_x = DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
    let xor_y = [false, true, true, false];
    let gbt = train_gbt(&xor_x, &xor_y, &GbtConfig { min_child_weight: 0.0, ..GbtConfig::default() }).unwrap();
    let xor_ok = gbt.predict_proba(&xor_x).iter().zip(&xor_y).all(|(&p, &y)| (p >= 0.5) == y);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows: Vec<Vec<f64>> = (0..16).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<bool> = rows.iter().map(|r| r[0] + r[1] * r[2] > 0.0).collect();
    let x = DenseMatrix::from_rows(&rows);
    let sw: Vec<f64> = (0..16).map(|i| 1.0 + 0.25 * f64::from(i % 3)).collect();
    let mlp = MlpModel::init(4, &[5, 3], &mut rng);
    let (_, grad) = mlp.loss_and_gradient(&x, &y, &sw, 1e-3);
    let theta = mlp.flat_params();
    let h = 1e-5;
    let (mut diff, mut scale) = (0.0, 0.0);
    for k in 0..theta.len() {
        let mut probe = mlp.clone();
        let mut t = theta.clone();
        t[k] += h;
        probe.set_flat_params(&t);
        let up = probe.loss_and_gradient(&x, &y, &sw, 1e-3).0;
        t[k] -= 2.0 * h;
        probe.set_flat_params(&t);
        let down = probe.loss_and_gradient(&x, &y, &sw, 1e-3).0;
        let fd = (up - down) / (2.0 * h);
        diff += (fd - grad[k]).powi(2);
        scale += fd.powi(2).max(grad[k].powi(2));
    }
    let rel = (diff / scale).sqrt();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..1000 {
        let positive = i % 20 == 0;
        let x0 = if positive { rng.random_range(1.0..3.0) } else { rng.random_range(-3.0..0.5) };
        rows.push(vec![x0, rng.random_range(-3.0..3.0)]);
        labels.push(positive);
    }
    let cfg = LogRegConfig { class_weight: ClassWeighting::Balanced, ..LogRegConfig::default() };
    let lr = train_logreg(&DenseMatrix::from_rows(&rows), &labels, &cfg).unwrap();
    let hits = rows.iter().zip(&labels).filter(|(r, &l)| l && lr.decision(r) >= 0.0).count();
    let recall = hits as f64 / 50.0;

    outcome(
        xor_ok && rel < 1e-4 && recall >= 0.9,
        format!("xor solved: {xor_ok}, mlp gradient rel err {rel:.2e}, minority recall {recall:.2}"),
    )
}

fn pr_at(rows: &[SweepRow], model: ModelKind, window: f64) -> f64 {
    rows.iter().find(|r| r.model == model && r.window == window).expect("sweep row").pr_auc
}

/// Sweep and ablation results on one temporal-signal corpus.
struct SeedRun {
    sweep: Vec<SweepRow>,
    ablation: BTreeMap<String, f64>,
}

fn seed_runs() -> Vec<SeedRun> {
    (0..5)
        .map(|seed| {
            let corpus = generate(&SynthConfig { n_posts: 3000, seed, ..SynthConfig::default() }).unwrap();
            let cfg = ExperimentConfig {
                seed,
                cv_folds: 0,
                windows: vec![30.0, 120.0, 420.0],
                models: vec![ModelKind::Logreg, ModelKind::Gbt],
                ..ExperimentConfig::default()
            };
            let ds = PreparedDataset::prepare(corpus.records, &cfg, None).unwrap();
            let sweep = run_window_sweep(&ds, &cfg).unwrap();
            let ablation = run_ablation(&ds, 120.0, &Modality::ALL, &cfg)
                .unwrap()
                .into_iter()
                .map(|r| (r.setting, r.pr_auc))
                .collect();
            SeedRun { sweep, ablation }
        })
        .collect()
}

fn criterion_7(runs: &[SeedRun]) -> Outcome {
    let med = |model, w| median(runs.iter().map(|r| pr_at(&r.sweep, model, w)).collect());
    let gbt: Vec<f64> = [30.0, 120.0, 420.0].iter().map(|&w| med(ModelKind::Gbt, w)).collect();
    let logreg_420 = med(ModelKind::Logreg, 420.0);
    let trend = gbt.windows(2).all(|p| p[1] >= p[0] - 0.02);

    let corpus = generate(&SynthConfig { n_posts: 5000, seed: 7, ..SynthConfig::default() }).unwrap();
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let ds = PreparedDataset::prepare(corpus.records, &cfg, None).unwrap();
    let rows = run_window_sweep(&ds, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let complete = rows.len() == cfg.windows.len() * cfg.models.len();

    outcome(
        trend && gbt[2] >= logreg_420 && complete && secs < 600.0,
        format!(
            "median gbt PR-AUC {:.3}/{:.3}/{:.3} at 30/120/420, logreg@420 {logreg_420:.3}; \
             full sweep on 5000 posts {secs:.0}s",
            gbt[0], gbt[1], gbt[2]
        ),
    )
}

fn criterion_8(runs: &[SeedRun]) -> Outcome {
    let med = |setting: &str| median(runs.iter().map(|r| r.ablation[setting]).collect());
    let baseline = med("baseline");
    let temporal = med("exclude_temporal");
    let static_dev = Modality::STATIC
        .iter()
        .map(|m| (med(&format!("exclude_{m}")) - baseline).abs())
        .fold(0.0, f64::max);
    outcome(
        temporal <= baseline - 0.3 && static_dev <= 0.05,
        format!("median baseline {baseline:.3}, exclude_temporal {temporal:.3}, max static deviation {static_dev:.3}"),
    )
}

fn criterion_9() -> Outcome {
    let corpus = generate(&SynthConfig { n_posts: 2000, seed: 9, ..SynthConfig::default() }).unwrap();
    let cfg = ExperimentConfig { seed: 9, ..ExperimentConfig::default() };
    let ds = PreparedDataset::prepare(corpus.records, &cfg, None).unwrap();
    let report = importance_over_time(&ds, &WindowSpec::SWEEP, cfg.top_k, &cfg).unwrap();
    let mut sums_ok = true;
    let mut temporal_max = true;
    let mut temporal_counts = Vec::new();
    for w in WindowSpec::SWEEP {
        let counts = report.counts_at(w);
        let n_features = report.features.iter().filter(|f| f.window == w).count();
        let total: usize = counts.values().sum();
        sums_ok &= total == cfg.top_k.min(n_features);
        let t = counts.get(&Modality::Temporal).copied().unwrap_or(0);
        temporal_max &= counts.iter().all(|(m, &c)| *m == Modality::Temporal || c < t);
        temporal_counts.push(t.to_string());
    }
    outcome(
        sums_ok && temporal_max,
        format!("counts sum to top-k: {sums_ok}; temporal counts {}", temporal_counts.join("/")),
    )
}

fn criterion_10() -> Option<Outcome> {
    let path = std::env::var_os("MEMEVIR_PUBLISHED_DATA")?;
    let parsed = parse_dataset(std::path::Path::new(&path)).ok()?;
    let cfg = ExperimentConfig { windows: vec![30.0, 420.0], models: vec![ModelKind::Gbt], cv_folds: 0, ..Default::default() };
    let ds = PreparedDataset::prepare(parsed.records, &cfg, None).ok()?;
    let rows = run_window_sweep(&ds, &cfg).ok()?;
    let (n_train, n_test) = (ds.split.train_indices.len(), ds.split.test_indices.len());
    let (p30, p420) = (pr_at(&rows, ModelKind::Gbt, 30.0), pr_at(&rows, ModelKind::Gbt, 420.0));
    let pass = n_train == 30_239 && n_test == 7_560 && (p30 - 0.52).abs() <= 0.07 && (p420 - 0.82).abs() <= 0.05;
    Some(outcome(pass, format!("split {n_train}/{n_test}, gbt PR-AUC {p30:.3} at 30, {p420:.3} at 420")))
}

fn report(n: usize, o: &Outcome) {
    println!("criterion {n}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() -> ExitCode {
    let mut all = true;
    let mut check = |n: usize, o: Outcome| {
        report(n, &o);
        all &= o.pass;
    };
    check(1, criterion_1());
    check(2, criterion_2());
    check(3, criterion_3());
    check(4, criterion_4());
    check(5, criterion_5());
    check(6, criterion_6());
    let runs = seed_runs();
    check(7, criterion_7(&runs));
    check(8, criterion_8(&runs));
    check(9, criterion_9());
    match criterion_10() {
        Some(o) => report(10, &o),
        None => println!("criterion 10: SKIP (stretch; set MEMEVIR_PUBLISHED_DATA to the released dataset)"),
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
