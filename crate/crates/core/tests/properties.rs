use proptest::prelude::*;

use meme_virality::collector::PollSchedule;
use meme_virality::eval::{chronological_split, pr_auc, roc_auc, stratified_kfold};
use meme_virality::features::{Cell, ColumnKind, ColumnSpec, FeatureMatrix, Modality};
use meme_virality::labeling::{fit_threshold, normalize_metric, preliminary_count};
use meme_virality::preprocess::PreprocessModel;
use meme_virality::synth::{generate, SynthConfig};

/// Labels with both classes present and scores drawn from a few levels so
/// that ties are common.
fn scored_labels() -> impl Strategy<Value = (Vec<bool>, Vec<f64>)> {
    (2usize..120).prop_flat_map(|n| {
        (prop::collection::vec(any::<bool>(), n), prop::collection::vec(0u8..12, n)).prop_map(|(mut y, s)| {
            y[0] = true;
            y[1] = false;
            (y, s.into_iter().map(|v| f64::from(v) / 4.0).collect())
        })
    })
}

fn oracle_ap(y: &[bool], s: &[f64]) -> f64 {
    let n_pos = y.iter().filter(|&&l| l).count() as f64;
    let mut ts = s.to_vec();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    let (mut ap, mut prev) = (0.0, 0.0);
    for t in ts {
        let tp = s.iter().zip(y).filter(|&(&v, &l)| l && v >= t).count() as f64;
        let k = s.iter().filter(|&&v| v >= t).count() as f64;
        ap += (tp / n_pos - prev) * tp / k;
        prev = tp / n_pos;
    }
    ap
}

fn oracle_roc(y: &[bool], s: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut pairs = 0.0;
    for (i, _) in y.iter().enumerate().filter(|(_, &l)| l) {
        for (j, _) in y.iter().enumerate().filter(|(_, &l)| !l) {
            pairs += 1.0;
            sum += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
        }
    }
    sum / pairs
}

fn numeric_matrix(values: &[Option<f64>]) -> FeatureMatrix {
    let columns = vec![
        ColumnSpec { name: "x".into(), modality: Modality::Temporal, kind: ColumnKind::Numeric },
        ColumnSpec { name: "c".into(), modality: Modality::Visual, kind: ColumnKind::Categorical },
    ];
    let rows = values
        .iter()
        .enumerate()
        .map(|(i, v)| vec![Cell::num(*v), Cell::cat(if i % 3 == 0 { None } else { Some(format!("k{}", i % 4)) })])
        .collect();
    FeatureMatrix::new((0..values.len()).map(|i| format!("r{i}")).collect(), columns, rows).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_oracles((y, s) in scored_labels()) {
        prop_assert!((pr_auc(&y, &s).unwrap() - oracle_ap(&y, &s)).abs() < 1e-12);
        prop_assert!((roc_auc(&y, &s).unwrap() - oracle_roc(&y, &s)).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_monotone_rescaling((y, s) in scored_labels()) {
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        prop_assert!((pr_auc(&y, &s).unwrap() - pr_auc(&y, &t).unwrap()).abs() < 1e-12);
        prop_assert!((roc_auc(&y, &s).unwrap() - roc_auc(&y, &t).unwrap()).abs() < 1e-12);
        let flipped: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((roc_auc(&y, &s).unwrap() + roc_auc(&y, &flipped).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn folds_partition_and_stratify(y in prop::collection::vec(any::<bool>(), 10..200), k in 2usize..6, seed: u64) {
        let n_pos = y.iter().filter(|&&l| l).count();
        prop_assume!(n_pos >= k && y.len() - n_pos >= k);
        let folds = stratified_kfold(&y, k, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        let pos: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| y[i]).count()).collect();
        prop_assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
        prop_assert_eq!(stratified_kfold(&y, k, seed).unwrap(), folds);
    }

    #[test]
    fn threshold_lies_between_cluster_means(xs in prop::collection::vec(-1e3f64..1e3, 2..300)) {
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assume!(min < max);
        let t = fit_threshold(&xs).unwrap();
        prop_assert!(t.low <= t.tau && t.tau <= t.high);
        prop_assert!(min <= t.low && t.high <= max);
        prop_assert!(xs.iter().any(|&v| v >= t.tau) && xs.iter().any(|&v| v < t.tau));
    }

    #[test]
    fn normalization_is_capped_and_monotone(a in 0f64..1e7, b in 0f64..1e7, subs in 1u64..10_000_000, cap in 1f64..1e6) {
        let (na, nb) = (normalize_metric(a, subs, cap).unwrap(), normalize_metric(b, subs, cap).unwrap());
        prop_assert!(na <= cap && nb <= cap);
        if a <= b {
            prop_assert!(na <= nb);
        }
    }

    #[test]
    fn preliminary_count_is_ceiling(n in 1usize..100_000, frac in 0.001f64..0.999) {
        let c = preliminary_count(n, frac);
        prop_assert!(c as f64 >= frac * n as f64 - 1e-6);
        prop_assert!((c as f64) < frac * n as f64 + 1.0);
    }

    #[test]
    fn preprocess_is_row_wise(values in prop::collection::vec(prop::option::weighted(0.8, -50f64..50.0), 3..60)) {
        prop_assume!(values.iter().any(Option::is_some));
        let m = numeric_matrix(&values);
        let pre = PreprocessModel::fit(&m).unwrap();
        let full = pre.transform(&m).unwrap().x;
        prop_assert!(full.as_slice().iter().all(|v| v.is_finite()));
        let pick: Vec<usize> = (0..values.len()).rev().step_by(2).collect();
        let part = pre.transform(&m.select_rows(&pick)).unwrap().x;
        prop_assert_eq!(part, full.select_rows(&pick));
        let mean = full.column(0).iter().sum::<f64>() / values.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn poll_grid_follows_tiers(until in 1f64..3000.0) {
        let s = PollSchedule::default();
        let g = s.grid(until);
        prop_assert_eq!(g[0], 0.0);
        prop_assert!(*g.last().unwrap() >= until);
        for w in g.windows(2) {
            let step = w[1] - w[0];
            let tier = s.tiers().iter().find(|t| w[0] < t.max_age_minutes).unwrap_or(s.tiers().last().unwrap());
            prop_assert!((step - tier.interval_minutes).abs() < 1e-9);
        }
    }
}

#[test]
fn chronological_split_puts_train_first() {
    for (n, frac) in [(50, 0.8), (101, 0.5), (333, 0.9)] {
        let c = generate(&SynthConfig { n_posts: n, seed: n as u64, ..SynthConfig::default() }).unwrap();
        let split = chronological_split(&c.records, frac).unwrap();
        let last_train = split.train_indices.iter().map(|&i| c.records[i].created_utc).max().unwrap();
        let first_test = split.test_indices.iter().map(|&i| c.records[i].created_utc).min().unwrap();
        assert!(last_train < first_test);
        assert_eq!(split.train_indices.len(), (frac * n as f64).floor() as usize);
        assert_eq!(split.boundary, first_test);
    }
}

#[test]
fn synth_records_follow_shipped_schema() {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../../../schema/post_record.schema.json")).unwrap();
    let c = generate(&SynthConfig { n_posts: 40, seed: 1, ..SynthConfig::default() }).unwrap();
    let props = schema["properties"].as_object().unwrap();
    let snap_props = schema["$defs"]["snapshot"]["properties"].as_object().unwrap();
    for r in &c.records {
        let v = serde_json::to_value(r).unwrap();
        let obj = v.as_object().unwrap();
        for key in schema["required"].as_array().unwrap() {
            assert!(obj.contains_key(key.as_str().unwrap()), "missing {key}");
        }
        for key in obj.keys() {
            assert!(props.contains_key(key), "undocumented field {key}");
        }
        for s in v["snapshots"].as_array().unwrap() {
            for key in s.as_object().unwrap().keys() {
                assert!(snap_props.contains_key(key), "undocumented snapshot field {key}");
            }
        }
    }
}
