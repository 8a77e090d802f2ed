//! Window-scoped feature extraction.
//!
//! Every feature for a post at window `W` is computed from the snapshots with
//! `t_minutes ≤ W` only. Quantities that have not happened yet inside the
//! window are reported as missing, never as sentinel numbers.

mod catalog;
mod matrix;
pub mod series;

use chrono::{Datelike, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use catalog::{catalog_entry, static_cell, static_columns, STATIC_CATALOG};
pub use matrix::{
    all_modalities, manifest_path, Cell, ColumnKind, ColumnSpec, FeatureMatrix, MatrixError, MatrixManifest,
    Modality, ModalitySet,
};
use series::{dynamics, entropy_bits, integrate, ls_slope, velocity, NormalizedSeries};

use crate::ingest::{Category, EngagementSnapshot, PostRecord};
use crate::labeling::NormalizationCaps;

/// Observation window in minutes after posting.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct WindowSpec {
    minutes: f64,
}

impl WindowSpec {
    pub const SWEEP: [f64; 8] = [30.0, 60.0, 120.0, 180.0, 240.0, 300.0, 360.0, 420.0];

    pub fn new(minutes: f64) -> Option<Self> {
        (minutes > 0.0 && minutes.is_finite()).then_some(Self { minutes })
    }

    pub fn minutes(self) -> f64 {
        self.minutes
    }

    pub fn sweep() -> Vec<WindowSpec> {
        Self::SWEEP.iter().map(|&m| Self { minutes: m }).collect()
    }
}

/// Snapshots observed no later than the window end.
pub fn window_view(r: &PostRecord, w: WindowSpec) -> &[EngagementSnapshot] {
    let end = r.snapshots.partition_point(|s| s.t_minutes <= w.minutes);
    &r.snapshots[..end]
}

/// Number of equal-width bins used for timing entropy.
pub const ENTROPY_BINS: usize = 6;
/// Guard added to the early-half AUC in the momentum ratio.
pub const MOMENTUM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TemporalFeatures {
    pub hour_of_day: f64,
    pub day_of_week: f64,
    pub is_weekend: f64,
    pub window_minutes: f64,
    pub norm_score: Option<f64>,
    pub norm_comments: Option<f64>,
    pub norm_crossposts: Option<f64>,
    pub peak_velocity: Option<f64>,
    pub takeoff_velocity: Option<f64>,
    pub peak_acceleration: Option<f64>,
    pub min_acceleration: Option<f64>,
    pub engagement_auc: Option<f64>,
    pub burst_count: Option<f64>,
    pub momentum_ratio: Option<f64>,
    pub half_life_minutes: Option<f64>,
    pub slope_5min: Option<f64>,
    pub slope_10min: Option<f64>,
    pub time_to_peak: Option<f64>,
    pub time_to_takeoff: Option<f64>,
    pub timing_entropy: Option<f64>,
    pub first_vote_min: Option<f64>,
    pub first_comment_min: Option<f64>,
    pub first_crosspost_min: Option<f64>,
    /// Minutes spent in new, rising, hot, top.
    pub time_in: [Option<f64>; 4],
    pub pct_time_in: [Option<f64>; 4],
    pub transitions_within: Option<f64>,
    pub upvote_ratio: Option<f64>,
    pub category_snapshot: Option<String>,
}

impl TemporalFeatures {
    pub fn cells(&self) -> Vec<(&'static str, ColumnKind, Cell)> {
        use ColumnKind::{Categorical as C, Numeric as N};
        let n = |v: Option<f64>| Cell::num(v);
        let mut out = vec![
            ("hour_of_day", N, Cell::Num(self.hour_of_day)),
            ("day_of_week", N, Cell::Num(self.day_of_week)),
            ("is_weekend", N, Cell::Num(self.is_weekend)),
            ("window_minutes", N, Cell::Num(self.window_minutes)),
            ("norm_score", N, n(self.norm_score)),
            ("norm_comments", N, n(self.norm_comments)),
            ("norm_crossposts", N, n(self.norm_crossposts)),
            ("peak_velocity", N, n(self.peak_velocity)),
            ("takeoff_velocity", N, n(self.takeoff_velocity)),
            ("peak_acceleration", N, n(self.peak_acceleration)),
            ("min_acceleration", N, n(self.min_acceleration)),
            ("engagement_auc", N, n(self.engagement_auc)),
            ("burst_count", N, n(self.burst_count)),
            ("momentum_ratio", N, n(self.momentum_ratio)),
            ("half_life_minutes", N, n(self.half_life_minutes)),
            ("slope_5min", N, n(self.slope_5min)),
            ("slope_10min", N, n(self.slope_10min)),
            ("time_to_peak", N, n(self.time_to_peak)),
            ("time_to_takeoff", N, n(self.time_to_takeoff)),
            ("timing_entropy", N, n(self.timing_entropy)),
            ("first_vote_min", N, n(self.first_vote_min)),
            ("first_comment_min", N, n(self.first_comment_min)),
            ("first_crosspost_min", N, n(self.first_crosspost_min)),
            ("transitions_within", N, n(self.transitions_within)),
            ("upvote_ratio", N, n(self.upvote_ratio)),
            ("category_snapshot", C, Cell::cat(self.category_snapshot.clone())),
        ];
        const TIME_IN: [&str; 4] = ["time_in_new", "time_in_rising", "time_in_hot", "time_in_top"];
        const PCT_IN: [&str; 4] = ["pct_time_in_new", "pct_time_in_rising", "pct_time_in_hot", "pct_time_in_top"];
        for k in 0..4 {
            out.push((TIME_IN[k], N, n(self.time_in[k])));
            out.push((PCT_IN[k], N, n(self.pct_time_in[k])));
        }
        out
    }
}

/// Minutes each snapshot's category is held: until the next snapshot, the
/// last one until `end`.
fn category_durations(snaps: &[EngagementSnapshot], end: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (i, s) in snaps.iter().enumerate() {
        let until = snaps.get(i + 1).map_or(end, |n| n.t_minutes).min(end);
        if let Some(rank) = s.category.rank() {
            out[rank as usize] += (until - s.t_minutes).max(0.0);
        }
    }
    out
}

fn transitions(snaps: &[EngagementSnapshot]) -> usize {
    snaps.windows(2).filter(|w| w[0].category != w[1].category).count()
}

fn first_time(snaps: &[EngagementSnapshot], pred: impl Fn(&EngagementSnapshot) -> bool) -> Option<f64> {
    snaps.iter().find(|s| pred(s)).map(|s| s.t_minutes)
}

/// Temporal-dynamics features at window `w`.
pub fn extract_temporal(r: &PostRecord, w: WindowSpec, caps: &NormalizationCaps) -> TemporalFeatures {
    let created = r.created_utc;
    let dow = created.weekday().num_days_from_monday();
    let mut f = TemporalFeatures {
        hour_of_day: f64::from(created.hour()),
        day_of_week: f64::from(dow),
        is_weekend: f64::from(u8::from(dow >= 5)),
        window_minutes: w.minutes,
        ..TemporalFeatures::default()
    };
    let snaps = window_view(r, w);
    if snaps.is_empty() {
        return f;
    }
    let end = w.minutes;
    let s = NormalizedSeries::from_snapshots(snaps, r.subreddit.subscribers, caps);
    let last = s.len() - 1;
    f.norm_score = Some(s.score[last]);
    f.norm_comments = Some(s.comments[last]);
    f.norm_crossposts = Some(s.crossposts[last]);

    let d = dynamics(&s.t, &s.score);
    f.peak_velocity = d.peak_velocity;
    f.peak_acceleration = d.peak_acceleration;
    f.min_acceleration = d.min_acceleration;
    f.time_to_takeoff = d.time_to_takeoff;
    f.takeoff_velocity = d.takeoff_velocity;

    let v = velocity(&s.t, &s.score);
    if !v.is_empty() {
        let vals: Vec<f64> = v.iter().map(|p| p.1).collect();
        let (mean, std) = crate::scalar::mean_std(&vals).expect("non-empty");
        let mut bursts = 0;
        if std > 0.0 {
            let mut inside = false;
            for &x in &vals {
                let above = x > mean + std;
                if above && !inside {
                    bursts += 1;
                }
                inside = above;
            }
        }
        f.burst_count = Some(f64::from(bursts));
    }

    let auc = integrate(&s.t, &s.score, 0.0, end);
    f.engagement_auc = Some(auc);
    let early = integrate(&s.t, &s.score, 0.0, end / 2.0);
    let late = integrate(&s.t, &s.score, end / 2.0, end);
    f.momentum_ratio = Some(if early == 0.0 && late == 0.0 { 1.0 } else { late / (early + MOMENTUM_EPS) });
    if auc > 0.0 {
        f.half_life_minutes = s
            .t
            .iter()
            .copied()
            .chain(std::iter::once(end))
            .find(|&t| t > 0.0 && integrate(&s.t, &s.score, 0.0, t) >= 0.5 * auc);
    }

    let trailing = |span: f64| {
        let pts: Vec<(f64, f64)> =
            s.t.iter().zip(&s.score).filter(|(t, _)| **t >= end - span).map(|(&t, &m)| (t, m)).collect();
        ls_slope(&pts)
    };
    f.slope_5min = trailing(5.0);
    f.slope_10min = trailing(10.0);

    let peak_idx = s
        .score
        .iter()
        .enumerate()
        .fold(0, |best, (i, &m)| if m > s.score[best] { i } else { best });
    f.time_to_peak = Some(s.t[peak_idx]);

    let width = end / ENTROPY_BINS as f64;
    let mut mass = [0.0; ENTROPY_BINS];
    for i in 1..s.len() {
        let inc = (s.score[i] - s.score[i - 1]).max(0.0);
        let bin = ((s.t[i] / width).ceil() as usize).saturating_sub(1).min(ENTROPY_BINS - 1);
        mass[bin] += inc;
    }
    f.timing_entropy = Some(entropy_bits(&mass));

    f.first_vote_min = first_time(snaps, |x| x.score > 0);
    f.first_comment_min = first_time(snaps, |x| x.comments > 0);
    f.first_crosspost_min = first_time(snaps, |x| x.crossposts > 0);

    let durations = category_durations(snaps, end);
    for (k, d) in durations.into_iter().enumerate() {
        f.time_in[k] = Some(d);
        f.pct_time_in[k] = Some(d / end);
    }
    f.transitions_within = Some(transitions(snaps) as f64);
    f.upvote_ratio = snaps.iter().rev().find_map(|x| x.upvote_ratio);
    f.category_snapshot = Some(snaps[last].category.as_str().to_owned());
    f
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkFeatures {
    pub author_account_age_days: f64,
    pub author_is_premium: f64,
    pub author_karma_per_day: f64,
    pub author_total_karma: f64,
    pub category_transitions: Option<f64>,
    pub category_stability: Option<f64>,
    pub unique_categories: Option<f64>,
    pub promotion_demotion_ratio: Option<f64>,
    pub progression_pattern: Option<String>,
    pub category_sequence: Option<String>,
    pub category_pct_time_in_new: Option<f64>,
    pub time_to_hot: Option<f64>,
    pub time_to_rising: Option<f64>,
    pub time_to_top: Option<f64>,
}

impl NetworkFeatures {
    pub fn cells(&self) -> Vec<(&'static str, ColumnKind, Cell)> {
        use ColumnKind::{Categorical as C, Numeric as N};
        let n = |v: Option<f64>| Cell::num(v);
        vec![
            ("author_account_age_days", N, Cell::Num(self.author_account_age_days)),
            ("author_is_premium", N, Cell::Num(self.author_is_premium)),
            ("author_karma_per_day", N, Cell::Num(self.author_karma_per_day)),
            ("author_total_karma", N, Cell::Num(self.author_total_karma)),
            ("category_transitions", N, n(self.category_transitions)),
            ("category_stability", N, n(self.category_stability)),
            ("unique_categories", N, n(self.unique_categories)),
            ("promotion_demotion_ratio", N, n(self.promotion_demotion_ratio)),
            ("progression_pattern", C, Cell::cat(self.progression_pattern.clone())),
            ("category_sequence", C, Cell::cat(self.category_sequence.clone())),
            ("category_pct_time_in_new", N, n(self.category_pct_time_in_new)),
            ("time_to_hot", N, n(self.time_to_hot)),
            ("time_to_rising", N, n(self.time_to_rising)),
            ("time_to_top", N, n(self.time_to_top)),
        ]
    }
}

/// Longest collapsed category path kept verbatim in `category_sequence`.
const MAX_SEQUENCE_RUNS: usize = 4;

/// Author context and category-path features at window `w`.
pub fn extract_network(r: &PostRecord, w: WindowSpec) -> NetworkFeatures {
    let a = &r.author;
    let mut f = NetworkFeatures {
        author_account_age_days: a.account_age_days,
        author_is_premium: f64::from(u8::from(a.is_premium)),
        author_karma_per_day: a.total_karma as f64 / a.account_age_days.max(1.0),
        author_total_karma: a.total_karma as f64,
        ..NetworkFeatures::default()
    };
    let snaps = window_view(r, w);
    if snaps.is_empty() {
        return f;
    }
    let trans = transitions(snaps);
    f.category_transitions = Some(trans as f64);
    f.category_stability =
        Some(if snaps.len() < 2 { 1.0 } else { 1.0 - trans as f64 / (snaps.len() - 1) as f64 });

    let mut seen: Vec<Category> = snaps.iter().map(|s| s.category).filter(|c| c.rank().is_some()).collect();
    seen.sort();
    seen.dedup();
    f.unique_categories = Some(seen.len() as f64);

    let (mut up, mut down) = (0usize, 0usize);
    for pair in snaps.windows(2) {
        if let (Some(x), Some(y)) = (pair[0].category.rank(), pair[1].category.rank()) {
            if y > x {
                up += 1;
            } else if y < x {
                down += 1;
            }
        }
    }
    f.promotion_demotion_ratio = Some(up as f64 / (down as f64 + 1.0));
    f.progression_pattern = Some(
        match (up, down) {
            (0, 0) => "static",
            (_, 0) => "promoted",
            (0, _) => "demoted",
            _ => "mixed",
        }
        .to_owned(),
    );

    let mut runs: Vec<&str> = Vec::new();
    for s in snaps {
        if runs.last() != Some(&s.category.as_str()) {
            runs.push(s.category.as_str());
        }
    }
    let mut seq = runs.iter().take(MAX_SEQUENCE_RUNS).copied().collect::<Vec<_>>().join(">");
    if runs.len() > MAX_SEQUENCE_RUNS {
        seq.push_str(">+");
    }
    f.category_sequence = Some(seq);

    f.category_pct_time_in_new = Some(category_durations(snaps, w.minutes)[0] / w.minutes);
    f.time_to_rising = first_time(snaps, |s| s.category == Category::Rising);
    f.time_to_hot = first_time(snaps, |s| s.category == Category::Hot);
    f.time_to_top = first_time(snaps, |s| s.category == Category::Top);
    f
}

fn schema_probe() -> PostRecord {
    use crate::ingest::{AuthorInfo, LanguageGroup, MediaType, SubredditInfo};
    PostRecord {
        post_id: String::new(),
        created_utc: chrono::DateTime::UNIX_EPOCH,
        title: String::new(),
        author: AuthorInfo { total_karma: 0, account_age_days: 0.0, is_premium: false },
        subreddit: SubredditInfo { name: String::new(), subscribers: 1, language_group: LanguageGroup::English },
        media_type: MediaType::Image,
        media_url: None,
        removed: false,
        snapshots: Vec::new(),
        static_features: None,
    }
}

/// Column descriptors for the requested modalities, ordered by modality then
/// name. Independent of the data.
pub fn matrix_columns(include: &ModalitySet) -> Vec<ColumnSpec> {
    let probe = schema_probe();
    let caps = NormalizationCaps::unbounded();
    let w = WindowSpec { minutes: 1.0 };
    let mut cols = Vec::new();
    for &m in include {
        let mut group: Vec<ColumnSpec> = match m {
            Modality::Temporal => extract_temporal(&probe, w, &caps)
                .cells()
                .into_iter()
                .map(|(name, kind, _)| ColumnSpec { name: name.to_owned(), modality: m, kind })
                .collect(),
            Modality::Network => extract_network(&probe, w)
                .cells()
                .into_iter()
                .map(|(name, kind, _)| ColumnSpec { name: name.to_owned(), modality: m, kind })
                .collect(),
            _ => static_columns(m).collect(),
        };
        group.sort_by(|a, b| a.name.cmp(&b.name));
        cols.extend(group);
    }
    cols
}

fn feature_row(r: &PostRecord, w: WindowSpec, caps: &NormalizationCaps, columns: &[ColumnSpec]) -> Vec<Cell> {
    let mut temporal = None;
    let mut network = None;
    columns
        .iter()
        .map(|c| match c.modality {
            Modality::Temporal => lookup(temporal.get_or_insert_with(|| extract_temporal(r, w, caps).cells()), &c.name),
            Modality::Network => lookup(network.get_or_insert_with(|| extract_network(r, w).cells()), &c.name),
            _ => static_cell(r, &c.name, c.kind),
        })
        .collect()
}

fn lookup(cells: &[(&'static str, ColumnKind, Cell)], name: &str) -> Cell {
    cells.iter().find(|c| c.0 == name).map(|c| c.2.clone()).expect("column from the same schema")
}

/// One row per record, columns restricted to `include`.
pub fn assemble_matrix(
    records: &[PostRecord],
    w: WindowSpec,
    caps: &NormalizationCaps,
    include: &ModalitySet,
) -> FeatureMatrix {
    let columns = matrix_columns(include);
    let rows: Vec<Vec<Cell>> = records.par_iter().map(|r| feature_row(r, w, caps, &columns)).collect();
    FeatureMatrix {
        row_ids: records.iter().map(|r| r.post_id.clone()).collect(),
        columns,
        rows,
    }
}
