//! Seeded synthetic post corpora with planted virality.
//!
//! Every post follows a base engagement curve that saturates early at a low
//! level. Viral posts add a logistic burst whose takeoff lands around half an
//! hour after posting and whose velocity peaks hours later. Increments are
//! Poisson draws with log-normal rate jitter, sampled on the default
//! collector schedule. Where the planted signal lives is configurable: in the
//! engagement dynamics, in author and category-path context, in the static
//! content blob, or in all of them.

use std::str::FromStr;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collector::PollSchedule;
use crate::features::{ColumnKind, STATIC_CATALOG};
use crate::ingest::{
    AuthorInfo, Category, EngagementSnapshot, LanguageGroup, MediaType, PostRecord, StaticBlob, StaticValue,
    SubredditInfo,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("viral_frac must lie in (0, 1), got {0}")]
    ViralFrac(f64),
    #[error("n_posts must be at least 20, got {0}")]
    TooFewPosts(usize),
    #[error("invalid synth parameter: {0}")]
    Parameter(String),
}

/// Feature group carrying the planted difference between viral and
/// non-viral posts before the longest prediction window ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalPlacement {
    #[default]
    Temporal,
    Network,
    Static,
    Mixed,
}

impl SignalPlacement {
    fn early_dynamics(self) -> bool {
        matches!(self, SignalPlacement::Temporal | SignalPlacement::Mixed)
    }

    fn network(self) -> bool {
        matches!(self, SignalPlacement::Network | SignalPlacement::Mixed)
    }

    fn static_blob(self) -> bool {
        matches!(self, SignalPlacement::Static | SignalPlacement::Mixed)
    }
}

impl FromStr for SignalPlacement {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "temporal" => Ok(SignalPlacement::Temporal),
            "network" => Ok(SignalPlacement::Network),
            "static" => Ok(SignalPlacement::Static),
            "mixed" => Ok(SignalPlacement::Mixed),
            other => Err(SynthError::Parameter(format!("unknown signal placement `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_posts: usize,
    pub viral_frac: f64,
    pub placement: SignalPlacement,
    pub subscribers_min: u64,
    pub subscribers_max: u64,
    /// Median final normalized score added by the viral burst.
    pub viral_final_median: f64,
    pub viral_final_sigma: f64,
    /// Median plateau of the base curve (normalized score).
    pub base_final_median: f64,
    pub base_final_sigma: f64,
    /// Mean takeoff minute of viral bursts when dynamics carry the signal.
    pub takeoff_mean: f64,
    pub takeoff_spread: f64,
    /// Range of the minute of peak velocity of viral bursts.
    pub peak_min: f64,
    pub peak_max: f64,
    /// Onset of viral bursts when dynamics carry no early signal.
    pub late_onset: f64,
    /// Share of non-viral posts with a short early spike.
    pub burst_intensity: f64,
    /// Log-normal sigma of the per-interval rate jitter.
    pub noise_scale: f64,
    pub tracking_minutes: f64,
    pub start: DateTime<Utc>,
    /// Mean minutes between consecutive post creations.
    pub spacing_minutes: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_posts: 1000,
            viral_frac: 0.05,
            placement: SignalPlacement::Temporal,
            subscribers_min: 10_000,
            subscribers_max: 2_000_000,
            viral_final_median: 1500.0,
            viral_final_sigma: 0.6,
            base_final_median: 40.0,
            base_final_sigma: 0.9,
            takeoff_mean: 29.0,
            takeoff_spread: 15.0,
            peak_min: 300.0,
            peak_max: 600.0,
            late_onset: 480.0,
            burst_intensity: 0.3,
            noise_scale: 0.3,
            tracking_minutes: 1500.0,
            start: Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).single().expect("valid date"),
            spacing_minutes: 20.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// Viral and non-viral final engagement far apart, little noise.
    pub fn well_separated(n_posts: usize, seed: u64) -> Self {
        Self {
            n_posts,
            seed,
            viral_final_median: 4000.0,
            viral_final_sigma: 0.2,
            base_final_median: 30.0,
            base_final_sigma: 0.5,
            burst_intensity: 0.0,
            noise_scale: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.viral_frac > 0.0 && self.viral_frac < 1.0) {
            return Err(SynthError::ViralFrac(self.viral_frac));
        }
        if self.n_posts < 20 {
            return Err(SynthError::TooFewPosts(self.n_posts));
        }
        let positive = [
            ("viral_final_median", self.viral_final_median),
            ("base_final_median", self.base_final_median),
            ("tracking_minutes", self.tracking_minutes),
            ("spacing_minutes", self.spacing_minutes),
            ("takeoff_mean", self.takeoff_mean),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(SynthError::Parameter(format!("{name} must be positive")));
        }
        if self.subscribers_min < 1 || self.subscribers_max < self.subscribers_min {
            return Err(SynthError::Parameter("subscriber range".into()));
        }
        if !(self.peak_min > self.takeoff_mean + self.takeoff_spread && self.peak_max >= self.peak_min) {
            return Err(SynthError::Parameter("peak range must follow the takeoff range".into()));
        }
        if !(0.0..=1.0).contains(&self.burst_intensity) {
            return Err(SynthError::Parameter("burst_intensity must lie in [0, 1]".into()));
        }
        if self.viral_final_sigma < 0.0 || self.base_final_sigma < 0.0 || self.noise_scale < 0.0 {
            return Err(SynthError::Parameter("sigmas must be non-negative".into()));
        }
        Ok(())
    }

    /// Number of planted positives: `round(viral_frac · n_posts)`.
    pub fn n_viral(&self) -> usize {
        (self.viral_frac * self.n_posts as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub records: Vec<PostRecord>,
    pub planted: Vec<bool>,
}

fn sigmoid(z: f64) -> f64 {
    crate::models::sigmoid(z)
}

/// Expected normalized score of one post as a function of minutes.
#[derive(Debug, Clone, Copy)]
struct Trajectory {
    base: f64,
    base_tau: f64,
    spike: Option<(f64, f64, f64)>,
    viral: Option<ViralBurst>,
}

#[derive(Debug, Clone, Copy)]
struct ViralBurst {
    final_score: f64,
    onset: f64,
    mid: f64,
    rate: f64,
}

/// `σ(0.1·peak)` solves `σ(1 − σ) = 0.025`: the logistic reaches a tenth of
/// its peak velocity `ln(1/σ − 1) ≈ 3.64` rate units before its midpoint.
const TAKEOFF_LOGIT: f64 = 3.6382;

impl Trajectory {
    fn at(&self, t: f64) -> f64 {
        let mut m = self.base * (1.0 - (-t / self.base_tau).exp());
        if let Some((size, start, dur)) = self.spike {
            m += size * ((t - start) / dur).clamp(0.0, 1.0);
        }
        if let Some(v) = self.viral {
            if t > v.onset {
                let s0 = sigmoid(v.rate * (v.onset - v.mid));
                m += v.final_score * (sigmoid(v.rate * (t - v.mid)) - s0) / (1.0 - s0);
            }
        }
        m
    }
}

const WORDS: &[&str] = &[
    "when", "the", "build", "finally", "passes", "me", "my", "cat", "monday", "boss", "friday", "nobody", "literally",
    "every", "time", "starter", "pack", "expectation", "reality", "brain", "coffee", "deadline", "weekend", "mom",
    "teacher", "exam", "game", "update", "internet", "wifi", "dog", "pizza", "sleep", "alarm", "meeting",
];

const TEMPLATES: &[&str] = &[
    "drake", "distracted_boyfriend", "two_buttons", "expanding_brain", "change_my_mind", "this_is_fine",
    "woman_yelling_at_cat", "stonks", "gigachad", "none",
];

fn categorical_vocab(name: &str) -> &'static [&'static str] {
    match name {
        "template_name" => TEMPLATES,
        "humor_type" => &["absurdist", "observational", "dark", "wordplay", "self_deprecating", "wholesome"],
        "primary_topic" => &["work", "school", "gaming", "relationships", "animals", "politics", "tech"],
        "emotional_resonance" => &["joy", "nostalgia", "frustration", "surprise", "none"],
        "text_sentiment_overall" | "title_sentiment" => &["positive", "neutral", "negative"],
        "text_language" => &["en", "de", "es", "fr", "pt", "it", "nl", "other"],
        "panels" => &["1", "2", "3", "4"],
        "facial_expression_primary_emotion" => &["happy", "sad", "angry", "surprised", "neutral"],
        "profanity_level" | "social_shareability" | "social_currency" | "format_effort" => &["low", "medium", "high"],
        "offense_type" | "controversy_type" => &["none", "mild", "political", "religious"],
        "social_platform" => &["reddit", "twitter", "tiktok", "instagram"],
        "meme_type" => &["image_macro", "reaction", "comic", "screenshot", "video_clip"],
        _ => &["a", "b", "c", "d"],
    }
}

fn numeric_value(name: &str, rng: &mut ChaCha8Rng) -> StaticValue {
    if name.starts_with("is_") || name.contains("_is_") {
        return StaticValue::Bool(rng.random_bool(0.2));
    }
    match name {
        "image_height" | "image_width" => StaticValue::Number(f64::from(rng.random_range(240u32..=2048))),
        "text_word_count" => StaticValue::Number(f64::from(rng.random_range(0u32..=40))),
        _ => StaticValue::Number((rng.random_range(0.0..10.0f64) * 10.0).round() / 10.0),
    }
}

/// Deterministic stand-in for the content-feature extractor.
fn static_blob(viral: bool, signal: bool, rng: &mut ChaCha8Rng) -> StaticBlob {
    let mut blob = StaticBlob::new();
    for &(name, _, kind) in STATIC_CATALOG {
        if matches!(name, "title_word_count" | "is_title_present" | "media_type") {
            continue;
        }
        let value = match kind {
            ColumnKind::Numeric => numeric_value(name, rng),
            ColumnKind::Categorical => {
                StaticValue::Text((*categorical_vocab(name).choose(rng).expect("non-empty vocab")).to_owned())
            }
        };
        blob.insert(name.to_owned(), value);
    }
    if signal {
        let (lo, hi) = if viral { (7.0, 10.0) } else { (0.0, 6.0) };
        for key in ["relatability_score", "novelty_uniqueness_score"] {
            blob.insert(key.into(), StaticValue::Number((rng.random_range(lo..hi) * 10.0f64).round() / 10.0));
        }
        let template = if viral { TEMPLATES[rng.random_range(0..3)] } else { TEMPLATES[rng.random_range(3..10)] };
        blob.insert("template_name".into(), StaticValue::Text(template.into()));
    }
    blob
}

fn log_uniform(lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    if hi <= lo {
        return lo;
    }
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn lognormal(median: f64, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
    if sigma == 0.0 {
        return median;
    }
    LogNormal::new(median.ln(), sigma).expect("valid log-normal").sample(rng)
}

fn poisson(lambda: f64, rng: &mut ChaCha8Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as u64
}

/// Category path: `(minute, category)` change points after `new` at 0.
fn category_path(viral: bool, signal: bool, rng: &mut ChaCha8Rng) -> Vec<(f64, Category)> {
    let mut path = vec![(0.0, Category::New)];
    if signal && viral {
        let rising = rng.random_range(5.0..30.0);
        let hot = rising + rng.random_range(20.0..60.0);
        path.push((rising, Category::Rising));
        path.push((hot, Category::Hot));
        if rng.random_bool(0.5) {
            path.push((hot + rng.random_range(300.0..900.0), Category::Top));
        }
        return path;
    }
    let (p_rise, p_hot) = if signal { (0.3, 0.1) } else { (0.5, 0.3) };
    if rng.random_bool(p_rise) {
        let rising = rng.random_range(10.0..180.0);
        path.push((rising, Category::Rising));
        if rng.random_bool(p_hot) {
            let hot = rising + rng.random_range(30.0..300.0);
            path.push((hot, Category::Hot));
            if rng.random_bool(0.2) {
                path.push((hot + rng.random_range(60.0..600.0), Category::Top));
            }
        } else if rng.random_bool(0.3) {
            path.push((rising + rng.random_range(30.0..240.0), Category::New));
        }
    }
    path
}

fn category_at(path: &[(f64, Category)], t: f64) -> Category {
    path.iter().rev().find(|(start, _)| *start <= t).map_or(Category::New, |p| p.1)
}

fn language_group(rng: &mut ChaCha8Rng) -> LanguageGroup {
    if rng.random_bool(0.6) {
        LanguageGroup::English
    } else {
        *LanguageGroup::ALL.choose(rng).expect("non-empty")
    }
}

fn generate_post(cfg: &SynthConfig, i: usize, viral: bool, grid: &[f64]) -> PostRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(i as u64 + 1);
    let placement = cfg.placement;

    let subscribers = log_uniform(cfg.subscribers_min as f64, cfg.subscribers_max as f64, &mut rng).round() as u64;
    let base = lognormal(cfg.base_final_median, cfg.base_final_sigma, &mut rng);
    let mut traj = Trajectory { base, base_tau: rng.random_range(10.0..90.0), spike: None, viral: None };
    if !viral && rng.random_bool(cfg.burst_intensity) {
        traj.spike = Some((base * rng.random_range(1.0..3.0), rng.random_range(5.0..60.0), rng.random_range(5.0..20.0)));
    }
    if viral {
        let final_score = lognormal(cfg.viral_final_median, cfg.viral_final_sigma, &mut rng);
        let (onset, takeoff, mid) = if placement.early_dynamics() {
            let takeoff = (cfg.takeoff_mean + rng.random_range(-cfg.takeoff_spread..=cfg.takeoff_spread)).max(1.0);
            (0.0, takeoff, rng.random_range(cfg.peak_min..=cfg.peak_max))
        } else {
            let takeoff = cfg.late_onset + rng.random_range(10.0..50.0);
            (cfg.late_onset, takeoff, takeoff + rng.random_range(150.0..300.0))
        };
        traj.viral = Some(ViralBurst { final_score, onset, mid, rate: TAKEOFF_LOGIT / (mid - takeoff) });
    }

    let comment_ratio = rng.random_range(0.05..0.25);
    let crosspost_ratio = rng.random_range(0.002..0.02);
    let path = category_path(viral, placement.network(), &mut rng);
    let jitter = LogNormal::new(-0.5 * cfg.noise_scale * cfg.noise_scale, cfg.noise_scale.max(1e-12))
        .expect("valid jitter");
    let scale = subscribers as f64 / 100_000.0;

    let (mut score, mut comments, mut crossposts) = (0u64, 0u64, 0u64);
    let mut prev = 0.0;
    let mut snapshots = Vec::with_capacity(grid.len());
    for &t in grid {
        let expected = traj.at(t);
        let inc = (expected - prev).max(0.0) * scale;
        prev = expected;
        let mut draw = |mean: f64| {
            let rate = if cfg.noise_scale > 0.0 { mean * jitter.sample(&mut rng) } else { mean };
            poisson(rate, &mut rng)
        };
        score += draw(inc);
        comments += draw(inc * comment_ratio);
        crossposts += draw(inc * crosspost_ratio);
        snapshots.push(EngagementSnapshot {
            t_minutes: t,
            score: score as i64,
            comments,
            crossposts,
            upvote_ratio: Some((rng.random_range(0.80..0.99f64) * 1000.0).round() / 1000.0),
            category: category_at(&path, t),
        });
    }

    let karma_median = if placement.network() && viral { 60_000.0 } else { 4_000.0 };
    let author = AuthorInfo {
        total_karma: lognormal(karma_median, 1.0, &mut rng).round() as i64,
        account_age_days: (rng.random_range(1.0..4000.0f64) * 10.0).round() / 10.0,
        is_premium: rng.random_bool(0.05),
    };
    let group = language_group(&mut rng);
    let n_words = rng.random_range(3..=10);
    let title = (0..n_words).map(|_| *WORDS.choose(&mut rng).expect("non-empty")).collect::<Vec<_>>().join(" ");
    let offset_secs = (cfg.spacing_minutes * 60.0 * (i as f64 + rng.random_range(0.0..0.9))).round() as i64;
    let media_type = if rng.random_bool(0.85) { MediaType::Image } else { MediaType::Gif };
    let id = format!("s{:06}", i);
    PostRecord {
        created_utc: cfg.start + Duration::seconds(offset_secs),
        title,
        author,
        subreddit: SubredditInfo { name: format!("{}_memes", group.as_str()), subscribers, language_group: group },
        media_type,
        media_url: Some(format!("https://media.example.org/{id}.{}", if media_type == MediaType::Gif { "gif" } else { "png" })),
        removed: false,
        snapshots,
        static_features: Some(static_blob(viral, placement.static_blob(), &mut rng)),
        post_id: id,
    }
}

/// Planted positions: one uniform pick inside each of `k` equal blocks of
/// creation order, so any chronological cut sees its share of positives.
fn plant_positions(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut planted = vec![false; n];
    for b in 0..k {
        let (lo, hi) = (b * n / k, (b + 1) * n / k);
        planted[rng.random_range(lo..hi)] = true;
    }
    planted
}

/// Generates `n_posts` records, exactly `round(viral_frac · n_posts)` of them
/// planted viral, in creation order.
pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let planted = plant_positions(cfg.n_posts, cfg.n_viral(), &mut master);
    let grid = PollSchedule::default().grid(cfg.tracking_minutes);
    let records = (0..cfg.n_posts).into_par_iter().map(|i| generate_post(cfg, i, planted[i], &grid)).collect();
    Ok(SynthCorpus { records, planted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::validate_record;

    #[test]
    fn exact_positive_count() {
        let c = generate(&SynthConfig { n_posts: 1000, viral_frac: 0.05, seed: 7, ..SynthConfig::default() }).unwrap();
        assert_eq!(c.planted.iter().filter(|&&p| p).count(), 50);
        assert!(c.records.iter().all(|r| validate_record(r).is_valid()));
    }

    #[test]
    fn positives_spread_over_creation_order() {
        let c = generate(&SynthConfig { n_posts: 500, viral_frac: 0.05, seed: 7, ..SynthConfig::default() }).unwrap();
        let late = c.planted[400..].iter().filter(|&&p| p).count();
        assert_eq!(late, 5);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(
            generate(&SynthConfig { viral_frac: 1.0, ..SynthConfig::default() }),
            Err(SynthError::ViralFrac(_))
        ));
        assert!(matches!(
            generate(&SynthConfig { n_posts: 19, ..SynthConfig::default() }),
            Err(SynthError::TooFewPosts(19))
        ));
    }

    #[test]
    fn takeoff_formula_matches_rule() {
        let z = -TAKEOFF_LOGIT;
        let s = sigmoid(z);
        assert!((s * (1.0 - s) - 0.025).abs() < 1e-4);
    }
}
