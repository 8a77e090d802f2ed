//! Engagement tracking on a tiered polling schedule.
//!
//! The remote side is abstracted behind [`PostSource`] and time behind
//! [`Clock`], so a tracker can be driven against scripted sources in
//! simulated time. Two concrete sources ship: [`ReplaySource`] replays an
//! existing dataset and [`HttpSource`] polls a JSON endpoint.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Category, EngagementSnapshot, PostRecord};

#[derive(Debug, Error, PartialEq)]
pub enum CollectorError {
    #[error("poll schedule has no tiers")]
    EmptySchedule,
    #[error("poll schedule tiers must have strictly increasing max age")]
    UnorderedTiers,
    #[error("poll intervals must be positive and non-decreasing")]
    BadInterval,
    #[error("post age must be non-negative, got {0}")]
    NegativeAge(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PollTier {
    pub max_age_minutes: f64,
    pub interval_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PollSchedule {
    tiers: Vec<PollTier>,
}

impl PollSchedule {
    pub fn new(tiers: Vec<PollTier>) -> Result<Self, CollectorError> {
        if tiers.is_empty() {
            return Err(CollectorError::EmptySchedule);
        }
        for w in tiers.windows(2) {
            if w[1].max_age_minutes <= w[0].max_age_minutes {
                return Err(CollectorError::UnorderedTiers);
            }
            if w[1].interval_minutes < w[0].interval_minutes {
                return Err(CollectorError::BadInterval);
            }
        }
        if tiers.iter().any(|t| t.interval_minutes.is_nan() || t.interval_minutes <= 0.0) {
            return Err(CollectorError::BadInterval);
        }
        Ok(Self { tiers })
    }

    pub fn tiers(&self) -> &[PollTier] {
        &self.tiers
    }

    /// Poll times from 0 through `until_minutes` (inclusive when it lands on
    /// the grid), plus one trailing poll when the grid overshoots.
    pub fn grid(&self, until_minutes: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut t = 0.0;
        while t < until_minutes {
            t += schedule_next_poll(t, self).expect("validated schedule");
            out.push(t);
        }
        out
    }
}

impl Default for PollSchedule {
    /// 5-minute polls for the first two hours, 15 minutes until eight
    /// hours, hourly afterwards.
    fn default() -> Self {
        Self::new(vec![
            PollTier { max_age_minutes: 120.0, interval_minutes: 5.0 },
            PollTier { max_age_minutes: 480.0, interval_minutes: 15.0 },
            PollTier { max_age_minutes: 1440.0, interval_minutes: 60.0 },
        ])
        .expect("default schedule is valid")
    }
}

/// Delay until the next poll of a post of the given age.
pub fn schedule_next_poll(post_age_minutes: f64, schedule: &PollSchedule) -> Result<f64, CollectorError> {
    if post_age_minutes.is_nan() || post_age_minutes < 0.0 {
        return Err(CollectorError::NegativeAge(post_age_minutes));
    }
    let tiers = &schedule.tiers;
    let last = tiers.last().ok_or(CollectorError::EmptySchedule)?;
    Ok(tiers
        .iter()
        .find(|t| t.max_age_minutes > post_age_minutes)
        .unwrap_or(last)
        .interval_minutes)
}

/// Current state of a post as reported by a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchedState {
    pub score: i64,
    pub comments: u64,
    pub crossposts: u64,
    #[serde(default)]
    pub upvote_ratio: Option<f64>,
    #[serde(default)]
    pub category: Category,
    #[serde(default)]
    pub removed: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FetchError {
    /// Worth retrying after backoff.
    #[error("transient failure: {0}")]
    Transient(String),
    /// Source asked us to wait before retrying.
    #[error("rate limited, retry after {retry_after_seconds}s")]
    RateLimited { retry_after_seconds: f64 },
    /// The post cannot be fetched any more.
    #[error("post unavailable: {0}")]
    Unavailable(String),
}

/// Remote post state. Implementations are shared across tracking threads.
pub trait PostSource: Send + Sync {
    fn fetch(&self, post_id: &str) -> Result<FetchedState, FetchError>;
}

/// Time in minutes on an arbitrary epoch.
pub trait Clock: Send + Sync {
    fn now_minutes(&self) -> f64;
    fn sleep_minutes(&self, minutes: f64);
}

#[derive(Debug)]
pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self { start: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_minutes(&self) -> f64 {
        self.start.elapsed().as_secs_f64() / 60.0
    }

    fn sleep_minutes(&self, minutes: f64) {
        if minutes > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(minutes * 60.0));
        }
    }
}

/// Simulated clock; sleeping advances time instantly.
#[derive(Debug, Default)]
pub struct SimClock {
    now: Mutex<f64>,
}

impl SimClock {
    pub fn new(start_minutes: f64) -> Self {
        Self { now: Mutex::new(start_minutes) }
    }
}

impl Clock for SimClock {
    fn now_minutes(&self) -> f64 {
        *self.now.lock().unwrap()
    }

    fn sleep_minutes(&self, minutes: f64) {
        if minutes > 0.0 {
            *self.now.lock().unwrap() += minutes;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles for each further retry.
    pub base_delay_seconds: f64,
    /// Consecutive fully failed polls after which tracking gives up.
    pub max_failed_polls: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay_seconds: 1.0, max_failed_polls: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Reached the tracking horizon.
    Completed,
    Removed,
    Unreachable,
    Unavailable,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::Removed => "removed",
            Termination::Unreachable => "unreachable",
            Termination::Unavailable => "unavailable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub post_id: String,
    pub snapshots: Vec<EngagementSnapshot>,
    pub termination: Termination,
}

enum PollOutcome {
    Got(FetchedState),
    Failed,
    Unavailable,
}

fn poll_with_retry(source: &dyn PostSource, clock: &dyn Clock, post_id: &str, policy: &RetryPolicy) -> PollOutcome {
    let mut attempt = 0;
    loop {
        let wait_seconds = match source.fetch(post_id) {
            Ok(state) => return PollOutcome::Got(state),
            Err(FetchError::Unavailable(_)) => return PollOutcome::Unavailable,
            Err(FetchError::Transient(_)) => policy.base_delay_seconds * 2f64.powi(attempt as i32),
            Err(FetchError::RateLimited { retry_after_seconds }) => retry_after_seconds.max(0.0),
        };
        if attempt >= policy.max_retries {
            return PollOutcome::Failed;
        }
        attempt += 1;
        clock.sleep_minutes(wait_seconds / 60.0);
    }
}

/// Tracks one post from now until `until_minutes` have elapsed.
///
/// Polls are due on the schedule grid anchored at the start time, so retry
/// delays do not drift later polls. A poll that still fails after all retries
/// is skipped; several consecutive skipped polls end tracking as
/// [`Termination::Unreachable`].
pub fn track_post(
    source: &dyn PostSource,
    clock: &dyn Clock,
    post_id: &str,
    until_minutes: f64,
    schedule: &PollSchedule,
    policy: &RetryPolicy,
) -> TrackResult {
    let start = clock.now_minutes();
    let mut snapshots: Vec<EngagementSnapshot> = Vec::new();
    let mut due = 0.0;
    let mut failed_in_row = 0;
    let termination = loop {
        if due > until_minutes + 1e-9 {
            break Termination::Completed;
        }
        let wait = start + due - clock.now_minutes();
        clock.sleep_minutes(wait);
        match poll_with_retry(source, clock, post_id, policy) {
            PollOutcome::Got(state) if state.removed => break Termination::Removed,
            PollOutcome::Got(state) => {
                failed_in_row = 0;
                let t = clock.now_minutes() - start;
                if snapshots.last().is_none_or(|s| t > s.t_minutes) {
                    snapshots.push(EngagementSnapshot {
                        t_minutes: t,
                        score: state.score,
                        comments: state.comments,
                        crossposts: state.crossposts,
                        upvote_ratio: state.upvote_ratio.filter(|u| (0.0..=1.0).contains(u)),
                        category: state.category,
                    });
                }
            }
            PollOutcome::Unavailable => break Termination::Unavailable,
            PollOutcome::Failed => {
                failed_in_row += 1;
                if failed_in_row >= policy.max_failed_polls {
                    break Termination::Unreachable;
                }
            }
        }
        due += schedule_next_poll(due, schedule).expect("validated schedule");
    };
    TrackResult { post_id: post_id.to_owned(), snapshots, termination }
}

/// Replays recorded series: answers with the latest snapshot at or before
/// the clock's elapsed time since registration.
pub struct ReplaySource {
    clock: Arc<dyn Clock>,
    posts: HashMap<String, (f64, Vec<EngagementSnapshot>, bool)>,
}

impl ReplaySource {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self { clock, posts: HashMap::new() }
    }

    /// Registers a record as created "now" on the source clock. A removed
    /// record reports removal after its last snapshot.
    pub fn register(&mut self, record: &PostRecord) {
        self.posts.insert(
            record.post_id.clone(),
            (self.clock.now_minutes(), record.snapshots.clone(), record.removed),
        );
    }
}

impl PostSource for ReplaySource {
    fn fetch(&self, post_id: &str) -> Result<FetchedState, FetchError> {
        let (created, series, removed) =
            self.posts.get(post_id).ok_or_else(|| FetchError::Unavailable(post_id.to_owned()))?;
        let age = self.clock.now_minutes() - created;
        let last_t = series.last().map_or(0.0, |s| s.t_minutes);
        if *removed && age > last_t {
            return Ok(FetchedState {
                score: 0,
                comments: 0,
                crossposts: 0,
                upvote_ratio: None,
                category: Category::Unknown,
                removed: true,
            });
        }
        let snap = series
            .iter()
            .take_while(|s| s.t_minutes <= age + 1e-9)
            .last()
            .ok_or_else(|| FetchError::Transient("no observation yet".into()))?;
        Ok(FetchedState {
            score: snap.score,
            comments: snap.comments,
            crossposts: snap.crossposts,
            upvote_ratio: snap.upvote_ratio,
            category: snap.category,
            removed: false,
        })
    }
}

/// Polls `GET {base_url}/posts/{post_id}` returning a [`FetchedState`] JSON
/// object. 429/503 responses honour `Retry-After` (seconds); other 5xx and
/// connection errors are transient; 404/410 mean the post is gone.
pub struct HttpSource {
    agent: ureq::Agent,
    base_url: String,
    auth_header: Option<(String, String)>,
}

impl HttpSource {
    pub fn new(base_url: impl Into<String>, auth_header: Option<(String, String)>) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build();
        Self { agent: config.into(), base_url: base_url.into(), auth_header }
    }
}

impl PostSource for HttpSource {
    fn fetch(&self, post_id: &str) -> Result<FetchedState, FetchError> {
        let url = format!("{}/posts/{}", self.base_url.trim_end_matches('/'), post_id);
        let mut req = self.agent.get(&url);
        if let Some((name, value)) = &self.auth_header {
            req = req.header(name.as_str(), value.as_str());
        }
        let mut resp = req.call().map_err(|e| FetchError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {
                let body = resp
                    .body_mut()
                    .read_to_string()
                    .map_err(|e| FetchError::Transient(e.to_string()))?;
                serde_json::from_str(&body).map_err(|e| FetchError::Transient(format!("bad body: {e}")))
            }
            404 | 410 => Err(FetchError::Unavailable(format!("HTTP {status}"))),
            429 | 503 => {
                let retry_after = resp
                    .headers()
                    .get("retry-after")
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<f64>().ok());
                match retry_after {
                    Some(s) => Err(FetchError::RateLimited { retry_after_seconds: s }),
                    None => Err(FetchError::Transient(format!("HTTP {status}"))),
                }
            }
            _ => Err(FetchError::Transient(format!("HTTP {status}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_lookup() {
        let s = PollSchedule::default();
        assert_eq!(schedule_next_poll(10.0, &s), Ok(5.0));
        assert_eq!(schedule_next_poll(300.0, &s), Ok(15.0));
        assert_eq!(schedule_next_poll(1e6, &s), Ok(60.0));
        assert_eq!(schedule_next_poll(120.0, &s), Ok(15.0));
        assert!(matches!(schedule_next_poll(-1.0, &s), Err(CollectorError::NegativeAge(_))));
    }

    #[test]
    fn schedule_validation() {
        assert_eq!(PollSchedule::new(vec![]), Err(CollectorError::EmptySchedule));
        let t = |a, i| PollTier { max_age_minutes: a, interval_minutes: i };
        assert_eq!(PollSchedule::new(vec![t(10.0, 5.0), t(10.0, 5.0)]), Err(CollectorError::UnorderedTiers));
        assert_eq!(PollSchedule::new(vec![t(10.0, 5.0), t(20.0, 1.0)]), Err(CollectorError::BadInterval));
        assert_eq!(PollSchedule::new(vec![t(10.0, 0.0)]), Err(CollectorError::BadInterval));
    }

    #[test]
    fn default_grid_shape() {
        let g = PollSchedule::default().grid(1440.0);
        assert_eq!(&g[..3], &[0.0, 5.0, 10.0]);
        assert_eq!(*g.last().unwrap(), 1440.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
