//! Dataset schema, line-delimited JSON parsing, record validation and the
//! collection-time quality filters.
//!
//! One post per line; each line carries the post metadata, subreddit context,
//! the embedded engagement snapshot series and an optional static-feature blob.
//! Nothing in this module looks at labels or at the train/test distinction.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Listing a post occupied when it was observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    New,
    Rising,
    Hot,
    Top,
    #[default]
    #[serde(other)]
    Unknown,
}

impl Category {
    pub const RANKED: [Category; 4] = [Category::New, Category::Rising, Category::Hot, Category::Top];

    /// Promotion order `new < rising < hot < top`; `None` for unknown.
    pub fn rank(self) -> Option<u8> {
        match self {
            Category::New => Some(0),
            Category::Rising => Some(1),
            Category::Hot => Some(2),
            Category::Top => Some(3),
            Category::Unknown => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::New => "new",
            Category::Rising => "rising",
            Category::Hot => "hot",
            Category::Top => "top",
            Category::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementSnapshot {
    /// Minutes since the post was created.
    pub t_minutes: f64,
    /// Net votes.
    pub score: i64,
    pub comments: u64,
    pub crossposts: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upvote_ratio: Option<f64>,
    #[serde(default)]
    pub category: Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LanguageGroup {
    English,
    German,
    Turkish,
    Nordic,
    French,
    Spanish,
    Portuguese,
    Italian,
}

impl LanguageGroup {
    pub const ALL: [LanguageGroup; 8] = [
        LanguageGroup::English,
        LanguageGroup::German,
        LanguageGroup::Turkish,
        LanguageGroup::Nordic,
        LanguageGroup::French,
        LanguageGroup::Spanish,
        LanguageGroup::Portuguese,
        LanguageGroup::Italian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LanguageGroup::English => "english",
            LanguageGroup::German => "german",
            LanguageGroup::Turkish => "turkish",
            LanguageGroup::Nordic => "nordic",
            LanguageGroup::French => "french",
            LanguageGroup::Spanish => "spanish",
            LanguageGroup::Portuguese => "portuguese",
            LanguageGroup::Italian => "italian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubredditInfo {
    pub name: String,
    pub subscribers: u64,
    pub language_group: LanguageGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorInfo {
    pub total_karma: i64,
    pub account_age_days: f64,
    pub is_premium: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaType {
    Image,
    Video,
    Gif,
    Text,
    Audio,
}

impl MediaType {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaType::Image => "image",
            MediaType::Video => "video",
            MediaType::Gif => "gif",
            MediaType::Text => "text",
            MediaType::Audio => "audio",
        }
    }
}

/// One value of the precomputed static-feature blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StaticValue {
    Bool(bool),
    Number(f64),
    Text(String),
    Null,
}

pub type StaticBlob = BTreeMap<String, StaticValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub created_utc: DateTime<Utc>,
    pub title: String,
    pub author: AuthorInfo,
    pub subreddit: SubredditInfo,
    pub media_type: MediaType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_url: Option<String>,
    /// Moderated or deleted at collection time.
    #[serde(default)]
    pub removed: bool,
    pub snapshots: Vec<EngagementSnapshot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_features: Option<StaticBlob>,
}

impl PostRecord {
    pub fn last_snapshot(&self) -> Option<&EngagementSnapshot> {
        self.snapshots.last()
    }

    pub fn tracked_minutes(&self) -> f64 {
        self.last_snapshot().map_or(0.0, |s| s.t_minutes)
    }

    pub fn has_media(&self) -> bool {
        self.media_url.as_deref().is_some_and(|u| !u.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    EmptyPostId,
    SubscribersBelowOne,
    NegativeAccountAge,
    NonFiniteTime { index: usize },
    NegativeTime { index: usize },
    NonIncreasingTime { index: usize },
    UpvoteRatioOutOfRange { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPostId => write!(f, "empty post_id"),
            Violation::SubscribersBelowOne => write!(f, "subscribers < 1"),
            Violation::NegativeAccountAge => write!(f, "negative account age"),
            Violation::NonFiniteTime { index } => write!(f, "non-finite time at index {index}"),
            Violation::NegativeTime { index } => write!(f, "negative time at index {index}"),
            Violation::NonIncreasingTime { index } => {
                write!(f, "non-increasing time at index {index}")
            }
            Violation::UpvoteRatioOutOfRange { index } => {
                write!(f, "upvote_ratio outside [0, 1] at index {index}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks every type invariant of a record. Monotonicity problems report only
/// the first offending snapshot index.
pub fn validate_record(r: &PostRecord) -> ValidationReport {
    let mut violations = Vec::new();
    if r.post_id.trim().is_empty() {
        violations.push(Violation::EmptyPostId);
    }
    if r.subreddit.subscribers < 1 {
        violations.push(Violation::SubscribersBelowOne);
    }
    if r.author.account_age_days < 0.0 || !r.author.account_age_days.is_finite() {
        violations.push(Violation::NegativeAccountAge);
    }
    let mut time_reported = false;
    for (i, s) in r.snapshots.iter().enumerate() {
        if time_reported {
            break;
        }
        if !s.t_minutes.is_finite() {
            violations.push(Violation::NonFiniteTime { index: i });
            time_reported = true;
        } else if s.t_minutes < 0.0 {
            violations.push(Violation::NegativeTime { index: i });
            time_reported = true;
        } else if i > 0 && s.t_minutes <= r.snapshots[i - 1].t_minutes {
            violations.push(Violation::NonIncreasingTime { index: i });
            time_reported = true;
        }
    }
    if let Some(i) = r
        .snapshots
        .iter()
        .position(|s| s.upvote_ratio.is_some_and(|u| !(0.0..=1.0).contains(&u)))
    {
        violations.push(Violation::UpvoteRatioOutOfRange { index: i });
    }
    ValidationReport { violations }
}

/// A line that could not be turned into a valid record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiagnostic {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Streaming parser over line-delimited records.
///
/// Yields `Ok(record)` for every line that deserializes, passes
/// [`validate_record`] and carries a not-yet-seen `post_id`; every other
/// non-blank line yields `Err(diagnostic)`. Blank lines are skipped.
pub struct DatasetReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
}

impl<R: BufRead> DatasetReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0, seen: HashSet::new() }
    }
}

impl<R: BufRead> Iterator for DatasetReader<R> {
    type Item = Result<PostRecord, LineDiagnostic>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(LineDiagnostic { line: self.line_no, message: e.to_string() }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse_line(&line));
        }
    }
}

impl<R> DatasetReader<R> {
    fn parse_line(&mut self, line: &str) -> Result<PostRecord, LineDiagnostic> {
        let diag = |message: String| LineDiagnostic { line: self.line_no, message };
        let record: PostRecord =
            serde_json::from_str(line).map_err(|e| diag(format!("schema error: {e}")))?;
        let report = validate_record(&record);
        if !report.is_valid() {
            return Err(diag(format!("invalid record {}: {report}", record.post_id)));
        }
        if !self.seen.insert(record.post_id.clone()) {
            return Err(diag(format!("duplicate post_id {}", record.post_id)));
        }
        Ok(record)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedDataset {
    pub records: Vec<PostRecord>,
    pub diagnostics: Vec<LineDiagnostic>,
}

pub fn open_dataset(path: &Path) -> Result<DatasetReader<BufReader<File>>, IngestError> {
    let file =
        File::open(path).map_err(|source| IngestError::Read { path: path.to_owned(), source })?;
    Ok(DatasetReader::new(BufReader::new(file)))
}

/// Reads a whole dataset file, separating records from per-line diagnostics.
pub fn parse_dataset(path: &Path) -> Result<ParsedDataset, IngestError> {
    let mut out = ParsedDataset::default();
    for item in open_dataset(path)? {
        match item {
            Ok(r) => out.records.push(r),
            Err(d) => out.diagnostics.push(d),
        }
    }
    Ok(out)
}

pub fn to_json_line(r: &PostRecord) -> String {
    serde_json::to_string(r).expect("post records always serialize")
}

pub fn write_dataset<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a PostRecord>,
) -> Result<(), IngestError> {
    let werr = |source| IngestError::Write { path: path.to_owned(), source };
    let mut w = BufWriter::new(File::create(path).map_err(werr)?);
    for r in records {
        writeln!(w, "{}", to_json_line(r)).map_err(werr)?;
    }
    w.flush().map_err(werr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Removed,
    MissingMedia,
    NoSnapshots,
    ShortTracking,
    TrackingGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityFilter {
    /// Minimum age of the last snapshot.
    pub min_tracking_minutes: f64,
    /// Largest tolerated gap between consecutive snapshots.
    pub max_gap_minutes: f64,
}

impl Default for QualityFilter {
    fn default() -> Self {
        Self { min_tracking_minutes: 1440.0, max_gap_minutes: 360.0 }
    }
}

/// Counts per drop reason. A record failing several checks is counted under
/// the first one, in the order the fields are declared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub input: usize,
    pub kept: usize,
    pub removed: usize,
    pub missing_media: usize,
    pub no_snapshots: usize,
    pub short_tracking: usize,
    pub tracking_gap: usize,
}

impl QualityFilter {
    pub fn check(&self, r: &PostRecord) -> Result<(), DropReason> {
        if r.removed {
            return Err(DropReason::Removed);
        }
        if !r.has_media() {
            return Err(DropReason::MissingMedia);
        }
        if r.snapshots.is_empty() {
            return Err(DropReason::NoSnapshots);
        }
        if r.tracked_minutes() < self.min_tracking_minutes {
            return Err(DropReason::ShortTracking);
        }
        let gap = r
            .snapshots
            .windows(2)
            .map(|w| w[1].t_minutes - w[0].t_minutes)
            .fold(0.0, f64::max);
        if gap > self.max_gap_minutes {
            return Err(DropReason::TrackingGap);
        }
        Ok(())
    }

    pub fn apply(&self, records: impl IntoIterator<Item = PostRecord>) -> (Vec<PostRecord>, FilterSummary) {
        let mut summary = FilterSummary::default();
        let mut kept = Vec::new();
        for r in records {
            summary.input += 1;
            match self.check(&r) {
                Ok(()) => {
                    summary.kept += 1;
                    kept.push(r);
                }
                Err(DropReason::Removed) => summary.removed += 1,
                Err(DropReason::MissingMedia) => summary.missing_media += 1,
                Err(DropReason::NoSnapshots) => summary.no_snapshots += 1,
                Err(DropReason::ShortTracking) => summary.short_tracking += 1,
                Err(DropReason::TrackingGap) => summary.tracking_gap += 1,
            }
        }
        (kept, summary)
    }
}

/// Filters with the default thresholds except for `min_tracking_minutes`.
pub fn apply_quality_filters(
    records: impl IntoIterator<Item = PostRecord>,
    min_tracking_minutes: f64,
) -> (Vec<PostRecord>, FilterSummary) {
    QualityFilter { min_tracking_minutes, ..QualityFilter::default() }.apply(records)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use chrono::TimeZone;

    pub fn snapshot(t: f64, score: i64) -> EngagementSnapshot {
        EngagementSnapshot {
            t_minutes: t,
            score,
            comments: 0,
            crossposts: 0,
            upvote_ratio: None,
            category: Category::New,
        }
    }

    pub fn record(id: &str, times: &[f64]) -> PostRecord {
        PostRecord {
            post_id: id.to_owned(),
            created_utc: Utc.with_ymd_and_hms(2025, 3, 21, 12, 0, 0).unwrap(),
            title: "when the build finally passes".to_owned(),
            author: AuthorInfo { total_karma: 3650, account_age_days: 365.0, is_premium: false },
            subreddit: SubredditInfo {
                name: "memes".to_owned(),
                subscribers: 100_000,
                language_group: LanguageGroup::English,
            },
            media_type: MediaType::Image,
            media_url: Some("https://i.example.org/a.png".to_owned()),
            removed: false,
            snapshots: times.iter().map(|&t| snapshot(t, t as i64)).collect(),
            static_features: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn validate_reports_first_non_increasing_index() {
        let r = record("a", &[0.0, 5.0, 5.0, 4.0]);
        let report = validate_record(&r);
        assert_eq!(report.violations, vec![Violation::NonIncreasingTime { index: 2 }]);
        assert_eq!(report.violations[0].to_string(), "non-increasing time at index 2");
    }

    #[test]
    fn validate_subscribers() {
        let mut r = record("a", &[0.0]);
        r.subreddit.subscribers = 0;
        let report = validate_record(&r);
        assert_eq!(report.violations[0].to_string(), "subscribers < 1");
    }

    #[test]
    fn validate_upvote_ratio_and_negative_time() {
        let mut r = record("a", &[-1.0, 5.0]);
        r.snapshots[1].upvote_ratio = Some(1.5);
        let report = validate_record(&r);
        assert_eq!(
            report.violations,
            vec![Violation::NegativeTime { index: 0 }, Violation::UpvoteRatioOutOfRange { index: 1 }]
        );
    }

    #[test]
    fn valid_record_has_empty_report() {
        assert!(validate_record(&record("a", &[0.0, 5.0, 10.0])).is_valid());
    }

    #[test]
    fn reader_routes_bad_lines_to_diagnostics() {
        let good = to_json_line(&record("a", &[0.0, 5.0]));
        let text = format!("{good}\n{{\"post_id\": 3\n\n{good}\n");
        let items: Vec<_> = DatasetReader::new(text.as_bytes()).collect();
        assert_eq!(items.len(), 3);
        assert!(items[0].is_ok());
        assert_eq!(items[1].as_ref().unwrap_err().line, 2);
        let dup = items[2].as_ref().unwrap_err();
        assert_eq!(dup.line, 4);
        assert!(dup.message.contains("duplicate"));
    }

    #[test]
    fn unknown_category_strings_fold_to_unknown() {
        let s: EngagementSnapshot = serde_json::from_str(
            r#"{"t_minutes":0,"score":1,"comments":0,"crossposts":0,"category":"controversial"}"#,
        )
        .unwrap();
        assert_eq!(s.category, Category::Unknown);
    }

    #[test]
    fn filter_boundary_is_inclusive_at_1440() {
        let f = QualityFilter::default();
        assert_eq!(f.check(&record("a", &[0.0, 300.0, 600.0, 900.0, 1200.0, 1439.9])), Err(DropReason::ShortTracking));
        assert_eq!(f.check(&record("b", &[0.0, 300.0, 600.0, 900.0, 1200.0, 1440.0])), Ok(()));
        assert_eq!(f.check(&record("c", &[0.0, 300.0, 600.0, 900.0, 1200.0, 1500.0])), Ok(()));
    }

    #[test]
    fn filter_gap_and_media() {
        let f = QualityFilter::default();
        assert_eq!(f.check(&record("a", &[0.0, 1500.0])), Err(DropReason::TrackingGap));
        let mut r = record("b", &[0.0, 300.0, 600.0, 900.0, 1200.0, 1500.0]);
        r.media_url = Some("  ".into());
        assert_eq!(f.check(&r), Err(DropReason::MissingMedia));
        r.removed = true;
        assert_eq!(f.check(&r), Err(DropReason::Removed));
    }
}
