//! Precomputed content-feature catalog.
//!
//! The blob keys below are the snake_case field names of the contextual,
//! textual and visual feature records. Keys outside the catalog are ignored
//! during assembly.

use super::matrix::{Cell, ColumnKind, ColumnSpec, Modality};
use crate::ingest::{PostRecord, StaticValue};

use ColumnKind::{Categorical as C, Numeric as N};
use Modality::{Contextual, Textual, Visual};

pub const STATIC_CATALOG: &[(&str, Modality, ColumnKind)] = &[
    // contextual
    ("is_offensive", Contextual, N),
    ("offense_type", Contextual, C),
    ("cultural_reference_type", Contextual, C),
    ("primary_topic", Contextual, C),
    ("target_audience", Contextual, C),
    ("meme_type", Contextual, C),
    ("analyzed_media_type", Contextual, C),
    ("title_media_coherence", Contextual, C),
    ("controversy_score", Contextual, N),
    ("controversy_type", Contextual, C),
    ("emotional_resonance", Contextual, C),
    ("humor_type", Contextual, C),
    ("insight_commentary_score", Contextual, N),
    ("novelty_uniqueness_score", Contextual, N),
    ("profanity_level", Contextual, C),
    ("relatability_score", Contextual, N),
    ("format_effort", Contextual, C),
    ("format_simplicity", Contextual, N),
    ("format_appeal", Contextual, N),
    ("format_clarity", Contextual, N),
    ("social_platform", Contextual, C),
    ("social_shareability", Contextual, C),
    ("social_currency", Contextual, C),
    ("social_trend", Contextual, C),
    // textual
    ("text_language", Textual, C),
    ("text_sentiment_overall", Textual, C),
    ("text_word_count", Textual, N),
    ("text_image_alignment", Textual, C),
    ("text_tone", Textual, C),
    ("is_title_present", Textual, N),
    ("title_word_count", Textual, N),
    ("title_sentiment", Textual, C),
    // visual
    ("media_type", Visual, C),
    ("image_height", Visual, N),
    ("image_width", Visual, N),
    ("key_objects_primary", Visual, C),
    ("composition", Visual, C),
    ("panels", Visual, C),
    ("template_is_variant", Visual, N),
    ("template_name", Visual, C),
    ("facial_expression_is_face", Visual, N),
    ("facial_expression_primary_emotion", Visual, C),
    ("identified_person_is_celebrity", Visual, N),
    ("identified_person_is_character", Visual, N),
    ("identified_character_name", Visual, C),
    ("identified_person_celebrity_name", Visual, C),
];

pub fn static_columns(modality: Modality) -> impl Iterator<Item = ColumnSpec> {
    STATIC_CATALOG.iter().filter(move |(_, m, _)| *m == modality).map(|&(name, modality, kind)| ColumnSpec {
        name: name.to_owned(),
        modality,
        kind,
    })
}

pub fn catalog_entry(name: &str) -> Option<(Modality, ColumnKind)> {
    STATIC_CATALOG.iter().find(|(n, _, _)| *n == name).map(|&(_, m, k)| (m, k))
}

fn convert(value: &StaticValue, kind: ColumnKind) -> Cell {
    match (value, kind) {
        (StaticValue::Null, _) => Cell::Missing,
        (StaticValue::Bool(b), N) => Cell::Num(f64::from(u8::from(*b))),
        (StaticValue::Number(x), N) => Cell::num(Some(*x)),
        (StaticValue::Text(s), N) => Cell::num(s.trim().parse().ok()),
        (StaticValue::Bool(b), C) => Cell::Cat(b.to_string()),
        (StaticValue::Number(x), C) => Cell::Cat(x.to_string()),
        (StaticValue::Text(s), C) => Cell::cat(Some(s.trim().to_ascii_lowercase())),
    }
}

/// Static cell for one catalog column. Title-derived fields and the media
/// type fall back to the record itself when the blob lacks them.
pub fn static_cell(r: &PostRecord, name: &str, kind: ColumnKind) -> Cell {
    if let Some(v) = r.static_features.as_ref().and_then(|b| b.get(name)) {
        let cell = convert(v, kind);
        if !cell.is_missing() {
            return cell;
        }
    }
    match name {
        "title_word_count" => Cell::Num(r.title.split_whitespace().count() as f64),
        "is_title_present" => Cell::Num(f64::from(u8::from(!r.title.trim().is_empty()))),
        "media_type" => Cell::Cat(r.media_type.as_str().to_owned()),
        _ => Cell::Missing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::fixtures::record;

    #[test]
    fn catalog_names_unique() {
        let mut names: Vec<_> = STATIC_CATALOG.iter().map(|e| e.0).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), STATIC_CATALOG.len());
    }

    #[test]
    fn title_fields_computed_when_absent() {
        let r = record("a", &[0.0]);
        assert_eq!(static_cell(&r, "title_word_count", N), Cell::Num(5.0));
        assert_eq!(static_cell(&r, "is_title_present", N), Cell::Num(1.0));
        assert_eq!(static_cell(&r, "media_type", C), Cell::Cat("image".into()));
        assert_eq!(static_cell(&r, "template_name", C), Cell::Missing);
    }

    #[test]
    fn blob_values_convert_by_kind() {
        let mut r = record("a", &[0.0]);
        let mut blob = crate::ingest::StaticBlob::new();
        blob.insert("template_name".into(), StaticValue::Text("Drake".into()));
        blob.insert("relatability_score".into(), StaticValue::Number(7.0));
        blob.insert("is_offensive".into(), StaticValue::Bool(true));
        blob.insert("panels".into(), StaticValue::Number(2.0));
        r.static_features = Some(blob);
        assert_eq!(static_cell(&r, "template_name", C), Cell::Cat("drake".into()));
        assert_eq!(static_cell(&r, "relatability_score", N), Cell::Num(7.0));
        assert_eq!(static_cell(&r, "is_offensive", N), Cell::Num(1.0));
        assert_eq!(static_cell(&r, "panels", C), Cell::Cat("2".into()));
    }
}
