//! Sensory record schema: the facet inventory, record/item types, validation
//! of decoded fields, and text normalization.
//!
//! Decoding bytes into [`RawRecord`]s is the caller's job (the `sensrec`
//! crate does it for JSONL); everything here works on already-decoded values.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Longest evidence span kept, in characters.
pub const MAX_EVIDENCE_CHARS: usize = 120;
/// Most distinct (attribute, value) pairs kept per item.
pub const MAX_RECORDS_PER_ITEM: usize = 20;

/// Characters stripped from both ends by [`normalize_text`].
const TRIM_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?'];

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensoryFacet {
    Color,
    Pattern,
    Shape,
    Graphics,
    Brightness,
    Glossiness,
    Transparency,
    Finish,
    Design,
    Texture,
    Comfort,
    Weight,
    Temperature,
    Scent,
    Flavor,
    Sound,
}

impl SensoryFacet {
    pub const ALL: [SensoryFacet; 16] = [
        Self::Color,
        Self::Pattern,
        Self::Shape,
        Self::Graphics,
        Self::Brightness,
        Self::Glossiness,
        Self::Transparency,
        Self::Finish,
        Self::Design,
        Self::Texture,
        Self::Comfort,
        Self::Weight,
        Self::Temperature,
        Self::Scent,
        Self::Flavor,
        Self::Sound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Color => "color",
            Self::Pattern => "pattern",
            Self::Shape => "shape",
            Self::Graphics => "graphics",
            Self::Brightness => "brightness",
            Self::Glossiness => "glossiness",
            Self::Transparency => "transparency",
            Self::Finish => "finish",
            Self::Design => "design",
            Self::Texture => "texture",
            Self::Comfort => "comfort",
            Self::Weight => "weight",
            Self::Temperature => "temperature",
            Self::Scent => "scent",
            Self::Flavor => "flavor",
            Self::Sound => "sound",
        }
    }

    /// Position in [`SensoryFacet::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SensoryFacet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensoryFacet {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|f| f.as_str() == s).ok_or(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
    Unknown,
}

impl Polarity {
    pub const ALL: [Polarity; 4] = [Self::Positive, Self::Negative, Self::Neutral, Self::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
            Self::Neutral => "neutral",
            Self::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|p| p.as_str() == s).ok_or(())
    }
}

/// One extracted sensory fact. Field order is the canonical key order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensoryRecord {
    pub attribute: SensoryFacet,
    pub value: String,
    pub evidence: String,
    pub polarity: Polarity,
    pub negated: bool,
    pub confidence: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemAnnotation {
    #[serde(rename = "id")]
    pub item_id: String,
    pub attributes: Vec<SensoryRecord>,
}

/// Raw catalog text of one item.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemText {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub reviews: Vec<String>,
}

impl ItemText {
    /// Fields in input order: title, category, description, then reviews.
    pub fn fields(&self) -> impl Iterator<Item = &str> {
        [self.title.as_str(), self.category.as_str(), self.description.as_str()]
            .into_iter()
            .chain(self.reviews.iter().map(String::as_str))
    }

    /// Newline-joined text with empty fields skipped.
    pub fn joined(&self) -> String {
        let parts: Vec<&str> = self.fields().filter(|f| !f.trim().is_empty()).collect();
        parts.join("\n")
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    UnknownFacet,
    ConfidenceRange,
    EmptyValue,
    BadPolarity,
    MissingField,
    BadType,
    BadJson,
    EvidenceTruncated,
    TooManyRecords,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::UnknownFacet => "UNKNOWN_FACET",
            Self::ConfidenceRange => "CONFIDENCE_RANGE",
            Self::EmptyValue => "EMPTY_VALUE",
            Self::BadPolarity => "BAD_POLARITY",
            Self::MissingField => "MISSING_FIELD",
            Self::BadType => "BAD_TYPE",
            Self::BadJson => "BAD_JSON",
            Self::EvidenceTruncated => "EVIDENCE_TRUNCATED",
            Self::TooManyRecords => "TOO_MANY_RECORDS",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A problem found while reading annotations. Records with an error-level
/// issue are dropped; warnings leave the (possibly repaired) record in place.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub item_id: String,
    pub record_index: Option<usize>,
    pub severity: Severity,
    pub code: IssueCode,
    pub message: String,
}

impl ValidationIssue {
    pub fn error(item_id: &str, record_index: Option<usize>, code: IssueCode, message: String) -> Self {
        Self {
            item_id: item_id.to_string(),
            record_index,
            severity: Severity::Error,
            code,
            message,
        }
    }

    pub fn warning(item_id: &str, record_index: Option<usize>, code: IssueCode, message: String) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(item_id, record_index, code, message)
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// A decoded field: absent, present with the wrong JSON type, or usable.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Field<T> {
    #[default]
    Missing,
    WrongType(String),
    Value(T),
}

impl<T> Field<T> {
    pub fn value(v: T) -> Self {
        Self::Value(v)
    }
}

/// Record fields as decoded from input, before any checks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawRecord {
    pub attribute: Field<String>,
    pub value: Field<String>,
    pub evidence: Field<String>,
    pub polarity: Field<String>,
    pub negated: Field<bool>,
    pub confidence: Field<f64>,
}

impl From<&SensoryRecord> for RawRecord {
    fn from(r: &SensoryRecord) -> Self {
        Self {
            attribute: Field::Value(r.attribute.as_str().to_string()),
            value: Field::Value(r.value.clone()),
            evidence: Field::Value(r.evidence.clone()),
            polarity: Field::Value(r.polarity.as_str().to_string()),
            negated: Field::Value(r.negated),
            confidence: Field::Value(r.confidence),
        }
    }
}

fn take<'a, T>(
    field: &'a Field<T>,
    name: &str,
    item_id: &str,
    index: usize,
    issues: &mut Vec<ValidationIssue>,
) -> Option<&'a T> {
    match field {
        Field::Value(v) => Some(v),
        Field::Missing => {
            issues.push(ValidationIssue::error(
                item_id,
                Some(index),
                IssueCode::MissingField,
                format!("missing field {name:?}"),
            ));
            None
        }
        Field::WrongType(found) => {
            issues.push(ValidationIssue::error(
                item_id,
                Some(index),
                IssueCode::BadType,
                format!("field {name:?} has type {found}"),
            ));
            None
        }
    }
}

/// Checks one record. Out-of-range confidence is rejected, never clamped;
/// long evidence is truncated with a warning.
pub fn validate_record(item_id: &str, index: usize, raw: &RawRecord) -> (Option<SensoryRecord>, Vec<ValidationIssue>) {
    let mut issues = Vec::new();
    let attribute = take(&raw.attribute, "attribute", item_id, index, &mut issues);
    let value = take(&raw.value, "value", item_id, index, &mut issues);
    let evidence = take(&raw.evidence, "evidence", item_id, index, &mut issues);
    let polarity = take(&raw.polarity, "polarity", item_id, index, &mut issues);
    let negated = take(&raw.negated, "negated", item_id, index, &mut issues);
    let confidence = take(&raw.confidence, "confidence", item_id, index, &mut issues);

    let facet = attribute.and_then(|a| match a.parse::<SensoryFacet>() {
        Ok(f) => Some(f),
        Err(()) => {
            issues.push(ValidationIssue::error(
                item_id,
                Some(index),
                IssueCode::UnknownFacet,
                format!("attribute {a:?} is not a sensory facet"),
            ));
            None
        }
    });
    let polarity = polarity.and_then(|p| match p.parse::<Polarity>() {
        Ok(p) => Some(p),
        Err(()) => {
            issues.push(ValidationIssue::error(
                item_id,
                Some(index),
                IssueCode::BadPolarity,
                format!("polarity {p:?} is not one of positive, negative, neutral, unknown"),
            ));
            None
        }
    });
    let value = value.and_then(|v| {
        if v.trim().is_empty() {
            issues.push(ValidationIssue::error(
                item_id,
                Some(index),
                IssueCode::EmptyValue,
                "value is empty".to_string(),
            ));
            None
        } else {
            Some(v)
        }
    });
    let confidence = confidence.and_then(|&c| {
        if (0.0..=1.0).contains(&c) {
            Some(c)
        } else {
            issues.push(ValidationIssue::error(
                item_id,
                Some(index),
                IssueCode::ConfidenceRange,
                format!("confidence {c} outside [0, 1]"),
            ));
            None
        }
    });
    let evidence = evidence.map(|e| {
        if e.chars().count() > MAX_EVIDENCE_CHARS {
            issues.push(ValidationIssue::warning(
                item_id,
                Some(index),
                IssueCode::EvidenceTruncated,
                format!(
                    "evidence has {} characters, truncated to {MAX_EVIDENCE_CHARS}",
                    e.chars().count()
                ),
            ));
            e.chars().take(MAX_EVIDENCE_CHARS).collect()
        } else {
            e.clone()
        }
    });

    let record = match (facet, value, evidence, polarity, negated, confidence) {
        (Some(attribute), Some(value), Some(evidence), Some(polarity), Some(&negated), Some(confidence)) => {
            Some(SensoryRecord {
                attribute,
                value: value.clone(),
                evidence,
                polarity,
                negated,
                confidence,
            })
        }
        _ => None,
    };
    (record, issues)
}

/// Validates every record of one item and applies the per-item cap.
///
/// The cap counts distinct normalized (attribute, value) pairs: records are
/// kept in input order until [`MAX_RECORDS_PER_ITEM`] distinct pairs have
/// been seen; later duplicates of kept pairs stay, new pairs are dropped.
pub fn validate_item(item_id: &str, raws: &[RawRecord]) -> (ItemAnnotation, Vec<ValidationIssue>) {
    let mut issues = Vec::new();
    let mut attributes = Vec::new();
    let mut seen = BTreeSet::new();
    let mut dropped = 0usize;
    for (i, raw) in raws.iter().enumerate() {
        let (rec, mut iss) = validate_record(item_id, i, raw);
        issues.append(&mut iss);
        let Some(rec) = rec else { continue };
        let key = (rec.attribute, normalize_text(&rec.value));
        if seen.contains(&key) {
            attributes.push(rec);
        } else if seen.len() < MAX_RECORDS_PER_ITEM {
            seen.insert(key);
            attributes.push(rec);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        issues.push(ValidationIssue::warning(
            item_id,
            None,
            IssueCode::TooManyRecords,
            format!("{dropped} records beyond the first {MAX_RECORDS_PER_ITEM} distinct pairs were dropped"),
        ));
    }
    (
        ItemAnnotation {
            item_id: item_id.to_string(),
            attributes,
        },
        issues,
    )
}

/// Lowercases, collapses whitespace runs to one space, and strips leading and
/// trailing whitespace and `. , ; : ! ?`. Internal punctuation is kept.
pub fn normalize_text(s: &str) -> String {
    let lower = s.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for word in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out.trim_matches(|c: char| c.is_whitespace() || TRIM_PUNCT.contains(&c))
        .to_string()
}

/// Distinct (facet, normalized value) pairs of an item, in first-seen order.
pub fn dedup_pairs(records: &[SensoryRecord]) -> Vec<(SensoryFacet, String)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in records {
        let key = (r.attribute, normalize_text(&r.value));
        if seen.insert(key.clone()) {
            out.push(key);
        }
    }
    out
}
