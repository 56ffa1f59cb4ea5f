//! Shared value types for corpora, exam banks, retrieval results, and votes.
//!
//! All types are immutable once constructed and are `Send + Sync`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Validation failures for domain records.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("unknown exam section `{0}` (expected Objectives, Theory or Practicals)")]
    BadSection(String),
    #[error("year {year} outside [{min}, {max}]")]
    YearOutOfRange { year: i64, min: u16, max: u16 },
    #[error("figure uri `{0}` is not a valid resource locator")]
    BadUri(String),
    #[error("vote position {0} outside 1..=3")]
    BadPosition(u8),
    #[error("embedding norm {0} is neither 1 nor 0")]
    NotUnitNorm(f64),
}

/// Milliseconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_millis(ms: i64) -> Self {
        Self(ms)
    }

    pub const fn as_millis(self) -> i64 {
        self.0
    }
}

/// A figure referenced from paragraph text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FigureRef {
    pub figure_id: String,
    /// Label as it appears in the text, e.g. `Figure 2.1`.
    pub label: String,
    pub caption: String,
    pub uri: String,
}

impl FigureRef {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.label.trim().is_empty() {
            return Err(DomainError::EmptyField("label"));
        }
        if !is_valid_uri(&self.uri) {
            return Err(DomainError::BadUri(self.uri.clone()));
        }
        Ok(())
    }

    /// The numeric part of the label (`"Figure 2.1"` → `"2.1"`), if any.
    pub fn label_number(&self) -> Option<&str> {
        let label = self.label.trim();
        let start = label.find(|c: char| c.is_ascii_digit())?;
        let rest = &label[start..];
        let end = rest
            .find(|c: char| c.is_whitespace())
            .unwrap_or(rest.len());
        Some(rest[..end].trim_end_matches(['.', ',', ';', ':', ')']))
    }
}

/// Accepts absolute URIs (`scheme:...`) and relative references.
///
/// Rejects empty strings, whitespace, control characters, and malformed schemes.
pub fn is_valid_uri(uri: &str) -> bool {
    if uri.is_empty() || uri.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return false;
    }
    if uri.contains(['<', '>', '"', '\\', '^', '`', '{', '|', '}']) {
        return false;
    }
    match uri.find(':') {
        // A colon before any '/', '?' or '#' introduces a scheme.
        Some(colon) if !uri[..colon].contains(['/', '?', '#']) => {
            let scheme = &uri[..colon];
            let mut chars = scheme.chars();
            matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
                && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
                && colon + 1 < uri.len()
        }
        _ => true,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub para_id: String,
    pub text: String,
    #[serde(default)]
    pub figures: Vec<FigureRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub title: String,
    pub subject: String,
    pub paragraphs: Vec<Paragraph>,
}

/// A retrievable group of one to three consecutive sentences from a paragraph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub source_para_id: String,
    /// 0-based position within the source paragraph.
    pub seq: usize,
    pub text: String,
    pub sentence_count: usize,
    pub figures: Vec<FigureRef>,
}

/// The three parts of the exam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExamSection {
    Objectives,
    Theory,
    Practicals,
}

impl ExamSection {
    pub const ALL: [ExamSection; 3] = [Self::Objectives, Self::Theory, Self::Practicals];

    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Objectives => "Objectives",
            Self::Theory => "Theory",
            Self::Practicals => "Practicals",
        }
    }
}

impl fmt::Display for ExamSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExamSection {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|section| section.as_str() == s)
            .ok_or_else(|| DomainError::BadSection(s.to_string()))
    }
}

/// Inclusive bounds on accepted exam years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearBounds {
    pub min: u16,
    pub max: u16,
}

impl Default for YearBounds {
    fn default() -> Self {
        Self {
            min: 2000,
            max: 2020,
        }
    }
}

/// An exam record as it appears on disk, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExamQa {
    pub qa_id: String,
    pub year: i64,
    pub section: String,
    pub question: String,
    pub answer: String,
}

/// A validated past-exam question with its answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamQa {
    pub qa_id: String,
    pub year: u16,
    pub section: ExamSection,
    pub question: String,
    pub answer: String,
}

pub fn validate_exam_qa(raw: &RawExamQa, bounds: YearBounds) -> Result<ExamQa, DomainError> {
    if raw.qa_id.trim().is_empty() {
        return Err(DomainError::EmptyField("qa_id"));
    }
    if raw.question.trim().is_empty() {
        return Err(DomainError::EmptyField("question"));
    }
    if raw.answer.trim().is_empty() {
        return Err(DomainError::EmptyField("answer"));
    }
    let section = raw.section.parse::<ExamSection>()?;
    if raw.year < i64::from(bounds.min) || raw.year > i64::from(bounds.max) {
        return Err(DomainError::YearOutOfRange {
            year: raw.year,
            min: bounds.min,
            max: bounds.max,
        });
    }
    Ok(ExamQa {
        qa_id: raw.qa_id.clone(),
        // In range of u16 after the bounds check.
        year: raw.year as u16,
        section,
        question: raw.question.clone(),
        answer: raw.answer.clone(),
    })
}

/// Tolerance on the L2 norm of a non-zero embedding.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// A unit-norm (or all-zero) embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f32>,
    model_id: String,
}

impl Embedding {
    /// Wraps `values`, checking the unit-norm-or-zero invariant.
    pub fn new(values: Vec<f32>, model_id: impl Into<String>) -> Result<Self, DomainError> {
        let norm = l2_norm(&values);
        if !(norm == 0.0 || (norm - 1.0).abs() <= NORM_TOLERANCE) {
            return Err(DomainError::NotUnitNorm(norm));
        }
        Ok(Self {
            values,
            model_id: model_id.into(),
        })
    }

    /// L2-normalizes `raw`; an all-zero input stays all-zero.
    pub fn normalized(raw: &[f64], model_id: impl Into<String>) -> Self {
        let norm = libm::sqrt(raw.iter().map(|v| v * v).sum::<f64>());
        let values = if norm == 0.0 {
            alloc::vec![0.0; raw.len()]
        } else {
            raw.iter().map(|v| (v / norm) as f32).collect()
        };
        Self {
            values,
            model_id: model_id.into(),
        }
    }

    pub fn zeros(dim: usize, model_id: impl Into<String>) -> Self {
        Self {
            values: alloc::vec![0.0; dim],
            model_id: model_id.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    /// Dot product, equal to cosine similarity for unit vectors.
    pub fn cosine(&self, other: &Embedding) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

fn l2_norm(values: &[f32]) -> f64 {
    libm::sqrt(values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>())
}

/// A retrieved answer chunk with its confidence score (cosine similarity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub chunk_id: String,
    pub text: String,
    pub figures: Vec<FigureRef>,
    pub score: f64,
}

/// A retrieved past-exam question and answer with its confidence score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExamQa {
    pub qa_id: String,
    pub question: String,
    pub answer: String,
    pub score: f64,
}

/// Clamps a raw dot product into the displayable cosine range.
pub fn clamp_score(score: f64) -> f64 {
    score.clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub question_id: String,
    pub question_text: String,
    pub answers: Vec<ScoredAnswer>,
    pub related: Vec<ScoredExamQa>,
    pub answered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl QueryResult {
    /// Checks the ordering and answered/message invariants.
    pub fn is_consistent(&self) -> bool {
        let sorted_answers = self.answers.windows(2).all(|w| w[0].score >= w[1].score);
        let sorted_related = self.related.windows(2).all(|w| w[0].score >= w[1].score);
        sorted_answers
            && sorted_related
            && self.answered == !self.answers.is_empty()
            && self.message.is_some() == !self.answered
    }
}

/// Highest answer position a vote may target.
pub const MAX_VOTE_POSITION: u8 = 3;

/// One helpful / not-helpful judgment on one answer position of a logged question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub question_id: String,
    /// 1-based answer position.
    pub position: u8,
    pub helpful: bool,
    pub timestamp: Timestamp,
    pub client_id: String,
}

impl VoteRecord {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.question_id.is_empty() {
            return Err(DomainError::EmptyField("question_id"));
        }
        if self.client_id.is_empty() {
            return Err(DomainError::EmptyField("client_id"));
        }
        if self.position == 0 || self.position > MAX_VOTE_POSITION {
            return Err(DomainError::BadPosition(self.position));
        }
        Ok(())
    }
}
