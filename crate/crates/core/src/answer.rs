//! Turning index hits into a [`QueryResult`].

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{
    clamp_score, Embedding, ExamSection, FigureRef, QueryResult, ScoredAnswer, ScoredExamQa,
};
use crate::index::{FlatIndex, IndexError};

/// Most answers ever shown for one question.
pub const MAX_ANSWERS: usize = 3;
/// Most related exam questions ever shown for one question.
pub const MAX_RELATED: usize = 5;

pub const SUBJECT_PLACEHOLDER: &str = "{subject}";
pub const DEFAULT_NO_ANSWER: &str =
    "Sorry — I could not answer this using the {subject} knowledge source.";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnswerError {
    #[error("field `{0}` is empty")]
    EmptyField(&'static str),
    #[error("invalid query config: {0}")]
    BadConfig(&'static str),
    #[error("no payload stored for `{0}`")]
    MissingPayload(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryConfig {
    pub answer_k: usize,
    pub related_k: usize,
    pub answer_threshold: f64,
    pub related_threshold: f64,
    /// Message for unanswerable questions; `{subject}` is substituted.
    pub no_answer_message: String,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            answer_k: MAX_ANSWERS,
            related_k: MAX_RELATED,
            answer_threshold: 0.35,
            related_threshold: 0.35,
            no_answer_message: DEFAULT_NO_ANSWER.into(),
        }
    }
}

impl QueryConfig {
    pub fn validate(&self) -> Result<(), AnswerError> {
        if !(1..=MAX_ANSWERS).contains(&self.answer_k) {
            return Err(AnswerError::BadConfig("answer_k must be in 1..=3"));
        }
        if !(1..=MAX_RELATED).contains(&self.related_k) {
            return Err(AnswerError::BadConfig("related_k must be in 1..=5"));
        }
        let in_range = |t: f64| (-1.0..=1.0).contains(&t);
        if !in_range(self.answer_threshold) || !in_range(self.related_threshold) {
            return Err(AnswerError::BadConfig("thresholds must be in [-1, 1]"));
        }
        Ok(())
    }
}

pub fn render_no_answer(subject: &str, config: &QueryConfig) -> Result<String, AnswerError> {
    if subject.trim().is_empty() {
        return Err(AnswerError::EmptyField("subject"));
    }
    Ok(config.no_answer_message.replace(SUBJECT_PLACEHOLDER, subject))
}

/// Stored text of an answer chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerPayload {
    pub text: String,
    pub figures: Vec<FigureRef>,
    pub source_para_id: String,
}

/// Stored question and answer of an exam entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamPayload {
    pub question: String,
    pub answer: String,
    pub year: u16,
    pub section: ExamSection,
}

/// Keyed payload storage.
pub trait PayloadLookup<T> {
    fn lookup(&self, id: &str) -> Option<&T>;
}

impl<T> PayloadLookup<T> for BTreeMap<String, T> {
    fn lookup(&self, id: &str) -> Option<&T> {
        self.get(id)
    }
}

/// The answer bank: chunk vectors plus chunk payloads.
pub struct AnswerBank<'a, P> {
    pub index: &'a FlatIndex,
    pub payloads: &'a P,
}

/// The exam bank: question vectors plus Q&A payloads.
pub struct ExamBank<'a, P> {
    pub index: &'a FlatIndex,
    pub payloads: &'a P,
}

/// Thresholded top answers for `query`, enriched with text and figures.
pub fn retrieve_answers<P: PayloadLookup<AnswerPayload>>(
    bank: &AnswerBank<'_, P>,
    query: &Embedding,
    config: &QueryConfig,
) -> Result<Vec<ScoredAnswer>, AnswerError> {
    let hits = bank
        .index
        .search(query, config.answer_k.min(MAX_ANSWERS), config.answer_threshold)?;
    hits.into_iter()
        .map(|hit| {
            let p = bank
                .payloads
                .lookup(hit.entry_id)
                .ok_or_else(|| AnswerError::MissingPayload(hit.entry_id.into()))?;
            Ok(ScoredAnswer {
                chunk_id: hit.entry_id.into(),
                text: p.text.clone(),
                figures: p.figures.clone(),
                score: clamp_score(hit.score),
            })
        })
        .collect()
}

/// Thresholded top related exam questions for `query`.
pub fn retrieve_related<P: PayloadLookup<ExamPayload>>(
    bank: &ExamBank<'_, P>,
    query: &Embedding,
    config: &QueryConfig,
) -> Result<Vec<ScoredExamQa>, AnswerError> {
    let hits = bank
        .index
        .search(query, config.related_k.min(MAX_RELATED), config.related_threshold)?;
    hits.into_iter()
        .map(|hit| {
            let p = bank
                .payloads
                .lookup(hit.entry_id)
                .ok_or_else(|| AnswerError::MissingPayload(hit.entry_id.into()))?;
            Ok(ScoredExamQa {
                qa_id: hit.entry_id.into(),
                question: p.question.clone(),
                answer: p.answer.clone(),
                score: clamp_score(hit.score),
            })
        })
        .collect()
}

/// Builds a [`QueryResult`], setting `answered` and the no-answer message.
pub fn assemble(
    question_id: String,
    question_text: String,
    answers: Vec<ScoredAnswer>,
    related: Vec<ScoredExamQa>,
    subject: &str,
    config: &QueryConfig,
) -> Result<QueryResult, AnswerError> {
    let answered = !answers.is_empty();
    let message = if answered {
        None
    } else {
        Some(render_no_answer(subject, config)?)
    };
    Ok(QueryResult {
        question_id,
        question_text,
        answers,
        related,
        answered,
        message,
    })
}
