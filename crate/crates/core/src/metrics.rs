//! Feedback metrics over question and vote events.
//!
//! - Top-1 accuracy: helpful votes over all votes, regardless of position.
//! - Top-3 accuracy: over questions with at least one vote, the share with
//!   at least one helpful vote.
//!
//! Votes are keyed by `(question_id, position, client_id)`; a later vote
//! for the same key replaces the earlier one.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{Timestamp, VoteRecord};

pub const UNKNOWN_COUNTRY: &str = "unknown";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("window start {start:?} is after end {end:?}")]
    BadWindow { start: Timestamp, end: Timestamp },
}

/// The parts of a logged question that metrics need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionEvent {
    pub question_id: String,
    pub timestamp: Timestamp,
    pub client_id: String,
    pub answer_count: usize,
    pub country: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// `None` when `n` is zero.
    pub accuracy: Option<f64>,
    pub n: usize,
}

impl Accuracy {
    fn ratio(hits: usize, n: usize) -> Self {
        Self {
            accuracy: (n > 0).then(|| hits as f64 / n as f64),
            n,
        }
    }
}

/// Latest vote per `(question_id, position, client_id)`, in log order of
/// each key's first appearance.
pub fn effective_votes(votes: &[VoteRecord]) -> Vec<&VoteRecord> {
    let mut slot: BTreeMap<(&str, u8, &str), usize> = BTreeMap::new();
    let mut out: Vec<&VoteRecord> = Vec::new();
    for v in votes {
        let key = (v.question_id.as_str(), v.position, v.client_id.as_str());
        match slot.get(&key) {
            Some(&i) => out[i] = v,
            None => {
                slot.insert(key, out.len());
                out.push(v);
            }
        }
    }
    out
}

pub fn compute_top1(votes: &[VoteRecord]) -> Accuracy {
    let eff = effective_votes(votes);
    let helpful = eff.iter().filter(|v| v.helpful).count();
    Accuracy::ratio(helpful, eff.len())
}

/// Top-1 restricted to votes on the first-ranked answer.
pub fn compute_top1_first_position(votes: &[VoteRecord]) -> Accuracy {
    let eff = effective_votes(votes);
    let first: Vec<_> = eff.iter().filter(|v| v.position == 1).collect();
    let helpful = first.iter().filter(|v| v.helpful).count();
    Accuracy::ratio(helpful, first.len())
}

/// Top-3 over questions in `questions` that received at least one vote.
pub fn compute_top3(votes: &[VoteRecord], questions: &[QuestionEvent]) -> Accuracy {
    let known: BTreeSet<&str> = questions.iter().map(|q| q.question_id.as_str()).collect();
    let mut voted: BTreeMap<&str, bool> = BTreeMap::new();
    for v in effective_votes(votes) {
        if known.contains(v.question_id.as_str()) {
            *voted.entry(v.question_id.as_str()).or_insert(false) |= v.helpful;
        }
    }
    let helpful = voted.values().filter(|&&h| h).count();
    Accuracy::ratio(helpful, voted.len())
}

/// Inclusive time window; `None` bounds are open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: Option<Timestamp>,
    pub end: Option<Timestamp>,
}

impl Window {
    pub fn new(start: Option<Timestamp>, end: Option<Timestamp>) -> Result<Self, MetricsError> {
        if let (Some(start), Some(end)) = (start, end) {
            if start > end {
                return Err(MetricsError::BadWindow { start, end });
            }
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start.is_none_or(|s| t >= s) && self.end.is_none_or(|e| t <= e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub top1_accuracy: Option<f64>,
    pub top1_n: usize,
    pub top3_accuracy: Option<f64>,
    pub top3_n: usize,
    /// Top-1 counting only votes on position 1.
    pub top1_position1_accuracy: Option<f64>,
    pub top1_position1_n: usize,
    pub total_questions: usize,
    pub unique_clients: usize,
    /// Distinct clients per country code.
    pub countries: BTreeMap<String, usize>,
    pub window: Window,
}

/// Computes every report field over the events falling inside `window`.
pub fn compute_report(
    questions: &[QuestionEvent],
    votes: &[VoteRecord],
    window: Window,
) -> MetricsReport {
    let questions: Vec<QuestionEvent> = questions
        .iter()
        .filter(|q| window.contains(q.timestamp))
        .cloned()
        .collect();
    let votes: Vec<VoteRecord> = votes
        .iter()
        .filter(|v| window.contains(v.timestamp))
        .cloned()
        .collect();

    let top1 = compute_top1(&votes);
    let top1_first = compute_top1_first_position(&votes);
    let top3 = compute_top3(&votes, &questions);

    // First country seen per client wins.
    let mut client_country: BTreeMap<&str, Option<&str>> = BTreeMap::new();
    for q in &questions {
        let entry = client_country.entry(q.client_id.as_str()).or_insert(None);
        if entry.is_none() {
            *entry = q.country.as_deref().filter(|c| !c.is_empty());
        }
    }
    for v in &votes {
        client_country.entry(v.client_id.as_str()).or_insert(None);
    }
    let mut countries: BTreeMap<String, usize> = BTreeMap::new();
    for country in client_country.values() {
        *countries
            .entry(String::from(country.unwrap_or(UNKNOWN_COUNTRY)))
            .or_insert(0) += 1;
    }

    MetricsReport {
        top1_accuracy: top1.accuracy,
        top1_n: top1.n,
        top3_accuracy: top3.accuracy,
        top3_n: top3.n,
        top1_position1_accuracy: top1_first.accuracy,
        top1_position1_n: top1_first.n,
        total_questions: questions.len(),
        unique_clients: client_country.len(),
        countries,
        window,
    }
}
