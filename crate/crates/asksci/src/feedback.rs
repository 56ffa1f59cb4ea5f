//! "Was this helpful?" votes and the metrics report built from the logs.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use asksci_core::domain::{DomainError, VoteRecord};
use asksci_core::metrics::{compute_report, MetricsReport, Window};

use crate::engine::QueryEngine;
use crate::logs::{read_log, JsonlLog, LogError, QuestionLog, QuestionLogRecord, VoteLogRecord};

#[derive(Debug, thiserror::Error)]
pub enum FeedbackError {
    #[error("unknown question `{0}`")]
    UnknownQuestion(String),
    #[error("position {position} out of range: question has {answers} answer(s)")]
    PositionOutOfRange { position: u8, answers: usize },
    #[error(transparent)]
    Invalid(#[from] DomainError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Validates votes against the question log and appends them to the vote log.
///
/// Re-votes are appended too; the latest vote per
/// `(question_id, position, client_id)` wins when metrics are computed.
#[derive(Debug)]
pub struct FeedbackStore {
    engine: Arc<QueryEngine>,
    log: JsonlLog<VoteLogRecord>,
}

impl FeedbackStore {
    /// `engine` must have a question log attached.
    pub fn open(engine: Arc<QueryEngine>, vote_log: &Path) -> Result<Self, LogError> {
        Ok(Self {
            engine,
            log: JsonlLog::open(vote_log)?,
        })
    }

    pub fn path(&self) -> &Path {
        self.log.path()
    }

    fn questions(&self) -> Option<&QuestionLog> {
        self.engine.question_log()
    }

    pub fn record_vote(&self, vote: &VoteRecord) -> Result<(), FeedbackError> {
        let answers = self
            .questions()
            .and_then(|q| q.answer_count(&vote.question_id))
            .ok_or_else(|| FeedbackError::UnknownQuestion(vote.question_id.clone()))?;
        if vote.position == 0 || usize::from(vote.position) > answers {
            return Err(FeedbackError::PositionOutOfRange {
                position: vote.position,
                answers,
            });
        }
        vote.validate()?;
        self.log.append(&VoteLogRecord::from_vote(vote))?;
        Ok(())
    }
}

/// Reads both logs and computes the report over `window`.
pub fn report_from_logs(questions: &Path, votes: &Path, window: Window) -> Result<MetricsReport, LogError> {
    let questions: Vec<_> = read_log::<QuestionLogRecord>(questions)?
        .iter()
        .map(QuestionLogRecord::to_event)
        .collect();
    let votes: Vec<_> = read_log::<VoteLogRecord>(votes)?
        .iter()
        .map(VoteLogRecord::to_vote)
        .collect();
    Ok(compute_report(&questions, &votes, window))
}

fn pct(value: Option<f64>) -> String {
    value.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", v * 100.0))
}

/// Plain-text table rendering of a report.
pub fn render_report_text(report: &MetricsReport) -> String {
    let window = |t: Option<asksci_core::domain::Timestamp>| {
        t.map_or_else(|| "-".to_string(), |t| crate::logs::from_timestamp(t).to_rfc3339())
    };
    let mut out = String::new();
    let rows = [
        ("window start", window(report.window.start)),
        ("window end", window(report.window.end)),
        ("total questions", report.total_questions.to_string()),
        ("unique clients", report.unique_clients.to_string()),
        ("countries", report.countries.len().to_string()),
        ("top-1 accuracy", format!("{} (n={})", pct(report.top1_accuracy), report.top1_n)),
        ("top-3 accuracy", format!("{} (n={})", pct(report.top3_accuracy), report.top3_n)),
        (
            "top-1 (position 1 only)",
            format!("{} (n={})", pct(report.top1_position1_accuracy), report.top1_position1_n),
        ),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<24} {v}");
    }
    for (country, n) in &report.countries {
        let _ = writeln!(out, "  {country:<22} {n}");
    }
    out
}
