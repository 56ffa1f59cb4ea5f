//! The question-answering path: embed, retrieve from both banks, assemble,
//! log.

use std::path::Path;

use asksci_core::answer::{
    assemble, retrieve_answers, retrieve_related, AnswerBank, AnswerError, AnswerPayload, ExamBank,
    ExamPayload, QueryConfig,
};
use asksci_core::domain::{FigureRef, QueryResult};
use asksci_core::index::FlatIndex;
use uuid::Uuid;

use crate::embedder::{EmbedError, Embedder};
use crate::ingest::CorpusManifest;
use crate::logs::{now_millis, LogError, QuestionLog, QuestionLogRecord};
use crate::store::{load_index, load_json, load_payloads, DataPaths, PayloadStore, StoreError};

pub const DEFAULT_FIGURE_BASE: &str = "/assets/figures/";

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("client_id is empty")]
    EmptyClient,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Answer(#[from] AnswerError),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Incompatible(String),
}

/// Both search banks with their payloads.
#[derive(Debug)]
pub struct Corpus {
    pub subject: String,
    pub answer_index: FlatIndex,
    pub answer_payloads: PayloadStore<AnswerPayload>,
    pub exam_index: FlatIndex,
    pub exam_payloads: PayloadStore<ExamPayload>,
}

impl Corpus {
    pub fn load(paths: &DataPaths) -> Result<Self, LoadError> {
        let manifest: CorpusManifest = load_json(&paths.answer_manifest)?;
        let (answer_index, _) = load_index(&paths.answer_index)?;
        let (exam_index, _) = load_index(&paths.exam_index)?;
        let answer_payloads = load_payloads(&paths.answer_payload)?;
        let exam_payloads = load_payloads(&paths.exam_payload)?;
        let corpus = Self {
            subject: manifest.subject,
            answer_index,
            answer_payloads,
            exam_index,
            exam_payloads,
        };
        corpus.check()?;
        Ok(corpus)
    }

    fn check(&self) -> Result<(), LoadError> {
        if self.answer_index.dim() != self.exam_index.dim() {
            return Err(LoadError::Incompatible(format!(
                "answer index dim {} differs from exam index dim {}",
                self.answer_index.dim(),
                self.exam_index.dim()
            )));
        }
        if let Some(id) = self.answer_index.ids().iter().find(|id| !self.answer_payloads.contains_key(*id)) {
            return Err(LoadError::Incompatible(format!("answer `{id}` has no payload")));
        }
        if let Some(id) = self.exam_index.ids().iter().find(|id| !self.exam_payloads.contains_key(*id)) {
            return Err(LoadError::Incompatible(format!("exam question `{id}` has no payload")));
        }
        Ok(())
    }
}

/// Who is asking.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientInfo {
    pub client_id: String,
    pub country: Option<String>,
}

impl ClientInfo {
    pub fn new(client_id: impl Into<String>) -> Self {
        Self {
            client_id: client_id.into(),
            country: None,
        }
    }
}

#[derive(Debug)]
pub struct QueryEngine {
    corpus: Corpus,
    embedder: Embedder,
    config: QueryConfig,
    figure_base: String,
    log: Option<QuestionLog>,
}

impl QueryEngine {
    pub fn new(corpus: Corpus, embedder: Embedder, config: QueryConfig) -> Result<Self, LoadError> {
        config
            .validate()
            .map_err(|e| LoadError::Incompatible(e.to_string()))?;
        if embedder.dim() != corpus.answer_index.dim() {
            return Err(LoadError::Incompatible(format!(
                "embedder dim {} differs from index dim {}",
                embedder.dim(),
                corpus.answer_index.dim()
            )));
        }
        if let Embedder::Reference(r) = &embedder {
            for index in [&corpus.answer_index, &corpus.exam_index] {
                if index.model_id() != r.model_id() {
                    return Err(LoadError::Incompatible(format!(
                        "index built with `{}`, embedder is `{}`",
                        index.model_id(),
                        r.model_id()
                    )));
                }
            }
        }
        Ok(Self {
            corpus,
            embedder,
            config,
            figure_base: DEFAULT_FIGURE_BASE.to_string(),
            log: None,
        })
    }

    /// Logs every answered or unanswered question to `path`.
    pub fn with_question_log(mut self, path: &Path) -> Result<Self, LogError> {
        self.log = Some(QuestionLog::open(path)?);
        Ok(self)
    }

    /// Prefix for relative figure URIs in results.
    pub fn with_figure_base(mut self, base: impl Into<String>) -> Self {
        self.figure_base = base.into();
        self
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    pub fn config(&self) -> &QueryConfig {
        &self.config
    }

    pub fn question_log(&self) -> Option<&QuestionLog> {
        self.log.as_ref()
    }

    pub fn answer_question(&self, question: &str, client: &ClientInfo) -> Result<QueryResult, QueryError> {
        let question = question.trim();
        if question.is_empty() {
            return Err(QueryError::EmptyQuestion);
        }
        if client.client_id.trim().is_empty() {
            return Err(QueryError::EmptyClient);
        }
        let query = self.embedder.embed(question)?;
        let answer_bank = AnswerBank {
            index: &self.corpus.answer_index,
            payloads: &self.corpus.answer_payloads,
        };
        let exam_bank = ExamBank {
            index: &self.corpus.exam_index,
            payloads: &self.corpus.exam_payloads,
        };
        let mut answers = retrieve_answers(&answer_bank, &query, &self.config)?;
        for a in &mut answers {
            for fig in &mut a.figures {
                *fig = self.resolve_figure(fig);
            }
        }
        let related = retrieve_related(&exam_bank, &query, &self.config)?;

        let question_id = Uuid::now_v7().simple().to_string();
        let result = assemble(
            question_id,
            question.to_string(),
            answers,
            related,
            &self.corpus.subject,
            &self.config,
        )?;

        if let Some(log) = &self.log {
            log.append(&QuestionLogRecord {
                question_id: result.question_id.clone(),
                ts: now_millis(),
                client_id: client.client_id.clone(),
                question: result.question_text.clone(),
                answered: result.answered,
                answer_ids: result.answers.iter().map(|a| a.chunk_id.clone()).collect(),
                answer_scores: result.answers.iter().map(|a| a.score).collect(),
                related_ids: result.related.iter().map(|r| r.qa_id.clone()).collect(),
                related_scores: result.related.iter().map(|r| r.score).collect(),
                country: client.country.clone(),
            })?;
        }
        Ok(result)
    }

    fn resolve_figure(&self, fig: &FigureRef) -> FigureRef {
        let mut out = fig.clone();
        if !fig.uri.starts_with('/') && !has_scheme(&fig.uri) {
            out.uri = format!("{}{}", self.figure_base, fig.uri.trim_start_matches("./"));
        }
        out
    }
}

fn has_scheme(uri: &str) -> bool {
    uri.split_once(':')
        .is_some_and(|(scheme, _)| !scheme.contains(['/', '?', '#']))
}
