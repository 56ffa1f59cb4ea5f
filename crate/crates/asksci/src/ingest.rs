//! Batch ingestion of textbook corpora and exam banks into search indexes.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use asksci_core::answer::{AnswerPayload, ExamPayload};
use asksci_core::domain::{validate_exam_qa, FigureRef, Paragraph, RawExamQa, YearBounds};
use asksci_core::index::{FlatIndex, IndexEntry, IndexError, PayloadKind};
use asksci_core::text::{chunk_paragraph, DEFAULT_GROUP_SIZE};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::embedder::{EmbedError, Embedder};
use crate::store::{save_index, save_json, save_payloads, DataPaths, PayloadStore, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{file}: schema violation at `{path}`: {reason}")]
    SchemaViolation {
        file: PathBuf,
        path: String,
        reason: String,
    },
    #[error("{0}: corpus is empty")]
    EmptyCorpus(PathBuf),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Textbook file: `{ "subject", "documents": [ { "doc_id", "title", "paragraphs": [...] } ] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextbookFile {
    pub subject: String,
    pub documents: Vec<TextbookDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextbookDocument {
    pub doc_id: String,
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub subject: String,
    pub documents: usize,
    pub paragraphs: usize,
    pub chunks: usize,
    pub figures: usize,
    pub model_id: String,
    pub built_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamBankManifest {
    pub subject: String,
    pub records: usize,
    pub sections: BTreeMap<String, usize>,
    pub min_year: u16,
    pub max_year: u16,
    pub model_id: String,
    pub built_at: DateTime<Utc>,
}

#[derive(Debug)]
pub struct TextbookIngest {
    pub index: FlatIndex,
    pub payloads: PayloadStore<AnswerPayload>,
    pub manifest: CorpusManifest,
}

#[derive(Debug)]
pub struct ExamIngest {
    pub index: FlatIndex,
    pub payloads: PayloadStore<ExamPayload>,
    pub manifest: ExamBankManifest,
}

fn violation(file: &Path, path: impl Into<String>, reason: impl Into<String>) -> IngestError {
    IngestError::SchemaViolation {
        file: file.to_path_buf(),
        path: path.into(),
        reason: reason.into(),
    }
}

fn read_textbook(path: &Path) -> Result<TextbookFile, IngestError> {
    let bytes = fs::read(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        violation(path, at, e.into_inner().to_string())
    })
}

fn check_figure(file: &Path, at: &str, fig: &FigureRef) -> Result<(), IngestError> {
    fig.validate().map_err(|e| violation(file, at, e.to_string()))
}

/// Parses, chunks, and embeds a textbook file into the answer bank.
pub fn ingest_textbook(path: &Path, embedder: &Embedder) -> Result<TextbookIngest, IngestError> {
    let book = read_textbook(path)?;
    if book.subject.trim().is_empty() {
        return Err(violation(path, "subject", "empty subject"));
    }
    if book.documents.is_empty() {
        return Err(IngestError::EmptyCorpus(path.to_path_buf()));
    }

    let mut doc_ids = HashSet::new();
    let mut para_ids = HashSet::new();
    let mut chunks = Vec::new();
    let mut paragraphs = 0;
    let mut figures = 0;
    for (d, doc) in book.documents.iter().enumerate() {
        let at = format!("documents[{d}]");
        if doc.doc_id.trim().is_empty() {
            return Err(violation(path, format!("{at}.doc_id"), "empty doc_id"));
        }
        if !doc_ids.insert(doc.doc_id.as_str()) {
            return Err(IngestError::DuplicateId(doc.doc_id.clone()));
        }
        if doc.paragraphs.is_empty() {
            return Err(violation(path, format!("{at}.paragraphs"), "document has no paragraphs"));
        }
        for (p, para) in doc.paragraphs.iter().enumerate() {
            let at = format!("{at}.paragraphs[{p}]");
            if para.para_id.trim().is_empty() {
                return Err(violation(path, format!("{at}.para_id"), "empty para_id"));
            }
            if !para_ids.insert(para.para_id.as_str()) {
                return Err(IngestError::DuplicateId(para.para_id.clone()));
            }
            if para.text.trim().is_empty() {
                return Err(violation(path, format!("{at}.text"), "empty paragraph text"));
            }
            for (f, fig) in para.figures.iter().enumerate() {
                check_figure(path, &format!("{at}.figures[{f}]"), fig)?;
            }
            figures += para.figures.len();
            paragraphs += 1;
            let para_chunks = chunk_paragraph(para, DEFAULT_GROUP_SIZE)
                .map_err(|e| violation(path, format!("{at}.text"), e.to_string()))?;
            chunks.extend(para_chunks);
        }
    }

    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let vectors = embedder.embed_batch(&texts)?;

    let mut payloads = PayloadStore::new();
    let mut entries = Vec::with_capacity(chunks.len());
    for (chunk, vector) in chunks.into_iter().zip(vectors) {
        if payloads.contains_key(&chunk.chunk_id) {
            return Err(IngestError::DuplicateId(chunk.chunk_id));
        }
        entries.push(IndexEntry {
            entry_id: chunk.chunk_id.clone(),
            vector,
            payload_kind: PayloadKind::AnswerChunk,
        });
        payloads.insert(
            chunk.chunk_id,
            AnswerPayload {
                text: chunk.text,
                figures: chunk.figures,
                source_para_id: chunk.source_para_id,
            },
        );
    }
    let index = FlatIndex::build(entries)?;
    let manifest = CorpusManifest {
        subject: book.subject,
        documents: book.documents.len(),
        paragraphs,
        chunks: index.len(),
        figures,
        model_id: index.model_id().to_string(),
        built_at: Utc::now(),
    };
    Ok(TextbookIngest {
        index,
        payloads,
        manifest,
    })
}

/// Parses and embeds an exam bank (JSON lines). Only question text is embedded.
pub fn ingest_exam_bank(
    path: &Path,
    subject: &str,
    bounds: YearBounds,
    embedder: &Embedder,
) -> Result<ExamIngest, IngestError> {
    let file = fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("line {}", n + 1);
        let de = &mut serde_json::Deserializer::from_str(&line);
        let raw: RawExamQa = serde_path_to_error::deserialize(de)
            .map_err(|e| violation(path, format!("{at}: {}", e.path()), e.into_inner().to_string()))?;
        let qa = validate_exam_qa(&raw, bounds).map_err(|e| violation(path, at, e.to_string()))?;
        if !seen.insert(qa.qa_id.clone()) {
            return Err(IngestError::DuplicateId(qa.qa_id));
        }
        records.push(qa);
    }
    if records.is_empty() {
        return Err(IngestError::EmptyCorpus(path.to_path_buf()));
    }

    let questions: Vec<&str> = records.iter().map(|r| r.question.as_str()).collect();
    let vectors = embedder.embed_batch(&questions)?;

    let mut sections = BTreeMap::new();
    let mut payloads = PayloadStore::new();
    let mut entries = Vec::with_capacity(records.len());
    for (qa, vector) in records.iter().zip(vectors) {
        *sections.entry(qa.section.to_string()).or_insert(0) += 1;
        entries.push(IndexEntry {
            entry_id: qa.qa_id.clone(),
            vector,
            payload_kind: PayloadKind::ExamQuestion,
        });
        payloads.insert(
            qa.qa_id.clone(),
            ExamPayload {
                question: qa.question.clone(),
                answer: qa.answer.clone(),
                year: qa.year,
                section: qa.section,
            },
        );
    }
    let index = FlatIndex::build(entries)?;
    let manifest = ExamBankManifest {
        subject: subject.to_string(),
        records: index.len(),
        sections,
        min_year: records.iter().map(|r| r.year).min().unwrap_or_default(),
        max_year: records.iter().map(|r| r.year).max().unwrap_or_default(),
        model_id: index.model_id().to_string(),
        built_at: Utc::now(),
    };
    Ok(ExamIngest {
        index,
        payloads,
        manifest,
    })
}

impl TextbookIngest {
    pub fn write(&self, paths: &DataPaths) -> Result<(), IngestError> {
        save_index(&self.index, &paths.answer_index)?;
        save_payloads(&self.payloads, &paths.answer_payload)?;
        save_json(&self.manifest, &paths.answer_manifest)?;
        Ok(())
    }
}

impl ExamIngest {
    pub fn write(&self, paths: &DataPaths) -> Result<(), IngestError> {
        save_index(&self.index, &paths.exam_index)?;
        save_payloads(&self.payloads, &paths.exam_payload)?;
        save_json(&self.manifest, &paths.exam_manifest)?;
        Ok(())
    }
}
