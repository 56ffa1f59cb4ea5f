//! Retrieval core for the science question-answering service.
//!
//! Everything here is pure computation over in-memory values and builds
//! without `std` (only `alloc` is required):
//!
//! - [`domain`]: value types shared by ingestion, retrieval, and feedback.
//! - [`text`]: deterministic sentence segmentation and sentence-group chunking.
//! - [`embed`]: the signed-hash bag-of-words reference embedder.
//! - [`index`]: exact flat cosine index and its binary file codec.
//! - [`answer`]: assembly of thresholded answers into a [`domain::QueryResult`].
//! - [`metrics`]: top-1 / top-3 accuracy and usage reports from vote and question events.
//!
//! File IO, HTTP, and the CLI live in the `asksci` crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod answer;
pub mod domain;
pub mod embed;
pub mod hash;
pub mod index;
pub mod metrics;
pub mod text;

pub use domain::{
    Chunk, Embedding, ExamQa, ExamSection, FigureRef, Paragraph, QueryResult, ScoredAnswer,
    ScoredExamQa, SourceDocument, Timestamp, VoteRecord,
};
pub use embed::ReferenceEmbedder;
pub use index::{FlatIndex, Hit, IndexEntry, IndexManifest, PayloadKind};
