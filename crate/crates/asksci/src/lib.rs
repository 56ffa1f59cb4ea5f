//! Science question-answering service built on `asksci-core`.
//!
//! - [`ingest`]: textbook and exam-bank files into indexes and payload stores.
//! - [`engine`]: the question path (embed, retrieve top answers and related
//!   exam questions, log).
//! - [`feedback`]: vote recording and the metrics report.
//! - [`service`]: the HTTP API.

pub mod config;
pub mod embedder;
pub mod engine;
pub mod feedback;
pub mod ingest;
pub mod logs;
pub mod service;
pub mod store;

pub use asksci_core as core;
