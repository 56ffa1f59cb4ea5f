#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread::JoinHandle;

use asksci::config::ServiceConfig;
use asksci::embedder::{Embedder, EmbedderConfig};
use asksci::ingest::{ingest_exam_bank, ingest_textbook};
use asksci::service::{router, AppState};
use asksci::store::DataPaths;
use asksci_core::domain::YearBounds;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Value};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn reference() -> Embedder {
    Embedder::from_config(&EmbedderConfig::default()).unwrap()
}

/// Ingests both inputs into `<dir>/data` and returns the data paths.
pub fn build_data(dir: &Path, textbook: &Path, exams: &Path) -> DataPaths {
    let embedder = reference();
    let paths = DataPaths::in_dir(&dir.join("data"));
    let book = ingest_textbook(textbook, &embedder).unwrap();
    book.write(&paths).unwrap();
    ingest_exam_bank(exams, &book.manifest.subject, YearBounds::default(), &embedder)
        .unwrap()
        .write(&paths)
        .unwrap();
    paths
}

/// Config rooted at `dir`, with the rate limit off.
pub fn service_config(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        listen: "127.0.0.1:0".into(),
        data_dir: dir.join("data"),
        question_log: dir.join("logs/questions.log"),
        vote_log: dir.join("logs/votes.log"),
        rate_limit_per_minute: 0,
        ..ServiceConfig::default()
    }
}

/// A service running on an ephemeral port in its own runtime thread.
pub struct Server {
    pub base: String,
    stop: Option<mpsc::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    pub fn start(config: &ServiceConfig) -> Self {
        let state = AppState::from_config(config).unwrap();
        Self::with_state(state, config)
    }

    pub fn with_state(state: AppState, config: &ServiceConfig) -> Self {
        Self::serve(router(state, config).unwrap())
    }

    pub fn serve(app: axum::Router) -> Self {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (stop, rx) = mpsc::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(4)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async move {
                        let _ = tokio::task::spawn_blocking(move || rx.recv()).await;
                    })
                    .await
                    .unwrap();
            });
        });
        Self {
            base,
            stop: Some(stop),
            thread: Some(thread),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        drop(self.stop.take());
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// HTTP client that returns error statuses as ordinary responses.
pub fn client() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into()
}

pub struct Reply {
    pub status: u16,
    pub api_version: Option<String>,
    pub body: String,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.body).unwrap_or_else(|e| panic!("bad json {e}: {}", self.body))
    }
}

fn reply(mut resp: ureq::http::Response<ureq::Body>) -> Reply {
    Reply {
        status: resp.status().as_u16(),
        api_version: resp
            .headers()
            .get("x-api-version")
            .map(|v| v.to_str().unwrap().to_string()),
        body: resp.body_mut().read_to_string().unwrap(),
    }
}

pub fn post_json(agent: &ureq::Agent, url: &str, body: &Value) -> Reply {
    reply(agent.post(url).send_json(body).unwrap())
}

pub fn post_raw(agent: &ureq::Agent, url: &str, body: &str) -> Reply {
    reply(
        agent
            .post(url)
            .header("content-type", "application/json")
            .send(body)
            .unwrap(),
    )
}

pub fn get(agent: &ureq::Agent, url: &str) -> Reply {
    reply(agent.get(url).call().unwrap())
}

pub fn ask(agent: &ureq::Agent, server: &Server, question: &str, client_id: &str) -> Reply {
    post_json(
        agent,
        &server.url("/api/ask"),
        &json!({ "question": question, "client_id": client_id }),
    )
}

/// Distinct pronounceable lowercase words of two or three syllables.
pub fn vocabulary<R: Rng>(rng: &mut R, n: usize) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let mut seen = std::collections::BTreeSet::new();
    let mut words = Vec::with_capacity(n);
    while words.len() < n {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(*CONSONANTS.choose(rng).unwrap() as char);
            w.push(*VOWELS.choose(rng).unwrap() as char);
        }
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

/// A capitalized sentence of `len` random words from `vocab`, ending in a period.
pub fn sentence<R: Rng>(rng: &mut R, vocab: &[String], len: usize) -> String {
    let mut words: Vec<&str> = (0..len).map(|_| vocab.choose(rng).unwrap().as_str()).collect();
    let first = words[0];
    let capital = first[..1].to_uppercase() + &first[1..];
    words[0] = &capital;
    words.join(" ") + "."
}

/// Writes a textbook JSON file with the given sentence count per paragraph,
/// spread over documents of `per_doc` paragraphs.
pub fn write_textbook<R: Rng>(
    rng: &mut R,
    path: &Path,
    subject: &str,
    vocab: &[String],
    sentence_counts: &[usize],
    per_doc: usize,
) {
    let mut documents = Vec::new();
    for (d, counts) in sentence_counts.chunks(per_doc).enumerate() {
        let paragraphs: Vec<Value> = counts
            .iter()
            .enumerate()
            .map(|(p, &n)| {
                let text: Vec<String> = (0..n)
                    .map(|_| {
                        let len = rng.gen_range(6..=14);
                        sentence(rng, vocab, len)
                    })
                    .collect();
                json!({ "para_id": format!("d{d:03}-p{p:03}"), "text": text.join(" ") })
            })
            .collect();
        documents.push(json!({
            "doc_id": format!("d{d:03}"),
            "title": format!("Synthetic chapter {d}"),
            "paragraphs": paragraphs,
        }));
    }
    let book = json!({ "subject": subject, "documents": documents });
    std::fs::write(path, serde_json::to_vec_pretty(&book).unwrap()).unwrap();
}

/// Writes an exam bank of `n` records whose questions are drawn from `vocab`.
pub fn write_exam_bank<R: Rng>(rng: &mut R, path: &Path, vocab: &[String], n: usize) {
    let sections = ["Objectives", "Theory", "Practicals"];
    let mut out = String::new();
    for i in 0..n {
        let q_len = rng.gen_range(5..=12);
        let a_len = rng.gen_range(3..=10);
        let record = json!({
            "qa_id": format!("qa-{i:05}"),
            "year": rng.gen_range(2000..=2020),
            "section": sections[i % 3],
            "question": sentence(rng, vocab, q_len),
            "answer": sentence(rng, vocab, a_len),
        });
        out.push_str(&record.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}
