//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use asksci::engine::{ClientInfo, Corpus, QueryEngine};
use asksci::feedback::report_from_logs;
use asksci::logs::{read_log, to_timestamp, QuestionLogRecord};
use asksci::store::{load_index, save_index, DataPaths};
use asksci_core::answer::QueryConfig;
use asksci_core::domain::{Embedding, Paragraph};
use asksci_core::index::{FlatIndex, IndexEntry, PayloadKind};
use asksci_core::metrics::Window;
use asksci_core::text::chunk_paragraph;
use chrono::{DateTime, Utc};
use common::{build_data, client, fixture, service_config, Server};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(u8, &str, Option<Duration>, Check); 7] = [
        (1, "retrieval exactness", Some(Duration::from_secs(30)), retrieval_exactness),
        (2, "metric reproduction", Some(Duration::from_secs(1)), metric_reproduction),
        (3, "chunking", Some(Duration::from_secs(5)), chunking),
        (4, "end-to-end answer contract", Some(Duration::from_secs(20)), end_to_end),
        (5, "persistence", Some(Duration::from_secs(5)), persistence),
        (6, "performance", None, performance),
        (7, "ingestion idempotence", None, idempotence),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                Err(format!("panicked: {msg}"))
            })
            .and_then(|detail| match budget {
                Some(b) if start.elapsed() > b => Err(format!("{detail}; over the {b:?} budget")),
                _ => Ok(detail),
            });
        let elapsed = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} PASS {name} ({elapsed:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL {name} ({elapsed:.2}s): {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Embedding::normalized(&raw, "m")
}

fn random_entries(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<IndexEntry> {
    let mut out: Vec<IndexEntry> = Vec::with_capacity(n);
    for i in 0..n {
        // about one entry in ten repeats an earlier vector to force score ties
        let vector = if i > 0 && rng.gen_bool(0.1) {
            out[rng.gen_range(0..i)].vector.clone()
        } else {
            random_unit(rng, dim)
        };
        out.push(IndexEntry {
            entry_id: format!("e{:07}-{i}", rng.gen_range(0..10_000_000)),
            vector,
            payload_kind: PayloadKind::AnswerChunk,
        });
    }
    out.shuffle(rng);
    out
}

/// Full scan, sorted by (score desc, id asc), thresholded, truncated.
fn oracle(entries: &[IndexEntry], q: &Embedding, k: usize, threshold: f64) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = entries
        .iter()
        .map(|e| {
            let s: f64 = e
                .vector
                .values()
                .iter()
                .zip(q.values())
                .map(|(&a, &b)| f64::from(a) * f64::from(b))
                .sum();
            (e.entry_id.clone(), s)
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.into_iter().filter(|(_, s)| *s >= threshold).take(k).collect()
}

fn retrieval_exactness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut compared = 0;
    for corpus in 0..50 {
        let n = rng.gen_range(100..=2000);
        let entries = random_entries(&mut rng, n, 256);
        let index = FlatIndex::build(entries.clone()).map_err(|e| e.to_string())?;
        for _ in 0..20 {
            // half the queries are stored vectors, so ties reach the top ranks
            let q = if rng.gen_bool(0.5) {
                entries[rng.gen_range(0..n)].vector.clone()
            } else {
                random_unit(&mut rng, 256)
            };
            let k = rng.gen_range(1..=25);
            let threshold = rng.gen_range(-0.2..0.2);
            let got = index.search(&q, k, threshold).map_err(|e| e.to_string())?;
            let want = oracle(&entries, &q, k, threshold);
            ensure!(got.len() == want.len(), "corpus {corpus}: {} hits, oracle {}", got.len(), want.len());
            for (g, (id, s)) in got.iter().zip(&want) {
                ensure!(g.entry_id == id, "corpus {corpus}: got {} where oracle has {id}", g.entry_id);
                ensure!((g.score - s).abs() <= 1e-12, "corpus {corpus}: score {} vs {s}", g.score);
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} queries over 50 corpora match the full-scan oracle"))
}

fn metric_reproduction() -> Result<String, String> {
    let at = |s: &str| Some(to_timestamp(s.parse::<DateTime<Utc>>().unwrap()));
    let window = Window::new(at("2022-06-10T00:00:00Z"), at("2022-06-27T23:59:59.999Z")).unwrap();
    let r = report_from_logs(&fixture("metrics/questions.log"), &fixture("metrics/votes.log"), window)
        .map_err(|e| e.to_string())?;
    let top1 = r.top1_accuracy.ok_or("top1 undefined")?;
    let top3 = r.top3_accuracy.ok_or("top3 undefined")?;
    ensure!(r.top1_n == 117, "top1 n = {}", r.top1_n);
    ensure!((top1 * 100.0 - 8400.0 / 117.0).abs() <= 0.05, "top1 = {top1}");
    ensure!((top1 * 1000.0).round() == 718.0, "top1 = {top1}");
    ensure!(r.top3_n == 56, "top3 n = {}", r.top3_n);
    ensure!(top3 == 0.875, "top3 = {top3}");
    ensure!(r.total_questions == 433, "total questions = {}", r.total_questions);
    Ok(format!(
        "top1 {:.1}% (n={}), top3 {:.1}% (n={}), {} questions, {} clients, {} countries",
        top1 * 100.0,
        r.top1_n,
        top3 * 100.0,
        r.top3_n,
        r.total_questions,
        r.unique_clients,
        r.countries.len()
    ))
}

#[derive(Deserialize)]
struct ChunkFixture {
    group_size: usize,
    paragraphs: Vec<ChunkCase>,
}

#[derive(Deserialize)]
struct ChunkCase {
    para_id: String,
    text: String,
    sentences: Vec<String>,
    chunks: usize,
}

fn chunking() -> Result<String, String> {
    let fx: ChunkFixture =
        serde_json::from_slice(&fs::read(fixture("chunking_200.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure!(fx.paragraphs.len() == 200, "fixture has {} paragraphs", fx.paragraphs.len());
    let mut total = 0;
    for case in &fx.paragraphs {
        let para = Paragraph {
            para_id: case.para_id.clone(),
            text: case.text.clone(),
            figures: Vec::new(),
        };
        let chunks = chunk_paragraph(&para, fx.group_size).map_err(|e| format!("{}: {e}", case.para_id))?;
        let n = case.sentences.len();
        ensure!(chunks.len() == n.div_ceil(3), "{}: {} chunks for {n} sentences", case.para_id, chunks.len());
        ensure!(chunks.len() == case.chunks, "{}: fixture expects {}", case.para_id, case.chunks);
        ensure!(
            chunks.iter().all(|c| (1..=3).contains(&c.sentence_count)),
            "{}: chunk outside 1..=3 sentences",
            case.para_id
        );
        for (c, group) in chunks.iter().zip(case.sentences.chunks(3)) {
            ensure!(
                c.text == group.join(" "),
                "{}: chunk `{}` differs from `{}`",
                case.para_id,
                c.text,
                group.join(" ")
            );
        }
        let rejoined: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
        ensure!(rejoined.join(" ") == case.sentences.join(" "), "{}: reassembly differs", case.para_id);
        total += chunks.len();
    }
    Ok(format!("200 paragraphs, {total} chunks, reassembly exact for all"))
}

/// Small hand-written corpus plus a 300-paragraph synthetic one, served by
/// a logging engine.
struct E2e {
    _dir: tempfile::TempDir,
    engine: QueryEngine,
    vocab: Vec<String>,
}

fn e2e_engine(rng: &mut ChaCha8Rng) -> E2e {
    let dir = tempfile::tempdir().unwrap();
    let vocab = common::vocabulary(rng, 600);
    let counts: Vec<usize> = (0..300).map(|_| rng.gen_range(1..=8)).collect();
    let book = dir.path().join("book.json");
    common::write_textbook(rng, &book, "integrated-science", &vocab, &counts, 30);
    let exams = dir.path().join("exams.jsonl");
    common::write_exam_bank(rng, &exams, &vocab, 400);
    let paths = build_data(dir.path(), &book, &exams);
    let corpus = Corpus::load(&paths).unwrap();
    let engine = QueryEngine::new(corpus, common::reference(), QueryConfig::default())
        .unwrap()
        .with_question_log(&dir.path().join("logs/questions.log"))
        .unwrap();
    E2e {
        _dir: dir,
        engine,
        vocab,
    }
}

fn end_to_end() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let E2e { _dir, engine, vocab } = e2e_engine(&mut rng);
    let who = ClientInfo::new("acceptance");
    let corpus = engine.corpus();

    // (a) every indexed chunk asked verbatim comes back first
    for (id, payload) in &corpus.answer_payloads {
        let r = engine.answer_question(&payload.text, &who).map_err(|e| e.to_string())?;
        ensure!(r.answered, "{id}: not answered");
        ensure!(r.answers[0].chunk_id == *id, "{id}: rank 1 is {}", r.answers[0].chunk_id);
        ensure!(r.answers[0].score >= 0.999, "{id}: score {}", r.answers[0].score);
    }
    let self_checked = corpus.answer_payloads.len();

    // (b) words outside the corpus vocabulary; signed hashing can still
    // collide, so candidates the full-scan oracle puts at 0.35 or above
    // are drawn again
    let mut foreign = common::vocabulary(&mut rng, 2000);
    foreign.retain(|w| !vocab.contains(w));
    let (mut unanswered, mut redrawn) = (0, 0);
    while unanswered < 20 {
        let len = rng.gen_range(4..=10);
        let q = common::sentence(&mut rng, &foreign, len);
        let qe = engine.embedder().embed(&q).map_err(|e| e.to_string())?;
        let best = |index: &FlatIndex| index.search(&qe, 1, -1.0).unwrap()[0].score;
        if best(&corpus.answer_index).max(best(&corpus.exam_index)) >= 0.35 {
            redrawn += 1;
            ensure!(redrawn <= 100, "too many disjoint queries collide with the corpus");
            continue;
        }
        let r = engine.answer_question(&q, &who).map_err(|e| e.to_string())?;
        ensure!(!r.answered && r.answers.is_empty(), "`{q}` was answered");
        let msg = r.message.unwrap_or_default();
        ensure!(msg.contains("integrated-science"), "message `{msg}` lacks the subject");
        unanswered += 1;
    }

    // (c) bounded result sizes over random queries
    let chunk_texts: Vec<&String> = corpus.answer_payloads.values().map(|p| &p.text).collect();
    let mut answered = 0;
    for i in 0..1000 {
        let q = match i % 3 {
            0 => {
                let len = rng.gen_range(1..=12);
                common::sentence(&mut rng, &vocab, len)
            }
            1 => {
                let text = chunk_texts.choose(&mut rng).unwrap();
                let words: Vec<&str> = text.split(' ').collect();
                let a = rng.gen_range(0..words.len());
                let b = rng.gen_range(a..words.len());
                words[a..=b].join(" ")
            }
            _ => {
                let len = rng.gen_range(1..=12);
                common::sentence(&mut rng, &foreign, len)
            }
        };
        let r = engine.answer_question(&q, &who).map_err(|e| e.to_string())?;
        ensure!(r.answers.len() <= 3, "{} answers for `{q}`", r.answers.len());
        ensure!(r.related.len() <= 5, "{} related for `{q}`", r.related.len());
        ensure!(r.answers.iter().all(|a| a.score >= 0.35), "answer under threshold for `{q}`");
        ensure!(r.related.iter().all(|a| a.score >= 0.35), "related under threshold for `{q}`");
        ensure!(r.is_consistent(), "inconsistent result for `{q}`");
        answered += usize::from(r.answered);
    }

    let log: Vec<QuestionLogRecord> = read_log(engine.question_log().unwrap().path()).map_err(|e| e.to_string())?;
    ensure!(log.len() == self_checked + unanswered + 1000, "question log has {} lines", log.len());
    Ok(format!(
        "{self_checked} chunks self-retrieved, {unanswered} disjoint queries unanswered \
         ({redrawn} redrawn), 1000 random queries bounded ({answered} answered)"
    ))
}

fn persistence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let entries = random_entries(&mut rng, 2000, 256);
    let index = FlatIndex::build(entries).map_err(|e| e.to_string())?;
    let path = dir.path().join("answers.idx");
    save_index(&index, &path).map_err(|e| e.to_string())?;
    let (loaded, _) = load_index(&path).map_err(|e| e.to_string())?;
    for _ in 0..100 {
        let q = random_unit(&mut rng, 256);
        let a = index.search(&q, 10, -1.0).map_err(|e| e.to_string())?;
        let b = loaded.search(&q, 10, -1.0).map_err(|e| e.to_string())?;
        let bits = |h: &[asksci_core::Hit]| -> Vec<(String, u64)> {
            h.iter().map(|h| (h.entry_id.to_string(), h.score.to_bits())).collect()
        };
        ensure!(bits(&a) == bits(&b), "results differ after reload");
    }

    let bytes = fs::read(&path).map_err(|e| e.to_string())?;
    let mut positions: Vec<usize> = (0..128.min(bytes.len())).collect();
    positions.extend((0..150).map(|_| rng.gen_range(0..bytes.len())));
    positions.extend(bytes.len() - 16..bytes.len());
    let corrupt = dir.path().join("corrupt.idx");
    for &pos in &positions {
        let mut copy = bytes.clone();
        copy[pos] ^= 1 << rng.gen_range(0..8);
        fs::write(&corrupt, &copy).map_err(|e| e.to_string())?;
        ensure!(load_index(&corrupt).is_err(), "corruption at byte {pos} not detected");
    }

    // every byte of a small index
    let small = FlatIndex::build(random_entries(&mut rng, 12, 16)).map_err(|e| e.to_string())?;
    let (bytes, _) = small.encode();
    for pos in 0..bytes.len() {
        let mut copy = bytes.clone();
        copy[pos] = copy[pos].wrapping_add(1);
        ensure!(FlatIndex::decode(&copy).is_err(), "small index: byte {pos} not detected");
    }
    Ok(format!(
        "100 queries bit-identical after reload; {} + {} corrupted copies rejected",
        positions.len(),
        bytes.len()
    ))
}

fn percentile(sorted: &[Duration], p: f64) -> Duration {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn performance() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let vocab = common::vocabulary(&mut rng, 5000);
    let counts: Vec<usize> = (0..10_000).map(|_| rng.gen_range(1..=3)).collect();
    let book = dir.path().join("book.json");
    common::write_textbook(&mut rng, &book, "integrated-science", &vocab, &counts, 100);
    let exams = dir.path().join("exams.jsonl");
    common::write_exam_bank(&mut rng, &exams, &vocab, 2000);
    build_data(dir.path(), &book, &exams);
    let config = service_config(dir.path());
    let server = Server::start(&config);

    let health = common::get(&client(), &server.url("/api/health")).json();
    ensure!(health["answer_count"] == 10_000, "indexed {} chunks", health["answer_count"]);

    let questions: Vec<String> = (0..1000)
        .map(|_| {
            let len = rng.gen_range(4..=14);
            common::sentence(&mut rng, &vocab, len)
        })
        .collect();
    let next = AtomicUsize::new(0);
    let errors = AtomicUsize::new(0);
    let mut latencies: Vec<Duration> = std::thread::scope(|s| {
        let workers: Vec<_> = (0..8)
            .map(|w| {
                let (server, questions, next, errors) = (&server, &questions, &next, &errors);
                s.spawn(move || {
                    let agent = client();
                    let mut out = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= questions.len() {
                            break out;
                        }
                        let body = json!({ "question": questions[i], "client_id": format!("w{w}") });
                        let t = Instant::now();
                        let ok = agent
                            .post(&server.url("/api/ask"))
                            .send_json(&body)
                            .ok()
                            .filter(|r| r.status() == 200)
                            .and_then(|mut r| r.body_mut().read_to_string().ok())
                            .is_some();
                        out.push(t.elapsed());
                        if !ok {
                            errors.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                })
            })
            .collect();
        workers.into_iter().flat_map(|w| w.join().unwrap()).collect()
    });
    drop(server);
    latencies.sort_unstable();
    let p50 = percentile(&latencies, 0.50);
    let p95 = percentile(&latencies, 0.95);
    let errors = errors.into_inner();
    ensure!(errors == 0, "{errors} failed requests");

    let (lines, malformed) = log_health(&config.question_log)?;
    ensure!(lines == 1000, "question log has {lines} lines");
    ensure!(malformed == 0, "{malformed} malformed log lines");
    ensure!(p95 <= Duration::from_millis(50), "p95 {p95:?} exceeds 50ms (p50 {p50:?})");
    Ok(format!(
        "1000 requests at concurrency 8 over 10000 chunks: p50 {:.2}ms, p95 {:.2}ms; {lines} log lines, 0 malformed",
        p50.as_secs_f64() * 1e3,
        p95.as_secs_f64() * 1e3
    ))
}

fn log_health(path: &Path) -> Result<(usize, usize), String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let lines = text.lines().count();
    let malformed = text
        .lines()
        .filter(|l| serde_json::from_str::<QuestionLogRecord>(l).is_err())
        .count();
    Ok((lines, malformed))
}

fn idempotence() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let vocab = common::vocabulary(&mut rng, 800);
    let counts: Vec<usize> = (0..500).map(|_| rng.gen_range(1..=9)).collect();
    let book = dir.path().join("book.json");
    common::write_textbook(&mut rng, &book, "integrated-science", &vocab, &counts, 50);
    let exams = dir.path().join("exams.jsonl");
    common::write_exam_bank(&mut rng, &exams, &vocab, 300);

    let mut compared = 0;
    for (book, exams) in [
        (book, exams),
        (fixture("textbook_small.json"), fixture("exams_small.jsonl")),
    ] {
        let a = build_data(&dir.path().join(format!("a{compared}")), &book, &exams);
        let b = build_data(&dir.path().join(format!("b{compared}")), &book, &exams);
        let files = |p: &DataPaths| -> Vec<Vec<u8>> {
            [&p.answer_index, &p.answer_payload, &p.exam_index, &p.exam_payload]
                .iter()
                .map(|f| fs::read(f).unwrap())
                .collect()
        };
        ensure!(files(&a) == files(&b), "run outputs differ for {}", book.display());
        compared += 1;
    }
    Ok(format!("{compared} corpora: index and payload files byte-identical across runs"))
}
