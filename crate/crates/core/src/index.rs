//! Exact flat cosine index over unit-norm embeddings.
//!
//! Entries are stored sorted by id in one row-major `f32` matrix, so the
//! scan order doubles as the tie-break order (ascending id). Search is a
//! full scan with a bounded heap; there is no approximation.
//!
//! Each row is first scored with a fast `f32` dot product. Only rows whose
//! fast score, widened by a rigorous rounding-error bound, could still
//! enter the result get the `f64` score, so results equal a plain `f64`
//! scan.
//!
//! # File layout (format version 1)
//!
//! ```text
//! ASKSCI-INDEX\n                 magic
//! format_version=1\n             header, fixed key order
//! dim=<usize>\n
//! model_id=<string>\n
//! payload_kind=<AnswerChunk|ExamQuestion>\n
//! entry_count=<usize>\n
//! \n                             end of header
//! 0x00 padding                   up to the next 16-byte boundary
//! f32 LE matrix                  entry_count * dim values, row-major
//! id table                       per entry: u32 LE byte length + UTF-8 bytes
//! u64 LE checksum                FNV-1a 64 over every preceding byte
//! ```

use alloc::collections::BinaryHeap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::Embedding;
use crate::hash::fnv1a64;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8] = b"ASKSCI-INDEX\n";
const MATRIX_ALIGN: usize = 16;
const CHECKSUM_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PayloadKind {
    AnswerChunk,
    ExamQuestion,
}

impl PayloadKind {
    pub const fn as_str(self) -> &'static str {
        match self {
            Self::AnswerChunk => "AnswerChunk",
            Self::ExamQuestion => "ExamQuestion",
        }
    }
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PayloadKind {
    type Err = IndexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AnswerChunk" => Ok(Self::AnswerChunk),
            "ExamQuestion" => Ok(Self::ExamQuestion),
            _ => Err(IndexError::Malformed("unknown payload_kind")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IndexError {
    #[error("index has no entries")]
    EmptyIndex,
    #[error("dimension mismatch: index has {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("duplicate entry id `{0}`")]
    DuplicateId(String),
    #[error("entries mix payload kinds {0} and {1}")]
    KindMismatch(PayloadKind, PayloadKind),
    #[error("entries mix embedding models `{0}` and `{1}`")]
    ModelMismatch(String, String),
    #[error("model id must be a single line")]
    BadModelId,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("threshold {0} outside [-1, 1]")]
    BadThreshold(f64),
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("unsupported index format version {0}")]
    VersionUnsupported(u32),
    #[error("malformed index file: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub entry_id: String,
    pub vector: Embedding,
    pub payload_kind: PayloadKind,
}

/// Summary of a serialized index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub dim: usize,
    pub model_id: String,
    pub entry_count: usize,
    pub payload_kind: PayloadKind,
    pub checksum: u64,
    pub format_version: u32,
}

/// One search result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<'a> {
    pub entry_id: &'a str,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    model_id: String,
    kind: PayloadKind,
    ids: Vec<String>,
    matrix: Vec<f32>,
    /// Largest row L2 norm, for the fast-pass error bound.
    max_norm: f64,
}

impl FlatIndex {
    pub fn build(mut entries: Vec<IndexEntry>) -> Result<Self, IndexError> {
        let first = entries.first().ok_or(IndexError::EmptyIndex)?;
        let dim = first.vector.dim();
        let kind = first.payload_kind;
        let model_id = first.vector.model_id().to_string();
        if dim == 0 {
            return Err(IndexError::DimMismatch { expected: 1, found: 0 });
        }
        if model_id.contains(['\n', '\r']) {
            return Err(IndexError::BadModelId);
        }
        for e in &entries {
            if e.vector.dim() != dim {
                return Err(IndexError::DimMismatch {
                    expected: dim,
                    found: e.vector.dim(),
                });
            }
            if e.payload_kind != kind {
                return Err(IndexError::KindMismatch(kind, e.payload_kind));
            }
            if e.vector.model_id() != model_id {
                return Err(IndexError::ModelMismatch(
                    model_id,
                    e.vector.model_id().to_string(),
                ));
            }
        }

        entries.sort_by(|a, b| a.entry_id.cmp(&b.entry_id));
        if let Some(w) = entries.windows(2).find(|w| w[0].entry_id == w[1].entry_id) {
            return Err(IndexError::DuplicateId(w[0].entry_id.clone()));
        }

        let mut ids = Vec::with_capacity(entries.len());
        let mut matrix = Vec::with_capacity(entries.len() * dim);
        for e in entries {
            matrix.extend_from_slice(e.vector.values());
            ids.push(e.entry_id);
        }
        Ok(Self {
            dim,
            model_id,
            kind,
            max_norm: max_row_norm(&matrix, dim),
            ids,
            matrix,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn payload_kind(&self) -> PayloadKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Entry ids in ascending order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, pos: usize) -> &[f32] {
        &self.matrix[pos * self.dim..(pos + 1) * self.dim]
    }

    /// Up to `k` entries scoring at least `threshold`, best first.
    ///
    /// Scores are dot products with the query, which equal cosine
    /// similarity for unit vectors. Equal scores order by ascending id.
    pub fn search(
        &self,
        query: &Embedding,
        k: usize,
        threshold: f64,
    ) -> Result<Vec<Hit<'_>>, IndexError> {
        if query.dim() != self.dim {
            return Err(IndexError::DimMismatch {
                expected: self.dim,
                found: query.dim(),
            });
        }
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if !(-1.0..=1.0).contains(&threshold) {
            return Err(IndexError::BadThreshold(threshold));
        }

        let q = query.values();
        let slack = fast_dot_error_bound(self.dim, self.max_norm * query.norm());
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        for (pos, row) in self.matrix.chunks_exact(self.dim).enumerate() {
            let upper = f64::from(dot_f32(q, row)) + slack;
            if upper < threshold {
                continue;
            }
            if heap.len() == k && heap.peek().is_some_and(|worst| upper < worst.score) {
                continue;
            }
            let score = dot(q, row);
            if !(score >= threshold) {
                continue;
            }
            let cand = Candidate { score, pos };
            if heap.len() < k {
                heap.push(cand);
            } else if let Some(mut worst) = heap.peek_mut() {
                if cand < *worst {
                    *worst = cand;
                }
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| Hit {
                entry_id: &self.ids[c.pos],
                score: c.score,
            })
            .collect())
    }

    /// Serializes to the version-1 file layout.
    pub fn encode(&self) -> (Vec<u8>, IndexManifest) {
        let mut out = Vec::with_capacity(
            MAGIC.len() + 128 + self.matrix.len() * 4 + self.ids.iter().map(|i| i.len() + 4).sum::<usize>(),
        );
        out.extend_from_slice(MAGIC);
        let header = alloc::format!(
            "format_version={}\ndim={}\nmodel_id={}\npayload_kind={}\nentry_count={}\n\n",
            FORMAT_VERSION,
            self.dim,
            self.model_id,
            self.kind,
            self.ids.len()
        );
        out.extend_from_slice(header.as_bytes());
        while out.len() % MATRIX_ALIGN != 0 {
            out.push(0);
        }
        for v in &self.matrix {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        let checksum = fnv1a64(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        let manifest = IndexManifest {
            dim: self.dim,
            model_id: self.model_id.clone(),
            entry_count: self.ids.len(),
            payload_kind: self.kind,
            checksum,
            format_version: FORMAT_VERSION,
        };
        (out, manifest)
    }

    /// Parses the file layout written by [`FlatIndex::encode`].
    ///
    /// The checksum is verified before anything else is interpreted.
    pub fn decode(bytes: &[u8]) -> Result<(Self, IndexManifest), IndexError> {
        if bytes.len() < MAGIC.len() + CHECKSUM_LEN || !bytes.starts_with(MAGIC) {
            return Err(IndexError::Malformed("missing magic"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        let stored = u64::from_le_bytes(tail.try_into().expect("8-byte tail"));
        let computed = fnv1a64(body);
        if stored != computed {
            return Err(IndexError::ChecksumMismatch { stored, computed });
        }

        let header_start = MAGIC.len();
        let header_len = body[header_start..]
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or(IndexError::Malformed("unterminated header"))?;
        let header = core::str::from_utf8(&body[header_start..header_start + header_len])
            .map_err(|_| IndexError::Malformed("header is not UTF-8"))?;
        let header = Header::parse(header)?;
        if header.format_version != FORMAT_VERSION {
            return Err(IndexError::VersionUnsupported(header.format_version));
        }
        if header.dim == 0 || header.entry_count == 0 {
            return Err(IndexError::Malformed("zero dim or entry count"));
        }

        let mut cursor = header_start + header_len + 2;
        cursor = cursor.div_ceil(MATRIX_ALIGN) * MATRIX_ALIGN;
        let values = header
            .entry_count
            .checked_mul(header.dim)
            .ok_or(IndexError::Malformed("matrix size overflow"))?;
        let matrix_bytes = values
            .checked_mul(4)
            .ok_or(IndexError::Malformed("matrix size overflow"))?;
        let matrix_src = body
            .get(cursor..cursor + matrix_bytes)
            .ok_or(IndexError::Malformed("truncated matrix"))?;
        let matrix: Vec<f32> = matrix_src
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        cursor += matrix_bytes;

        let mut ids = Vec::with_capacity(header.entry_count);
        for _ in 0..header.entry_count {
            let len_bytes = body
                .get(cursor..cursor + 4)
                .ok_or(IndexError::Malformed("truncated id table"))?;
            let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
            cursor += 4;
            let id = body
                .get(cursor..cursor + len)
                .ok_or(IndexError::Malformed("truncated id table"))?;
            let id = core::str::from_utf8(id).map_err(|_| IndexError::Malformed("id is not UTF-8"))?;
            ids.push(id.to_string());
            cursor += len;
        }
        if cursor != body.len() {
            return Err(IndexError::Malformed("trailing bytes after id table"));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(IndexError::Malformed("ids not strictly ascending"));
        }

        let manifest = IndexManifest {
            dim: header.dim,
            model_id: header.model_id.clone(),
            entry_count: header.entry_count,
            payload_kind: header.payload_kind,
            checksum: stored,
            format_version: header.format_version,
        };
        let index = Self {
            dim: header.dim,
            model_id: header.model_id,
            kind: header.payload_kind,
            max_norm: max_row_norm(&matrix, header.dim),
            ids,
            matrix,
        };
        Ok((index, manifest))
    }
}

struct Header {
    format_version: u32,
    dim: usize,
    model_id: String,
    payload_kind: PayloadKind,
    entry_count: usize,
}

impl Header {
    fn parse(text: &str) -> Result<Self, IndexError> {
        const KEYS: [&str; 5] = ["format_version", "dim", "model_id", "payload_kind", "entry_count"];
        let mut values: [&str; 5] = [""; 5];
        let mut lines = text.split('\n');
        for (slot, key) in values.iter_mut().zip(KEYS) {
            let line = lines.next().ok_or(IndexError::Malformed("missing header key"))?;
            let (k, v) = line
                .split_once('=')
                .ok_or(IndexError::Malformed("header line without '='"))?;
            if k != key {
                return Err(IndexError::Malformed("header keys out of order"));
            }
            *slot = v;
        }
        if lines.next().is_some() {
            return Err(IndexError::Malformed("unexpected header key"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| IndexError::Malformed("bad number"));
        Ok(Self {
            format_version: values[0]
                .parse()
                .map_err(|_| IndexError::Malformed("bad format_version"))?,
            dim: num(values[1])?,
            model_id: values[2].to_string(),
            payload_kind: values[3].parse()?,
            entry_count: num(values[4])?,
        })
    }
}

/// Heap element ordered so that the greatest value is the worst hit:
/// lower score first, then higher position (later id).
#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    pos: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.pos.cmp(&other.pos))
    }
}

const LANES: usize = 8;

fn max_row_norm(matrix: &[f32], dim: usize) -> f64 {
    matrix
        .chunks_exact(dim.max(1))
        .map(|row| libm::sqrt(row.iter().map(|&x| f64::from(x) * f64::from(x)).sum()))
        .fold(0.0, f64::max)
}

/// Bound on `|dot_f32(a, b) - a·b|` for `‖a‖·‖b‖ <= norms`.
///
/// Each lane sums at most `dim / LANES` rounded products and the lanes and
/// tail add at most `dim` more roundings, so `dim + LANES + 1` unit
/// roundings (2^-24 each) cover every term; `f32::EPSILON` is 2^-23, which
/// doubles that. A small absolute term absorbs the `f64` scan's own error.
fn fast_dot_error_bound(dim: usize, norms: f64) -> f64 {
    (dim + LANES + 1) as f64 * f64::from(f32::EPSILON) * norms * 1.01 + 1e-12
}

/// Dot product with `LANES` independent f32 accumulators.
fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut sum: f32 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        sum += x * y;
    }
    sum
}

/// Dot product with `LANES` independent f64 accumulators.
fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += f64::from(x[l]) * f64::from(y[l]);
        }
    }
    let mut sum: f64 = acc.iter().sum();
    for (x, y) in ra.iter().zip(rb) {
        sum += f64::from(*x) * f64::from(*y);
    }
    sum
}
