use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, PosTag};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Produces one fixed-size vector per event; pairs are combined by
/// [`pair_representation`].
pub trait PairEncoder {
    fn event_dim(&self) -> usize;

    /// `num_events x event_dim` matrix, rows in document event order.
    fn encode_events(&self, doc: &Document) -> Result<Array2<f64>>;

    fn pair_dim(&self) -> usize {
        4 * self.event_dim()
    }
}

/// `[a, b, a * b, a - b]`.
pub fn pair_representation<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> Array1<T> {
    let prod = &a * &b;
    let diff = &a - &b;
    concatenate(Axis(0), &[a, b, prod.view(), diff.view()]).expect("equal-length event vectors")
}

/// Signed feature hashing of the trigger and a token window around it,
/// followed by a one-hot of the trigger's part of speech.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltinEncoder {
    pub hash_dim: usize,
    /// Tokens on each side of the trigger, within its sentence.
    pub window: usize,
    pub seed: u64,
}

impl Default for BuiltinEncoder {
    fn default() -> Self {
        Self {
            hash_dim: 256,
            window: 3,
            seed: 0,
        }
    }
}

impl BuiltinEncoder {
    fn hash(&self, prefix: &[u8], token: &str) -> u64 {
        // FNV-1a over seed, prefix and lowercased token.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(&self.seed.to_le_bytes());
        feed(prefix);
        feed(token.to_lowercase().as_bytes());
        h
    }

    fn add(&self, v: &mut [f64], prefix: &[u8], token: &str, weight: f64) {
        let h = self.hash(prefix, token);
        let slot = (h % self.hash_dim as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        v[slot] += sign * weight;
    }
}

impl PairEncoder for BuiltinEncoder {
    fn event_dim(&self) -> usize {
        self.hash_dim + PosTag::COUNT
    }

    fn encode_events(&self, doc: &Document) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((doc.num_events(), self.event_dim()));
        for (i, e) in doc.events.iter().enumerate() {
            let tokens = &doc.sentences[e.sentence].tokens;
            let mut hashed = vec![0.0; self.hash_dim];
            for t in &tokens[e.span.0..=e.span.1] {
                self.add(&mut hashed, b"T:", &t.surface, 1.0);
            }
            let lo = e.span.0.saturating_sub(self.window);
            let hi = (e.span.1 + self.window).min(tokens.len() - 1);
            for (k, t) in tokens.iter().enumerate().take(hi + 1).skip(lo) {
                if k < e.span.0 || k > e.span.1 {
                    self.add(&mut hashed, b"C:", &t.surface, 0.5);
                }
            }
            let norm = hashed.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut row = out.row_mut(i);
            for (k, v) in hashed.into_iter().enumerate() {
                row[k] = if norm > 0.0 { v / norm } else { 0.0 };
            }
            row[self.hash_dim + tokens[e.span.0].pos.index()] = 1.0;
        }
        Ok(out)
    }
}

const MAGIC: &[u8; 4] = b"SEMB";
const VERSION: u32 = 1;

/// Per-event vectors keyed by `(document id, event id)`.
///
/// Binary layout, all integers little-endian:
///
/// ```text
/// magic  "SEMB"
/// u32    format version (1)
/// u32    dimension
/// u32    count
/// count x { u32 id_len, id_len bytes UTF-8 document id, u32 event id, u64 row }
/// count x dimension f32 payload, row-major
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub keys: Vec<(String, u32)>,
    /// `keys.len() x dim`, row `r` belongs to the key whose row field is `r`.
    pub rows: Vec<Vec<f32>>,
}

fn fill(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::EmbeddingFormat("truncated file".into()),
        _ => Error::Io(e),
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    fill(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_embedding_file(mut r: impl Read) -> Result<EmbeddingFile> {
    let bad = |m: &str| Error::EmbeddingFormat(m.to_string());
    let mut magic = [0u8; 4];
    fill(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::EmbeddingFormat(format!("unsupported version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    let count = read_u32(&mut r)? as usize;
    let mut index = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut id = vec![0u8; len];
        fill(&mut r, &mut id)?;
        let id = String::from_utf8(id).map_err(|_| bad("document id is not UTF-8"))?;
        let event = read_u32(&mut r)?;
        let mut row = [0u8; 8];
        fill(&mut r, &mut row)?;
        index.push(((id, event), u64::from_le_bytes(row) as usize));
    }
    let mut payload = vec![0u8; count * dim * 4];
    fill(&mut r, &mut payload)?;
    let mut trailing = Vec::new();
    r.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(bad("trailing bytes after payload"));
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let mut keys = vec![(String::new(), 0); count];
    let mut filled = vec![false; count];
    let mut seen = std::collections::HashSet::new();
    for (key, row) in index {
        if row >= count || filled[row] {
            return Err(Error::EmbeddingFormat(format!("invalid or repeated row {row}")));
        }
        if !seen.insert(key.clone()) {
            return Err(Error::EmbeddingFormat(format!("duplicate key {key:?}")));
        }
        filled[row] = true;
        keys[row] = key;
    }
    let rows = (0..count).map(|r| floats[r * dim..(r + 1) * dim].to_vec()).collect();
    Ok(EmbeddingFile { dim, keys, rows })
}

pub fn write_embedding_file(file: &EmbeddingFile, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(file.dim as u32).to_le_bytes())?;
    w.write_all(&(file.keys.len() as u32).to_le_bytes())?;
    for (row, (doc, event)) in file.keys.iter().enumerate() {
        w.write_all(&(doc.len() as u32).to_le_bytes())?;
        w.write_all(doc.as_bytes())?;
        w.write_all(&event.to_le_bytes())?;
        w.write_all(&(row as u64).to_le_bytes())?;
    }
    for r in &file.rows {
        if r.len() != file.dim {
            return Err(Error::Dimension {
                expected: file.dim,
                got: r.len(),
            });
        }
        for v in r {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Event vectors produced outside this crate.
#[derive(Debug, Clone)]
pub struct ExternalEncoder {
    dim: usize,
    vectors: HashMap<(String, u32), Vec<f32>>,
}

impl ExternalEncoder {
    pub fn new(file: EmbeddingFile) -> Self {
        let vectors = file.keys.into_iter().zip(file.rows).collect();
        Self { dim: file.dim, vectors }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(Self::new(read_embedding_file(std::io::BufReader::new(f))?))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Fails on the first corpus event without a vector.
    pub fn check_coverage(&self, corpus: &Corpus) -> Result<()> {
        for d in &corpus.documents {
            self.encode_events(d)?;
        }
        Ok(())
    }
}

impl PairEncoder for ExternalEncoder {
    fn event_dim(&self) -> usize {
        self.dim
    }

    fn encode_events(&self, doc: &Document) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((doc.num_events(), self.dim));
        for (i, e) in doc.events.iter().enumerate() {
            let v = self
                .vectors
                .get(&(doc.id.clone(), e.id))
                .ok_or_else(|| Error::MissingEmbedding {
                    doc: doc.id.clone(),
                    event: e.id,
                })?;
            for (k, &x) in v.iter().enumerate() {
                out[[i, k]] = x as f64;
            }
        }
        Ok(out)
    }
}

/// Either encoder, selected at run time.
#[derive(Debug, Clone)]
pub enum Encoder {
    Builtin(BuiltinEncoder),
    External(ExternalEncoder),
}

impl PairEncoder for Encoder {
    fn event_dim(&self) -> usize {
        match self {
            Encoder::Builtin(e) => e.event_dim(),
            Encoder::External(e) => e.event_dim(),
        }
    }

    fn encode_events(&self, doc: &Document) -> Result<Array2<f64>> {
        match self {
            Encoder::Builtin(e) => e.encode_events(doc),
            Encoder::External(e) => e.encode_events(doc),
        }
    }
}
