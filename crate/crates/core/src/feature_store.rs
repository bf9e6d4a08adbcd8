//! ALNF: per-sentence, per-layer pooled encoder features.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "ALNF" | version u32 | n_sentences u64 | n_layers u32 | dim u32 | tag_len u8 | tag bytes
//! per sentence: sentence_id u64 | token_count u32 | n_layers * dim f32, row-major
//! ```
//!
//! Each stored row is the sum over a sentence's token vectors at one encoder
//! layer. Layer weights in the model are per-layer scalars, so summing tokens
//! before weighting loses nothing.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ALNF";
pub const VERSION: u32 = 1;

const FIXED_HEADER: usize = 4 + 4 + 8 + 4 + 4 + 1;

/// Pooled features of one sentence: `n_layers` rows of `dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceFeatures {
    pub sentence_id: u64,
    /// Diagnostic only; the token axis is already summed away.
    pub token_count: u32,
    pub layers: Array2<f32>,
}

/// One language corpus of pooled features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub language: String,
    pub n_layers: usize,
    pub dim: usize,
    pub sentences: Vec<SentenceFeatures>,
}

impl FeatureSet {
    pub fn new(
        language: impl Into<String>,
        n_layers: usize,
        dim: usize,
        sentences: Vec<SentenceFeatures>,
    ) -> Result<Self> {
        let fs = FeatureSet {
            language: language.into(),
            n_layers,
            dim,
            sentences,
        };
        fs.validate()?;
        Ok(fs)
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.sentences.iter().map(|s| s.sentence_id).collect()
    }

    /// Checks shape agreement, id uniqueness and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.language.len() > u8::MAX as usize {
            return Err(Error::invariant(format!(
                "language tag is {} bytes, at most 255 allowed",
                self.language.len()
            )));
        }
        if self.n_layers == 0 || self.dim == 0 {
            return Err(Error::invariant("n_layers and dim must be positive"));
        }
        let mut seen = HashSet::with_capacity(self.sentences.len());
        for s in &self.sentences {
            if s.layers.dim() != (self.n_layers, self.dim) {
                return Err(Error::invariant(format!(
                    "sentence {} has shape {:?}, set declares ({}, {})",
                    s.sentence_id,
                    s.layers.dim(),
                    self.n_layers,
                    self.dim
                )));
            }
            if !seen.insert(s.sentence_id) {
                return Err(Error::invariant(format!(
                    "duplicate sentence_id {}",
                    s.sentence_id
                )));
            }
            if s.layers.iter().any(|v| !v.is_finite()) {
                return Err(Error::invariant(format!(
                    "sentence {} holds a non-finite value",
                    s.sentence_id
                )));
            }
        }
        Ok(())
    }

    /// Size in bytes of the ALNF encoding of this set.
    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER
            + self.language.len()
            + self.sentences.len() * (8 + 4 + self.n_layers * self.dim * 4)
    }

    /// Keeps the listed layers, in the listed order. Repeated indices
    /// duplicate rows.
    pub fn select_layers(&self, layer_indices: &[usize]) -> Result<FeatureSet> {
        if layer_indices.is_empty() {
            return Err(Error::invariant("layer selection must not be empty"));
        }
        if let Some(&bad) = layer_indices.iter().find(|&&i| i >= self.n_layers) {
            return Err(Error::LayerOutOfRange {
                index: bad,
                len: self.n_layers,
            });
        }
        let sentences = self
            .sentences
            .iter()
            .map(|s| SentenceFeatures {
                sentence_id: s.sentence_id,
                token_count: s.token_count,
                layers: s.layers.select(Axis(0), layer_indices),
            })
            .collect();
        Ok(FeatureSet {
            language: self.language.clone(),
            n_layers: layer_indices.len(),
            dim: self.dim,
            sentences,
        })
    }

    /// Collapses the layer axis to its arithmetic mean.
    pub fn average_layers(&self) -> FeatureSet {
        let l = self.n_layers as f64;
        let sentences = self
            .sentences
            .iter()
            .map(|s| {
                let mut acc = vec![0f64; self.dim];
                for row in s.layers.rows() {
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a += v as f64;
                    }
                }
                let mean = Array2::from_shape_fn((1, self.dim), |(_, j)| (acc[j] / l) as f32);
                SentenceFeatures {
                    sentence_id: s.sentence_id,
                    token_count: s.token_count,
                    layers: mean,
                }
            })
            .collect();
        FeatureSet {
            language: self.language.clone(),
            n_layers: 1,
            dim: self.dim,
            sentences,
        }
    }

    /// Subset by position, preserving order.
    pub fn subset(&self, positions: &[usize]) -> FeatureSet {
        FeatureSet {
            language: self.language.clone(),
            n_layers: self.n_layers,
            dim: self.dim,
            sentences: positions
                .iter()
                .map(|&i| self.sentences[i].clone())
                .collect(),
        }
    }

    /// Splits at `at`: the first `at` sentences and the rest.
    pub fn split_at(&self, at: usize) -> (FeatureSet, FeatureSet) {
        let at = at.min(self.len());
        let head = (0..at).collect::<Vec<_>>();
        let tail = (at..self.len()).collect::<Vec<_>>();
        (self.subset(&head), self.subset(&tail))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.sentences.len() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.n_layers as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.push(self.language.len() as u8);
        buf.extend_from_slice(self.language.as_bytes());
        for s in &self.sentences {
            buf.extend_from_slice(&s.sentence_id.to_le_bytes());
            buf.extend_from_slice(&s.token_count.to_le_bytes());
            for v in s.layers.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        debug_assert_eq!(buf.len(), self.encoded_len());
        Ok(buf)
    }

    pub fn decode(bytes: &[u8]) -> Result<FeatureSet> {
        let mut r = ByteReader::new(bytes);
        let magic = r.array::<4>()?;
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: magic,
            });
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Version {
                expected: VERSION,
                found: version,
            });
        }
        let n = r.u64()? as usize;
        let n_layers = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let tag_len = r.u8()? as usize;
        let tag = std::str::from_utf8(r.take(tag_len)?)
            .map_err(|e| Error::invariant(format!("language tag is not UTF-8: {e}")))?
            .to_owned();

        let per_sentence = 8 + 4 + n_layers * dim * 4;
        let expected = FIXED_HEADER + tag_len + n.saturating_mul(per_sentence);
        if bytes.len() > expected {
            return Err(Error::LengthMismatch {
                expected,
                actual: bytes.len(),
            });
        }

        let mut sentences = Vec::with_capacity(n.min(bytes.len() / per_sentence.max(1)));
        for _ in 0..n {
            let sentence_id = r.u64()?;
            let token_count = r.u32()?;
            let raw = r.take(n_layers * dim * 4)?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let layers =
                Array2::from_shape_vec((n_layers, dim), values).expect("chunk count matches shape");
            sentences.push(SentenceFeatures {
                sentence_id,
                token_count,
                layers,
            });
        }
        FeatureSet::new(tag, n_layers, dim, sentences)
    }
}

/// Writes `fs` to `path` as ALNF v1. The set is validated before any byte is
/// written.
pub fn write_features(path: impl AsRef<Path>, fs: &FeatureSet) -> Result<()> {
    let path = path.as_ref();
    let bytes = fs.encode()?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureSet::decode(&bytes)
}

/// Little-endian cursor over a byte slice; every short read is a
/// [`Error::Truncated`].
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available: self.remaining(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}
