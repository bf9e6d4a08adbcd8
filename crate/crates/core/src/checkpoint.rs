//! Binary checkpoints: model parameters plus, optionally, the full training
//! state (step, optimizer moments, RNG position, sampler cursors).
//!
//! Layout, little-endian:
//! `"ALNM"`, `u32` version, `u8` flags, `u32` layers, `u32` d_in, `u32` d_out,
//! `u32` critic width (0 without a critic), `f64` leaky slope, then every
//! tensor as raw `f64` in declaration order, then the optional state block.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::feature_store::ByteReader;
use crate::model::{AblationFlags, AlignmentModel, CycleMaps, Discriminator, ExtractionModule};
use crate::optim::AdamState;
use crate::trainer::{EpochSampler, TrainingState};

pub const MAGIC: [u8; 4] = *b"ALNM";
pub const VERSION: u32 = 1;

const FLAG_LAYER_COMBINATION: u8 = 1;
const FLAG_LINEAR_MAP: u8 = 1 << 1;
const FLAG_CYCLE: u8 = 1 << 2;
const FLAG_DISC: u8 = 1 << 3;
const FLAG_STATE: u8 = 1 << 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: AlignmentModel,
    pub state: Option<TrainingState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) -> Result<()> {
        let v =
            u32::try_from(v).map_err(|_| Error::invariant(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn read_f64s(r: &mut ByteReader<'_>, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| r.f64()).collect()
}

fn read_matrix(r: &mut ByteReader<'_>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let v = read_f64s(r, rows * cols)?;
    Ok(Array2::from_shape_vec((rows, cols), v).expect("length checked"))
}

fn read_vector(r: &mut ByteReader<'_>, n: usize) -> Result<Array1<f64>> {
    Ok(Array1::from(read_f64s(r, n)?))
}

fn encode_adam(w: &mut Writer, a: &AdamState) -> Result<()> {
    w.u64(a.t);
    w.u32(a.m.len())?;
    for (name, m) in &a.m {
        let v = a.v.get(name).ok_or_else(|| {
            Error::invariant(format!("adam state for {name} lacks a second moment"))
        })?;
        if v.len() != m.len() {
            return Err(Error::LengthMismatch {
                expected: m.len(),
                actual: v.len(),
            });
        }
        let bytes = name.as_bytes();
        w.0.push(
            u8::try_from(bytes.len()).map_err(|_| Error::invariant("parameter name too long"))?,
        );
        w.0.extend_from_slice(bytes);
        w.u32(m.len())?;
        w.f64s(m);
        w.f64s(v);
    }
    if a.v.len() != a.m.len() {
        return Err(Error::invariant("adam moments name different parameters"));
    }
    Ok(())
}

fn decode_adam(r: &mut ByteReader<'_>) -> Result<AdamState> {
    let mut a = AdamState::new();
    a.t = r.u64()?;
    let count = r.u32()?;
    for _ in 0..count {
        let len = r.u8()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::invariant("parameter name is not utf-8"))?
            .to_owned();
        let n = r.u32()? as usize;
        let m = read_f64s(r, n)?;
        let v = read_f64s(r, n)?;
        a.m.insert(name.clone(), m);
        a.v.insert(name, v);
    }
    Ok(a)
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let m = &self.model;
        let (l, d_in, d_out) = (m.n_layers(), m.d_in(), m.d_out());
        let mut flags = 0u8;
        if m.flags.use_layer_combination {
            flags |= FLAG_LAYER_COMBINATION;
        }
        if m.flags.use_linear_map {
            flags |= FLAG_LINEAR_MAP;
        }
        if m.cycle.is_some() {
            flags |= FLAG_CYCLE;
        }
        if m.disc.is_some() {
            flags |= FLAG_DISC;
        }
        if self.state.is_some() {
            flags |= FLAG_STATE;
        }
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&MAGIC);
        w.0.extend_from_slice(&VERSION.to_le_bytes());
        w.0.push(flags);
        w.u32(l)?;
        w.u32(d_in)?;
        w.u32(d_out)?;
        w.u32(m.disc.as_ref().map_or(0, Discriminator::hidden))?;
        w.f64s([&m.disc.as_ref().map_or(0.0, |d| d.leaky_slope)]);

        let ex = &m.extraction;
        w.f64s(&ex.layer_logits);
        w.f64s(&ex.map);
        w.f64s(&ex.bias);
        if let Some(c) = &m.cycle {
            w.f64s(&c.forward);
            w.f64s(&c.backward);
        }
        if let Some(d) = &m.disc {
            w.f64s(&d.w1);
            w.f64s(&d.b1);
            w.f64s(&d.w2);
            w.f64s([&d.b2]);
        }

        if let Some(s) = &self.state {
            w.u64(s.step);
            encode_adam(&mut w, &s.encoder_adam)?;
            encode_adam(&mut w, &s.disc_adam)?;
            w.0.extend_from_slice(&s.rng.get_seed());
            w.u64(s.rng.get_stream());
            w.0.extend_from_slice(&s.rng.get_word_pos().to_le_bytes());
            w.u32(s.samplers.len())?;
            for sm in &s.samplers {
                w.u32(sm.batch)?;
                w.u32(sm.cursor)?;
                w.u32(sm.order.len())?;
                for &i in &sm.order {
                    w.u32(i)?;
                }
            }
        }
        Ok(w.0)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
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
        let flags = r.u8()?;
        if flags & !(FLAG_LAYER_COMBINATION | FLAG_LINEAR_MAP | FLAG_CYCLE | FLAG_DISC | FLAG_STATE)
            != 0
        {
            return Err(Error::invariant(format!(
                "unknown checkpoint flags {flags:#04x}"
            )));
        }
        let l = r.u32()? as usize;
        let d_in = r.u32()? as usize;
        let d_out = r.u32()? as usize;
        let h = r.u32()? as usize;
        let slope = r.f64()?;
        if l == 0 || d_in == 0 || d_out == 0 {
            return Err(Error::invariant("checkpoint dimensions must be positive"));
        }
        if (flags & FLAG_DISC != 0) != (h > 0) {
            return Err(Error::invariant(
                "critic width disagrees with the critic flag",
            ));
        }

        let extraction = ExtractionModule {
            layer_logits: read_vector(&mut r, l)?,
            map: read_matrix(&mut r, d_out, d_in)?,
            bias: read_vector(&mut r, d_out)?,
        };
        let cycle = if flags & FLAG_CYCLE != 0 {
            Some(CycleMaps {
                forward: read_matrix(&mut r, d_out, d_out)?,
                backward: read_matrix(&mut r, d_out, d_out)?,
            })
        } else {
            None
        };
        let disc = if flags & FLAG_DISC != 0 {
            Some(Discriminator {
                w1: read_matrix(&mut r, h, d_out)?,
                b1: read_vector(&mut r, h)?,
                w2: read_vector(&mut r, h)?,
                b2: r.f64()?,
                leaky_slope: slope,
            })
        } else {
            None
        };
        let model = AlignmentModel {
            extraction,
            cycle,
            disc,
            flags: AblationFlags {
                use_layer_combination: flags & FLAG_LAYER_COMBINATION != 0,
                use_linear_map: flags & FLAG_LINEAR_MAP != 0,
            },
        };

        let state = if flags & FLAG_STATE != 0 {
            let step = r.u64()?;
            let encoder_adam = decode_adam(&mut r)?;
            let disc_adam = decode_adam(&mut r)?;
            let mut rng = ChaCha8Rng::from_seed(r.array::<32>()?);
            rng.set_stream(r.u64()?);
            rng.set_word_pos(r.u128()?);
            let count = r.u32()?;
            let mut samplers = Vec::new();
            for _ in 0..count {
                let batch = r.u32()? as usize;
                let cursor = r.u32()? as usize;
                let n = r.u32()? as usize;
                let order = (0..n)
                    .map(|_| r.u32().map(|i| i as usize))
                    .collect::<Result<Vec<_>>>()?;
                let mut sorted = order.clone();
                sorted.sort_unstable();
                if sorted.iter().enumerate().any(|(i, &v)| i != v)
                    || batch == 0
                    || batch > n
                    || cursor > n
                {
                    return Err(Error::invariant("corrupt sampler state"));
                }
                samplers.push(EpochSampler {
                    batch,
                    order,
                    cursor,
                });
            }
            Some(TrainingState {
                step,
                encoder_adam,
                disc_adam,
                rng,
                samplers,
            })
        } else {
            None
        };
        if r.remaining() != 0 {
            return Err(Error::invariant(format!(
                "{} trailing bytes after offset {}",
                r.remaining(),
                r.position()
            )));
        }
        if !model.all_finite() {
            return Err(Error::invariant("checkpoint holds non-finite parameters"));
        }
        Ok(Checkpoint { model, state })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.encode()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}

/// Model-only convenience wrappers.
pub fn save_model(path: impl AsRef<Path>, model: &AlignmentModel) -> Result<()> {
    save_checkpoint(
        path,
        &Checkpoint {
            model: model.clone(),
            state: None,
        },
    )
}

pub fn load_model(path: impl AsRef<Path>) -> Result<AlignmentModel> {
    Ok(load_checkpoint(path)?.model)
}
