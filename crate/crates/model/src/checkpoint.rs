//! Binary checkpoint: magic, version, config, training position, named
//! little-endian f32 tensors and a SHA-256 trailer over everything before it.

use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::params::Layout;
use crate::train::{AdamState, BatchCursor, TrainConfig, Trainer};
use crate::transformer::Model;
use crate::{ModelConfig, ModelError};

pub const MAGIC: &[u8; 8] = b"TRAJGPT1";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub adam: AdamState<f32>,
    pub cursor: BatchCursor,
    pub rng: RngState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<f32>,
    pub training: Option<TrainingState>,
}

impl Checkpoint {
    pub fn from_model(model: &Model<f32>) -> Self {
        Self { config: model.config.clone(), params: model.params.clone(), training: None }
    }

    pub fn from_trainer(t: &Trainer<f32>) -> Self {
        Self {
            config: t.model.config.clone(),
            params: t.model.params.clone(),
            training: Some(TrainingState { adam: t.adam.clone(), cursor: t.cursor, rng: RngState::capture(&t.dropout_rng) }),
        }
    }

    pub fn model(&self) -> Result<Model<f32>, ModelError> {
        Model::from_params(self.config.clone(), self.params.clone())
    }

    /// Resumes training; without saved state the optimizer starts fresh.
    pub fn trainer(&self, config: TrainConfig) -> Result<Trainer<f32>, ModelError> {
        let model = self.model()?;
        match &self.training {
            Some(s) => Trainer::resume(model, config, s.adam.clone(), s.cursor, s.rng.restore()),
            None => Trainer::new(model, config),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        let c = &self.config;
        for v in [c.n_layers, c.n_heads, c.d_model, c.d_ff, c.context_length, c.vocab_size] {
            put_u32(&mut out, v as u32);
        }
        out.extend_from_slice(&c.dropout.to_le_bytes());
        out.extend_from_slice(&c.seed.to_le_bytes());
        match &self.training {
            None => out.push(0),
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&s.adam.step.to_le_bytes());
                for v in [s.cursor.seed, s.cursor.epoch, s.cursor.offset] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.extend_from_slice(&s.rng.seed);
                out.extend_from_slice(&s.rng.stream.to_le_bytes());
                out.extend_from_slice(&s.rng.word_pos.to_le_bytes());
            }
        }
        let layout = Layout::new(c);
        let mut tensors: Vec<(String, &[usize], &[f32])> = Vec::new();
        for t in &layout.tensors {
            tensors.push((t.name.clone(), &t.shape, &self.params[t.range()]));
        }
        if let Some(s) = &self.training {
            for (prefix, buf) in [("adam.m.", &s.adam.m), ("adam.v.", &s.adam.v)] {
                for t in &layout.tensors {
                    tensors.push((format!("{prefix}{}", t.name), &t.shape, &buf[t.range()]));
                }
            }
        }
        put_u32(&mut out, tensors.len() as u32);
        for (name, shape, data) in tensors {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, shape.len() as u32);
            for &d in shape {
                put_u32(&mut out, d as u32);
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let fmt = |m: &str| ModelError::Format(m.to_string());
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(fmt("bad magic"));
        }
        let mut r = Reader { buf: bytes, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(ModelError::Version { found: version, expected: VERSION });
        }
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(fmt("truncated checkpoint"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(fmt("checksum mismatch"));
        }
        r.buf = body;
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let dropout = f64::from_le_bytes(r.array()?);
        let seed = u64::from_le_bytes(r.array()?);
        let config = ModelConfig {
            n_layers: dims[0],
            n_heads: dims[1],
            d_model: dims[2],
            d_ff: dims[3],
            context_length: dims[4],
            vocab_size: dims[5],
            dropout,
            seed,
        };
        config.validate()?;
        let training = match r.array::<1>()?[0] {
            0 => None,
            1 => {
                let step = u64::from_le_bytes(r.array()?);
                let cursor = BatchCursor {
                    seed: u64::from_le_bytes(r.array()?),
                    epoch: u64::from_le_bytes(r.array()?),
                    offset: u64::from_le_bytes(r.array()?),
                };
                let rng = RngState {
                    seed: r.array()?,
                    stream: u64::from_le_bytes(r.array()?),
                    word_pos: u128::from_le_bytes(r.array()?),
                };
                Some((step, cursor, rng))
            }
            _ => return Err(fmt("bad training flag")),
        };
        let layout = Layout::new(&config);
        let groups = if training.is_some() { 3 } else { 1 };
        let count = r.u32()? as usize;
        if count != layout.tensors.len() * groups {
            return Err(fmt("unexpected tensor count"));
        }
        let mut bufs = vec![vec![0f32; layout.total]; groups];
        for (g, buf) in bufs.iter_mut().enumerate() {
            let prefix = ["", "adam.m.", "adam.v."][g];
            for t in &layout.tensors {
                let name_len = r.u32()? as usize;
                let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| fmt("tensor name"))?;
                if name.strip_prefix(prefix) != Some(t.name.as_str()) {
                    return Err(ModelError::Format(format!("expected tensor {prefix}{}, found {name}", t.name)));
                }
                let rank = r.u32()? as usize;
                let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
                if shape != t.shape {
                    return Err(ModelError::Format(format!("shape mismatch for {name}")));
                }
                for v in &mut buf[t.range()] {
                    *v = f32::from_le_bytes(r.array()?);
                    if !v.is_finite() {
                        return Err(ModelError::Format(format!("non-finite value in {name}")));
                    }
                }
            }
        }
        if r.pos != body.len() {
            return Err(fmt("trailing bytes"));
        }
        let mut bufs = bufs.into_iter();
        let params = bufs.next().expect("parameter group");
        let training = training.map(|(step, cursor, rng)| TrainingState {
            adam: AdamState { m: bufs.next().expect("first moment"), v: bufs.next().expect("second moment"), step },
            cursor,
            rng,
        });
        Ok(Self { config, params, training })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| ModelError::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
}
