//! Binary model file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      b"FSTA"
//! version    u16
//! arch       u8            0 = fista, 1 = mlp
//! t          u32
//! fista:     embed u32, gru_hidden u32, attn_dim u32, film_hidden u32,
//!            ablation u8, n_head u32, head widths u32 × n_head
//! mlp:       n_hidden u32, hidden widths u32 × n_hidden
//! normalizer f64 × 42      frame mean/std (14 each), target mean/std,
//!                          label mean/std (7 each)
//! n_params   u64
//! params     f64 × n_params   in layout group order
//! crc32      u32           over every preceding byte
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{Ablation, FistaConfig, FistaError, MlpConfig, Model, ModelConfig, Normalizer};

pub const MAGIC: &[u8; 4] = b"FSTA";
pub const FORMAT_VERSION: u16 = 1;

/// Widths above this are rejected as corrupt rather than allocated.
const MAX_WIDTH: u32 = 1 << 16;

fn encode(model: &Model) -> Vec<u8> {
    let mut b = Vec::with_capacity(64 + 8 * model.params.len());
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let u32le = |b: &mut Vec<u8>, v: usize| b.extend_from_slice(&(v as u32).to_le_bytes());
    match model.config() {
        ModelConfig::Fista(c) => {
            b.push(0);
            u32le(&mut b, c.t);
            for w in [c.embed, c.gru_hidden, c.attn_dim, c.film_hidden] {
                u32le(&mut b, w);
            }
            b.push(c.ablate.code());
            u32le(&mut b, c.head_hidden.len());
            for &w in &c.head_hidden {
                u32le(&mut b, w);
            }
        }
        ModelConfig::Mlp(c) => {
            b.push(1);
            u32le(&mut b, c.t);
            u32le(&mut b, c.hidden.len());
            for &w in &c.hidden {
                u32le(&mut b, w);
            }
        }
    }
    for v in model.normalizer.to_vec() {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for v in &model.params {
        b.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&b);
    b.extend_from_slice(&crc.to_le_bytes());
    b
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FistaError> {
        if self.buf.len() - self.pos < n {
            return Err(FistaError::Format("unexpected end of file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FistaError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, FistaError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn width(&mut self) -> Result<usize, FistaError> {
        let v = self.u32()?;
        if v > MAX_WIDTH {
            return Err(FistaError::Format(format!("implausible width {v}")));
        }
        Ok(v as usize)
    }

    fn widths(&mut self) -> Result<Vec<usize>, FistaError> {
        let n = self.width()?;
        (0..n).map(|_| self.width()).collect()
    }

    fn f64(&mut self) -> Result<f64, FistaError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode(buf: &[u8]) -> Result<Model, FistaError> {
    if buf.len() < 6 {
        return Err(FistaError::Format("file too short".into()));
    }
    if &buf[..4] != MAGIC {
        return Err(FistaError::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != FORMAT_VERSION {
        return Err(FistaError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if buf.len() < 10 {
        return Err(FistaError::Format("file too short".into()));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(FistaError::Format("checksum mismatch".into()));
    }

    let mut c = Cursor { buf: body, pos: 6 };
    let config = match c.u8()? {
        0 => {
            let t = c.width()?;
            let embed = c.width()?;
            let gru_hidden = c.width()?;
            let attn_dim = c.width()?;
            let film_hidden = c.width()?;
            let code = c.u8()?;
            let ablate = Ablation::from_code(code)
                .ok_or_else(|| FistaError::Format(format!("unknown ablation code {code}")))?;
            let head_hidden = c.widths()?;
            ModelConfig::Fista(FistaConfig {
                t,
                embed,
                gru_hidden,
                attn_dim,
                film_hidden,
                head_hidden,
                ablate,
            })
        }
        1 => {
            let t = c.width()?;
            let hidden = c.widths()?;
            ModelConfig::Mlp(MlpConfig { t, hidden })
        }
        a => return Err(FistaError::Format(format!("unknown architecture code {a}"))),
    };
    config
        .validate()
        .map_err(|e| FistaError::Format(e.to_string()))?;

    let norm: Vec<f64> = (0..Normalizer::LEN).map(|_| c.f64()).collect::<Result<_, _>>()?;
    let mut model = Model::zeros(config)?;
    model.normalizer = Normalizer::from_slice(&norm);

    let n = u64::from_le_bytes(c.take(8)?.try_into().unwrap());
    if n != model.params.len() as u64 {
        return Err(FistaError::Format(format!(
            "parameter count {n} does not match the configuration ({})",
            model.params.len()
        )));
    }
    for p in model.params.iter_mut() {
        *p = c.f64()?;
    }
    if c.pos != body.len() {
        return Err(FistaError::Format("trailing bytes".into()));
    }
    Ok(model)
}

pub fn write_model(mut w: impl Write, model: &Model) -> Result<(), FistaError> {
    w.write_all(&encode(model))?;
    Ok(())
}

pub fn read_model(mut r: impl Read) -> Result<Model, FistaError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn save_model(path: impl AsRef<Path>, model: &Model) -> Result<(), FistaError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, FistaError> {
    read_model(File::open(path)?)
}
