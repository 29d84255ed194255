//! Binary checkpoints: `MCKP`, version, dtype, model dims (JSON), every
//! parameter block with name and shape, then optional Adam state.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Adam, ModelDims, PinnModel};
use crate::error::{Error, Result};
use crate::nn::Real;

const MAGIC: &[u8; 4] = b"MCKP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: PinnModel<T>,
    pub optimizer: Option<Adam<T>>,
}

fn put_values<T: Real>(out: &mut Vec<u8>, v: &[T]) {
    out.reserve(v.len() * T::BYTES);
    for &x in v {
        x.write_le(out);
    }
}

pub fn save_checkpoint<T: Real>(
    path: &Path,
    model: &PinnModel<T>,
    optimizer: Option<&Adam<T>>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut head = Vec::new();
    head.extend_from_slice(MAGIC);
    head.extend_from_slice(&VERSION.to_le_bytes());
    head.push(T::DTYPE);
    let dims = serde_json::to_vec(model.dims())?;
    head.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    head.extend_from_slice(&dims);
    let params = model.params();
    head.extend_from_slice(&(params.len() as u32).to_le_bytes());
    w.write_all(&head)?;
    for p in &params {
        let mut buf = Vec::new();
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.extend_from_slice(&(p.rows as u64).to_le_bytes());
        buf.extend_from_slice(&(p.cols as u64).to_le_bytes());
        put_values(&mut buf, &p.value);
        w.write_all(&buf)?;
    }
    match optimizer {
        None => w.write_all(&[0])?,
        Some(a) => {
            w.write_all(&[1])?;
            w.write_all(&a.t.to_le_bytes())?;
            for (m, v) in a.m.iter().zip(&a.v) {
                let mut buf = Vec::new();
                put_values(&mut buf, m);
                put_values(&mut buf, v);
                w.write_all(&buf)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    r: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        self.r.read_exact(&mut b)?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn values<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let b = self.bytes(n * T::BYTES)?;
        Ok(b.chunks_exact(T::BYTES).map(T::read_le).collect())
    }
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let mut r = Reader {
        r: BufReader::new(File::open(path)?),
    };
    if r.bytes(4)? != MAGIC {
        return Err(Error::Format("missing MCKP magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let dtype = r.bytes(1)?[0];
    if dtype != T::DTYPE {
        return Err(Error::Format(format!(
            "checkpoint dtype {dtype} does not match requested {}",
            T::DTYPE
        )));
    }
    let n = r.u32()? as usize;
    let dims: ModelDims = serde_json::from_slice(&r.bytes(n)?)?;
    let mut model = PinnModel::<T>::new(dims, 0)?;
    let blocks = r.u32()? as usize;
    let mut params = model.params_mut();
    if blocks != params.len() {
        return Err(Error::Format(format!(
            "checkpoint has {blocks} blocks, model has {}",
            params.len()
        )));
    }
    for p in params.iter_mut() {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(len)?).map_err(|e| Error::Format(e.to_string()))?;
        let (rows, cols) = (r.u64()? as usize, r.u64()? as usize);
        if name != p.name || rows != p.rows || cols != p.cols {
            return Err(Error::Format(format!(
                "block {name} {rows}x{cols} does not match {} {}x{}",
                p.name, p.rows, p.cols
            )));
        }
        p.value = r.values(rows * cols)?;
    }
    let optimizer = match r.bytes(1)?[0] {
        0 => None,
        1 => {
            let t = r.u64()?;
            let (mut m, mut v) = (Vec::new(), Vec::new());
            for p in &params {
                m.push(r.values(p.len())?);
                v.push(r.values(p.len())?);
            }
            Some(Adam { m, v, t })
        }
        x => return Err(Error::Format(format!("bad optimizer flag {x}"))),
    };
    drop(params);
    Ok(Checkpoint { model, optimizer })
}
