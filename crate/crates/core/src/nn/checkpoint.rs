//! Checkpoint file format: magic "PGCK", version u16 LE, tensor count u32 LE,
//! then per tensor: rank u8, dims u32 LE each, raw little-endian f32 data.
//! Round trips are bit-exact for every parameter and moving statistic.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::model::Model;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"PGCK";
const VERSION: u16 = 1;

pub fn save(model: &Model, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let tensors = model.param_tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        w.write_all(&[t.rank() as u8])?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Load parameters into an already-built model of the expected architecture.
/// Any shape disagreement is an error; nothing is partially applied.
pub fn load_into(model: &mut Model, path: &Path) -> Result<()> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| corrupt(path, "truncated header"))?;
    if &magic != MAGIC {
        return Err(corrupt(path, "bad magic"));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf)
        .map_err(|_| corrupt(path, "truncated header"))?;
    let version = u16::from_le_bytes(u16buf);
    if version != VERSION {
        return Err(corrupt(path, format!("unsupported version {version}")));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)
        .map_err(|_| corrupt(path, "truncated header"))?;
    let count = u32::from_le_bytes(u32buf) as usize;

    let expected: Vec<Vec<usize>> = model
        .param_tensors()
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    if count != expected.len() {
        return Err(corrupt(
            path,
            format!("{count} tensors, architecture expects {}", expected.len()),
        ));
    }
    let mut loaded = Vec::with_capacity(count);
    for shape in &expected {
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)
            .map_err(|_| corrupt(path, "truncated tensor header"))?;
        if rank[0] as usize != shape.len() {
            return Err(corrupt(path, "rank disagrees with architecture"));
        }
        let mut dims = Vec::with_capacity(shape.len());
        for _ in 0..shape.len() {
            r.read_exact(&mut u32buf)
                .map_err(|_| corrupt(path, "truncated tensor header"))?;
            dims.push(u32::from_le_bytes(u32buf) as usize);
        }
        if &dims != shape {
            return Err(corrupt(
                path,
                format!("tensor shape {dims:?} disagrees with architecture {shape:?}"),
            ));
        }
        let n: usize = dims.iter().product();
        let mut data = vec![0.0f32; n];
        for v in &mut data {
            r.read_exact(&mut u32buf)
                .map_err(|_| corrupt(path, "truncated tensor data"))?;
            *v = f32::from_le_bytes(u32buf);
        }
        loaded.push(Tensor::from_vec(&dims, data)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(corrupt(path, "trailing bytes"));
    }
    for (slot, t) in model.param_tensors_mut().into_iter().zip(loaded) {
        *slot = t;
    }
    Ok(())
}
