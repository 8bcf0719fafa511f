//! Binary checkpoint format.
//!
//! ```text
//! "HMCD1"  u32 version  u32 meta_len  meta (key=value lines, UTF-8)
//! then until EOF, per tensor:
//!   u32 name_len  name  u32 rank  rank x u64 dims  prod(dims) x f64
//! ```
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{NnError, ParamSet, Tensor};

pub const MAGIC: &[u8; 5] = b"HMCD1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Guards against absurd allocations when reading a corrupt file.
const MAX_ELEMENTS: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub tensors: ParamSet,
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> Result<(), NnError> {
    let mut meta = String::new();
    for (k, v) in &ckpt.metadata {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(bad(format!("metadata entry {k:?} cannot be stored")));
        }
        meta.push_str(&format!("{k}={v}\n"));
    }
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    for (name, t) in ckpt.tensors.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, NnError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads one name-length prefix, or `None` at a clean end of file.
fn read_entry_start<R: Read>(r: &mut R) -> Result<Option<u32>, NnError> {
    let mut b = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r.read(&mut b[got..])?;
        if n == 0 {
            return if got == 0 {
                Ok(None)
            } else {
                Err(bad("truncated tensor header"))
            };
        }
        got += n;
    }
    Ok(Some(u32::from_le_bytes(b)))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint, NnError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| bad("file too short for magic"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "format version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let meta = String::from_utf8(meta).map_err(|_| bad("metadata is not UTF-8"))?;
    let mut metadata = BTreeMap::new();
    for line in meta.lines() {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("metadata line {line:?}")))?;
        metadata.insert(k.to_string(), v.to_string());
    }

    let mut tensors = ParamSet::new();
    while let Some(name_len) = read_entry_start(&mut r)? {
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
        let rank = read_u32(&mut r)?;
        if rank == 0 || rank > 8 {
            return Err(bad(format!("tensor {name}: rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut n: u64 = 1;
        for _ in 0..rank {
            let d = read_u64(&mut r)?;
            n = n.saturating_mul(d);
            shape.push(d as usize);
        }
        if n == 0 || n > MAX_ELEMENTS {
            return Err(bad(format!("tensor {name}: shape {shape:?}")));
        }
        let mut data = Vec::with_capacity(n as usize);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        if tensors.get(&name).is_some() {
            return Err(bad(format!("duplicate tensor {name}")));
        }
        tensors.insert(name, Tensor::new(shape, data)?);
    }
    Ok(Checkpoint { metadata, tensors })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    write_checkpoint(BufWriter::new(File::create(path)?), ckpt)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
