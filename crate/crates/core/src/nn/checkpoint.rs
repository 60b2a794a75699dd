//! Flat binary parameter container.
//!
//! ```text
//! magic    8 bytes  "SSPCKPT\0"
//! version  u32 LE   1
//! count    u64 LE
//! per parameter:
//!   name_len u32 LE, name bytes (UTF-8)
//!   rank     u32 LE, extents u64 LE x rank
//!   payload  f64 LE x product(extents)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::param::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"SSPCKPT\0";
pub const VERSION: u32 = 1;

/// One named tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub value: Tensor,
}

pub fn write_records<W: Write>(mut w: W, records: &[(&str, &Tensor)]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for (name, value) in records {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(value.shape().len() as u32).to_le_bytes())?;
        for &e in value.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for v in value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<Record>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u64(&mut r)?;
    let mut records = Vec::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        let value = Tensor::from_vec(&shape, data)?;
        if !value.is_finite() {
            return Err(Error::Checkpoint(format!("non-finite values in `{name}`")));
        }
        records.push(Record { name, value });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(records)
}

pub fn save<W: Write>(store: &ParamStore, w: W) -> Result<()> {
    let records: Vec<(&str, &Tensor)> = store.iter().map(|p| (p.name.as_str(), &p.value)).collect();
    write_records(w, &records)
}

pub fn save_file(store: &ParamStore, path: &Path) -> Result<()> {
    save(store, BufWriter::new(File::create(path)?))
}

pub fn to_bytes(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    save(store, &mut out).expect("writing to memory cannot fail");
    out
}

/// Builds a fresh store from a checkpoint.
pub fn load<R: Read>(r: R) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    for rec in read_records(r)? {
        store.register(rec.name, rec.value)?;
    }
    Ok(store)
}

pub fn load_file(path: &Path) -> Result<ParamStore> {
    load(BufReader::new(File::open(path)?))
}

/// Overwrites the values of an existing store. The checkpoint must carry
/// exactly the store's parameter names with matching shapes.
pub fn restore_into(store: &mut ParamStore, loaded: &ParamStore) -> Result<()> {
    if loaded.len() != store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has {} parameters, model has {}",
            loaded.len(),
            store.len()
        )));
    }
    for p in loaded.iter() {
        let target = store
            .by_name_mut(&p.name)
            .map_err(|_| Error::Checkpoint(format!("unexpected parameter `{}`", p.name)))?;
        p.value.expect_shape(&p.name, target.value.shape())?;
        target.value = p.value.clone();
    }
    Ok(())
}
