use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{init_params, Parameters};
use super::{ModelConfig, ModelError};

const MAGIC: &[u8; 4] = b"PDFG";
pub const CHECKPOINT_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn len_u32(n: usize, what: &str) -> Result<u32, ModelError> {
    u32::try_from(n).map_err(|_| bad(format!("{what} too long")))
}

/// Header `PDFG`, version, JSON config, then every tensor as
/// name, shape and little-endian `f64` values.
pub fn write_checkpoint(p: &Parameters, w: &mut impl Write) -> Result<(), ModelError> {
    let config = serde_json::to_vec(&p.config).map_err(|e| bad(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&len_u32(config.len(), "config")?.to_le_bytes())?;
    w.write_all(&config)?;
    let tensors = p.tensors();
    w.write_all(&len_u32(tensors.len(), "tensor list")?.to_le_bytes())?;
    for t in tensors {
        w.write_all(&len_u32(t.name.len(), "tensor name")?.to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&len_u32(t.shape.len(), "shape")?.to_le_bytes())?;
        for &dim in &t.shape {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, ModelError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>, ModelError> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(bad("truncated"));
    }
    Ok(buf)
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<Parameters, ModelError> {
    let magic = read_bytes(r, 4)?;
    if magic != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let n = read_u32(r)? as usize;
    let config: ModelConfig = serde_json::from_slice(&read_bytes(r, n)?).map_err(|e| bad(e.to_string()))?;
    let mut p = init_params(&config)?;
    let count = read_u32(r)? as usize;
    let mut tensors = p.tensors_mut();
    if count != tensors.len() {
        return Err(bad(format!("expected {} tensors, found {count}", tensors.len())));
    }
    for t in tensors.iter_mut() {
        let n = read_u32(r)? as usize;
        let name = String::from_utf8(read_bytes(r, n)?).map_err(|_| bad("tensor name is not UTF-8"))?;
        if name != t.name {
            return Err(bad(format!("expected tensor {}, found {name}", t.name)));
        }
        let ndim = read_u32(r)? as usize;
        let shape = (0..ndim).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if shape != t.shape {
            return Err(bad(format!("shape mismatch for {name}: {shape:?} vs {:?}", t.shape)));
        }
        let raw = read_bytes(r, t.len() * 8)?;
        for (v, c) in t.data.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(c.try_into().expect("8 bytes"));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(p)
}

pub fn save_checkpoint(p: &Parameters, path: &Path) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(p, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Parameters, ModelError> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = init_params(&ModelConfig::tiny()).unwrap();
        p.mask_patch.data[0] = -0.0;
        p.mask_patch.data[1] = f64::MIN_POSITIVE / 3.0;
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        let q = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(q.config, p.config);
        for (a, b) in p.tensors().iter().zip(q.tensors()) {
            assert_eq!(a.name, b.name);
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let p = init_params(&ModelConfig::tiny()).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert!(read_checkpoint(&mut &buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(&mut extra.as_slice()).is_err());
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(read_checkpoint(&mut magic.as_slice()).is_err());
    }
}
