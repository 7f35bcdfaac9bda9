//! Binary model checkpoints.
//!
//! Layout (little-endian): magic "VAPO", format version u32, input dim u32,
//! layer count u32, layer sizes u32[], activation id u32, then the flat f64
//! parameter vector in layout order, then a CRC32 of those parameter bytes.

use crate::error::{Result, VapoError};
use crate::potential::{Activation, PotentialModel};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"VAPO";
pub const FORMAT_VERSION: u32 = 1;

pub fn save(model: &PotentialModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(model.input_dim() as u32).to_le_bytes())?;
    let sizes = model.layer_sizes();
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for &s in sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    w.write_all(&model.activation.id().to_le_bytes())?;
    let mut crc = crc32fast::Hasher::new();
    for &v in &model.theta {
        let bytes = v.to_le_bytes();
        crc.update(&bytes);
        w.write_all(&bytes)?;
    }
    w.write_all(&crc.finalize().to_le_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<PotentialModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(VapoError::Format(format!(
            "bad magic {:02x?}, not a checkpoint file",
            magic
        )));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(VapoError::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let dim = read_u32(&mut r)? as usize;
    let n_sizes = read_u32(&mut r)? as usize;
    if n_sizes < 2 || n_sizes > 64 {
        return Err(VapoError::Format(format!("bad layer count {n_sizes}")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(read_u32(&mut r)? as usize);
    }
    if sizes[0] != dim {
        return Err(VapoError::Format(format!(
            "header dim {dim} disagrees with layer sizes {:?}",
            sizes
        )));
    }
    let activation = Activation::from_id(read_u32(&mut r)?)?;
    let n_params: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let mut theta = Vec::with_capacity(n_params);
    let mut crc = crc32fast::Hasher::new();
    let mut buf = [0u8; 8];
    for _ in 0..n_params {
        read_exact(&mut r, &mut buf)?;
        crc.update(&buf);
        let v = f64::from_le_bytes(buf);
        if !v.is_finite() {
            return Err(VapoError::Format("non-finite parameter value".into()));
        }
        theta.push(v);
    }
    let stored = read_u32(&mut r)?;
    let computed = crc.finalize();
    if stored != computed {
        return Err(VapoError::Format(format!(
            "CRC mismatch: stored {stored:08x}, computed {computed:08x}"
        )));
    }
    PotentialModel::from_theta(sizes, theta, activation)
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            VapoError::Format("truncated file".into())
        } else {
            VapoError::Io(e)
        }
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn model() -> PotentialModel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        PotentialModel::init(vec![2, 8, 1], Activation::Gelu, &mut rng).unwrap()
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = std::env::temp_dir().join("vapo-ckpt-roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.vapo");
        let m = model();
        save(&m, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(m.layer_sizes(), back.layer_sizes());
        assert_eq!(m.activation, back.activation);
        let a: Vec<u64> = m.theta.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.theta.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn detects_truncation_and_corruption() {
        let dir = std::env::temp_dir().join("vapo-ckpt-corrupt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.vapo");
        save(&model(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let trunc = dir.join("t.vapo");
        std::fs::write(&trunc, &bytes[..bytes.len() - 7]).unwrap();
        let err = load(&trunc).unwrap_err();
        assert!(format!("{err}").contains("truncated"), "{err}");

        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        let corrupt = dir.join("c.vapo");
        std::fs::write(&corrupt, &flipped).unwrap();
        assert!(load(&corrupt).is_err());

        let mut badmagic = bytes;
        badmagic[0] = b'X';
        let bm = dir.join("b.vapo");
        std::fs::write(&bm, &badmagic).unwrap();
        let err = load(&bm).unwrap_err();
        assert!(format!("{err}").contains("magic"), "{err}");
    }
}
