//! Class-pool files and split manifests.
//!
//! Pool layout: `FSCP`, u32 version (1), u32 class count, u32 dim, then per
//! class a u32 global id, a u32 example count and `count * dim` f32 values.
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pool::{ClassPool, PoolClass, Split};
use crate::binio::{put_u32, Reader};
use crate::error::{Error, Result};

pub const POOL_MAGIC: &[u8; 4] = b"FSCP";
pub const POOL_VERSION: u32 = 1;

pub fn encode_pool(pool: &ClassPool) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(POOL_MAGIC);
    put_u32(&mut out, POOL_VERSION);
    put_u32(&mut out, pool.classes.len() as u32);
    put_u32(&mut out, pool.dim as u32);
    for class in &pool.classes {
        put_u32(&mut out, class.id);
        put_u32(&mut out, class.examples.len() as u32);
        for x in &class.examples {
            for &v in x {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Decodes a pool file; the split is supplied by the caller (it lives in the manifest).
pub fn decode_pool(bytes: &[u8], split: Split) -> Result<ClassPool> {
    let mut r = Reader::new(bytes, "class-pool file");
    r.magic(POOL_MAGIC)?;
    let at = r.offset();
    let version = r.u32()?;
    if version != POOL_VERSION {
        return Err(r.fail(at, format!("unsupported version {version}")));
    }
    let class_count = r.u32()? as usize;
    let at = r.offset();
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(r.fail(at, "dimension is zero"));
    }
    let mut classes = Vec::with_capacity(class_count.min(1 << 16));
    let mut seen = std::collections::HashSet::new();
    for _ in 0..class_count {
        let at = r.offset();
        let id = r.u32()?;
        if !seen.insert(id) {
            return Err(r.fail(at, format!("duplicate class id {id}")));
        }
        let count = r.u32()? as usize;
        let mut examples = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let x = (0..dim)
                .map(|_| r.f32().map(f64::from))
                .collect::<Result<Vec<_>>>()?;
            examples.push(x);
        }
        classes.push(PoolClass {
            id,
            examples,
            mean: None,
        });
    }
    r.finish()?;
    ClassPool::new(classes, dim, split)
}

pub fn save_pool(pool: &ClassPool, path: &Path) -> Result<()> {
    fs::write(path, encode_pool(pool))?;
    Ok(())
}

pub fn load_pool(path: &Path, split: Split) -> Result<ClassPool> {
    decode_pool(&fs::read(path)?, split)
}

/// Sidecar JSON naming the class ids of each split and the file holding them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub dim: usize,
    pub splits: BTreeMap<Split, SplitEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub file: String,
    pub class_ids: Vec<u32>,
}

impl SplitManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    /// Loads the pool of `split` from the manifest's directory and checks
    /// that its ids match the manifest.
    pub fn load_split(&self, dir: &Path, split: Split) -> Result<ClassPool> {
        let entry = self
            .splits
            .get(&split)
            .ok_or_else(|| Error::invalid(format!("manifest has no {} split", split.name())))?;
        let pool = load_pool(&dir.join(&entry.file), split)?;
        if pool.ids() != entry.class_ids {
            return Err(Error::invalid(format!(
                "{} pool ids do not match the manifest",
                split.name()
            )));
        }
        Ok(pool)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::pool::generate_synthetic_pool;

    #[test]
    fn round_trip_through_f32() {
        let pool = generate_synthetic_pool(3, 4, 5, 0.3, 2).unwrap();
        let back = decode_pool(&encode_pool(&pool), Split::Base).unwrap();
        assert_eq!(back.ids(), pool.ids());
        for (a, b) in pool.classes.iter().zip(&back.classes) {
            for (xa, xb) in a.examples.iter().zip(&b.examples) {
                for (va, vb) in xa.iter().zip(xb) {
                    assert_eq!(*vb, (*va as f32) as f64);
                }
            }
        }
        // re-encoding a decoded pool is byte-identical
        assert_eq!(encode_pool(&back), encode_pool(&pool));
    }

    #[test]
    fn errors_name_the_offset() {
        let pool = generate_synthetic_pool(2, 2, 2, 0.3, 2).unwrap();
        let bytes = encode_pool(&pool);

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        let err = decode_pool(&bad_magic, Split::Base).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");

        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        let err = decode_pool(&bad_version, Split::Base).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 4, .. }), "{err}");

        let truncated = &bytes[..bytes.len() - 3];
        let err = decode_pool(truncated, Split::Base).unwrap_err();
        let Error::Format { offset, .. } = err else {
            panic!("expected format error")
        };
        assert_eq!(offset as usize, bytes.len() - 4);
        assert!(err_string(truncated).contains("byte offset"));
    }

    fn err_string(bytes: &[u8]) -> String {
        decode_pool(bytes, Split::Base).unwrap_err().to_string()
    }
}
