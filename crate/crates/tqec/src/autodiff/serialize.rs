//! Binary checkpoint format for [`ParamStore`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"TQNN"
//! version u32 (currently 1)
//! count   u32
//! then per parameter, in sorted name order:
//!   name_len u32, name bytes (UTF-8)
//!   trainable u8 (0 or 1)
//!   rank u32, extents u32 x rank
//!   values f32 x product(extents)
//! ```
//!
//! Values are stored as `f32`; an `f32` store round-trips bit-exactly. The
//! per-record trainable flag lets a checkpoint restore frozen running
//! statistics (batch norm) alongside trainable weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::nn::ParamStore;
use super::{Scalar, Tensor};

const MAGIC: [u8; 4] = *b"TQNN";
const VERSION: u32 = 1;

/// Failures while reading or writing a model checkpoint.
#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt model checkpoint: {0}")]
    Corrupt(String),
}

/// Serialize every parameter of `store` (values narrowed to `f32`).
pub fn save_params<F: Scalar, W: Write>(
    store: &ParamStore<F>,
    w: &mut W,
) -> Result<(), ModelFileError> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let count = u32::try_from(store.len())
        .map_err(|_| ModelFileError::Corrupt("too many parameters".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for (name, entry) in store.iter() {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&[entry.trainable as u8])?;
        let shape = entry.tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &extent in shape {
            let extent = u32::try_from(extent)
                .map_err(|_| ModelFileError::Corrupt(format!("extent too large in {name:?}")))?;
            w.write_all(&extent.to_le_bytes())?;
        }
        for &v in entry.tensor.data() {
            w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Deserialize a checkpoint written by [`save_params`].
pub fn load_params<R: Read>(r: &mut R) -> Result<ParamStore<f32>, ModelFileError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(ModelFileError::UnsupportedVersion(version));
    }
    let count = read_u32(r)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| ModelFileError::Corrupt("parameter name is not UTF-8".into()))?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let trainable = match flag[0] {
            0 => false,
            1 => true,
            other => {
                return Err(ModelFileError::Corrupt(format!(
                    "invalid trainable flag {other} for {name:?}"
                )))
            }
        };
        let rank = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 4];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            data.push(f32::from_le_bytes(buf));
        }
        if store.contains(&name) {
            return Err(ModelFileError::Corrupt(format!(
                "duplicate parameter {name:?}"
            )));
        }
        store.insert(&name, Tensor::from_vec(&shape, data), trainable);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(ModelFileError::Corrupt(
            "trailing bytes after the last parameter".into(),
        ));
    }
    Ok(store)
}

/// Write a checkpoint file, creating or truncating `path`.
pub fn save_params_to_path<F: Scalar>(
    store: &ParamStore<F>,
    path: &Path,
) -> Result<(), ModelFileError> {
    let mut w = BufWriter::new(File::create(path)?);
    save_params(store, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Read a checkpoint file written by [`save_params_to_path`].
pub fn load_params_from_path(path: &Path) -> Result<ParamStore<f32>, ModelFileError> {
    load_params(&mut BufReader::new(File::open(path)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ModelFileError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn sample_store() -> ParamStore<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut store = ParamStore::new();
        for (name, shape, trainable) in [
            ("net.conv.weight", vec![4usize, 2, 3, 3], true),
            ("net.conv.bias", vec![4], true),
            ("net.bn.running_mean", vec![4], false),
            ("empty", vec![0], true),
        ] {
            let data = (0..shape.iter().product::<usize>())
                .map(|_| rng.gen_range(-2.0f32..2.0))
                .collect();
            store.insert(name, Tensor::from_vec(&shape, data), trainable);
        }
        store
    }

    #[test]
    fn round_trip_is_bit_exact_including_flags_and_shapes() {
        let store = sample_store();
        let mut bytes = Vec::new();
        save_params(&store, &mut bytes).unwrap();
        let loaded = load_params(&mut bytes.as_slice()).unwrap();
        assert_eq!(loaded.len(), store.len());
        for (name, entry) in store.iter() {
            let got = loaded.get(name);
            assert_eq!(got.trainable, entry.trainable, "{name}");
            assert_eq!(got.tensor.shape(), entry.tensor.shape(), "{name}");
            assert_eq!(got.tensor.data(), entry.tensor.data(), "{name}");
        }
        // Serializing the loaded store reproduces the identical byte stream.
        let mut again = Vec::new();
        save_params(&loaded, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn file_round_trip_via_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.tqnn");
        let store = sample_store();
        save_params_to_path(&store, &path).unwrap();
        let loaded = load_params_from_path(&path).unwrap();
        assert_eq!(loaded.len(), store.len());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = Vec::new();
        save_params(&sample_store(), &mut bytes).unwrap();
        bytes[0] = b'X';
        assert!(matches!(
            load_params(&mut bytes.as_slice()),
            Err(ModelFileError::BadMagic)
        ));
    }

    #[test]
    fn future_versions_are_rejected() {
        let mut bytes = Vec::new();
        save_params(&sample_store(), &mut bytes).unwrap();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            load_params(&mut bytes.as_slice()),
            Err(ModelFileError::UnsupportedVersion(7))
        ));
    }

    #[test]
    fn truncated_files_are_rejected() {
        let mut bytes = Vec::new();
        save_params(&sample_store(), &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            load_params(&mut bytes.as_slice()),
            Err(ModelFileError::Io(_))
        ));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut bytes = Vec::new();
        save_params(&sample_store(), &mut bytes).unwrap();
        bytes.push(0);
        assert!(matches!(
            load_params(&mut bytes.as_slice()),
            Err(ModelFileError::Corrupt(_))
        ));
    }

    #[test]
    fn empty_store_round_trips() {
        let store = ParamStore::<f32>::new();
        let mut bytes = Vec::new();
        save_params(&store, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 12); // magic + version + zero count
        let loaded = load_params(&mut bytes.as_slice()).unwrap();
        assert!(loaded.is_empty());
    }

    #[test]
    fn f64_stores_narrow_to_f32_on_save() {
        let mut store = ParamStore::<f64>::new();
        store.insert("w", Tensor::from_vec(&[1], vec![std::f64::consts::PI]), true);
        let mut bytes = Vec::new();
        save_params(&store, &mut bytes).unwrap();
        let loaded = load_params(&mut bytes.as_slice()).unwrap();
        assert_eq!(loaded.get("w").tensor.data(), &[std::f32::consts::PI]);
    }
}
