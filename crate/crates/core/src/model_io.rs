//! Binary model files.
//!
//! Layout: magic `MDDFMODL`, `u16` format version, `u32` length plus JSON
//! metadata, `u64` length plus bincode payload, then the SHA-256 digest of
//! every preceding byte. All integers are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cascade::CascadeModel;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MDDFMODL";
pub const FORMAT_VERSION: u16 = 1;
const DIGEST_LEN: usize = 32;

/// Human-readable summary stored ahead of the payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub crate_version: String,
    pub n_layers: usize,
    pub n_classes: usize,
    pub n_features: usize,
    pub alphas: Vec<f64>,
    pub mode: String,
    pub depth_schedule: String,
}

impl ModelMetadata {
    fn of(model: &CascadeModel) -> Self {
        ModelMetadata {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            n_layers: model.n_layers(),
            n_classes: model.n_classes(),
            n_features: model.raw_dim(),
            alphas: model.alphas(),
            mode: model.config().mode.to_string(),
            depth_schedule: model.config().depth_schedule.to_string(),
        }
    }
}

pub fn to_bytes(model: &CascadeModel) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&ModelMetadata::of(model)).map_err(|e| Error::ModelFile(e.to_string()))?;
    let payload = bincode::serialize(model).map_err(|e| Error::ModelFile(e.to_string()))?;
    let meta_len = u32::try_from(meta.len()).map_err(|_| Error::ModelFile("metadata too large".into()))?;

    let mut out = Vec::with_capacity(MAGIC.len() + 14 + meta.len() + payload.len() + DIGEST_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&meta_len.to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::ModelFile("model file is truncated".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

/// Splits a model file into its metadata and payload after validating it.
fn parse(bytes: &[u8]) -> Result<(ModelMetadata, &[u8])> {
    if bytes.len() < MAGIC.len() + 2 + 4 + 8 + DIGEST_LEN {
        return Err(Error::ModelFile("model file is truncated".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::ModelFile("not a model file (bad magic)".into()));
    }
    let mut r = Reader {
        bytes: &bytes[..bytes.len() - DIGEST_LEN],
        pos: MAGIC.len(),
    };
    let version = u16::from_le_bytes(r.array()?);
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checksum);
    }
    let meta_len = u32::from_le_bytes(r.array()?) as usize;
    let meta = r.take(meta_len)?;
    let payload_len = usize::try_from(u64::from_le_bytes(r.array()?))
        .map_err(|_| Error::ModelFile("payload length overflows".into()))?;
    let payload = r.take(payload_len)?;
    if r.pos != r.bytes.len() {
        return Err(Error::ModelFile("trailing bytes after payload".into()));
    }
    let meta = serde_json::from_slice(meta).map_err(|e| Error::ModelFile(format!("metadata: {e}")))?;
    Ok((meta, payload))
}

pub fn from_bytes(bytes: &[u8]) -> Result<CascadeModel> {
    let (_, payload) = parse(bytes)?;
    bincode::deserialize(payload).map_err(|e| Error::ModelFile(format!("payload: {e}")))
}

/// Reads only the metadata block of a model file, still verifying the checksum.
pub fn read_metadata(path: impl AsRef<Path>) -> Result<ModelMetadata> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes).map(|(meta, _)| meta)
}

/// Writes the model atomically (temp file plus rename).
pub fn save(model: &CascadeModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, &bytes).map_err(|e| Error::io(path, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<CascadeModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::{default_forests, BlockConfig};
    use crate::cascade::{train, CascadeConfig};
    use crate::dataset::Dataset;
    use crate::Matrix;

    fn model() -> CascadeModel {
        let x = Matrix::from_vec(12, 2, (0..24).map(|v| (v * 5 % 7) as f64).collect());
        let y = (0..12).map(|i| i % 3).collect();
        let data = Dataset::new(x, y, 3).unwrap();
        let cfg = CascadeConfig {
            max_layers: 2,
            early_stop_patience: 0,
            block: BlockConfig {
                k_folds: 3,
                forests: default_forests(3, usize::MAX),
                ..BlockConfig::default()
            },
            ..CascadeConfig::default()
        };
        train(&data, &cfg).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = to_bytes(&m).unwrap();
        assert_eq!(from_bytes(&bytes).unwrap(), m);
        assert_eq!(to_bytes(&from_bytes(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mddf");
        let m = model();
        save(&m, &path).unwrap();
        assert_eq!(load(&path).unwrap(), m);
        let meta = read_metadata(&path).unwrap();
        assert_eq!(meta.n_layers, 2);
        assert_eq!(meta.n_classes, 3);
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = to_bytes(&model()).unwrap();

        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x01;
        assert!(matches!(from_bytes(&flipped), Err(Error::Checksum)));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(from_bytes(&magic), Err(Error::ModelFile(_))));

        let mut version = bytes.clone();
        version[8] = 9;
        assert!(matches!(from_bytes(&version), Err(Error::Version { found: 9, .. })));

        assert!(matches!(from_bytes(&bytes[..20]), Err(Error::ModelFile(_))));
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Checksum)));
    }
}
