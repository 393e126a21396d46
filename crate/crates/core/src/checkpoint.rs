//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            4 bytes  "OMCK"
//! format_version   u32
//! obs_dim          u32
//! act_dim          u32
//! tensor_count     u32      (9)
//! shapes           tensor_count × (rows u32, cols u32)
//! parameters       f64 × Σ rows·cols, in PolicyParams field order
//! meta_iteration   u64
//! fingerprint      u64
//! meta_grad_mode   u8       (0 = first-order, 1 = reptile)
//! rng_seed         32 bytes
//! rng_stream       u64
//! rng_word_pos     u128
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{NetDims, PolicyParams, TensorId};
use crate::seed::RngStream;

pub const MAGIC: &[u8; 4] = b"OMCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetaGradMode {
    FirstOrder,
    Reptile,
}

impl MetaGradMode {
    fn code(self) -> u8 {
        match self {
            MetaGradMode::FirstOrder => 0,
            MetaGradMode::Reptile => 1,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(MetaGradMode::FirstOrder),
            1 => Ok(MetaGradMode::Reptile),
            other => Err(Error::Checkpoint(format!("unknown meta-gradient mode code {other}"))),
        }
    }
}

/// Position of a ChaCha stream, enough to resume it exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngSnapshot {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngSnapshot {
    pub fn capture(rng: &RngStream) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> RngStream {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaCheckpoint {
    pub theta: PolicyParams,
    pub meta_iteration: u64,
    pub fingerprint: u64,
    pub mode: MetaGradMode,
    pub rng: RngSnapshot,
}

impl MetaCheckpoint {
    /// Wraps bare parameters (no meta-training history).
    pub fn from_params(theta: PolicyParams) -> Self {
        Self {
            theta,
            meta_iteration: 0,
            fingerprint: 0,
            mode: MetaGradMode::FirstOrder,
            rng: RngSnapshot {
                seed: [0; 32],
                stream: 0,
                word_pos: 0,
            },
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let dims = self.theta.dims();
        let mut out = Vec::with_capacity(64 + 8 * dims.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(dims.obs_dim as u32).to_le_bytes());
        out.extend_from_slice(&(dims.act_dim as u32).to_le_bytes());
        out.extend_from_slice(&(TensorId::ALL.len() as u32).to_le_bytes());
        for id in TensorId::ALL {
            let (r, c) = id.shape(&dims);
            out.extend_from_slice(&(r as u32).to_le_bytes());
            out.extend_from_slice(&(c as u32).to_le_bytes());
        }
        for x in self.theta.as_flat() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&self.meta_iteration.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.push(self.mode.code());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic {:?}, expected \"OMCK\"",
                String::from_utf8_lossy(magic)
            )));
        }
        let version = r.u32("format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {version} (this build reads version {FORMAT_VERSION})"
            )));
        }
        let obs_dim = r.u32("obs_dim")? as usize;
        let act_dim = r.u32("act_dim")? as usize;
        let count = r.u32("tensor_count")? as usize;
        if count != TensorId::ALL.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, header lists {count}",
                TensorId::ALL.len()
            )));
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            shapes.push((r.u32("shape")? as usize, r.u32("shape")? as usize));
        }
        let dims = NetDims {
            obs_dim,
            act_dim,
            hidden: shapes[0].1,
        };
        for (id, &shape) in TensorId::ALL.iter().zip(&shapes) {
            if id.shape(&dims) != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {shape:?}, expected {:?}",
                    id.name(),
                    id.shape(&dims)
                )));
            }
        }
        let mut data = Vec::with_capacity(dims.len());
        for _ in 0..dims.len() {
            data.push(f64::from_le_bytes(r.array("parameters")?));
        }
        let theta = PolicyParams::from_flat(dims, data)?;
        let meta_iteration = u64::from_le_bytes(r.array("meta_iteration")?);
        let fingerprint = u64::from_le_bytes(r.array("fingerprint")?);
        let mode = MetaGradMode::from_code(r.take(1, "meta_grad_mode")?[0])?;
        let seed = r.array::<32>("rng_seed")?;
        let stream = u64::from_le_bytes(r.array("rng_stream")?);
        let word_pos = u128::from_le_bytes(r.array("rng_word_pos")?);
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after checkpoint payload",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            theta,
            meta_iteration,
            fingerprint,
            mode,
            rng: RngSnapshot {
                seed,
                stream,
                word_pos,
            },
        })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.encode())?;
            f.sync_all()?;
            fs::rename(&tmp, path)
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated file while reading {field} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, field: &str) -> Result<[u8; N]> {
        Ok(self.take(N, field)?.try_into().expect("length checked"))
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(field)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::stream;
    use rand::Rng;

    fn sample() -> MetaCheckpoint {
        let mut rng = stream(77);
        let _: u64 = rng.random();
        MetaCheckpoint {
            theta: PolicyParams::random(NetDims::new(30, 10), &mut stream(1)),
            meta_iteration: 50,
            fingerprint: 0xdead_beef,
            mode: MetaGradMode::Reptile,
            rng: RngSnapshot::capture(&rng),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = MetaCheckpoint::decode(&c.encode()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.encode(), c.encode());
    }

    #[test]
    fn rng_snapshot_resumes_stream() {
        let mut rng = stream(3);
        let _: [u64; 5] = rng.random();
        let snap = RngSnapshot::capture(&rng);
        let mut resumed = snap.restore();
        assert_eq!(rng.random::<u64>(), resumed.random::<u64>());
    }

    #[test]
    fn bad_magic_names_expected() {
        let mut bytes = sample().encode();
        bytes[0] = b'X';
        let err = MetaCheckpoint::decode(&bytes).unwrap_err().to_string();
        assert!(err.contains("OMCK"), "{err}");
    }

    #[test]
    fn newer_version_refused() {
        let mut bytes = sample().encode();
        bytes[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        let err = MetaCheckpoint::decode(&bytes).unwrap_err().to_string();
        assert!(err.contains("format_version"), "{err}");
    }

    #[test]
    fn truncation_detected() {
        let bytes = sample().encode();
        for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            let err = MetaCheckpoint::decode(&bytes[..cut]).unwrap_err().to_string();
            assert!(err.contains("truncated"), "{err}");
        }
    }

    #[test]
    fn save_load_via_rename() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.omck");
        let c = sample();
        c.save(&path).unwrap();
        assert!(!path.with_extension("tmp").exists());
        assert_eq!(MetaCheckpoint::load(&path).unwrap(), c);
    }
}
