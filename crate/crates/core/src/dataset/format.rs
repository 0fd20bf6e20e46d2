//! Dataset file layout (little-endian throughout):
//!
//! ```text
//! magic       8 bytes  "CDMRLDS\0"
//! version     u32      1
//! checksum    32 bytes SHA-256 of every byte after this field
//! meta_len    u64
//! meta        meta_len bytes of JSON
//! state_dim   u32
//! num_agents  u32
//! count       u64
//! records     count × [state f64×D | actions u32×I | reward f64 | next_state f64×D]
//! ```

use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Dataset, DatasetMeta, Transition};
use crate::error::{Error, Result};
use crate::io_util::{atomic_write, ByteReader};

const MAGIC: &[u8; 8] = b"CDMRLDS\0";
const VERSION: u32 = 1;

pub(super) fn write_body<W: Write>(
    out: &mut W,
    meta: &DatasetMeta,
    transitions: &[Transition],
) -> std::io::Result<()> {
    let meta_json = serde_json::to_vec(meta).map_err(std::io::Error::other)?;
    let dim = meta.env.state_dim();
    let agents = meta.env.num_uavs;
    let mut buf = Vec::with_capacity(meta_json.len() + 24 + transitions.len() * (16 * dim + 8 + 4 * agents));
    buf.extend_from_slice(&(meta_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta_json);
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    buf.extend_from_slice(&(agents as u32).to_le_bytes());
    buf.extend_from_slice(&(transitions.len() as u64).to_le_bytes());
    for t in transitions {
        if t.state.len() != dim || t.next_state.len() != dim || t.actions.len() != agents {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                "transition does not match dataset dimensions",
            ));
        }
        for x in &t.state {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        for a in &t.actions {
            buf.extend_from_slice(&a.to_le_bytes());
        }
        buf.extend_from_slice(&t.reward.to_le_bytes());
        for x in &t.next_state {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.write_all(&buf)
}

pub fn write_dataset<W: Write>(mut out: W, dataset: &Dataset) -> std::io::Result<()> {
    let mut body = Vec::new();
    write_body(&mut body, &dataset.meta, &dataset.transitions)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&Sha256::digest(&body))?;
    out.write_all(&body)
}

/// Decodes a dataset, refusing anything whose checksum does not match.
pub fn read_dataset(bytes: &[u8], origin: &Path) -> Result<Dataset> {
    let mut r = ByteReader::new(bytes);
    if r.take(8)? != MAGIC {
        return Err(Error::Format(format!("{} is not a dataset file", origin.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let checksum = r.take(32)?;
    let body = &bytes[8 + 4 + 32..];
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::Checksum(origin.to_path_buf()));
    }
    let meta_len = r.u64()? as usize;
    let meta: DatasetMeta = serde_json::from_slice(r.take(meta_len)?)?;
    let dim = r.u32()? as usize;
    let agents = r.u32()? as usize;
    if dim != meta.env.state_dim() || agents != meta.env.num_uavs {
        return Err(Error::Format("record dimensions disagree with metadata".into()));
    }
    let count = r.u64()? as usize;
    let record = 16 * dim + 8 + 4 * agents;
    if count.checked_mul(record) != Some(bytes.len() - 8 - 4 - 32 - 8 - meta_len - 16) {
        return Err(Error::Format("record section length does not match count".into()));
    }
    let mut transitions = Vec::with_capacity(count);
    for _ in 0..count {
        let state = r.f64_vec(dim)?;
        let actions = (0..agents).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let reward = r.f64()?;
        let next_state = r.f64_vec(dim)?;
        transitions.push(Transition {
            state,
            actions,
            reward,
            next_state,
        });
    }
    Ok(Dataset { meta, transitions })
}

pub fn save(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, dataset).map_err(|e| Error::io(path, e))?;
    atomic_write(path, &buf)
}

pub fn load(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_dataset(&bytes, path)
}
