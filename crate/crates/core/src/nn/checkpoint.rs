//! Network checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "CDMRLNET"
//! version    u32      1
//! quantiles  u32      quantile values per action (1 for value heads)
//! n_dims     u32
//! dims       n_dims × u64
//! params     f64 × P  per layer: weights (out × in, row-major), then bias
//! has_adam   u8       0 or 1
//! [step u64, m f64 × P, v f64 × P]   when has_adam = 1
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::{AdamState, GradientBundle, Layer, MlpNet};
use crate::error::{Error, Result};
use crate::io_util::{atomic_write, ByteReader};

const MAGIC: &[u8; 8] = b"CDMRLNET";
const VERSION: u32 = 1;

/// A network plus the head layout it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: MlpNet,
    pub quantiles: u32,
}

pub fn write_checkpoint<W: Write>(
    mut out: W,
    net: &MlpNet,
    quantiles: u32,
    with_adam: bool,
) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(64 + net.param_count() * 8 * if with_adam { 3 } else { 1 });
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&quantiles.to_le_bytes());
    buf.extend_from_slice(&(net.dims().len() as u32).to_le_bytes());
    for &d in net.dims() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for p in net.params_flat() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    if with_adam {
        buf.push(1);
        let adam = net.adam();
        buf.extend_from_slice(&adam.step.to_le_bytes());
        for x in adam.m.to_flat().into_iter().chain(adam.v.to_flat()) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    } else {
        buf.push(0);
    }
    out.write_all(&buf)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("reading checkpoint: {e}")))?;
    let mut r = ByteReader::new(&bytes);
    if r.take(8)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let quantiles = r.u32()?;
    let n_dims = r.u32()? as usize;
    if !(2..=64).contains(&n_dims) {
        return Err(Error::Format(format!("implausible layer count {n_dims}")));
    }
    let dims = (0..n_dims)
        .map(|_| r.u64().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let layers = read_layers(&mut r, &dims)?;
    let mut net = MlpNet::from_layers(dims.clone(), layers)?;
    match r.u8()? {
        0 => {}
        1 => {
            let step = r.u64()?;
            let m = read_bundle(&mut r, &dims)?;
            let v = read_bundle(&mut r, &dims)?;
            net.set_adam_state(AdamState { step, m, v })?;
        }
        flag => return Err(Error::Format(format!("bad adam flag {flag}"))),
    }
    if !r.is_empty() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { net, quantiles })
}

pub fn save_checkpoint(path: &Path, net: &MlpNet, quantiles: u32, with_adam: bool) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, net, quantiles, with_adam).map_err(|e| Error::io(path, e))?;
    atomic_write(path, &buf)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}

fn read_layers(r: &mut ByteReader<'_>, dims: &[usize]) -> Result<Vec<Layer>> {
    let bundle = read_bundle(r, dims)?;
    Ok(bundle
        .weights
        .into_iter()
        .zip(bundle.biases)
        .map(|(weights, bias)| Layer { weights, bias })
        .collect())
}

fn read_bundle(r: &mut ByteReader<'_>, dims: &[usize]) -> Result<GradientBundle> {
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for pair in dims.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let w = r.f64_vec(fan_in * fan_out)?;
        let b = r.f64_vec(fan_out)?;
        weights.push(Array2::from_shape_vec((fan_out, fan_in), w).expect("shape"));
        biases.push(Array1::from_vec(b));
    }
    Ok(GradientBundle { weights, biases })
}
