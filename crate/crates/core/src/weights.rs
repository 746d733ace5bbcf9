//! Binary weight files.
//!
//! Layout, all integers `u32` little-endian:
//!
//! ```text
//! "MSSR" | version = 1 | n | m | c | scale (0 = unspecified)
//! record*: rank | dims[rank] | f32 LE values
//! ```
//!
//! Records follow the network's build order, weight (rank 4) then bias
//! (rank 1) for every convolution, so `(n, m, c)` fully determines them.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{parameter_count, Mssrnet, NetConfig};
use crate::tensor::Scalar;

pub const MAGIC: [u8; 4] = *b"MSSR";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WeightHeader {
    pub n: u32,
    pub m: u32,
    pub c: u32,
    /// Scale factor the weights were trained for, 0 if unknown.
    pub scale: u32,
}

impl WeightHeader {
    pub fn config(&self) -> NetConfig {
        NetConfig::new(self.n as usize, self.m as usize, self.c as usize, 0)
    }
}

fn record_dims<T: Scalar>(net: &Mssrnet<T>) -> Vec<Vec<usize>> {
    net.convs()
        .iter()
        .flat_map(|c| [c.weight.dims().to_vec(), vec![c.bias.len()]])
        .collect()
}

/// Exact size in bytes of the weight file for `cfg`.
pub fn weight_file_size(cfg: &NetConfig) -> usize {
    let convs = 3 * cfg.inception_count() + cfg.plain_conv_count();
    // Per convolution: rank-4 and rank-1 record headers.
    HEADER_BYTES + convs * ((4 + 4 * 4) + (4 + 4)) + 4 * parameter_count(cfg)
}

pub fn encode_weights<T: Scalar>(net: &Mssrnet<T>, scale: u32) -> Vec<u8> {
    let cfg = net.config();
    let mut out = Vec::with_capacity(weight_file_size(cfg));
    out.extend_from_slice(&MAGIC);
    for v in [VERSION, cfg.n as u32, cfg.m as u32, cfg.c as u32, scale] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for conv in net.convs() {
        for (dims, values) in [(&conv.weight.dims()[..], conv.weight.data()), (&[conv.bias.len()][..], &conv.bias[..])] {
            out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for &d in dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in values {
                out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> Option<u32> {
        let b = self.bytes.get(self.pos..self.pos + 4)?;
        self.pos += 4;
        Some(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize) -> Option<Vec<f32>> {
        let b = self.bytes.get(self.pos..self.pos.checked_add(n.checked_mul(4)?)?)?;
        self.pos += 4 * n;
        Some(b.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }
}

pub fn decode_weights<T: Scalar>(bytes: &[u8]) -> Result<(Mssrnet<T>, WeightHeader)> {
    if bytes.len() < HEADER_BYTES {
        return Err(Error::Format(format!("weight file truncated in header ({} bytes)", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, not an MSSR weight file".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let mut next = || r.u32().expect("header length checked");
    let version = next();
    if version != VERSION {
        return Err(Error::Format(format!("unsupported weight format version {version}")));
    }
    let header = WeightHeader { n: next(), m: next(), c: next(), scale: next() };
    let cfg = header.config();
    cfg.validate().map_err(|e| Error::Format(format!("invalid header: {e}")))?;

    let mut net = Mssrnet::<T>::zeros(&cfg)?;
    let expected = record_dims(&net);
    let mut r = Reader { bytes, pos: HEADER_BYTES };
    let mut total = 0usize;
    let mut values = Vec::with_capacity(expected.len());
    for (index, dims) in expected.iter().enumerate() {
        let truncated = || Error::Format(format!("record {index} is incomplete (file truncated)"));
        let rank = r.u32().ok_or_else(truncated)? as usize;
        if rank != dims.len() {
            return Err(Error::Format(format!("record {index}: rank {rank}, expected {}", dims.len())));
        }
        let mut got = Vec::with_capacity(rank);
        for _ in 0..rank {
            got.push(r.u32().ok_or_else(truncated)? as usize);
        }
        if &got != dims {
            return Err(Error::Format(format!("record {index}: dims {got:?}, expected {dims:?}")));
        }
        let count: usize = dims.iter().product();
        values.push(r.f32s(count).ok_or_else(truncated)?);
        total += count;
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after last record", bytes.len() - r.pos)));
    }
    if total != parameter_count(&cfg) {
        return Err(Error::Format(format!("{total} values, expected {}", parameter_count(&cfg))));
    }
    for (dst, src) in net.params_mut().into_iter().zip(values) {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d = T::from_f64(f64::from(s)));
    }
    Ok((net, header))
}

pub fn save_weights<T: Scalar>(net: &Mssrnet<T>, scale: u32, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_weights(net, scale))?;
    Ok(())
}

pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<(Mssrnet<T>, WeightHeader)> {
    decode_weights(&fs::read(path)?)
}
