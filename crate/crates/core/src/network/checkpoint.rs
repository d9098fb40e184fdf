//! Binary checkpoint container, little endian throughout:
//!
//! ```text
//! magic    8 bytes  "HZNETCKP"
//! version  u32      1
//! layers   u32      5
//! b        f64
//! per layer, conv1..conv5:
//!   kernel_size u32, in_channels u32, out_channels u32
//!   weights     f64 × out·in·k·k   ([out][in][ky][kx])
//!   biases      f64 × out
//! ```
//!
//! Loading rejects anything whose shapes differ from [`ARCHITECTURE`](super::ARCHITECTURE).

use std::path::Path;

use super::{ConvLayer, NetworkParams, ARCHITECTURE};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HZNETCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode(params: &NetworkParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + params.num_params() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.layers.len() as u32).to_le_bytes());
    out.extend_from_slice(&params.b.to_le_bytes());
    for layer in &params.layers {
        for v in [layer.kernel_size, layer.in_channels, layer.out_channels] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in layer.weights.iter().chain(&layer.biases) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(format!("truncated at byte {}", self.pos));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<NetworkParams, String> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err("bad magic, not a checkpoint".into());
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let count = cur.u32()? as usize;
    if count != ARCHITECTURE.len() {
        return Err(format!("expected {} layers, found {count}", ARCHITECTURE.len()));
    }
    let b = cur.f64()?;
    let mut params = NetworkParams::zeros();
    params.b = b;
    for (n, &(k, cin, cout)) in ARCHITECTURE.iter().enumerate() {
        let shape = (cur.u32()? as usize, cur.u32()? as usize, cur.u32()? as usize);
        if shape != (k, cin, cout) {
            return Err(format!(
                "conv{} has shape {}x{} {}->{}, expected {k}x{k} {cin}->{cout}",
                n + 1,
                shape.0,
                shape.0,
                shape.1,
                shape.2
            ));
        }
        let layer: &mut ConvLayer = &mut params.layers[n];
        for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
            *w = cur.f64()?;
        }
    }
    if cur.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - cur.pos));
    }
    params.validate().map_err(|e| e.to_string())?;
    Ok(params)
}

pub fn save_checkpoint(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    params.validate()?;
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<NetworkParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = NetworkParams::init(3, 0.05).unwrap();
        let back = decode(&encode(&p)).unwrap();
        assert_eq!(p, back);
        for (a, b) in p.layers.iter().zip(&back.layers) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode(&NetworkParams::init(1, 0.01).unwrap());
        assert!(decode(&bytes[..bytes.len() - 1]).unwrap_err().contains("truncated"));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).unwrap_err().contains("trailing"));
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic).is_err());
        // conv1 kernel size field sits right after the 24-byte header
        let mut bad_shape = bytes.clone();
        bad_shape[24] = 3;
        assert!(decode(&bad_shape).unwrap_err().contains("conv1"));
        let mut bad_version = bytes;
        bad_version[8] = 9;
        assert!(decode(&bad_version).unwrap_err().contains("version"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let p = NetworkParams::init(9, 0.01).unwrap();
        save_checkpoint(&p, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);
        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint { .. })));
    }
}
