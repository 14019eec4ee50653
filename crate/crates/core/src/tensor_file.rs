//! `PFT1` raw float tensors: the magic bytes `PFT1`, then height, width and
//! channels as little-endian `u32`, then `H*W*C` little-endian `f32` samples
//! in row-major interleaved order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

pub const TENSOR_MAGIC: &[u8; 4] = b"PFT1";

pub fn encode_tensor<W: Write>(raster: &Raster, mut w: W) -> std::io::Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    for dim in [raster.height(), raster.width(), raster.channels()] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    for &v in raster.data() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()
}

pub fn decode_tensor<R: Read>(mut r: R) -> Result<Raster> {
    let bad = |message: String| Error::Parse { line: 0, message };
    let mut head = [0u8; 16];
    r.read_exact(&mut head)
        .map_err(|e| bad(format!("truncated tensor header: {e}")))?;
    if &head[..4] != TENSOR_MAGIC {
        return Err(bad("missing PFT1 magic".into()));
    }
    let dim =
        |i: usize| u32::from_le_bytes(head[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)
        .map_err(|e| bad(format!("reading tensor payload: {e}")))?;
    if payload.len() != h * w * c * 4 {
        return Err(bad(format!(
            "payload of {} bytes does not match {h}x{w}x{c} f32 samples",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Raster::new(h, w, c, data)
}

pub fn write_tensor(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    encode_tensor(raster, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(BufReader::new(file))
}
