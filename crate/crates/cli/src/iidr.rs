//! IIDR raster codec: `"IIDR"`, then little-endian `u32` version, width,
//! height and channels, then `f32` samples channel by channel, row-major.

use std::path::Path;

use iidm_core::preprocess::RasterGrid;
use iidm_core::{Error, Result};

pub const MAGIC: &[u8; 4] = b"IIDR";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode(bytes: &[u8]) -> Result<RasterGrid> {
    if bytes.len() < HEADER_LEN {
        return Err(format_err(format!("IIDR header needs {HEADER_LEN} bytes, got {}", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err("missing IIDR magic"));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(format_err(format!("unsupported IIDR version {version}")));
    }
    let (w, h, c) = (read_u32(bytes, 8) as u64, read_u32(bytes, 12) as u64, read_u32(bytes, 16) as u64);
    if w == 0 || h == 0 || c == 0 {
        return Err(format_err(format!("IIDR dimensions must be positive, got {w}x{h}x{c}")));
    }
    let payload = (bytes.len() - HEADER_LEN) as u64;
    let expected = w.checked_mul(h).and_then(|v| v.checked_mul(c)).and_then(|v| v.checked_mul(4));
    if expected != Some(payload) {
        return Err(format_err(format!(
            "{w}x{h}x{c} raster needs {} payload bytes, file has {payload}",
            expected.map_or_else(|| "overflowing".to_string(), |e| e.to_string())
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    RasterGrid::new(w as usize, h as usize, c as usize, values)
}

pub fn encode(raster: &RasterGrid) -> Result<Vec<u8>> {
    let dim = |v: usize, name: &str| {
        u32::try_from(v).map_err(|_| format_err(format!("{name} {v} does not fit the IIDR header")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * raster.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dim(raster.width(), "width")?.to_le_bytes());
    out.extend_from_slice(&dim(raster.height(), "height")?.to_le_bytes());
    out.extend_from_slice(&dim(raster.channels(), "channels")?.to_le_bytes());
    for v in raster.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<RasterGrid> {
    let bytes = std::fs::read(path)?;
    decode(&bytes).map_err(|e| format_err(format!("{}: {e}", path.display())))
}

pub fn write(path: &Path, raster: &RasterGrid) -> Result<()> {
    std::fs::write(path, encode(raster)?)?;
    Ok(())
}
