//! NV3D: a minimal little-endian container for a volume sequence.
//!
//! Layout: magic `NV3D`, u16 version, u32 T, D, H, W, f64 lat0, lon0, dlat,
//! dlon, frame_interval, f32 z_levels[D], f32 data[T·D·H·W] (T, D, H, W
//! order), then the mask packed eight voxels per byte, least significant bit
//! first, zero padded.

use std::path::Path;

use ndarray::Array4;

use crate::volgrid::{GridMeta, VolumeSequence};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"NV3D";
pub const VERSION: u16 = 1;
/// Bytes before the level table.
pub const HEADER_LEN: usize = 4 + 2 + 4 * 4 + 5 * 8;

pub fn encode(seq: &VolumeSequence) -> Result<Vec<u8>> {
    let (t, d, h, w) = seq.dims();
    let dims: Vec<u32> = [t, d, h, w]
        .iter()
        .map(|&n| u32::try_from(n).map_err(|_| Error::DimensionOverflow(format!("dimension {n} exceeds u32"))))
        .collect::<Result<_>>()?;
    let voxels = t * d * h * w;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * d + 4 * voxels + voxels.div_ceil(8));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for n in dims {
        out.extend_from_slice(&n.to_le_bytes());
    }
    let m = seq.meta();
    for v in [m.lat0, m.lon0, m.dlat, m.dlon, m.frame_interval] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for z in &m.z_levels {
        out.extend_from_slice(&z.to_le_bytes());
    }
    for v in seq.data().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut byte = 0u8;
    for (i, &valid) in seq.mask().iter().enumerate() {
        if valid {
            byte |= 1 << (i % 8);
        }
        if i % 8 == 7 {
            out.push(byte);
            byte = 0;
        }
    }
    if voxels % 8 != 0 {
        out.push(byte);
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.buf[self.pos..self.pos + N].try_into().expect("length checked");
        self.pos += N;
        out
    }
}

fn need(bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Truncated { expected, found: bytes.len() });
    }
    Ok(())
}

pub fn decode(bytes: &[u8]) -> Result<VolumeSequence> {
    need(bytes, 4)?;
    if bytes[..4] != MAGIC {
        return Err(Error::BadMagic(bytes[..4].try_into().expect("4 bytes")));
    }
    need(bytes, 6)?;
    let mut c = Cursor { buf: bytes, pos: 4 };
    let version = u16::from_le_bytes(c.take());
    if version != VERSION {
        return Err(Error::VersionMismatch(version));
    }
    need(bytes, HEADER_LEN)?;
    let dims: [usize; 4] = [(); 4].map(|_| u32::from_le_bytes(c.take()) as usize);
    let [t, d, h, w] = dims;
    let overflow = || Error::DimensionOverflow(format!("{t}x{d}x{h}x{w}"));
    let voxels = t.checked_mul(d).and_then(|n| n.checked_mul(h)).and_then(|n| n.checked_mul(w)).ok_or_else(overflow)?;
    let expected = voxels
        .checked_mul(4)
        .and_then(|n| n.checked_add(voxels.div_ceil(8)))
        .and_then(|n| n.checked_add(HEADER_LEN + 4 * d))
        .ok_or_else(overflow)?;
    need(bytes, expected)?;
    if bytes.len() > expected {
        return Err(Error::TrailingBytes(bytes.len() - expected));
    }
    let [lat0, lon0, dlat, dlon, frame_interval] = [(); 5].map(|_| f64::from_le_bytes(c.take()));
    let z_levels: Vec<f32> = (0..d).map(|_| f32::from_le_bytes(c.take())).collect();
    let data: Vec<f32> = (0..voxels).map(|_| f32::from_le_bytes(c.take())).collect();
    let bits = &bytes[c.pos..];
    let mask: Vec<bool> = (0..voxels).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
    let meta = GridMeta { lat0, lon0, dlat, dlon, z_levels, frame_interval };
    let shape = (t, d, h, w);
    VolumeSequence::from_raw(
        Array4::from_shape_vec(shape, data).map_err(|e| Error::Shape(e.to_string()))?,
        Array4::from_shape_vec(shape, mask).map_err(|e| Error::Shape(e.to_string()))?,
        meta,
    )
}

pub fn write(path: &Path, seq: &VolumeSequence) -> Result<()> {
    std::fs::write(path, encode(seq)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<VolumeSequence> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
