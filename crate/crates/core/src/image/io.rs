//! The PFEX plane container: a 20-byte little-endian header followed by the
//! raw `f32` payload.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "PFEX"
//! 4       4     version (u32, = 1)
//! 8       4     width
//! 12      4     height
//! 16      4     channels
//! 20      4*n   samples, row-major, channel-interleaved
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ImagePlane;
use crate::error::{Error, Result};

pub const PFEX_MAGIC: [u8; 4] = *b"PFEX";
pub const PFEX_VERSION: u32 = 1;

/// Refuse headers describing more samples than this (4 GiB of payload).
const MAX_SAMPLES: u64 = 1 << 30;

pub fn write_plane_to<W: Write>(mut w: W, plane: &ImagePlane) -> Result<()> {
    let mut header = [0u8; 20];
    header[0..4].copy_from_slice(&PFEX_MAGIC);
    header[4..8].copy_from_slice(&PFEX_VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&plane.width().to_le_bytes());
    header[12..16].copy_from_slice(&plane.height().to_le_bytes());
    header[16..20].copy_from_slice(&plane.channels().to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(plane.data().len() * 4);
    for v in plane.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_plane_from<R: Read>(mut r: R) -> Result<ImagePlane> {
    let mut header = [0u8; 20];
    r.read_exact(&mut header)
        .map_err(|_| Error::Format("truncated PFEX header".into()))?;
    if header[0..4] != PFEX_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(&header[0..4])
        )));
    }
    let field = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let version = field(4);
    if version != PFEX_VERSION {
        return Err(Error::Format(format!("unsupported PFEX version {version}")));
    }
    let (width, height, channels) = (field(8), field(12), field(16));
    let samples = width as u64 * height as u64 * channels as u64;
    if samples > MAX_SAMPLES {
        return Err(Error::Format(format!(
            "plane {width}x{height}x{channels} exceeds size limit"
        )));
    }
    let mut bytes = vec![0u8; samples as usize * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| Error::Format("truncated PFEX payload".into()))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after PFEX payload".into()));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ImagePlane::from_vec(width, height, channels, data)
}

pub fn write_plane(path: impl AsRef<Path>, plane: &ImagePlane) -> Result<()> {
    write_plane_to(BufWriter::new(File::create(path)?), plane)
}

pub fn read_plane(path: impl AsRef<Path>) -> Result<ImagePlane> {
    read_plane_from(BufReader::new(File::open(path)?))
}
