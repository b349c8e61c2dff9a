//! On-disk layout of a rendered sequence:
//!
//! ```text
//! <dir>/manifest
//! <dir>/frame_00000/color.pfex
//! <dir>/frame_00000/base_color.pfex
//! ...                              one file per G-buffer plane
//! ```
//!
//! Frame directory `i` holds the frame at time `i * 0.5`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{GBufferSet, RenderedFrame, GBUFFER_NAMES, TIME_STEP};
use crate::error::{Error, Result};
use crate::image::{read_plane, write_plane};

const FORMAT: &str = "patchex-dataset";

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub version: u32,
    pub width: u32,
    pub height: u32,
    pub frames: usize,
    pub time_step: f64,
    pub buffers: Vec<String>,
    /// Extra buffer names that resolve to an existing file.
    pub aliases: Vec<(String, String)>,
}

impl DatasetManifest {
    pub fn for_sequence(seq: &[RenderedFrame]) -> Result<Self> {
        let first = seq
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty sequence".into()))?;
        Ok(Self {
            version: 1,
            width: first.color.width(),
            height: first.color.height(),
            frames: seq.len(),
            time_step: TIME_STEP,
            buffers: std::iter::once("color")
                .chain(GBUFFER_NAMES)
                .map(String::from)
                .collect(),
            aliases: vec![("pretonemap_hdr_color".into(), "color".into())],
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "format = {FORMAT}").unwrap();
        writeln!(s, "version = {}", self.version).unwrap();
        writeln!(s, "width = {}", self.width).unwrap();
        writeln!(s, "height = {}", self.height).unwrap();
        writeln!(s, "frames = {}", self.frames).unwrap();
        writeln!(s, "time_step = {}", self.time_step).unwrap();
        writeln!(s, "buffers = {}", self.buffers.join(",")).unwrap();
        for (alias, target) in &self.aliases {
            writeln!(s, "alias.{alias} = {target}").unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Format(format!("manifest: {msg}"));
        let mut m = DatasetManifest {
            version: 0,
            width: 0,
            height: 0,
            frames: 0,
            time_step: 0.0,
            buffers: Vec::new(),
            aliases: Vec::new(),
        };
        let mut format_seen = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed line {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<u64>().map_err(|_| bad(format!("{k}: {v:?}")));
            match k {
                "format" if v == FORMAT => format_seen = true,
                "format" => return Err(bad(format!("unknown format {v:?}"))),
                "version" => m.version = num(v)? as u32,
                "width" => m.width = num(v)? as u32,
                "height" => m.height = num(v)? as u32,
                "frames" => m.frames = num(v)? as usize,
                "time_step" => {
                    m.time_step = v.parse().map_err(|_| bad(format!("time_step {v:?}")))?
                }
                "buffers" => m.buffers = v.split(',').map(|b| b.trim().to_string()).collect(),
                _ => match k.strip_prefix("alias.") {
                    Some(alias) => m.aliases.push((alias.to_string(), v.to_string())),
                    None => return Err(bad(format!("unknown key {k:?}"))),
                },
            }
        }
        if !format_seen || m.version != 1 {
            return Err(bad("missing format tag or unsupported version".into()));
        }
        Ok(m)
    }
}

pub fn frame_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("frame_{index:05}"))
}

/// Writes a sequence. Fails on an existing non-empty directory unless
/// `overwrite` is set, in which case the directory is cleared first.
pub fn write_dataset(seq: &[RenderedFrame], dir: impl AsRef<Path>, overwrite: bool) -> Result<()> {
    let dir = dir.as_ref();
    let manifest = DatasetManifest::for_sequence(seq)?;
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        if !overwrite {
            return Err(Error::InvalidArgument(format!(
                "{} exists and is not empty",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    for (i, frame) in seq.iter().enumerate() {
        let fd = frame_dir(dir, i);
        fs::create_dir_all(&fd)?;
        write_plane(fd.join("color.pfex"), &frame.color)?;
        for (name, plane) in frame.gbuffer.planes() {
            write_plane(fd.join(format!("{name}.pfex")), plane)?;
        }
    }
    fs::write(dir.join("manifest"), manifest.to_text())?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub frames: Vec<RenderedFrame>,
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let frames = (0..manifest.frames)
        .map(|i| read_frame(dir, &manifest, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { manifest, frames })
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    DatasetManifest::parse(&fs::read_to_string(dir.as_ref().join("manifest"))?)
}

/// One frame of a dataset, checked against its manifest.
pub fn read_frame(dir: impl AsRef<Path>, manifest: &DatasetManifest, i: usize) -> Result<RenderedFrame> {
    if i >= manifest.frames {
        return Err(Error::InvalidArgument(format!("frame {i} beyond the {} in the dataset", manifest.frames)));
    }
    let fd = frame_dir(dir.as_ref(), i);
    let color = read_plane(fd.join("color.pfex"))?;
    let planes = GBUFFER_NAMES
        .iter()
        .map(|n| read_plane(fd.join(format!("{n}.pfex"))))
        .collect::<Result<Vec<_>>>()?;
    let gbuffer = GBufferSet::from_planes(planes)?;
    color.check_same_size(&gbuffer.depth, "color vs G-buffer")?;
    if color.width() != manifest.width || color.height() != manifest.height {
        return Err(Error::Format(format!("frame {i} size disagrees with manifest")));
    }
    Ok(RenderedFrame {
        time: i as f64 * manifest.time_step,
        color,
        gbuffer,
    })
}
