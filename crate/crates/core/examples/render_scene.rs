//! Renders the disocclusion scene and writes it as a dataset directory.
//!
//! cargo run --example render_scene -- [out_dir]

use std::path::PathBuf;

use patchex::image::write_png8;
use patchex::scene::{presets, render_sequence, write_dataset};

fn main() -> patchex::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/render_scene".into()));
    let spec = presets::disocclusion_scene(160, 96, 4);
    let seq = render_sequence(&spec)?;
    write_dataset(&seq, out.join("dataset"), true)?;
    for (i, f) in seq.iter().enumerate() {
        write_png8(out.join(format!("color_{i:02}.png")), &f.color)?;
    }
    let moving = seq[1].gbuffer.stencil.sum();
    println!("{} frames at {}x{}, {moving} sprite pixels in frame 1", seq.len(), spec.width(), spec.height());
    println!("written to {}", out.display());
    Ok(())
}
