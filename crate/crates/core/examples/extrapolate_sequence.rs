//! Extrapolates every mid-frame of a rendered dataset and prints quality
//! against the rendered frames and the stage timing.
//!
//! cargo run --release --example extrapolate_sequence -- [checkpoint_dir] [out_dir]

use std::path::{Path, PathBuf};

use patchex::pipeline::{run_extrapolate, Models, PipelineConfig};
use patchex::scene::{presets, render_sequence, write_dataset};

fn main() -> patchex::Result<()> {
    let mut args = std::env::args().skip(1);
    let ckpt = args.next();
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/extrapolate_sequence".into()));
    let models = match ckpt {
        Some(d) => Models::load(Path::new(&d).join("fg.pxnn"), Path::new(&d).join("near.pxnn"))?,
        None => Models::fresh(0)?,
    };
    let data = out.join("dataset");
    write_dataset(&render_sequence(&presets::random_scene(1002, 128, 96, 13))?, &data, true)?;
    let run = run_extrapolate(&data, &models, &PipelineConfig::default(), &out)?;
    for q in &run.quality {
        println!("frame {:>2}: {:.2} dB, ssim {:.4}", q.frame_index, q.psnr_db, q.ssim);
    }
    print!("{}", run.timing_table());
    Ok(())
}
