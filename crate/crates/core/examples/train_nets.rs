//! Short training run of both inpainting networks on random scenes.
//!
//! cargo run --release --example train_nets -- [seconds_per_network] [out_dir]

use std::path::PathBuf;

use patchex::pipeline::{train_models, PipelineConfig};
use patchex::scene::{presets, render_sequence};

fn main() -> patchex::Result<()> {
    let mut args = std::env::args().skip(1);
    let secs: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(20.0);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/train_nets".into()));
    let seqs = (0..4)
        .map(|s| render_sequence(&presets::random_scene(s, 128, 96, 9)))
        .collect::<patchex::Result<Vec<_>>>()?;
    let mut cfg = PipelineConfig::default();
    cfg.train.crop = 32;
    cfg.train.batch = 8;
    cfg.train.time_budget_secs = Some(secs);
    let run = train_models(&seqs, &cfg)?;
    for (name, rep) in [("fg", run.fg.as_ref()), ("near", Some(&run.near))] {
        if let Some(r) = rep {
            println!(
                "{name}: {} steps, loss {:.4} -> {:.4}",
                r.steps,
                r.train_loss.first().unwrap_or(&f64::NAN),
                r.train_loss.last().unwrap_or(&f64::NAN)
            );
        }
    }
    std::fs::create_dir_all(&out)?;
    run.models.save(out.join("fg.pxnn"), out.join("near.pxnn"))?;
    println!("checkpoints in {}", out.display());
    Ok(())
}
