//! Farneback flow between two past shadow masks, pushed half a step ahead
//! and compared with the rendered shadow and with holding the last mask.

use patchex::pipeline::{predict_shadow, History, PipelineConfig};
use patchex::scene::{presets, render_sequence};
use patchex::shadow::iou;

fn main() -> patchex::Result<()> {
    let seq = render_sequence(&presets::random_scene(1001, 128, 96, 9))?;
    let cfg = PipelineConfig::default();
    for t in [3, 5, 7] {
        let hist = History::from_sequence(&seq, t)?;
        let pred = predict_shadow(&hist, &cfg)?;
        let truth = &seq[t].gbuffer.shadow_mask;
        println!(
            "frame {t}: predicted IoU {:.3}, hold-last IoU {:.3}",
            iou(&pred, truth)?,
            iou(&hist.cur.gbuffer.shadow_mask, truth)?
        );
    }
    Ok(())
}
