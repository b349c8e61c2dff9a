//! Offline variation analysis of a corpus scene and the per-frame
//! foreground / near / far split.

use patchex::scene::{presets, render_sequence};
use patchex::segment::{offline_segment, segment_frame, SegmentationParams};

fn main() -> patchex::Result<()> {
    let seq = render_sequence(&presets::corpus_scene(2, 128, 96))?;
    let colors: Vec<_> = seq.iter().map(|f| f.color.clone()).collect();
    let off = offline_segment(&colors)?;
    println!(
        "otsu threshold {:.4}, {} high-variation px, rect {:?}",
        off.threshold,
        off.high_mask.sum(),
        off.rect
    );
    let p = SegmentationParams::default();
    for (i, f) in seq.iter().enumerate().skip(1).step_by(2) {
        let (masks, rects) = segment_frame(&f.gbuffer.stencil, &f.gbuffer.motion_vector, &p)?;
        println!("frame {i}: {} rects, fg/near/far = {:?}", rects.len(), masks.counts());
    }
    Ok(())
}
