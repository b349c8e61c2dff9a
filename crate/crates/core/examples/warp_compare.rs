//! Plain backward warp against the G-buffer guided warp on one target
//! frame, scored against the rendered mid-frame.

use patchex::metrics::psnr;
use patchex::pipeline::History;
use patchex::scene::{presets, render_sequence};
use patchex::warp::{backward_warp_clamped, detect_invalid, gbuffer_guided_warp, warp_attributes, GuidedWarpParams, InvalidThresholds};

fn main() -> patchex::Result<()> {
    let seq = render_sequence(&presets::disocclusion_scene(128, 96, 4))?;
    let hist = History::from_sequence(&seq, 5)?;
    let mv = hist.target.motion_vector();
    let truth = &seq[5].color;

    let plain = backward_warp_clamped(&hist.cur.color, mv, 0.5)?;
    let (guided, _) = gbuffer_guided_warp(&hist.cur.color, &hist.cur.gbuffer, hist.target, mv, 0.5, &GuidedWarpParams::default())?;
    let attrs = warp_attributes(&hist.cur.gbuffer, mv, 0.5)?;
    let valid = detect_invalid(&attrs, hist.target, &InvalidThresholds::default())?;

    println!("plain warp   {:.2} dB", psnr(&plain, truth, 1.0)?);
    println!("guided warp  {:.2} dB", psnr(&guided.color, truth, 1.0)?);
    println!("invalid pixels: {}", valid.pixel_count() - valid.sum() as usize);
    Ok(())
}
