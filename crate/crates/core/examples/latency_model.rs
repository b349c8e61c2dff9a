//! Presentation latency of interpolation and extrapolation at 90 Hz.

use patchex::latency::{jnd_report, presentation_latency, Mode, TimingScenario};

fn main() -> patchex::Result<()> {
    let d = 1000.0 / 90.0;
    let render: Vec<f64> = (0..8).map(|i| d * (1.05 + 0.1 * i as f64)).collect();
    let s = TimingScenario::from_refresh_hz(90.0, render, 2.0, 2.0);
    for mode in [Mode::Interp, Mode::Extrap] {
        let lat = presentation_latency(&s, mode)?;
        let ms: Vec<f64> = lat.iter().map(|f| f.latency_ms).collect();
        println!("{mode:?}");
        for f in &lat {
            println!("  R = {:6.2} ms  P = {:6.2} ms  feasible {}", f.render_ms, f.latency_ms, f.feasible);
        }
        println!("  above 5 ms: {:.0}%", 100.0 * jnd_report(&ms, 5.0));
    }
    Ok(())
}
