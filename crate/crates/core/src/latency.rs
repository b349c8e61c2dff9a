//! Presentation latency of interpolation versus extrapolation under 2x
//! temporal supersampling.
//!
//! With refresh interval `D` and render times `R_i > D`, an interpolated
//! frame can only be shown once its successor exists, giving
//! `P_i = 3D - R_i` (needs `R_i + I <= 2D`). An extrapolated frame is shown
//! as soon as it is rendered, `P_i = 0` (needs `R_{i+1} + E <= 2D`).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Interp,
    Extrap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingScenario {
    /// Refresh interval `D`, ms.
    pub refresh_ms: f64,
    /// Per-frame render times `R_i`, ms.
    pub render_ms: Vec<f64>,
    /// Interpolation cost `I`, ms.
    pub interp_ms: f64,
    /// Extrapolation cost `E`, ms.
    pub extrap_ms: f64,
}

impl TimingScenario {
    pub fn from_refresh_hz(hz: f64, render_ms: Vec<f64>, interp_ms: f64, extrap_ms: f64) -> Self {
        Self {
            refresh_ms: 1000.0 / hz,
            render_ms,
            interp_ms,
            extrap_ms,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.refresh_ms;
        for (name, v) in [("refresh interval", d), ("interpolation time", self.interp_ms), ("extrapolation time", self.extrap_ms)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.render_ms.is_empty() {
            return Err(Error::InvalidArgument("render trace is empty".into()));
        }
        if let Some((i, r)) = self.render_ms.iter().enumerate().find(|(_, &r)| !(r > d && r.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "frame {i}: render time {r} ms must exceed the refresh interval {d} ms"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameLatency {
    pub index: usize,
    pub render_ms: f64,
    pub latency_ms: f64,
    pub feasible: bool,
}

/// Per-frame presentation latency. Infeasible frames are flagged, not
/// dropped. The last frame of an extrapolation trace has no successor and is
/// judged on its own render time.
pub fn presentation_latency(s: &TimingScenario, mode: Mode) -> Result<Vec<FrameLatency>> {
    s.validate()?;
    let d = s.refresh_ms;
    let r = &s.render_ms;
    Ok(r.iter()
        .enumerate()
        .map(|(i, &ri)| {
            let (latency_ms, feasible) = match mode {
                Mode::Interp => (3.0 * d - ri, ri + s.interp_ms <= 2.0 * d),
                Mode::Extrap => {
                    let next = r.get(i + 1).copied().unwrap_or(ri);
                    (0.0, next + s.extrap_ms <= 2.0 * d)
                }
            };
            FrameLatency {
                index: i,
                render_ms: ri,
                latency_ms,
                feasible,
            }
        })
        .collect())
}

/// Fraction of frames whose latency exceeds `threshold_ms`.
pub fn jnd_report(latencies: &[f64], threshold_ms: f64) -> f64 {
    if latencies.is_empty() {
        return 0.0;
    }
    latencies.iter().filter(|&&p| p > threshold_ms).count() as f64 / latencies.len() as f64
}

/// Render times, one per line or comma separated. `#` starts a comment and
/// a non-numeric first token (a CSV header) is skipped.
pub fn parse_render_trace(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            match tok.parse::<f64>() {
                Ok(v) => out.push(v),
                Err(_) if out.is_empty() && ln == 0 => {}
                Err(_) => return Err(Error::Format(format!("render trace line {}: bad number {tok:?}", ln + 1))),
            }
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct Row {
    frame: usize,
    render_ms: f64,
    interp_latency_ms: f64,
    interp_feasible: bool,
    extrap_latency_ms: f64,
    extrap_feasible: bool,
}

/// Both modes side by side, one CSV row per frame.
pub fn write_latency_csv(s: &TimingScenario, out: impl Write) -> Result<()> {
    let interp = presentation_latency(s, Mode::Interp)?;
    let extrap = presentation_latency(s, Mode::Extrap)?;
    let mut w = csv::Writer::from_writer(out);
    for (a, b) in interp.iter().zip(&extrap) {
        w.serialize(Row {
            frame: a.index,
            render_ms: a.render_ms,
            interp_latency_ms: a.latency_ms,
            interp_feasible: a.feasible,
            extrap_latency_ms: b.latency_ms,
            extrap_feasible: b.feasible,
        })
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}
