//! Deterministic 2.5D layered renderer.
//!
//! A scene is an infinite textured backdrop, optional static rectangles and a
//! set of moving sprites, all at constant depth, composited nearest-first.
//! Sprites cast hard shadows onto anything behind them: the silhouette is
//! translated along the light direction by the depth gap to the receiver.
//!
//! Shading is `color = irradiance * (1 - 0.5 * shadow) * response` with
//! `response = albedo + specular * 0.08 * (1 - metallic)`, so dividing by the
//! material response recovers the (shadowed) irradiance exactly.
//!
//! Frames are emitted every half frame interval; integer times are the
//! "rendered" frames and half-integer times serve as ground truth.

mod dataset;
mod gbuffer;
mod material;
pub mod presets;

pub use dataset::{frame_dir, read_dataset, read_frame, read_manifest, write_dataset, Dataset, DatasetManifest};
pub use gbuffer::{GBufferSet, TargetGBuffer, GBUFFER_NAMES};
pub use material::{Material, MaterialSpec, Surface};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Attenuation applied inside cast shadows.
pub const SHADOW_ATTENUATION: f32 = 0.5;

/// Emitted frames are spaced this far apart, in rendered-frame units.
pub const TIME_STEP: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpriteShape {
    #[default]
    Ellipse,
    Rect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    /// `[x, y, w, h]` in world pixels.
    pub rect: [f64; 4],
    pub depth: f64,
    #[serde(default)]
    pub material: MaterialSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpriteSpec {
    /// `[w, h]` in pixels.
    pub size: [f64; 2],
    /// Polynomial coefficients of the top-left x coordinate in `t`
    /// (rendered frames), lowest order first.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub depth: f64,
    #[serde(default)]
    pub shape: SpriteShape,
    #[serde(default)]
    pub material: MaterialSpec,
}

impl SpriteSpec {
    pub fn position(&self, t: f64) -> [f64; 2] {
        [poly(&self.x, t), poly(&self.y, t)]
    }

    /// Whether the sprite-local point `(lx, ly)` is covered.
    #[inline]
    pub fn covers(&self, lx: f64, ly: f64) -> bool {
        let [w, h] = self.size;
        match self.shape {
            SpriteShape::Rect => lx >= 0.0 && lx < w && ly >= 0.0 && ly < h,
            SpriteShape::Ellipse => {
                let dx = (lx - w / 2.0) / (w / 2.0);
                let dy = (ly - h / 2.0) / (h / 2.0);
                dx * dx + dy * dy < 1.0
            }
        }
    }
}

fn poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackdropSpec {
    pub depth: f64,
    pub material: MaterialSpec,
}

impl Default for BackdropSpec {
    fn default() -> Self {
        Self {
            depth: 50.0,
            material: MaterialSpec {
                base_color: [0.45, 0.5, 0.4],
                bump: 0.6,
                ..MaterialSpec::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightSpec {
    /// Screen-space direction in which shadows are cast, degrees.
    pub angle: f64,
    /// Shadow offset in pixels per unit of depth gap.
    pub shadow_scale: f64,
}

impl Default for LightSpec {
    fn default() -> Self {
        Self {
            angle: 45.0,
            shadow_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    /// Screen-space velocity of static content, pixels per rendered frame.
    pub pan: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// `[width, height]`.
    pub resolution: [u32; 2],
    /// Number of emitted frames (half-step timesteps).
    pub frames: usize,
    pub seed: u64,
    pub backdrop: BackdropSpec,
    #[serde(rename = "layer")]
    pub layers: Vec<LayerSpec>,
    #[serde(rename = "sprite")]
    pub sprites: Vec<SpriteSpec>,
    pub light: LightSpec,
    pub camera: CameraSpec,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            resolution: [128, 96],
            frames: 9,
            seed: 1,
            backdrop: BackdropSpec::default(),
            layers: Vec::new(),
            sprites: Vec::new(),
            light: LightSpec::default(),
            camera: CameraSpec::default(),
        }
    }
}

impl SceneSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SceneSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn width(&self) -> u32 {
        self.resolution[0]
    }

    pub fn height(&self) -> u32 {
        self.resolution[1]
    }

    pub fn times(&self) -> impl Iterator<Item = f64> {
        (0..self.frames).map(|i| i as f64 * TIME_STEP)
    }

    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.resolution;
        if w < 32 || h < 32 {
            return Err(Error::InvalidArgument(format!(
                "resolution {w}x{h} below 32x32"
            )));
        }
        if self.frames < 3 {
            return Err(Error::InvalidArgument(format!(
                "need at least 3 frames, got {}",
                self.frames
            )));
        }
        let depths = std::iter::once(self.backdrop.depth)
            .chain(self.layers.iter().map(|l| l.depth))
            .chain(self.sprites.iter().map(|s| s.depth));
        for d in depths {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidArgument(format!("depth {d} must be > 0")));
            }
        }
        let (wf, hf) = (w as f64, h as f64);
        for (i, s) in self.sprites.iter().enumerate() {
            if !(s.size[0] > 0.0 && s.size[1] > 0.0) {
                return Err(Error::InvalidArgument(format!("sprite {i} has empty size")));
            }
            if s.x.is_empty() || s.y.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "sprite {i} has no trajectory coefficients"
                )));
            }
            // positions are also evaluated one interval before each frame
            for t in self.times().flat_map(|t| [t, t - 1.0]) {
                let [x, y] = s.position(t);
                let [sx, sy] = self.screen_offset(t);
                let (x, y) = (x + sx, y + sy);
                if !(x.is_finite() && y.is_finite())
                    || x < -2.0 * wf
                    || x > 3.0 * wf
                    || y < -2.0 * hf
                    || y > 3.0 * hf
                {
                    return Err(Error::Degenerate(format!(
                        "sprite {i} leaves the frame margin at t={t} ({x:.1}, {y:.1})"
                    )));
                }
            }
        }
        Ok(())
    }

    fn screen_offset(&self, t: f64) -> [f64; 2] {
        [self.camera.pan[0] * t, self.camera.pan[1] * t]
    }
}

/// One emitted frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    /// Time in rendered-frame units (0, 0.5, 1, ...).
    pub time: f64,
    pub color: ImagePlane,
    pub gbuffer: GBufferSet,
}

/// A scene with its materials instantiated.
pub struct Renderer {
    spec: SceneSpec,
    backdrop: Material,
    layers: Vec<Material>,
    sprites: Vec<Material>,
    light: [f64; 3],
    shadow_dir: [f64; 2],
}

const AMBIENT: f64 = 0.3;
const DOME: f64 = 0.8;

#[derive(Clone, Copy)]
enum Hit {
    Backdrop,
    Layer(usize),
    Sprite(usize),
}

impl Renderer {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let mix = |i: u64| spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
        let backdrop = Material::new(spec.backdrop.material.clone(), mix(0));
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| Material::new(l.material.clone(), mix(1 + i as u64)))
            .collect();
        let sprites = spec
            .sprites
            .iter()
            .enumerate()
            .map(|(i, s)| Material::new(s.material.clone(), mix(1000 + i as u64)))
            .collect();
        let a = spec.light.angle.to_radians();
        let (c, s) = (a.cos(), a.sin());
        let l = [-0.8 * c, -0.8 * s, 1.0];
        let norm = (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt();
        let cheb = c.abs().max(s.abs());
        Ok(Self {
            light: [l[0] / norm, l[1] / norm, l[2] / norm],
            shadow_dir: [c / cheb, s / cheb],
            spec,
            backdrop,
            layers,
            sprites,
        })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    /// Screen-space shadow displacement for a given depth gap.
    pub fn shadow_offset(&self, gap: f64) -> [f64; 2] {
        let k = gap * self.spec.light.shadow_scale;
        [k * self.shadow_dir[0], k * self.shadow_dir[1]]
    }

    fn sprite_screen_pos(&self, i: usize, t: f64) -> [f64; 2] {
        let [x, y] = self.spec.sprites[i].position(t);
        let [ox, oy] = self.spec.screen_offset(t);
        [x + ox, y + oy]
    }

    fn hit_depth(&self, hit: Hit) -> f64 {
        match hit {
            Hit::Backdrop => self.spec.backdrop.depth,
            Hit::Layer(i) => self.spec.layers[i].depth,
            Hit::Sprite(i) => self.spec.sprites[i].depth,
        }
    }

    fn visible(&self, cx: f64, cy: f64, t: f64, sprite_pos: &[[f64; 2]]) -> Hit {
        let [ox, oy] = self.spec.screen_offset(t);
        let (wx, wy) = (cx - ox, cy - oy);
        let mut best = Hit::Backdrop;
        let mut best_depth = self.spec.backdrop.depth;
        for (i, l) in self.spec.layers.iter().enumerate() {
            let [x, y, w, h] = l.rect;
            if wx >= x && wx < x + w && wy >= y && wy < y + h && l.depth < best_depth {
                best = Hit::Layer(i);
                best_depth = l.depth;
            }
        }
        for (i, s) in self.spec.sprites.iter().enumerate() {
            let [px, py] = sprite_pos[i];
            if s.depth < best_depth && s.covers(cx - px, cy - py) {
                best = Hit::Sprite(i);
                best_depth = s.depth;
            }
        }
        best
    }

    /// Renders the frame at time `t` (rendered-frame units).
    pub fn render_frame(&self, t: f64) -> RenderedFrame {
        let (w, h) = (self.spec.width(), self.spec.height());
        let n = w as usize * h as usize;
        let pos: Vec<[f64; 2]> = (0..self.spec.sprites.len())
            .map(|i| self.sprite_screen_pos(i, t))
            .collect();
        let prev: Vec<[f64; 2]> = (0..self.spec.sprites.len())
            .map(|i| self.sprite_screen_pos(i, t - 1.0))
            .collect();
        let pan = self.spec.camera.pan;
        let [ox, oy] = self.spec.screen_offset(t);

        let mut color = vec![0f32; n * 3];
        let mut base = vec![0f32; n * 3];
        let mut metallic = vec![0f32; n];
        let mut specular = vec![0f32; n];
        let mut roughness = vec![0f32; n];
        let mut depth = vec![0f32; n];
        let mut normal = vec![0f32; n * 3];
        let mut stencil = vec![0f32; n];
        let mut mv = vec![0f32; n * 2];
        let mut shadow = vec![0f32; n];
        let mut nov = vec![0f32; n];

        for y in 0..h {
            for x in 0..w {
                let p = y as usize * w as usize + x as usize;
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let hit = self.visible(cx, cy, t, &pos);
                let d = self.hit_depth(hit);

                let (surf, dome, motion) = match hit {
                    Hit::Backdrop => (
                        self.backdrop.surface(cx - ox, cy - oy),
                        [0.0, 0.0],
                        pan,
                    ),
                    Hit::Layer(i) => {
                        let [lx, ly, _, _] = self.spec.layers[i].rect;
                        (
                            self.layers[i].surface(cx - ox - lx, cy - oy - ly),
                            [0.0, 0.0],
                            pan,
                        )
                    }
                    Hit::Sprite(i) => {
                        let s = &self.spec.sprites[i];
                        let (lx, ly) = (cx - pos[i][0], cy - pos[i][1]);
                        let dome = match s.shape {
                            SpriteShape::Ellipse => [
                                DOME * (lx - s.size[0] / 2.0) / (s.size[0] / 2.0),
                                DOME * (ly - s.size[1] / 2.0) / (s.size[1] / 2.0),
                            ],
                            SpriteShape::Rect => [0.0, 0.0],
                        };
                        stencil[p] = 1.0;
                        (
                            self.sprites[i].surface(lx, ly),
                            dome,
                            [pos[i][0] - prev[i][0], pos[i][1] - prev[i][1]],
                        )
                    }
                };

                let nraw = [dome[0] - surf.slope[0], dome[1] - surf.slope[1], 1.0];
                let nl = (nraw[0] * nraw[0] + nraw[1] * nraw[1] + 1.0).sqrt();
                let n3 = [nraw[0] / nl, nraw[1] / nl, nraw[2] / nl];
                let ndotl = n3[0] * self.light[0] + n3[1] * self.light[1] + n3[2] * self.light[2];
                let irradiance = AMBIENT + (1.0 - AMBIENT) * ndotl.max(0.0);

                let mut shadowed = false;
                for (j, s) in self.spec.sprites.iter().enumerate() {
                    if s.depth < d {
                        let [sx, sy] = self.shadow_offset(d - s.depth);
                        if s.covers(cx - sx - pos[j][0], cy - sy - pos[j][1]) {
                            shadowed = true;
                            break;
                        }
                    }
                }
                let s_val = if shadowed { 1.0f32 } else { 0.0 };
                let spec_term = surf.specular * 0.08 * (1.0 - surf.metallic);
                let irr = irradiance as f32 * (1.0 - SHADOW_ATTENUATION * s_val);
                for c in 0..3 {
                    let response = (surf.albedo[c] + spec_term) as f32;
                    color[p * 3 + c] = irr * response;
                    base[p * 3 + c] = surf.albedo[c] as f32;
                    normal[p * 3 + c] = n3[c] as f32;
                }
                metallic[p] = surf.metallic as f32;
                specular[p] = surf.specular as f32;
                roughness[p] = surf.roughness as f32;
                depth[p] = d as f32;
                shadow[p] = s_val;
                nov[p] = n3[2].max(0.0) as f32;
                if t > 0.0 {
                    mv[p * 2] = motion[0] as f32;
                    mv[p * 2 + 1] = motion[1] as f32;
                }
            }
        }

        let plane = |c: u32, v: Vec<f32>| ImagePlane::from_vec(w, h, c, v).expect("sized");
        RenderedFrame {
            time: t,
            color: plane(3, color),
            gbuffer: GBufferSet {
                base_color: plane(3, base),
                metallic: plane(1, metallic),
                specular: plane(1, specular),
                roughness: plane(1, roughness),
                depth: plane(1, depth),
                world_normal: plane(3, normal),
                stencil: plane(1, stencil),
                motion_vector: plane(2, mv),
                shadow_mask: plane(1, shadow),
                nov: plane(1, nov),
            },
        }
    }

    /// Binary silhouette of sprite `i` at time `t`.
    pub fn silhouette(&self, i: usize, t: f64) -> ImagePlane {
        let [px, py] = self.sprite_screen_pos(i, t);
        let s = &self.spec.sprites[i];
        crate::image::mask_from_fn(self.spec.width(), self.spec.height(), |x, y| {
            s.covers(x as f64 + 0.5 - px, y as f64 + 0.5 - py)
        })
    }
}

/// Renders every emitted frame of a scene. Frames are rendered in parallel;
/// the result is ordered by time and independent of scheduling.
pub fn render_sequence(spec: &SceneSpec) -> Result<Vec<RenderedFrame>> {
    let renderer = Renderer::new(spec.clone())?;
    let times: Vec<f64> = spec.times().collect();
    Ok(times.par_iter().map(|&t| renderer.render_frame(t)).collect())
}
