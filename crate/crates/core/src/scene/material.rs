use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialSpec {
    pub base_color: [f64; 3],
    /// Amplitude of the procedural albedo pattern.
    pub texture: f64,
    /// Spatial frequency scale of the pattern (radians per pixel).
    pub frequency: f64,
    pub metallic: f64,
    pub specular: f64,
    pub roughness: f64,
    /// Height-field amplitude for normal perturbation.
    pub bump: f64,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self {
            base_color: [0.5, 0.5, 0.5],
            texture: 0.25,
            frequency: 0.35,
            metallic: 0.0,
            specular: 0.5,
            roughness: 0.5,
            bump: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
}

impl Wave {
    #[inline]
    fn eval(&self, u: f64, v: f64) -> f64 {
        (self.fx * u + self.fy * v + self.phase).sin()
    }
}

/// A material with its procedural pattern instantiated from a seed.
#[derive(Clone, Debug)]
pub struct Material {
    spec: MaterialSpec,
    albedo_waves: [[Wave; 3]; 3],
    bump_waves: [Wave; 2],
}

/// What a surface point looks like.
#[derive(Clone, Copy, Debug)]
pub struct Surface {
    pub albedo: [f64; 3],
    pub metallic: f64,
    pub specular: f64,
    pub roughness: f64,
    /// Tangent-space slope of the height field.
    pub slope: [f64; 2],
}

impl Material {
    pub fn new(spec: MaterialSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = spec.frequency;
        let mut wave = |scale: f64| {
            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = f * scale * rng.random_range(0.6..1.4);
            Wave {
                fx: freq * angle.cos(),
                fy: freq * angle.sin(),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            }
        };
        let albedo_waves = [
            [wave(1.0), wave(0.5), wave(1.7)],
            [wave(1.0), wave(0.5), wave(1.7)],
            [wave(1.0), wave(0.5), wave(1.7)],
        ];
        let bump_waves = [wave(0.4), wave(0.4)];
        Self {
            spec,
            albedo_waves,
            bump_waves,
        }
    }

    pub fn spec(&self) -> &MaterialSpec {
        &self.spec
    }

    /// Evaluates the material at local coordinates `(u, v)` in pixels.
    pub fn surface(&self, u: f64, v: f64) -> Surface {
        let mut albedo = [0.0; 3];
        for (c, a) in albedo.iter_mut().enumerate() {
            let w = &self.albedo_waves[c];
            let pattern = (w[0].eval(u, v) + 0.6 * w[1].eval(u, v) + 0.4 * w[2].eval(u, v)) / 2.0;
            *a = (self.spec.base_color[c] + self.spec.texture * pattern).clamp(0.05, 1.0);
        }
        // height h = bump * (sin(w0) + sin(w1)); slope = grad h
        let mut slope = [0.0; 2];
        if self.spec.bump != 0.0 {
            for w in &self.bump_waves {
                let d = (w.fx * u + w.fy * v + w.phase).cos() * self.spec.bump;
                slope[0] += d * w.fx;
                slope[1] += d * w.fy;
            }
        }
        Surface {
            albedo,
            metallic: self.spec.metallic.clamp(0.0, 1.0),
            specular: self.spec.specular.clamp(0.0, 1.0),
            roughness: self.spec.roughness.clamp(0.0, 1.0),
            slope,
        }
    }
}
