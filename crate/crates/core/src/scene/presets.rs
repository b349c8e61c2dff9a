//! Ready-made scenes used by the examples, benchmarks and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    BackdropSpec, CameraSpec, LayerSpec, LightSpec, MaterialSpec, SceneSpec, SpriteShape,
    SpriteSpec,
};

fn sprite(size: [f64; 2], pos: [f64; 2], vel: [f64; 2], depth: f64, shape: SpriteShape, base: [f64; 3]) -> SpriteSpec {
    SpriteSpec {
        size,
        x: vec![pos[0], vel[0]],
        y: vec![pos[1], vel[1]],
        depth,
        shape,
        material: MaterialSpec {
            base_color: base,
            texture: 0.2,
            frequency: 0.5,
            metallic: 0.2,
            specular: 0.6,
            roughness: 0.3,
            bump: 0.0,
        },
    }
}

/// A textured backdrop, one static panel and one sprite crossing it at
/// 4 px per frame: every kind of disocclusion appears within a few frames.
pub fn disocclusion_scene(width: u32, height: u32, seed: u64) -> SceneSpec {
    let (w, h) = (width as f64, height as f64);
    SceneSpec {
        resolution: [width, height],
        frames: 9,
        seed,
        backdrop: BackdropSpec::default(),
        layers: vec![LayerSpec {
            rect: [0.55 * w, 0.15 * h, 0.3 * w, 0.35 * h],
            depth: 44.0,
            material: MaterialSpec {
                base_color: [0.7, 0.45, 0.3],
                texture: 0.2,
                bump: 0.3,
                ..MaterialSpec::default()
            },
        }],
        sprites: vec![sprite(
            [0.22 * h, 0.22 * h],
            [0.2 * w, 0.45 * h],
            [4.0, 0.0],
            42.0,
            SpriteShape::Ellipse,
            [0.2, 0.35, 0.8],
        )],
        light: LightSpec::default(),
        camera: CameraSpec::default(),
    }
}

/// Scene `index` (0..5) of the fixed evaluation corpus. Static camera, one or
/// two sprites with integer half-step motion.
pub fn corpus_scene(index: usize, width: u32, height: u32) -> SceneSpec {
    let (w, h) = (width as f64, height as f64);
    let s = 0.2 * h;
    let sprites = match index % 5 {
        0 => vec![sprite([s, s], [0.2 * w, 0.4 * h], [4.0, 0.0], 44.0, SpriteShape::Ellipse, [0.2, 0.4, 0.85])],
        1 => vec![sprite([1.2 * s, 0.8 * s], [0.7 * w, 0.3 * h], [-4.0, 2.0], 45.0, SpriteShape::Rect, [0.85, 0.3, 0.25])],
        2 => vec![
            sprite([s, s], [0.15 * w, 0.15 * h], [2.0, 2.0], 43.0, SpriteShape::Ellipse, [0.9, 0.8, 0.2]),
            sprite([0.8 * s, 1.1 * s], [0.7 * w, 0.55 * h], [-2.0, 0.0], 46.0, SpriteShape::Rect, [0.3, 0.8, 0.4]),
        ],
        3 => vec![sprite([1.1 * s, 1.1 * s], [0.45 * w, 0.65 * h], [0.0, -4.0], 44.0, SpriteShape::Ellipse, [0.75, 0.3, 0.8])],
        _ => vec![sprite([0.9 * s, 0.9 * s], [0.1 * w, 0.2 * h], [4.0, 4.0], 45.0, SpriteShape::Ellipse, [0.95, 0.55, 0.15])],
    };
    let layers = if index % 5 == 3 {
        vec![LayerSpec {
            rect: [0.1 * w, 0.1 * h, 0.25 * w, 0.3 * h],
            depth: 47.0,
            material: MaterialSpec {
                base_color: [0.35, 0.35, 0.6],
                ..MaterialSpec::default()
            },
        }]
    } else {
        Vec::new()
    };
    SceneSpec {
        resolution: [width, height],
        frames: 9,
        seed: 100 + index as u64,
        backdrop: BackdropSpec::default(),
        layers,
        sprites,
        light: LightSpec {
            angle: 30.0 + 20.0 * index as f64,
            shadow_scale: 1.0,
        },
        camera: CameraSpec::default(),
    }
}

/// Randomized scenes for training and held-out evaluation. Different `seed`
/// values give disjoint layouts, materials and trajectories.
pub fn random_scene(seed: u64, width: u32, height: u32, frames: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_5CE4E);
    let (w, h) = (width as f64, height as f64);
    let speeds = [-10.0, -8.0, -6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0, 8.0, 10.0];
    let color = |rng: &mut ChaCha8Rng| {
        [
            rng.random_range(0.15..0.95),
            rng.random_range(0.15..0.95),
            rng.random_range(0.15..0.95),
        ]
    };
    let backdrop = BackdropSpec {
        depth: 50.0,
        material: MaterialSpec {
            base_color: color(&mut rng),
            texture: rng.random_range(0.1..0.3),
            frequency: rng.random_range(0.2..0.5),
            metallic: rng.random_range(0.0..0.5),
            specular: rng.random_range(0.2..0.8),
            roughness: rng.random_range(0.2..0.9),
            bump: rng.random_range(0.2..0.8),
        },
    };
    let n_sprites = rng.random_range(1..=2);
    let mut sprites = Vec::new();
    for _ in 0..n_sprites {
        let size = [rng.random_range(0.15..0.3) * h, rng.random_range(0.15..0.3) * h];
        let mut vel = [speeds[rng.random_range(0..speeds.len())], speeds[rng.random_range(0..speeds.len())]];
        if vel == [0.0, 0.0] {
            vel[0] = 4.0;
        }
        let span = frames as f64 * super::TIME_STEP;
        // keep the sprite on screen over the whole sequence
        let lo = |v: f64, extent: f64, s: f64| if v < 0.0 { -v * span + 2.0 } else { 2.0 }.min(extent - s - 2.0);
        let hi = |v: f64, extent: f64, s: f64| (extent - s - 2.0 - v.max(0.0) * span).max(lo(v, extent, s) + 1.0);
        let pos = [
            rng.random_range(lo(vel[0], w, size[0])..hi(vel[0], w, size[0])),
            rng.random_range(lo(vel[1], h, size[1])..hi(vel[1], h, size[1])),
        ];
        let shape = if rng.random_bool(0.5) {
            SpriteShape::Ellipse
        } else {
            SpriteShape::Rect
        };
        let mut sp = sprite(size, pos, vel, rng.random_range(40.0..47.0), shape, color(&mut rng));
        sp.material.texture = rng.random_range(0.05..0.3);
        sprites.push(sp);
    }
    SceneSpec {
        resolution: [width, height],
        frames,
        seed,
        backdrop,
        layers: Vec::new(),
        sprites,
        light: LightSpec {
            angle: rng.random_range(0.0..360.0),
            shadow_scale: 1.0,
        },
        camera: CameraSpec::default(),
    }
}
