use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Per-frame geometry and material buffers.
///
/// `motion_vector` holds, at each pixel's current location, the screen-space
/// displacement (in pixels) of the visible surface over one rendered frame
/// interval, i.e. from `t - 1` to `t`. It is all-zero on the first frame.
#[derive(Clone, Debug, PartialEq)]
pub struct GBufferSet {
    pub base_color: ImagePlane,
    pub metallic: ImagePlane,
    pub specular: ImagePlane,
    pub roughness: ImagePlane,
    pub depth: ImagePlane,
    pub world_normal: ImagePlane,
    pub stencil: ImagePlane,
    pub motion_vector: ImagePlane,
    pub shadow_mask: ImagePlane,
    pub nov: ImagePlane,
}

/// File stems of the G-buffer planes, in on-disk order.
pub const GBUFFER_NAMES: [&str; 10] = [
    "base_color",
    "metallic",
    "specular",
    "roughness",
    "depth",
    "world_normal",
    "stencil",
    "motion_vector",
    "shadow_mask",
    "nov",
];

const CHANNELS: [u32; 10] = [3, 1, 1, 1, 1, 3, 1, 2, 1, 1];

impl GBufferSet {
    pub fn width(&self) -> u32 {
        self.depth.width()
    }

    pub fn height(&self) -> u32 {
        self.depth.height()
    }

    pub fn planes(&self) -> [(&'static str, &ImagePlane); 10] {
        [
            (GBUFFER_NAMES[0], &self.base_color),
            (GBUFFER_NAMES[1], &self.metallic),
            (GBUFFER_NAMES[2], &self.specular),
            (GBUFFER_NAMES[3], &self.roughness),
            (GBUFFER_NAMES[4], &self.depth),
            (GBUFFER_NAMES[5], &self.world_normal),
            (GBUFFER_NAMES[6], &self.stencil),
            (GBUFFER_NAMES[7], &self.motion_vector),
            (GBUFFER_NAMES[8], &self.shadow_mask),
            (GBUFFER_NAMES[9], &self.nov),
        ]
    }

    /// Assembles a set from planes given in [`GBUFFER_NAMES`] order.
    pub fn from_planes(planes: Vec<ImagePlane>) -> Result<Self> {
        if planes.len() != GBUFFER_NAMES.len() {
            return Err(Error::Format(format!(
                "expected {} G-buffer planes, got {}",
                GBUFFER_NAMES.len(),
                planes.len()
            )));
        }
        for ((p, name), &ch) in planes.iter().zip(GBUFFER_NAMES).zip(&CHANNELS) {
            p.check_channels(ch, name)?;
            p.check_same_size(&planes[4], name)?;
        }
        let mut it = planes.into_iter();
        let mut next = || it.next().unwrap();
        Ok(Self {
            base_color: next(),
            metallic: next(),
            specular: next(),
            roughness: next(),
            depth: next(),
            world_normal: next(),
            stencil: next(),
            motion_vector: next(),
            shadow_mask: next(),
            nov: next(),
        })
    }

    /// Per-pixel material response `Albedo + Specular * 0.08 * (1 - Metallic)`.
    pub fn material_response(&self) -> ImagePlane {
        let n = self.depth.pixel_count();
        let mut out = Vec::with_capacity(n * 3);
        for p in 0..n {
            let spec = self.specular.data()[p] * 0.08 * (1.0 - self.metallic.data()[p]);
            out.extend(self.base_color.pixel_at(p).iter().map(|a| a + spec));
        }
        ImagePlane::from_vec(self.width(), self.height(), 3, out).expect("sizes checked")
    }

    /// The buffers a renderer can produce cheaply for a frame that is about
    /// to be extrapolated. Shading results (color, shadow mask) are withheld.
    pub fn target_view(&self) -> TargetGBuffer<'_> {
        TargetGBuffer { g: self }
    }
}

/// Read-only view of a target frame's geometry.
///
/// The extrapolation path only sees targets through this type, so it cannot
/// read the target's shadow mask (which would leak ground truth).
#[derive(Clone, Copy, Debug)]
pub struct TargetGBuffer<'a> {
    g: &'a GBufferSet,
}

impl<'a> TargetGBuffer<'a> {
    pub fn width(&self) -> u32 {
        self.g.width()
    }
    pub fn height(&self) -> u32 {
        self.g.height()
    }
    pub fn base_color(&self) -> &'a ImagePlane {
        &self.g.base_color
    }
    pub fn metallic(&self) -> &'a ImagePlane {
        &self.g.metallic
    }
    pub fn specular(&self) -> &'a ImagePlane {
        &self.g.specular
    }
    pub fn roughness(&self) -> &'a ImagePlane {
        &self.g.roughness
    }
    pub fn depth(&self) -> &'a ImagePlane {
        &self.g.depth
    }
    pub fn world_normal(&self) -> &'a ImagePlane {
        &self.g.world_normal
    }
    pub fn stencil(&self) -> &'a ImagePlane {
        &self.g.stencil
    }
    pub fn motion_vector(&self) -> &'a ImagePlane {
        &self.g.motion_vector
    }
    pub fn nov(&self) -> &'a ImagePlane {
        &self.g.nov
    }
    pub fn material_response(&self) -> ImagePlane {
        self.g.material_response()
    }
}
