//! Synthetic image-domain patches with exact ground truth: a textured
//! background, glomerulus discs with a darker rim and speckled interior,
//! and scattered dark nuclei that are denser inside the glomeruli.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::annot::{rasterize, sample_count, sample_glomeruli, AnnotParams, Geometry, ShapeInstance, Sidecar};
use crate::error::{Error, Result};
use crate::image::{write_mask_png, write_png, Image, Mask};
use crate::rng;

/// Appearance of a phantom. Colors are 8-bit RGB; geometry (patch size,
/// glomerulus law, nucleus diameter) comes from [`AnnotParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomParams {
    pub background_rgb: [f32; 3],
    pub object_rgb: [f32; 3],
    pub nuclei_rgb: [f32; 3],
    /// Per-pixel noise std, 8-bit units.
    pub pixel_noise: f32,
    /// Fractional darkening of the glomerulus rim.
    pub ring_darkness: f32,
    pub ring_width: f32,
    /// Fraction of interior pixels darkened by speckle.
    pub speckle_density: f32,
    pub speckle_darkness: f32,
    /// Low-frequency value-noise texture.
    pub texture_octaves: u32,
    pub texture_scale: f32,
    pub texture_amplitude: f32,
    /// Nuclei per pixel outside glomeruli.
    pub nuclei_density: f32,
    /// Density multiplier inside glomeruli.
    pub nuclei_inside_factor: f32,
}

impl PhantomParams {
    /// PAS-like magenta stain.
    pub fn stain_a() -> Self {
        Self {
            background_rgb: [236.0, 206.0, 222.0],
            object_rgb: [196.0, 118.0, 168.0],
            nuclei_rgb: [72.0, 48.0, 120.0],
            pixel_noise: 6.0,
            ring_darkness: 0.25,
            ring_width: 2.0,
            speckle_density: 0.15,
            speckle_darkness: 0.2,
            texture_octaves: 3,
            texture_scale: 32.0,
            texture_amplitude: 12.0,
            nuclei_density: 0.0186,
            nuclei_inside_factor: 2.0,
        }
    }

    /// Same structure as [`PhantomParams::stain_a`] with different color means.
    pub fn stain_b() -> Self {
        Self {
            background_rgb: [228.0, 220.0, 196.0],
            object_rgb: [176.0, 146.0, 96.0],
            nuclei_rgb: [64.0, 62.0, 40.0],
            ..Self::stain_a()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let colors = self.background_rgb.iter().chain(&self.object_rgb).chain(&self.nuclei_rgb);
        if colors.clone().any(|c| !(0.0..=255.0).contains(c)) {
            return Err(Error::Config("phantom colors must lie in [0, 255]".into()));
        }
        let non_negative = [
            ("pixel_noise", self.pixel_noise),
            ("ring_width", self.ring_width),
            ("speckle_density", self.speckle_density),
            ("texture_scale", self.texture_scale),
            ("texture_amplitude", self.texture_amplitude),
            ("nuclei_density", self.nuclei_density),
            ("nuclei_inside_factor", self.nuclei_inside_factor),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("ring_darkness", self.ring_darkness), ("speckle_darkness", self.speckle_darkness)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self::stain_a()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomPatch {
    pub image: Image,
    pub gt_mask: Mask,
    pub shapes: Vec<ShapeInstance>,
}

/// Multi-octave bilinear value noise in roughly `[-1, 1]`.
fn value_noise(height: usize, width: usize, octaves: u32, scale: f32, rng: &mut impl Rng) -> Vec<f32> {
    let mut out = vec![0.0f32; height * width];
    let mut amp = 1.0f32;
    let mut norm = 0.0f32;
    for o in 0..octaves {
        let cell = (scale / (1u32 << o) as f32).max(1.0);
        let gw = (width as f32 / cell).ceil() as usize + 2;
        let gh = (height as f32 / cell).ceil() as usize + 2;
        let grid: Vec<f32> = (0..gw * gh).map(|_| rng.random::<f32>() * 2.0 - 1.0).collect();
        for y in 0..height {
            let fy = y as f32 / cell;
            let (y0, ty) = (fy.floor() as usize, fy.fract());
            for x in 0..width {
                let fx = x as f32 / cell;
                let (x0, tx) = (fx.floor() as usize, fx.fract());
                let g = |yy: usize, xx: usize| grid[yy * gw + xx];
                let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
                let bottom = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
                out[y * width + x] += amp * (top * (1.0 - ty) + bottom * ty);
            }
        }
        norm += amp;
        amp *= 0.5;
    }
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

/// Renders one phantom patch from an explicit RNG.
pub fn render_phantom(annot: &AnnotParams, phantom: &PhantomParams, rng: &mut impl Rng) -> PhantomPatch {
    let [h, w] = annot.patch_size;
    let placement = sample_glomeruli(annot, rng);
    let shapes = placement.shapes;
    let gt_mask = rasterize(&shapes, annot.patch_size);

    let texture = value_noise(h, w, phantom.texture_octaves, phantom.texture_scale, rng);
    // per-pixel base color (0..255 scale, RGB interleaved)
    let mut rgb = vec![[0.0f32; 3]; h * w];
    for (i, px) in rgb.iter_mut().enumerate() {
        *px = phantom.background_rgb;
        let t = texture[i] * phantom.texture_amplitude;
        px.iter_mut().for_each(|c| *c += t);
    }
    for s in &shapes {
        let min_axis = match s.geometry {
            Geometry::Circle { r } => r,
            Geometry::Ellipse { r1, r2, .. } => r1.min(r2),
        };
        let rim_start = 1.0 - phantom.ring_width as f64 / min_axis;
        s.for_each_pixel(h, w, |y, x| {
            let i = y * w + x;
            let mut c = phantom.object_rgb;
            let rho = s.radial(x as f64 + 0.5, y as f64 + 0.5);
            if rho >= rim_start {
                c.iter_mut().for_each(|v| *v *= 1.0 - phantom.ring_darkness);
            }
            let t = texture[i] * phantom.texture_amplitude * 0.5;
            c.iter_mut().for_each(|v| *v += t);
            rgb[i] = c;
        });
    }
    // speckle: drawn for every pixel so the stream does not depend on geometry
    for (i, px) in rgb.iter_mut().enumerate() {
        let u: f32 = rng.random();
        if gt_mask.data[i] && u < phantom.speckle_density {
            px.iter_mut().for_each(|v| *v *= 1.0 - phantom.speckle_darkness);
        }
    }

    // Nuclei: a uniform layer everywhere plus an extra layer restricted to
    // glomerulus pixels, giving `nuclei_inside_factor` times the density there.
    let area = (h * w) as f64;
    let base_count = sample_count(phantom.nuclei_density as f64 * area, 0.0, rng);
    let mut centers: Vec<(f64, f64)> = (0..base_count)
        .map(|_| (rng.random::<f64>() * w as f64, rng.random::<f64>() * h as f64))
        .collect();
    let inside: Vec<usize> = gt_mask.data.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect();
    let extra_rate = (phantom.nuclei_inside_factor as f64 - 1.0).max(0.0) * phantom.nuclei_density as f64;
    let extra = sample_count(extra_rate * inside.len() as f64, 0.0, rng);
    if !inside.is_empty() {
        for _ in 0..extra {
            let i = inside[rng.random_range(0..inside.len())];
            let (y, x) = (i / w, i % w);
            centers.push((x as f64 + rng.random::<f64>(), y as f64 + rng.random::<f64>()));
        }
    }
    let disc_r = annot.d_n / 2.0;
    for (cx, cy) in centers {
        let disc = ShapeInstance {
            center: (cx, cy),
            geometry: Geometry::Circle { r: disc_r },
        };
        disc.for_each_pixel(h, w, |y, x| rgb[y * w + x] = phantom.nuclei_rgb);
    }

    let mut image = Image::zeros(3, h, w);
    for (i, px) in rgb.iter().enumerate() {
        for (c, &v) in px.iter().enumerate() {
            let z: f32 = StandardNormal.sample(rng);
            image.data[c * h * w + i] = ((v + phantom.pixel_noise * z) / 255.0).clamp(0.0, 1.0);
        }
    }
    PhantomPatch { image, gt_mask, shapes }
}

pub fn generate_phantom_patch(annot: &AnnotParams, phantom: &PhantomParams, seed: u64, index: u64) -> PhantomPatch {
    render_phantom(annot, phantom, &mut rng::stream(seed, index))
}

pub fn generate_phantom_set(
    annot: &AnnotParams,
    phantom: &PhantomParams,
    count: usize,
    seed: u64,
) -> Result<Vec<PhantomPatch>> {
    annot.validate()?;
    phantom.validate()?;
    if count == 0 {
        return Err(Error::Config("phantom set count must be >= 1".into()));
    }
    Ok((0..count as u64).map(|i| generate_phantom_patch(annot, phantom, seed, i)).collect())
}

pub fn phantom_id(index: usize) -> String {
    format!("phantom_{index:05}")
}

/// Writes `images/<id>.png` (RGB) and `gt/<id>.png` + `gt/<id>.json`.
pub fn save_phantom_set(dir: &Path, patches: &[PhantomPatch]) -> Result<()> {
    let (img_dir, gt_dir) = (dir.join("images"), dir.join("gt"));
    for d in [&img_dir, &gt_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for (i, p) in patches.iter().enumerate() {
        let id = phantom_id(i);
        write_png(&img_dir.join(format!("{id}.png")), &p.image)?;
        write_mask_png(&gt_dir.join(format!("{id}.png")), &p.gt_mask)?;
        Sidecar {
            id: id.clone(),
            setting: None,
            height: p.gt_mask.height,
            width: p.gt_mask.width,
            shapes: p.shapes.clone(),
            dropped_shapes: 0,
            nuclei_count: 0,
            dropped_nuclei: 0,
        }
        .write(&gt_dir.join(format!("{id}.json")))?;
    }
    Ok(())
}
