use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{read_png, write_png, Image};
use crate::rng::{derive_seed, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchExtractSpec {
    pub sources: Vec<PathBuf>,
    /// Optional masks aligned with `sources`; cut at the same positions.
    #[serde(default)]
    pub masks: Vec<PathBuf>,
    pub downscale_factor: usize,
    pub patch_size: usize,
    pub patches_per_image: usize,
    pub seed: u64,
}

impl PatchExtractSpec {
    pub fn validate(&self) -> Result<()> {
        if self.downscale_factor == 0 {
            return Err(Error::Config("downscale_factor must be >= 1".into()));
        }
        if self.patch_size == 0 || self.patches_per_image == 0 {
            return Err(Error::Config("patch_size and patches_per_image must be >= 1".into()));
        }
        if !self.masks.is_empty() && self.masks.len() != self.sources.len() {
            return Err(Error::Config(format!(
                "{} masks given for {} sources",
                self.masks.len(),
                self.sources.len()
            )));
        }
        Ok(())
    }
}

/// Averages non-overlapping `factor x factor` blocks; a trailing partial
/// block is dropped.
pub fn box_downscale(img: &Image, factor: usize) -> Image {
    if factor == 1 {
        return img.clone();
    }
    let (h, w) = (img.height / factor, img.width / factor);
    let mut out = Image::zeros(img.channels, h, w);
    let norm = (factor * factor) as f32;
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for dy in 0..factor {
                    let row = (y * factor + dy) * img.width + x * factor;
                    acc += src[row..row + factor].iter().sum::<f32>();
                }
                dst[y * w + x] = acc / norm;
            }
        }
    }
    out
}

pub fn crop(img: &Image, top: usize, left: usize, size: usize) -> Image {
    let mut out = Image::zeros(img.channels, size, size);
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..size {
            let row = (top + y) * img.width + left;
            dst[y * size..(y + 1) * size].copy_from_slice(&src[row..row + size]);
        }
    }
    out
}

/// One extracted patch, before it is written.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedPatch {
    pub name: String,
    pub image: Image,
    pub mask: Option<Image>,
    pub top_left: (usize, usize),
}

/// Downscales each source and cuts `patches_per_image` uniformly placed
/// patches from it. Source `i` uses its own random stream, so adding
/// sources does not move the patches of earlier ones.
pub fn extract_patches(spec: &PatchExtractSpec) -> Result<Vec<ExtractedPatch>> {
    spec.validate()?;
    let seed = derive_seed(spec.seed, "extract");
    let mut out = Vec::new();
    for (i, src) in spec.sources.iter().enumerate() {
        let small = box_downscale(&read_png(src)?, spec.downscale_factor);
        let mask = match spec.masks.get(i) {
            Some(m) => Some(box_downscale(&read_png(m)?, spec.downscale_factor)),
            None => None,
        };
        if let Some(m) = &mask {
            if (m.height, m.width) != (small.height, small.width) {
                return Err(Error::Data(format!("mask for {} has a different size", src.display())));
            }
        }
        if spec.patch_size > small.height || spec.patch_size > small.width {
            return Err(Error::Config(format!(
                "patch size {} exceeds downscaled image {}x{} of {}",
                spec.patch_size,
                small.height,
                small.width,
                src.display()
            )));
        }
        let stem = src.file_stem().and_then(|s| s.to_str()).unwrap_or("source");
        let mut rng = stream(seed, i as u64);
        for k in 0..spec.patches_per_image {
            let top = rng.random_range(0..=small.height - spec.patch_size);
            let left = rng.random_range(0..=small.width - spec.patch_size);
            out.push(ExtractedPatch {
                name: format!("{stem}_p{k:04}"),
                image: crop(&small, top, left, spec.patch_size),
                mask: mask.as_ref().map(|m| crop(m, top, left, spec.patch_size)),
                top_left: (top, left),
            });
        }
    }
    Ok(out)
}

/// Writes `<out>/images/<name>.png` and, when masks were given,
/// `<out>/masks/<name>.png` (binarized at 0.5).
pub fn save_patches(out_dir: &Path, patches: &[ExtractedPatch]) -> Result<()> {
    let img_dir = out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mask_dir = out_dir.join("masks");
    for p in patches {
        write_png(&img_dir.join(format!("{}.png", p.name)), &p.image)?;
        if let Some(m) = &p.mask {
            fs::create_dir_all(&mask_dir).map_err(|e| Error::io(&mask_dir, e))?;
            let bin = crate::image::Mask::threshold(m.plane(0), m.height, m.width, 0.5);
            crate::image::write_mask_png(&mask_dir.join(format!("{}.png", p.name)), &bin)?;
        }
    }
    Ok(())
}
