use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub flip: bool,
    pub rotate: bool,
    pub random_crop: bool,
    /// Square crop side; 0 keeps the full patch.
    pub crop: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip: true,
            rotate: true,
            random_crop: true,
            crop: 64,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            flip: false,
            rotate: false,
            random_crop: false,
            crop: 0,
        }
    }
}

/// A concrete draw of augmentation choices. Applied in the order
/// horizontal flip, vertical flip, rotation, crop.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AugmentOps {
    pub hflip: bool,
    pub vflip: bool,
    /// Counter-clockwise quarter turns, 0..=3.
    pub quarter_turns: u8,
    /// `(side, top, left)` of the crop window after rotation.
    pub crop: Option<(usize, usize, usize)>,
}

impl AugmentOps {
    /// Draws every choice from `rng` in a fixed order, whether or not the
    /// corresponding toggle is on, so toggles do not shift later draws.
    pub fn sample(config: &AugmentConfig, height: usize, width: usize, rng: &mut impl Rng) -> Result<Self> {
        let hflip = rng.random_bool(0.5);
        let vflip = rng.random_bool(0.5);
        let turns = rng.random_range(0..4u8);
        let (h, w) = if config.rotate && turns % 2 == 1 {
            (width, height)
        } else {
            (height, width)
        };
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let crop = if config.crop == 0 {
            None
        } else {
            if config.crop > h || config.crop > w {
                return Err(Error::Config(format!(
                    "crop size {} exceeds input size {height}x{width}",
                    config.crop
                )));
            }
            let (top, left) = if config.random_crop {
                let pick = |span: usize, r: f64| ((r * (span + 1) as f64) as usize).min(span);
                (pick(h - config.crop, u), pick(w - config.crop, v))
            } else {
                ((h - config.crop) / 2, (w - config.crop) / 2)
            };
            Some((config.crop, top, left))
        };
        Ok(Self {
            hflip: config.flip && hflip,
            vflip: config.flip && vflip,
            quarter_turns: if config.rotate { turns } else { 0 },
            crop,
        })
    }
}

fn remap(img: &Image, height: usize, width: usize, src: impl Fn(usize, usize) -> (usize, usize)) -> Image {
    let mut out = Image::zeros(img.channels, height, width);
    for c in 0..img.channels {
        let plane = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..height {
            for x in 0..width {
                let (sy, sx) = src(y, x);
                dst[y * width + x] = plane[sy * img.width + sx];
            }
        }
    }
    out
}

pub fn apply_ops(img: &Image, ops: &AugmentOps) -> Result<Image> {
    let (h, w) = (img.height, img.width);
    let mut out = remap(img, h, w, |y, x| {
        let sx = if ops.hflip { w - 1 - x } else { x };
        let sy = if ops.vflip { h - 1 - y } else { y };
        (sy, sx)
    });
    for _ in 0..ops.quarter_turns % 4 {
        let (h, w) = (out.height, out.width);
        // Counter-clockwise: new (y, x) reads old (x, w - 1 - y).
        out = remap(&out, w, h, |y, x| (x, w - 1 - y));
    }
    if let Some((side, top, left)) = ops.crop {
        if top + side > out.height || left + side > out.width {
            return Err(Error::Config(format!(
                "crop window {side}@({top},{left}) exceeds {}x{}",
                out.height, out.width
            )));
        }
        out = remap(&out, side, side, |y, x| (top + y, left + x));
    }
    Ok(out)
}

/// Samples and applies one augmentation; all channels move together.
pub fn augment(img: &Image, config: &AugmentConfig, rng: &mut impl Rng) -> Result<Image> {
    let ops = AugmentOps::sample(config, img.height, img.width, rng)?;
    apply_ops(img, &ops)
}
