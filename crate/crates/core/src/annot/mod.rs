//! Simulated label-domain patches: non-overlapping circular or elliptic
//! glomeruli, an optional nuclei channel, then noise and smoothing.

mod finalize;
mod params;
mod shapes;

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use finalize::{finalize_channel, gaussian_blur, gaussian_kernel};
pub use params::{AnnotParams, Setting};
pub use shapes::{
    place_non_overlapping, rasterize, sample_count, sample_shape, Geometry, Placement, ShapeInstance, MIN_RADIUS,
};

use crate::error::{Error, Result};
use crate::image::{write_png, Image, Mask};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Nuclei {
    pub mask: Mask,
    pub discs: Vec<ShapeInstance>,
    /// Count drawn from the quantized Gaussian before placement.
    pub drawn: usize,
}

impl Nuclei {
    pub fn dropped(&self) -> usize {
        self.drawn - self.discs.len()
    }
}

/// Nuclei discs of diameter `d_n`, mutually non-overlapping, placed
/// independently of the glomeruli.
pub fn sample_nuclei(params: &AnnotParams, rng: &mut impl Rng) -> Nuclei {
    let drawn = sample_count(params.mu_n, params.sigma_n, rng);
    let disc = Geometry::Circle { r: params.d_n / 2.0 };
    let placed = place_non_overlapping(&vec![disc; drawn], params.patch_size, params.max_placement_attempts, rng);
    Nuclei {
        mask: rasterize(&placed.shapes, params.patch_size),
        discs: placed.shapes,
        drawn,
    }
}

/// One label patch. Channels hold binary values until [`finalize`] turns
/// them into smoothed float maps.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelPatch {
    pub height: usize,
    pub width: usize,
    pub glom_channel: Vec<f32>,
    /// Present iff the setting is multi-class.
    pub nuclei_channel: Option<Vec<f32>>,
    pub shapes: Vec<ShapeInstance>,
    pub dropped_shapes: usize,
    pub nuclei_count: usize,
    pub dropped_nuclei: usize,
}

impl LabelPatch {
    pub fn channels(&self) -> usize {
        1 + self.nuclei_channel.is_some() as usize
    }

    pub fn to_image(&self) -> Image {
        let mut planes: Vec<&[f32]> = vec![&self.glom_channel];
        if let Some(n) = &self.nuclei_channel {
            planes.push(n);
        }
        Image::from_planes(&planes, self.height, self.width)
    }

    fn sidecar(&self, id: &str, setting: Setting) -> Sidecar {
        Sidecar {
            id: id.to_string(),
            setting: Some(setting),
            height: self.height,
            width: self.width,
            shapes: self.shapes.clone(),
            dropped_shapes: self.dropped_shapes,
            nuclei_count: self.nuclei_count,
            dropped_nuclei: self.dropped_nuclei,
        }
    }
}

/// Ground-truth sidecar written next to every generated patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub id: String,
    #[serde(default)]
    pub setting: Option<Setting>,
    pub height: usize,
    pub width: usize,
    pub shapes: Vec<ShapeInstance>,
    #[serde(default)]
    pub dropped_shapes: usize,
    #[serde(default)]
    pub nuclei_count: usize,
    #[serde(default)]
    pub dropped_nuclei: usize,
}

impl Sidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_slice(&raw).map_err(|e| Error::json(path, e))
    }
}

/// Glomeruli geometry for one patch: quantized count, shapes, placement.
pub fn sample_glomeruli(params: &AnnotParams, rng: &mut impl Rng) -> Placement {
    let count = sample_count(params.mu_g, params.sigma_g, rng);
    let geometries: Vec<Geometry> = (0..count).map(|_| sample_shape(params, rng)).collect();
    place_non_overlapping(&geometries, params.patch_size, params.max_placement_attempts, rng)
}

/// Binary label patch before noise and smoothing.
pub fn sample_binary_patch(params: &AnnotParams, rng: &mut impl Rng) -> LabelPatch {
    let [h, w] = params.patch_size;
    let glom = sample_glomeruli(params, rng);
    let mut patch = LabelPatch {
        height: h,
        width: w,
        glom_channel: rasterize(&glom.shapes, params.patch_size).to_plane(),
        nuclei_channel: None,
        shapes: glom.shapes,
        dropped_shapes: glom.dropped,
        nuclei_count: 0,
        dropped_nuclei: 0,
    };
    if params.setting.is_multi_class() {
        let nuclei = sample_nuclei(params, rng);
        patch.nuclei_count = nuclei.discs.len();
        patch.dropped_nuclei = nuclei.dropped();
        patch.nuclei_channel = Some(nuclei.mask.to_plane());
    }
    patch
}

/// Adds noise and smoothing to every channel of a binary patch.
pub fn finalize(mut label: LabelPatch, params: &AnnotParams, rng: &mut impl Rng) -> LabelPatch {
    let (h, w) = (label.height, label.width);
    label.glom_channel = finalize_channel(&label.glom_channel, h, w, params.sigma_fn, params.sigma_fs, rng);
    if let Some(n) = label.nuclei_channel.take() {
        label.nuclei_channel = Some(finalize_channel(&n, h, w, params.sigma_fn, params.sigma_fs, rng));
    }
    label
}

/// Patch `index` of a set generated under `seed`.
pub fn generate_label_patch(params: &AnnotParams, seed: u64, index: u64) -> LabelPatch {
    let mut rng = rng::stream(seed, index);
    let binary = sample_binary_patch(params, &mut rng);
    finalize(binary, params, &mut rng)
}

pub fn generate_label_set(params: &AnnotParams, count: usize, seed: u64) -> Result<Vec<LabelPatch>> {
    params.validate()?;
    if count == 0 {
        return Err(Error::Config("label set count must be >= 1".into()));
    }
    Ok((0..count as u64).map(|i| generate_label_patch(params, seed, i)).collect())
}

pub fn patch_id(index: usize) -> String {
    format!("label_{index:05}")
}

/// Writes `<id>.png` and `<id>.json` for every patch.
pub fn save_label_set(dir: &Path, patches: &[LabelPatch], setting: Setting) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, p) in patches.iter().enumerate() {
        let id = patch_id(i);
        write_png(&dir.join(format!("{id}.png")), &p.to_image())?;
        p.sidecar(&id, setting).write(&dir.join(format!("{id}.json")))?;
    }
    Ok(())
}
