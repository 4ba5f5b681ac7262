use std::path::Path;

use super::nets::{NetSpec, Network, ParamSet};
use super::train::spec_from_meta;
use crate::autodiff::{Checkpoint, Graph, Tensor};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::metrics::{pixel_scores, Scores};

/// The image-to-label generator of a checkpoint.
#[derive(Clone, Debug)]
pub struct LabelTranslator {
    pub spec: NetSpec,
    pub epoch: u32,
    net: Network,
    params: ParamSet,
}

impl LabelTranslator {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let spec = spec_from_meta(&ck.meta)?;
        spec.validate()?;
        let net = Network::generator(&spec, spec.c_x, spec.c_y);
        let mut params = net.init_params(&mut crate::rng::stream(0, 0));
        for (name, slot) in params.names.iter().zip(params.tensors.iter_mut()) {
            let key = format!("F/{name}");
            let t = ck
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {key} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(Self {
            spec,
            epoch: ck.epoch,
            net,
            params,
        })
    }

    pub fn load(stem: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(stem)?)
    }

    /// Runs the generator on one image. Sizes that are not a multiple of
    /// the downsampling factor are edge-padded and cropped back.
    pub fn label_map(&self, img: &Image) -> Result<Image> {
        if img.channels != self.spec.c_x {
            return Err(Error::shape(
                "translate",
                format!("image has {} channels, checkpoint expects {}", img.channels, self.spec.c_x),
            ));
        }
        let m = self.spec.size_multiple();
        let (h, w) = (img.height, img.width);
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let padded = if (ph, pw) == (h, w) {
            img.to_tensor()
        } else {
            let src = img.to_tensor();
            Tensor::from_fn([1, img.channels, ph, pw], |[_, c, y, x]| src.at([0, c, y.min(h - 1), x.min(w - 1)]))
        };
        let mut g = Graph::<f32>::new().with_finite_checks(false);
        let vars = self.params.attach(&mut g, false);
        let input = g.constant(padded);
        let out = self.net.forward(&mut g, &vars, input)?;
        let out = g.value(out);
        let t = Tensor::from_fn([1, self.spec.c_y, h, w], |[_, c, y, x]| out.at([0, c, y, x]));
        Ok(Image::from_tensor(&t))
    }

    /// Channel 0 of the label map, binarized with a strict `>`.
    pub fn translate(&self, img: &Image, threshold: f32) -> Result<Mask> {
        let map = self.label_map(img)?;
        Ok(Mask::threshold(map.plane(0), map.height, map.width, threshold))
    }
}

/// Translates every image with the checkpoint's image-to-label generator.
pub fn translate_to_labels(ck: &Checkpoint, images: &[Image], threshold: f32) -> Result<Vec<Mask>> {
    let tr = LabelTranslator::from_checkpoint(ck)?;
    images.iter().map(|img| tr.translate(img, threshold)).collect()
}

/// Index of the highest score; ties go to the earliest entry.
pub fn best_index(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct EpochSelection {
    pub best_epoch: u32,
    /// `(epoch, pooled pixel scores)` on the validation patches.
    pub per_epoch: Vec<(u32, Scores)>,
}

/// Scores each checkpoint on the validation patches by pooled pixel F1
/// and picks the best; ties go to the earlier epoch.
pub fn select_epoch(stems: &[impl AsRef<Path>], val_images: &[Image], val_gt: &[Mask], threshold: f32) -> Result<EpochSelection> {
    if stems.is_empty() {
        return Err(Error::Data("no checkpoints to select from".into()));
    }
    if val_images.is_empty() || val_images.len() != val_gt.len() {
        return Err(Error::Data(format!(
            "need matching validation images and masks, got {} and {}",
            val_images.len(),
            val_gt.len()
        )));
    }
    let mut per_epoch = Vec::with_capacity(stems.len());
    for stem in stems {
        let tr = LabelTranslator::load(stem.as_ref())?;
        let mut scores = Vec::with_capacity(val_images.len());
        for (img, gt) in val_images.iter().zip(val_gt) {
            scores.push(pixel_scores(&tr.translate(img, threshold)?, gt)?);
        }
        per_epoch.push((tr.epoch, Scores::pooled(&scores)));
    }
    per_epoch.sort_by_key(|(e, _)| *e);
    let f1: Vec<f64> = per_epoch.iter().map(|(_, s)| s.f1).collect();
    let best = best_index(&f1).expect("non-empty");
    Ok(EpochSelection {
        best_epoch: per_epoch[best].0,
        per_epoch,
    })
}
