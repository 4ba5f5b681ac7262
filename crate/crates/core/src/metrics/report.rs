use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::objects::{gt_centers_from_mask, gt_centers_from_shapes, object_scores, ObjectOptions};
use super::pixel::{pixel_scores, Scores};
use crate::annot::Sidecar;
use crate::error::{Error, Result};
use crate::image::{read_mask_png, Mask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Binarization threshold applied to translated label maps.
    pub threshold: f32,
    #[serde(flatten)]
    pub object: ObjectOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            object: ObjectOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchScores {
    pub id: String,
    pub pixel: Scores,
    pub object: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateScores {
    pub pixel: Scores,
    pub object: Scores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub options: EvalOptions,
    pub per_patch: Vec<PatchScores>,
    pub aggregate: AggregateScores,
}

/// Ground truth of one patch: the mask plus object centers.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub mask: Mask,
    pub centers: Vec<(f64, f64)>,
}

impl GroundTruth {
    /// Centers from each shape's clipped raster.
    pub fn from_shapes(mask: Mask, shapes: &[crate::annot::ShapeInstance]) -> Self {
        let centers = gt_centers_from_shapes(shapes, mask.height, mask.width);
        Self { mask, centers }
    }

    /// Centers from the mask's connected components.
    pub fn from_mask(mask: Mask) -> Self {
        let centers = gt_centers_from_mask(&mask);
        Self { mask, centers }
    }
}

pub fn score_patch(id: &str, pred: &Mask, gt: &GroundTruth, opts: &EvalOptions) -> Result<PatchScores> {
    Ok(PatchScores {
        id: id.to_string(),
        pixel: pixel_scores(pred, &gt.mask)?,
        object: object_scores(pred, &gt.centers, &opts.object),
    })
}

impl EvalReport {
    pub fn from_patches(options: EvalOptions, per_patch: Vec<PatchScores>) -> Self {
        let aggregate = AggregateScores {
            pixel: Scores::pooled(per_patch.iter().map(|p| &p.pixel)),
            object: Scores::pooled(per_patch.iter().map(|p| &p.object)),
        };
        Self {
            options,
            per_patch,
            aggregate,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,tp,fp,fn,F,P,R,tp_o,fp_o,fn_o,F_o,P_o,R_o\n");
        let mut row = |id: &str, p: &Scores, o: &Scores| {
            let _ = writeln!(
                out,
                "{id},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.tp, p.fp, p.fn_, p.f1, p.precision, p.recall, o.tp, o.fp, o.fn_, o.f1, o.precision, o.recall
            );
        };
        for p in &self.per_patch {
            row(&p.id, &p.pixel, &p.object);
        }
        row("aggregate", &self.aggregate.pixel, &self.aggregate.object);
        out
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::json(json_path, e))?;
        fs::write(json_path, json).map_err(|e| Error::io(json_path, e))?;
        fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))
    }
}

/// Sorted `*.png` files of a directory.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads the ground truth for `<gt_dir>/<name>.png`, preferring shape
/// centers from a `<name>.json` sidecar when present.
pub fn load_ground_truth(gt_dir: &Path, file_name: &str) -> Result<GroundTruth> {
    let mask_path = gt_dir.join(file_name);
    if !mask_path.exists() {
        return Err(Error::MissingCounterpart(file_name.to_string()));
    }
    let mask = read_mask_png(&mask_path)?;
    let sidecar = mask_path.with_extension("json");
    if sidecar.exists() {
        let side = Sidecar::read(&sidecar)?;
        Ok(GroundTruth::from_shapes(mask, &side.shapes))
    } else {
        Ok(GroundTruth::from_mask(mask))
    }
}

/// Scores every predicted mask in `pred_dir` against its namesake in
/// `gt_dir`.
pub fn evaluate_run(pred_dir: &Path, gt_dir: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    let preds = list_pngs(pred_dir)?;
    if preds.is_empty() {
        return Err(Error::Data(format!("no predicted masks in {}", pred_dir.display())));
    }
    let mut per_patch = Vec::with_capacity(preds.len());
    for path in preds {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let gt = load_ground_truth(gt_dir, &name)?;
        let pred = read_mask_png(&path)?;
        let id = name.trim_end_matches(".png").to_string();
        per_patch.push(score_patch(&id, &pred, &gt, opts)?);
    }
    Ok(EvalReport::from_patches(*opts, per_patch))
}
