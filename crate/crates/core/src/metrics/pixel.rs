use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Mask;

/// Confusion counts with derived F1, precision and recall.
///
/// Empty-vs-empty counts as perfect agreement (all scores 1); otherwise an
/// undefined ratio is 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[serde(rename = "F")]
    pub f1: f64,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
}

impl Scores {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        if tp + fp + fn_ == 0 {
            return Self {
                tp,
                fp,
                fn_,
                f1: 1.0,
                precision: 1.0,
                recall: 1.0,
            };
        }
        let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            tp,
            fp,
            fn_,
            f1,
            precision,
            recall,
        }
    }

    /// Micro-average: pooled counts.
    pub fn pooled<'a>(items: impl IntoIterator<Item = &'a Scores>) -> Self {
        let (tp, fp, fn_) = items
            .into_iter()
            .fold((0, 0, 0), |(a, b, c), s| (a + s.tp, b + s.fp, c + s.fn_));
        Self::from_counts(tp, fp, fn_)
    }
}

pub type PixelScores = Scores;

pub fn pixel_scores(pred: &Mask, gt: &Mask) -> Result<PixelScores> {
    if (pred.height, pred.width) != (gt.height, gt.width) {
        return Err(Error::shape(
            "pixel_scores",
            format!("pred {}x{} vs gt {}x{}", pred.height, pred.width, gt.height, gt.width),
        ));
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Scores::from_counts(tp, fp, fn_))
}
