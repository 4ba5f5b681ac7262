//! Pixel- and object-level segmentation scores.
//!
//! Object level: a predicted connected component is a true positive when
//! its centroid lies within the match radius (10 px by default) of a
//! ground-truth object center; matching is one-to-one.

mod objects;
mod pixel;
mod report;

pub use objects::{
    connected_components, greedy_match, gt_centers_from_mask, gt_centers_from_shapes, object_scores, Component,
    ObjectOptions, ObjectScores,
};
pub use pixel::{pixel_scores, PixelScores, Scores};
pub use report::{
    evaluate_run, list_pngs, load_ground_truth, score_patch, AggregateScores, EvalOptions, EvalReport, GroundTruth,
    PatchScores,
};
