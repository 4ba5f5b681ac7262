use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::pixel::Scores;
use crate::annot::ShapeInstance;
use crate::image::Mask;

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    /// `(x, y)` mean of member pixel centers.
    pub centroid: (f64, f64),
    pub area: usize,
    /// First pixel in raster order, `(row, col)`.
    pub first_pixel: (usize, usize),
}

/// 8-connected components, ordered by their first pixel in raster order.
pub fn connected_components(mask: &Mask) -> Vec<Component> {
    let (h, w) = (mask.height, mask.width);
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut sx, mut sy, mut area) = (0.0, 0.0, 0usize);
        while let Some(i) = queue.pop_front() {
            let (y, x) = (i / w, i % w);
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            area += 1;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let (ny, nx) = (y as isize + dy, x as isize + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.data[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        out.push(Component {
            centroid: (sx / area as f64, sy / area as f64),
            area,
            first_pixel: (start / w, start % w),
        });
    }
    out
}

/// Ground-truth object centers taken from each shape's clipped raster.
pub fn gt_centers_from_shapes(shapes: &[ShapeInstance], height: usize, width: usize) -> Vec<(f64, f64)> {
    shapes.iter().filter_map(|s| s.raster_centroid(height, width)).collect()
}

pub fn gt_centers_from_mask(mask: &Mask) -> Vec<(f64, f64)> {
    connected_components(mask).into_iter().map(|c| c.centroid).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectOptions {
    /// A match needs centroid distance strictly below this radius.
    pub match_radius: f64,
    /// Predicted components smaller than this are discarded (0 = off).
    #[serde(default)]
    pub min_area: usize,
}

impl Default for ObjectOptions {
    fn default() -> Self {
        Self {
            match_radius: 10.0,
            min_area: 0,
        }
    }
}

/// Greedy one-to-one matching: candidate pairs closer than `radius`,
/// sorted by distance (ties by pred index, then gt index); each accepted
/// pair removes both endpoints. Returns `(pred, gt)` index pairs.
pub fn greedy_match(pred: &[(f64, f64)], gt: &[(f64, f64)], radius: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = ((p.0 - g.0).powi(2) + (p.1 - g.1).powi(2)).sqrt();
            if d < radius {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; pred.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut matches = Vec::new();
    for (_, i, j) in pairs {
        if !pred_used[i] && !gt_used[j] {
            pred_used[i] = true;
            gt_used[j] = true;
            matches.push((i, j));
        }
    }
    matches
}

pub type ObjectScores = Scores;

/// Object-level scores of a predicted mask against ground-truth centers.
pub fn object_scores(pred_mask: &Mask, gt_centers: &[(f64, f64)], opts: &ObjectOptions) -> ObjectScores {
    let pred: Vec<(f64, f64)> = connected_components(pred_mask)
        .into_iter()
        .filter(|c| c.area >= opts.min_area)
        .map(|c| c.centroid)
        .collect();
    let tp = greedy_match(&pred, gt_centers, opts.match_radius).len() as u64;
    Scores::from_counts(tp, pred.len() as u64 - tp, gt_centers.len() as u64 - tp)
}
