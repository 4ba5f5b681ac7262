//! Brute-force checks on sampled annotation geometry.

use labelgan_core::annot::{sample_glomeruli, sample_nuclei, AnnotParams, ShapeInstance};
use labelgan_core::rng::stream;

/// Mean number of placed glomeruli over `draws` independent patches.
pub fn glomerulus_count_mean(params: &AnnotParams, draws: u64, seed: u64) -> f64 {
    let total: usize = (0..draws)
        .map(|i| sample_glomeruli(params, &mut stream(seed, i)).shapes.len())
        .sum();
    total as f64 / draws as f64
}

/// Number of shape pairs whose bounding circles intersect, found by
/// comparing every pair.
pub fn pairwise_violations(shapes: &[ShapeInstance]) -> usize {
    let mut bad = 0;
    for i in 0..shapes.len() {
        for j in i + 1..shapes.len() {
            let (a, b) = (&shapes[i], &shapes[j]);
            let reach = a.geometry.bounding_radius() + b.geometry.bounding_radius();
            let (dx, dy) = (a.center.0 - b.center.0, a.center.1 - b.center.1);
            if dx * dx + dy * dy <= reach * reach {
                bad += 1;
            }
        }
    }
    bad
}

/// Pixels covered by more than one shape of the same class.
pub fn shared_pixels(shapes: &[ShapeInstance], h: usize, w: usize) -> usize {
    let mut hits = vec![0u8; h * w];
    for s in shapes {
        s.for_each_pixel(h, w, |y, x| hits[y * w + x] = hits[y * w + x].saturating_add(1));
    }
    hits.iter().filter(|&&n| n > 1).count()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct OverlapTally {
    pub glomeruli: usize,
    pub nuclei: usize,
    pub glomerulus_pairs: usize,
    pub nucleus_pairs: usize,
}

/// Samples `patches` label geometries and counts overlap violations among
/// glomeruli and among nuclei.
pub fn overlap_tally(params: &AnnotParams, patches: u64, seed: u64) -> OverlapTally {
    let [h, w] = params.patch_size;
    let mut t = OverlapTally::default();
    for i in 0..patches {
        let mut rng = stream(seed, i);
        let glom = sample_glomeruli(params, &mut rng);
        t.glomeruli += pairwise_violations(&glom.shapes) + shared_pixels(&glom.shapes, h, w);
        t.glomerulus_pairs += glom.shapes.len() * glom.shapes.len().saturating_sub(1) / 2;
        let nuclei = sample_nuclei(params, &mut rng);
        t.nuclei += pairwise_violations(&nuclei.discs) + shared_pixels(&nuclei.discs, h, w);
        t.nucleus_pairs += nuclei.discs.len() * nuclei.discs.len().saturating_sub(1) / 2;
    }
    t
}
