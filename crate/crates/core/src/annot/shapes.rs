use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::params::AnnotParams;
use crate::image::Mask;

/// Smallest radius or semi-axis a sampled object may have.
pub const MIN_RADIUS: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Geometry {
    Circle { r: f64 },
    Ellipse { r1: f64, r2: f64, alpha: f64 },
}

impl Geometry {
    /// Radius of the bounding circle (largest semi-axis).
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Geometry::Circle { r } => r,
            Geometry::Ellipse { r1, r2, .. } => r1.max(r2),
        }
    }
}

/// An object placed in a patch; `center` is `(x, y)` in continuous pixel
/// coordinates where pixel `(row, col)` covers `[col, col+1) x [row, row+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeInstance {
    pub center: (f64, f64),
    pub geometry: Geometry,
}

impl ShapeInstance {
    /// Whether the point `(px, py)` lies inside the shape.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (dx, dy) = (px - self.center.0, py - self.center.1);
        match self.geometry {
            Geometry::Circle { r } => dx * dx + dy * dy <= r * r,
            // A round ellipse goes through the circle test so that zero
            // eccentricity reproduces circular masks bit for bit.
            Geometry::Ellipse { r1, r2, .. } if r1 == r2 => dx * dx + dy * dy <= r1 * r1,
            Geometry::Ellipse { r1, r2, alpha } => {
                let (s, c) = alpha.sin_cos();
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / r1).powi(2) + (v / r2).powi(2) <= 1.0
            }
        }
    }

    /// Normalized radial coordinate: < 1 inside, 1 on the boundary.
    pub fn radial(&self, px: f64, py: f64) -> f64 {
        let (dx, dy) = (px - self.center.0, py - self.center.1);
        match self.geometry {
            Geometry::Circle { r } => (dx * dx + dy * dy).sqrt() / r,
            Geometry::Ellipse { r1, r2, alpha } => {
                let (s, c) = alpha.sin_cos();
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                ((u / r1).powi(2) + (v / r2).powi(2)).sqrt()
            }
        }
    }

    /// Pixel bounding box `(row0, row1, col0, col1)`, half-open, clipped.
    fn pixel_bounds(&self, height: usize, width: usize) -> (usize, usize, usize, usize) {
        let r = self.geometry.bounding_radius();
        let clip = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
        (
            clip((self.center.1 - r - 1.0).floor(), height),
            clip((self.center.1 + r + 1.0).ceil(), height),
            clip((self.center.0 - r - 1.0).floor(), width),
            clip((self.center.0 + r + 1.0).ceil(), width),
        )
    }

    /// Calls `f(row, col)` for every pixel whose center is inside.
    pub fn for_each_pixel(&self, height: usize, width: usize, mut f: impl FnMut(usize, usize)) {
        let (y0, y1, x0, x1) = self.pixel_bounds(height, width);
        for y in y0..y1 {
            for x in x0..x1 {
                if self.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    f(y, x);
                }
            }
        }
    }

    /// Centroid of the rasterized (clipped) shape as `(x, y)`, or `None` if
    /// no pixel center falls inside the patch.
    pub fn raster_centroid(&self, height: usize, width: usize) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        self.for_each_pixel(height, width, |y, x| {
            sx += x as f64 + 0.5;
            sy += y as f64 + 0.5;
            n += 1;
        });
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }
}

fn normal(rng: &mut impl Rng, mu: f64, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mu + sigma * z
}

/// Quantized Gaussian count: `max(0, round(N(mu, sigma^2)))`.
pub fn sample_count(mu: f64, sigma: f64, rng: &mut impl Rng) -> usize {
    let v = normal(rng, mu, sigma).round();
    if v <= 0.0 {
        0
    } else {
        v as usize
    }
}

/// Samples one object's geometry. The same three random numbers are drawn
/// in every setting, so switching circle/ellipse leaves the rest of the
/// stream aligned.
pub fn sample_shape(params: &AnnotParams, rng: &mut impl Rng) -> Geometry {
    let r = normal(rng, params.mu_r, params.sigma_r).max(MIN_RADIUS);
    let delta = normal(rng, 0.0, params.sigma_e);
    let alpha = rng.random::<f64>() * TAU;
    if params.setting.is_elliptic() {
        Geometry::Ellipse {
            r1: r,
            r2: (r + delta).max(MIN_RADIUS),
            alpha,
        }
    } else {
        Geometry::Circle { r }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub shapes: Vec<ShapeInstance>,
    pub dropped: usize,
}

/// Rejection placement with uniform centers over the patch. A candidate is
/// rejected if its bounding circle touches an accepted one; a geometry that
/// fails `max_attempts` times is dropped and counted.
pub fn place_non_overlapping(
    geometries: &[Geometry],
    patch_size: [usize; 2],
    max_attempts: u32,
    rng: &mut impl Rng,
) -> Placement {
    let [h, w] = patch_size;
    let max_r = geometries
        .iter()
        .map(Geometry::bounding_radius)
        .fold(0.0, f64::max);
    let mut grid = SpatialGrid::new(w as f64, h as f64, (2.0 * max_r).max(1.0));
    let mut shapes: Vec<ShapeInstance> = Vec::with_capacity(geometries.len());
    let mut dropped = 0;
    for geom in geometries {
        let r = geom.bounding_radius();
        let mut placed = false;
        for _ in 0..max_attempts.max(1) {
            let cx = rng.random::<f64>() * w as f64;
            let cy = rng.random::<f64>() * h as f64;
            let clear = grid.neighbours(cx, cy).all(|i| {
                let other = &shapes[i];
                let (dx, dy) = (cx - other.center.0, cy - other.center.1);
                (dx * dx + dy * dy).sqrt() > r + other.geometry.bounding_radius()
            });
            if clear {
                grid.insert(cx, cy, shapes.len());
                shapes.push(ShapeInstance {
                    center: (cx, cy),
                    geometry: *geom,
                });
                placed = true;
                break;
            }
        }
        if !placed {
            dropped += 1;
        }
    }
    Placement { shapes, dropped }
}

/// Bucket grid with cell size >= the largest possible conflict distance, so
/// only the 3x3 neighbourhood has to be checked.
struct SpatialGrid {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl SpatialGrid {
    fn new(width: f64, height: f64, cell: f64) -> Self {
        let cols = (width / cell).ceil() as usize + 1;
        let rows = (height / cell).ceil() as usize + 1;
        Self {
            cell,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
        }
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        (
            ((x / self.cell) as usize).min(self.cols - 1),
            ((y / self.cell) as usize).min(self.rows - 1),
        )
    }

    fn insert(&mut self, x: f64, y: f64, id: usize) {
        let (cx, cy) = self.cell_of(x, y);
        self.buckets[cy * self.cols + cx].push(id);
    }

    fn neighbours(&self, x: f64, y: f64) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy) = self.cell_of(x, y);
        let ys = cy.saturating_sub(1)..(cy + 2).min(self.rows);
        ys.flat_map(move |gy| {
            let xs = cx.saturating_sub(1)..(cx + 2).min(self.cols);
            xs.flat_map(move |gx| self.buckets[gy * self.cols + gx].iter().copied())
        })
    }
}

/// Binary mask: a pixel is set iff its center lies inside any shape.
pub fn rasterize(shapes: &[ShapeInstance], patch_size: [usize; 2]) -> Mask {
    let [h, w] = patch_size;
    let mut mask = Mask::new(h, w);
    for s in shapes {
        s.for_each_pixel(h, w, |y, x| mask.set(y, x, true));
    }
    mask
}
