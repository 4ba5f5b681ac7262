use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Normalized 1-D Gaussian kernel truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    if radius == 0 {
        return vec![1.0];
    }
    let raw: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(plane: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = kernel.len() / 2;
    if r == 0 {
        return plane.to_vec();
    }
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * plane[y * width + clamp(x as isize + k as isize - r as isize, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, wk)| wk * tmp[clamp(y as isize + k as isize - r as isize, height) * width + x])
                .sum();
        }
    }
    out
}

/// Binary channel -> 0..255 scale, additive Gaussian noise, Gaussian blur,
/// clip, back to `[0, 1]`.
pub fn finalize_channel(
    binary: &[f32],
    height: usize,
    width: usize,
    sigma_noise: f64,
    sigma_smooth: f64,
    rng: &mut impl Rng,
) -> Vec<f32> {
    let mut v: Vec<f64> = binary.iter().map(|&b| b as f64 * 255.0).collect();
    if sigma_noise > 0.0 {
        for p in v.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *p += sigma_noise * z;
        }
    }
    gaussian_blur(&v, height, width, sigma_smooth)
        .into_iter()
        .map(|p| (p.clamp(0.0, 255.0) / 255.0) as f32)
        .collect()
}
