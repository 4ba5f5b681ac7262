//! Float images, binary masks and their 8-bit PNG encodings.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Channel-planar float image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_planes(planes: &[&[f32]], height: usize, width: usize) -> Self {
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for p in planes {
            assert_eq!(p.len(), height * width);
            data.extend_from_slice(p);
        }
        Self {
            height,
            width,
            channels: planes.len(),
            data,
        }
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let hw = self.height * self.width;
        &mut self.data[c * hw..(c + 1) * hw]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Values quantized to 8 bits and back, as they would be after a PNG
    /// round trip.
    pub fn quantized(&self) -> Self {
        Self {
            data: self.data.iter().map(|&v| to_u8(v) as f32 / 255.0).collect(),
            ..self.clone()
        }
    }

    /// `1 x C x H x W` tensor rescaled from `[0, 1]` to `[-1, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let data = self.data.iter().map(|v| v * 2.0 - 1.0).collect();
        Tensor::new([1, self.channels, self.height, self.width], data).expect("consistent image")
    }

    /// Inverse of [`Image::to_tensor`] for batch item 0.
    pub fn from_tensor(t: &Tensor) -> Self {
        let [_, c, h, w] = t.shape();
        Self {
            height: h,
            width: w,
            channels: c,
            data: t.data()[..c * h * w].iter().map(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }
}

/// Binary `H x W` mask, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self { height, width, data }
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn union_with(&mut self, other: &Mask) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a |= *b;
        }
    }

    pub fn to_plane(&self) -> Vec<f32> {
        self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Pixels strictly above `threshold` are set.
    pub fn threshold(plane: &[f32], height: usize, width: usize, threshold: f32) -> Self {
        Self {
            height,
            width,
            data: plane.iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.to_plane(),
        }
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes 1-channel images as grayscale, 2- and 3-channel images as RGB
/// (a 2-channel image fills R and G and leaves B at zero).
pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let (color, out_channels) = match img.channels {
        1 => (png::ColorType::Grayscale, 1),
        2 | 3 => (png::ColorType::Rgb, 3),
        c => return Err(Error::Data(format!("cannot encode {c}-channel image as PNG"))),
    };
    let hw = img.height * img.width;
    let mut bytes = vec![0u8; hw * out_channels];
    for i in 0..hw {
        for c in 0..img.channels {
            bytes[i * out_channels + c] = to_u8(img.data[c * hw + i]);
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let encode_err = |source| Error::PngEncode {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = enc.write_header().map_err(encode_err)?;
    writer.write_image_data(&bytes).map_err(encode_err)?;
    writer.finish().map_err(encode_err)
}

/// Reads an 8-bit PNG. Palettes are expanded, 16-bit samples stripped and
/// alpha dropped, so the result has 1 or 3 channels.
pub fn read_png(path: &Path) -> Result<Image> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decode_err = |source| Error::PngDecode {
        path: path.to_path_buf(),
        source,
    };
    let mut dec = png::Decoder::new(std::io::BufReader::new(file));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(decode_err)?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Data(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let (src_channels, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => {
            return Err(Error::Data(format!("{}: unexpanded palette", path.display())))
        }
    };
    let hw = h * w;
    let mut img = Image::zeros(keep, h, w);
    for i in 0..hw {
        for c in 0..keep {
            img.data[c * hw + i] = buf[i * src_channels + c] as f32 / 255.0;
        }
    }
    Ok(img)
}

pub fn write_mask_png(path: &Path, mask: &Mask) -> Result<()> {
    write_png(path, &mask.to_image())
}

/// Reads a mask PNG; a pixel is set when its first channel is >= 128.
pub fn read_mask_png(path: &Path) -> Result<Mask> {
    let img = read_png(path)?;
    Ok(Mask {
        height: img.height,
        width: img.width,
        data: img.plane(0).iter().map(|&v| v >= 0.5).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_channel_png_packs_into_rg() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.png");
        let mut img = Image::zeros(2, 3, 4);
        img.set(0, 1, 2, 1.0);
        img.set(1, 2, 3, 0.5);
        write_png(&path, &img).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back.channels, 3);
        assert_eq!(back.get(0, 1, 2), 1.0);
        assert_eq!(back.get(1, 2, 3), 128.0 / 255.0);
        assert!(back.plane(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let m = Mask::from_fn(5, 7, |y, x| (x + y) % 3 == 0);
        write_mask_png(&path, &m).unwrap();
        assert_eq!(read_mask_png(&path).unwrap(), m);
    }

    #[test]
    fn tensor_round_trip() {
        let img = Image::from_planes(&[&[0.0, 0.25, 0.5, 1.0]], 2, 2);
        let t = img.to_tensor();
        assert_eq!(t.data(), &[-1.0, -0.5, 0.0, 1.0]);
        assert_eq!(Image::from_tensor(&t), img);
    }
}
