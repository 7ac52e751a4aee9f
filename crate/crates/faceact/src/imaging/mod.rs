//! Pixel-level primitives shared by the whole pipeline: grayscale buffers,
//! gradients, dense local descriptors, block gradient histograms, mask
//! geometry and resampling.

mod descriptor;
mod geometry;
mod mask;

pub use descriptor::{
    block_gradient_histogram, dense_descriptor_grid, dense_descriptors, normalize_root,
    normalize_root_values, DescriptorGrid, LocalDescriptor, DESCRIPTOR_LEN,
};
pub use geometry::{AffineMap, Rect};
pub use mask::{ellipse_stats, rasterize_polygon, EllipseStats, RegionMask};

use crate::error::{Error, Result};
use std::path::Path;

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::invalid("image intensities must be finite and in [0,1]"));
        }
        Ok(GrayImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        GrayImage { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        GrayImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v.clamp(0.0, 1.0);
    }

    /// Loads an 8-bit PNG or PGM/PPM file. Color input is converted to
    /// grayscale with luma weights 0.299 / 0.587 / 0.114.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?;
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let mut data = Vec::with_capacity(w * h);
        for p in rgb.pixels() {
            let luma =
                0.299 * p.0[0] as f32 + 0.587 * p.0[1] as f32 + 0.114 * p.0[2] as f32;
            data.push((luma / 255.0).clamp(0.0, 1.0));
        }
        Ok(GrayImage { width: w, height: h, data })
    }

    /// Writes the image as an 8-bit grayscale PNG.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let buf: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let img = image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions");
        img.save(path.as_ref())?;
        Ok(())
    }
}

/// Horizontal and vertical derivative fields of an image.
///
/// Interior pixels use central differences, border pixels one-sided ones.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
}

impl GradientField {
    pub fn compute(img: &GrayImage) -> Result<Self> {
        let (w, h) = (img.width, img.height);
        if w < 3 || h < 3 {
            return Err(Error::invalid("gradient requires an image of at least 3x3"));
        }
        let mut gx = vec![0.0f32; w * h];
        let mut gy = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                gx[i] = if x == 0 {
                    img.get(1, y) - img.get(0, y)
                } else if x == w - 1 {
                    img.get(w - 1, y) - img.get(w - 2, y)
                } else {
                    (img.get(x + 1, y) - img.get(x - 1, y)) * 0.5
                };
                gy[i] = if y == 0 {
                    img.get(x, 1) - img.get(x, 0)
                } else if y == h - 1 {
                    img.get(x, h - 1) - img.get(x, h - 2)
                } else {
                    (img.get(x, y + 1) - img.get(x, y - 1)) * 0.5
                };
            }
        }
        Ok(GradientField { width: w, height: h, gx, gy })
    }

    #[inline]
    pub fn magnitude_at(&self, x: usize, y: usize) -> f32 {
        let i = y * self.width + x;
        (self.gx[i] * self.gx[i] + self.gy[i] * self.gy[i]).sqrt()
    }
}

/// Per-pixel gradient magnitude (central differences inside, one-sided at the
/// border). Errors on images smaller than 3x3.
pub fn gradient_magnitude(img: &GrayImage) -> Result<Vec<f32>> {
    let field = GradientField::compute(img)?;
    let mut out = vec![0.0f32; img.width * img.height];
    for y in 0..img.height {
        for x in 0..img.width {
            out[y * img.width + x] = field.magnitude_at(x, y);
        }
    }
    Ok(out)
}

/// Bilinear resampling with corner-aligned sampling. Output values stay in
/// the input's value range.
pub fn resize_bilinear(img: &GrayImage, w: usize, h: usize) -> Result<GrayImage> {
    if w == 0 || h == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    let src_pos = |i: usize, n_dst: usize, n_src: usize| -> f64 {
        if n_dst == 1 {
            (n_src as f64 - 1.0) / 2.0
        } else {
            i as f64 * (n_src as f64 - 1.0) / (n_dst as f64 - 1.0)
        }
    };
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        let sy = src_pos(y, h, img.height);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = (sy - y0 as f64) as f32;
        for x in 0..w {
            let sx = src_pos(x, w, img.width);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let fx = (sx - x0 as f64) as f32;
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bot = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            data.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Ok(GrayImage { width: w, height: h, data })
}

/// Crop centered on `box_`'s center with dimensions `factor` times the box
/// dimensions. Pixels outside the source are zero. Returns the crop and the
/// affine map from crop coordinates to source coordinates.
pub fn crop_inflated(
    img: &GrayImage,
    box_: &Rect,
    factor: f64,
) -> Result<(GrayImage, AffineMap)> {
    if box_.is_degenerate() {
        return Err(Error::invalid("crop box has a zero or negative side"));
    }
    if factor <= 0.0 {
        return Err(Error::invalid("crop factor must be positive"));
    }
    let (cx, cy) = box_.center();
    if cx < 0.0 || cy < 0.0 || cx >= img.width as f64 || cy >= img.height as f64 {
        return Err(Error::invalid("crop box center lies outside the image"));
    }
    let cw = (factor * box_.w).round().max(1.0) as usize;
    let ch = (factor * box_.h).round().max(1.0) as usize;
    let x0 = (cx - cw as f64 / 2.0).round() as i64;
    let y0 = (cy - ch as f64 / 2.0).round() as i64;
    let mut data = vec![0.0f32; cw * ch];
    for y in 0..ch {
        let sy = y0 + y as i64;
        if sy < 0 || sy >= img.height as i64 {
            continue;
        }
        for x in 0..cw {
            let sx = x0 + x as i64;
            if sx < 0 || sx >= img.width as i64 {
                continue;
            }
            data[y * cw + x] = img.get(sx as usize, sy as usize);
        }
    }
    let crop = GrayImage { width: cw, height: ch, data };
    Ok((crop, AffineMap::translation(x0 as f64, y0 as f64)))
}

/// Separable Gaussian blur over an `f64` buffer with clamped borders.
/// `sigma <= 0` returns the input unchanged.
pub fn gaussian_blur_f64(width: usize, height: usize, data: &[f64], sigma: f64) -> Vec<f64> {
    assert_eq!(data.len(), width * height);
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }
    let mut tmp = vec![0.0f64; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sx = (x as i64 + ki as i64 - radius).clamp(0, width as i64 - 1) as usize;
                acc += data[y * width + sx] * kv;
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0f64; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (ki, kv) in kernel.iter().enumerate() {
                let sy = (y as i64 + ki as i64 - radius).clamp(0, height as i64 - 1) as usize;
                acc += tmp[sy * width + x] * kv;
            }
            out[y * width + x] = acc;
        }
    }
    out
}
