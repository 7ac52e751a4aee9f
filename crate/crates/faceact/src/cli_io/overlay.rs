//! Rendering of explanation overlays and heat maps to PNG files.

use crate::error::Result;
use crate::imaging::{GrayImage, Rect};
use crate::pipeline::OverlaySpec;
use crate::star_vote::HeatMap;
use std::path::Path;

const REGION_COLOR: [u8; 3] = [230, 40, 40];
const LANDMARK_COLOR: [u8; 3] = [60, 90, 235];
const FACE_BOX_COLOR: [u8; 3] = [40, 200, 80];
const PEAK_COLOR: [u8; 3] = [250, 220, 40];

struct Canvas {
    width: usize,
    height: usize,
    data: Vec<u8>, // rgb
}

impl Canvas {
    fn from_gray(img: &GrayImage) -> Self {
        let mut data = Vec::with_capacity(img.width() * img.height() * 3);
        for v in img.data() {
            let g = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            data.extend_from_slice(&[g, g, g]);
        }
        Canvas { width: img.width(), height: img.height(), data }
    }

    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&color);
    }

    fn cross(&mut self, x: f64, y: f64, arm: i64, color: [u8; 3]) {
        let (xi, yi) = (x.round() as i64, y.round() as i64);
        for d in -arm..=arm {
            self.put(xi + d, yi, color);
            self.put(xi, yi + d, color);
        }
    }

    fn rect_outline(&mut self, r: &Rect, color: [u8; 3]) {
        let (x0, y0) = (r.x.round() as i64, r.y.round() as i64);
        let (x1, y1) = ((r.x + r.w).round() as i64, (r.y + r.h).round() as i64);
        for x in x0..=x1 {
            self.put(x, y0, color);
            self.put(x, y1, color);
        }
        for y in y0..=y1 {
            self.put(x0, y, color);
            self.put(x1, y, color);
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
            .expect("buffer matches dimensions");
        img.save(path)?;
        Ok(())
    }
}

/// Draws the overlay onto a copy of the image and writes it as a PNG.
/// An empty overlay produces an unmodified copy.
pub fn emit_overlay(image: &GrayImage, overlay: &OverlaySpec, out: impl AsRef<Path>) -> Result<()> {
    let mut canvas = Canvas::from_gray(image);
    if let Some(box_) = &overlay.face_box {
        canvas.rect_outline(box_, FACE_BOX_COLOR);
    }
    for (x, y) in &overlay.region_outline {
        canvas.put(x.round() as i64, y.round() as i64, REGION_COLOR);
    }
    for (x, y) in &overlay.landmarks {
        canvas.cross(*x, *y, 2, LANDMARK_COLOR);
    }
    if let Some((x, y)) = overlay.location_peak {
        canvas.cross(x, y, 3, PEAK_COLOR);
    }
    canvas.save(out.as_ref())
}

/// Writes a heat map as a grayscale PNG with luminance proportional to
/// mass, so the maximal-mass pixel renders brightest.
pub fn emit_heatmap(map: &HeatMap, out: impl AsRef<Path>) -> Result<()> {
    let peak = map.mass().iter().cloned().fold(0.0f64, f64::max);
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let buf: Vec<u8> = map.mass().iter().map(|v| (v * scale).round() as u8).collect();
    let img = image::GrayImage::from_raw(map.width() as u32, map.height() as u32, buf)
        .expect("buffer matches dimensions");
    img.save(out.as_ref())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GrayImage;

    #[test]
    fn empty_overlay_copies_the_image() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(16, 16, |x, y| ((x * y) % 16) as f32 / 16.0);
        let out = dir.path().join("o.png");
        emit_overlay(&img, &OverlaySpec::default(), &out).unwrap();
        let loaded = GrayImage::load(&out).unwrap();
        for (a, b) in img.data().iter().zip(loaded.data()) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn rectangle_outline_pixels_are_on_the_border() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::filled(32, 32, 0.0);
        let overlay = OverlaySpec {
            face_box: Some(Rect::new(8.0, 8.0, 10.0, 10.0)),
            ..Default::default()
        };
        let out = dir.path().join("o.png");
        emit_overlay(&img, &overlay, &out).unwrap();
        let rgb = image::open(&out).unwrap().to_rgb8();
        for (x, y, p) in rgb.enumerate_pixels() {
            let on_border = (x == 8 || x == 18) && (8..=18).contains(&y)
                || (y == 8 || y == 18) && (8..=18).contains(&x);
            if on_border {
                assert_eq!(p.0, FACE_BOX_COLOR, "at {x},{y}");
            } else {
                assert_eq!(p.0, [0, 0, 0], "at {x},{y}");
            }
        }
    }

    #[test]
    fn heatmap_peak_is_brightest() {
        let dir = tempfile::tempdir().unwrap();
        let mut raw = vec![0.1f64; 64];
        raw[3 * 8 + 5] = 5.0;
        let map = HeatMap::from_raw(8, 8, raw);
        let out = dir.path().join("h.png");
        emit_heatmap(&map, &out).unwrap();
        let img = image::open(&out).unwrap().to_luma8();
        let mut best = (0u32, 0u32, 0u8);
        for (x, y, p) in img.enumerate_pixels() {
            if p.0[0] > best.2 {
                best = (x, y, p.0[0]);
            }
        }
        assert_eq!((best.0, best.1), (5, 3));
        assert_eq!(best.2, 255);
    }
}
