//! Binary region masks and moment-based shape statistics.

use crate::error::{Error, Result};

/// Binary pixel mask over a fixed-size frame (usually the face crop).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegionMask {
    width: usize,
    height: usize,
    bits: Vec<u64>,
    area: usize,
}

impl RegionMask {
    pub fn empty(width: usize, height: usize) -> Self {
        let words = (width * height).div_ceil(64);
        RegionMask { width, height, bits: vec![0; words], area: 0 }
    }

    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        let mut m = RegionMask::empty(width, height);
        for (x, y) in pixels {
            m.insert(x, y);
        }
        m
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut m = RegionMask::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.insert(x, y);
                }
            }
        }
        m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> usize {
        self.area
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        if x >= self.width || y >= self.height {
            return false;
        }
        let i = y * self.width + x;
        self.bits[i / 64] & (1u64 << (i % 64)) != 0
    }

    #[inline]
    pub fn insert(&mut self, x: usize, y: usize) {
        debug_assert!(x < self.width && y < self.height);
        let i = y * self.width + x;
        let word = &mut self.bits[i / 64];
        let bit = 1u64 << (i % 64);
        if *word & bit == 0 {
            *word |= bit;
            self.area += 1;
        }
    }

    /// Iterates foreground pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        (0..self.width * self.height)
            .filter(move |i| self.bits[i / 64] & (1u64 << (i % 64)) != 0)
            .map(move |i| (i % w, i / w))
    }

    /// Tight bounding box `(x0, y0, x1, y1)` inclusive, or `None` when empty.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        if self.area == 0 {
            return None;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (self.width, self.height, 0usize, 0usize);
        for (x, y) in self.pixels() {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        Some((x0, y0, x1, y1))
    }

    pub fn intersection_area(&self, other: &RegionMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_area(&self, other: &RegionMask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    pub fn same_frame(&self, other: &RegionMask) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Moment-equivalent ellipse of a mask. Axis lengths are full lengths
/// (4 times the square root of the covariance eigenvalues).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseStats {
    pub major_axis: f64,
    pub minor_axis: f64,
    /// Foreground pixel count; equal to `RegionMask::area` exactly.
    pub area: f64,
    pub eccentricity: f64,
    /// Principal-axis angle w.r.t. +x in `(-pi/2, pi/2]`, y pointing down.
    pub orientation: f64,
}

/// Shape statistics from second-order central moments. Each pixel is treated
/// as a unit square, contributing 1/12 per-axis variance, which keeps the
/// moments non-singular for tiny masks and matches continuous moments for
/// solid shapes.
pub fn ellipse_stats(mask: &RegionMask) -> Result<EllipseStats> {
    if mask.is_empty() {
        return Err(Error::invalid("ellipse statistics of an empty mask"));
    }
    let n = mask.area() as f64;
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for (x, y) in mask.pixels() {
        sx += x as f64;
        sy += y as f64;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut cxx, mut cyy, mut cxy) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in mask.pixels() {
        let dx = x as f64 - mx;
        let dy = y as f64 - my;
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    cxx = cxx / n + 1.0 / 12.0;
    cyy = cyy / n + 1.0 / 12.0;
    cxy /= n;

    let tr = cxx + cyy;
    let det = cxx * cyy - cxy * cxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let l1 = tr / 2.0 + disc; // major eigenvalue
    let l2 = (tr / 2.0 - disc).max(0.0);
    let major = 4.0 * l1.sqrt();
    let minor = 4.0 * l2.sqrt();
    let eccentricity = if major > 0.0 {
        (1.0 - (minor / major).powi(2)).max(0.0).sqrt()
    } else {
        0.0
    };
    let mut orientation = if cxy.abs() < 1e-12 && (cxx - cyy).abs() < 1e-12 {
        0.0
    } else {
        0.5 * (2.0 * cxy).atan2(cxx - cyy)
    };
    // fold into (-pi/2, pi/2]
    if orientation <= -std::f64::consts::FRAC_PI_2 {
        orientation += std::f64::consts::PI;
    } else if orientation > std::f64::consts::FRAC_PI_2 {
        orientation -= std::f64::consts::PI;
    }
    Ok(EllipseStats { major_axis: major, minor_axis: minor, area: n, eccentricity, orientation })
}

/// Rasterizes a polygon into a mask using even-odd fill with a pixel-center
/// inside test; pixel `(x, y)` is the point `(x, y)`, and a span `[a, b)` of
/// crossings fills the integer centers it contains, left edge inclusive.
/// Vertices are in the mask's frame; parts outside are clipped.
pub fn rasterize_polygon(width: usize, height: usize, vertices: &[(f64, f64)]) -> Result<RegionMask> {
    if vertices.len() < 3 {
        return Err(Error::invalid("polygon needs at least 3 vertices"));
    }
    let mut mask = RegionMask::empty(width, height);
    let ys: Vec<f64> = vertices.iter().map(|v| v.1).collect();
    let y_min = ys.iter().cloned().fold(f64::MAX, f64::min).ceil().max(0.0) as i64;
    let y_max = ys.iter().cloned().fold(f64::MIN, f64::max).floor().min(height as f64 - 1.0) as i64;
    for y in y_min..=y_max {
        let cy = y as f64;
        // crossing x-coordinates of polygon edges with the scanline
        let mut xs: Vec<f64> = Vec::new();
        for i in 0..vertices.len() {
            let (x1, y1) = vertices[i];
            let (x2, y2) = vertices[(i + 1) % vertices.len()];
            if (y1 <= cy && y2 > cy) || (y2 <= cy && y1 > cy) {
                xs.push(x1 + (cy - y1) / (y2 - y1) * (x2 - x1));
            }
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for pair in xs.chunks(2) {
            if pair.len() < 2 {
                continue;
            }
            let x0 = (pair[0].ceil().max(0.0)) as i64;
            let x1 = ((pair[1].ceil() - 1.0).min(width as f64 - 1.0)) as i64;
            for x in x0..=x1 {
                if x >= 0 && (x as usize) < width && y >= 0 {
                    mask.insert(x as usize, y as usize);
                }
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_tracks_inserts() {
        let mut m = RegionMask::empty(10, 10);
        m.insert(1, 1);
        m.insert(1, 1);
        m.insert(2, 3);
        assert_eq!(m.area(), 2);
        assert!(m.contains(1, 1) && m.contains(2, 3) && !m.contains(0, 0));
    }

    #[test]
    fn bounding_box_consistent_with_bits() {
        let m = RegionMask::from_pixels(20, 20, [(3, 4), (7, 2), (5, 9)]);
        assert_eq!(m.bounding_box(), Some((3, 2, 7, 9)));
        assert_eq!(RegionMask::empty(4, 4).bounding_box(), None);
    }

    #[test]
    fn ellipse_single_pixel_is_round() {
        let m = RegionMask::from_pixels(10, 10, [(5, 5)]);
        let e = ellipse_stats(&m).unwrap();
        assert!(e.major_axis > 0.0);
        assert!((e.major_axis - e.minor_axis).abs() < 1e-12);
        assert!(e.eccentricity < 1e-9);
        assert_eq!(e.area, 1.0);
    }

    #[test]
    fn ellipse_rectangle_matches_analytic_moments() {
        // 40x10 axis-aligned solid rectangle
        let m = RegionMask::from_fn(64, 64, |x, y| (10..50).contains(&x) && (20..30).contains(&y));
        let e = ellipse_stats(&m).unwrap();
        // continuous uniform rectangle: full axis 4*sqrt(w^2/12)
        let expect_major = 4.0 * (40.0f64 * 40.0 / 12.0).sqrt();
        let expect_minor = 4.0 * (10.0f64 * 10.0 / 12.0).sqrt();
        assert!((e.major_axis - expect_major).abs() / expect_major < 0.02);
        assert!((e.minor_axis - expect_minor).abs() / expect_minor < 0.02);
        assert!((e.major_axis / e.minor_axis - 4.0).abs() < 0.08);
        assert!(e.orientation.abs() < 1e-9);
        assert_eq!(e.area, 400.0);
    }

    #[test]
    fn ellipse_disc_is_nearly_circular() {
        let m = RegionMask::from_fn(64, 64, |x, y| {
            let dx = x as f64 - 32.0;
            let dy = y as f64 - 32.0;
            dx * dx + dy * dy <= 400.0
        });
        let e = ellipse_stats(&m).unwrap();
        assert!(e.eccentricity < 0.05, "eccentricity {}", e.eccentricity);
    }

    #[test]
    fn ellipse_rotation_by_90_degrees_swaps_orientation() {
        let m = RegionMask::from_fn(64, 64, |x, y| (10..50).contains(&x) && (20..30).contains(&y));
        let rot = RegionMask::from_fn(64, 64, |x, y| m.contains(y, 63 - x));
        let e0 = ellipse_stats(&m).unwrap();
        let e1 = ellipse_stats(&rot).unwrap();
        let delta = (e0.orientation - e1.orientation).abs() % std::f64::consts::PI;
        assert!(
            (delta - std::f64::consts::FRAC_PI_2).abs() < 1e-6,
            "orientation delta {delta}"
        );
        assert!((e0.major_axis - e1.major_axis).abs() / e0.major_axis < 0.02);
        assert!((e0.minor_axis - e1.minor_axis).abs() / e0.minor_axis < 0.02);
    }

    #[test]
    fn ellipse_empty_mask_errors() {
        assert!(ellipse_stats(&RegionMask::empty(5, 5)).is_err());
    }

    #[test]
    fn polygon_rasterization_square() {
        let m = rasterize_polygon(
            16,
            16,
            &[(2.0, 2.0), (10.0, 2.0), (10.0, 10.0), (2.0, 10.0)],
        )
        .unwrap();
        // pixel centers strictly inside [2,10)x[2,10)
        assert_eq!(m.area(), 64);
        assert!(m.contains(2, 2) && m.contains(9, 9));
        assert!(!m.contains(10, 10) && !m.contains(1, 5));
    }

    #[test]
    fn polygon_needs_three_vertices() {
        assert!(rasterize_polygon(8, 8, &[(0.0, 0.0), (1.0, 1.0)]).is_err());
    }
}
