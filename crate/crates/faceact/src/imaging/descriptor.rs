//! Dense local gradient descriptors and block gradient histograms.

use super::{GradientField, GrayImage};
use crate::error::{Error, Result};

/// Length of a local descriptor: 4x4 spatial cells times 8 orientation bins.
pub const DESCRIPTOR_LEN: usize = 128;

const SPATIAL_CELLS: usize = 4;
const ORIENTATION_BINS: usize = 8;

/// A 128-dimensional gradient histogram descriptor anchored at a pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDescriptor {
    pub values: Vec<f64>,
    /// Pixel coordinates of the patch center.
    pub center: (usize, usize),
}

/// Dense descriptors over a stride grid, with the gradient magnitude at each
/// center kept alongside for sampling weights.
#[derive(Debug, Clone)]
pub struct DescriptorGrid {
    pub width: usize,
    pub height: usize,
    pub stride: usize,
    pub patch: usize,
    pub descriptors: Vec<LocalDescriptor>,
    /// Gradient magnitude at each descriptor center, same order.
    pub center_magnitudes: Vec<f64>,
}

/// Extracts one raw (unnormalized) descriptor per grid point. Centers lie on
/// multiples of `stride`; patches must fit fully inside the image.
pub fn dense_descriptors(
    img: &GrayImage,
    stride: usize,
    patch: usize,
) -> Result<Vec<LocalDescriptor>> {
    Ok(dense_descriptor_grid(img, stride, patch)?.descriptors)
}

pub fn dense_descriptor_grid(img: &GrayImage, stride: usize, patch: usize) -> Result<DescriptorGrid> {
    if stride == 0 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    if patch < 4 || patch % 4 != 0 {
        return Err(Error::invalid("patch side must be a positive multiple of 4"));
    }
    if patch > img.width().min(img.height()) {
        return Err(Error::invalid("patch does not fit inside the image"));
    }
    let field = GradientField::compute(img)?;
    let half = patch / 2;
    let centers_1d = |extent: usize| -> Vec<usize> {
        let mut v = Vec::new();
        let mut c = half.div_ceil(stride) * stride;
        while c + half <= extent {
            v.push(c);
            c += stride;
        }
        v
    };
    let xs = centers_1d(img.width());
    let ys = centers_1d(img.height());

    // Gaussian spatial weights relative to the patch center, sigma = patch/2.
    let sigma = patch as f64 / 2.0;
    let cell = patch / SPATIAL_CELLS;
    let mut weights = vec![0.0f64; patch * patch];
    for py in 0..patch {
        for px in 0..patch {
            let dx = px as f64 + 0.5 - patch as f64 / 2.0;
            let dy = py as f64 + 0.5 - patch as f64 / 2.0;
            weights[py * patch + px] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
    }

    let mut descriptors = Vec::with_capacity(xs.len() * ys.len());
    let mut center_magnitudes = Vec::with_capacity(xs.len() * ys.len());
    for &cy in &ys {
        for &cx in &xs {
            let mut values = vec![0.0f64; DESCRIPTOR_LEN];
            let (ox, oy) = (cx - half, cy - half);
            for py in 0..patch {
                for px in 0..patch {
                    let i = (oy + py) * img.width() + (ox + px);
                    let gx = field.gx[i] as f64;
                    let gy = field.gy[i] as f64;
                    let mag = (gx * gx + gy * gy).sqrt();
                    if mag == 0.0 {
                        continue;
                    }
                    // signed orientation over [0, 2*pi)
                    let mut theta = gy.atan2(gx);
                    if theta < 0.0 {
                        theta += 2.0 * std::f64::consts::PI;
                    }
                    let mut bin =
                        (theta / (2.0 * std::f64::consts::PI) * ORIENTATION_BINS as f64) as usize;
                    if bin >= ORIENTATION_BINS {
                        bin = ORIENTATION_BINS - 1;
                    }
                    let cell_x = px / cell;
                    let cell_y = py / cell;
                    let idx = (cell_y * SPATIAL_CELLS + cell_x) * ORIENTATION_BINS + bin;
                    values[idx] += mag * weights[py * patch + px];
                }
            }
            descriptors.push(LocalDescriptor { values, center: (cx, cy) });
            center_magnitudes.push(field.magnitude_at(cx, cy) as f64);
        }
    }
    Ok(DescriptorGrid {
        width: img.width(),
        height: img.height(),
        stride,
        patch,
        descriptors,
        center_magnitudes,
    })
}

/// RootSIFT-style normalization: L1-normalize, then elementwise square root.
/// An all-zero descriptor stays all-zero; otherwise the result has unit L2
/// norm.
pub fn normalize_root(d: &LocalDescriptor) -> LocalDescriptor {
    LocalDescriptor { values: normalize_root_values(&d.values), center: d.center }
}

pub fn normalize_root_values(values: &[f64]) -> Vec<f64> {
    let l1: f64 = values.iter().sum();
    if l1 <= 0.0 {
        return values.to_vec();
    }
    values.iter().map(|v| (v / l1).sqrt()).collect()
}

/// Block gradient histogram over the whole image: `cells_x` x `cells_y` cells
/// of `bins` unsigned orientation bins each, normalized jointly over
/// non-overlapping groups of up to 2x2 cells with clipping at 0.2 and
/// renormalization. Output length is `cells_x * cells_y * bins`.
pub fn block_gradient_histogram(
    img: &GrayImage,
    cells_x: usize,
    cells_y: usize,
    bins: usize,
) -> Result<Vec<f64>> {
    if cells_x == 0 || cells_y == 0 || bins == 0 {
        return Err(Error::invalid("cell and bin counts must be positive"));
    }
    if cells_x > img.width() || cells_y > img.height() {
        return Err(Error::invalid("more cells than pixels"));
    }
    let field = GradientField::compute(img)?;
    let bound = |i: usize, cells: usize, extent: usize| -> usize {
        ((i as f64 * extent as f64 / cells as f64).round()) as usize
    };
    let mut hist = vec![0.0f64; cells_x * cells_y * bins];
    for cy in 0..cells_y {
        let (y0, y1) = (bound(cy, cells_y, img.height()), bound(cy + 1, cells_y, img.height()));
        for cx in 0..cells_x {
            let (x0, x1) = (bound(cx, cells_x, img.width()), bound(cx + 1, cells_x, img.width()));
            let base = (cy * cells_x + cx) * bins;
            for y in y0..y1 {
                for x in x0..x1 {
                    let i = y * img.width() + x;
                    let gx = field.gx[i] as f64;
                    let gy = field.gy[i] as f64;
                    let mag = (gx * gx + gy * gy).sqrt();
                    if mag == 0.0 {
                        continue;
                    }
                    // unsigned orientation folded into [0, pi)
                    let mut theta = gy.atan2(gx);
                    if theta < 0.0 {
                        theta += std::f64::consts::PI;
                    }
                    if theta >= std::f64::consts::PI {
                        theta -= std::f64::consts::PI;
                    }
                    let mut bin = (theta / std::f64::consts::PI * bins as f64) as usize;
                    if bin >= bins {
                        bin = bins - 1;
                    }
                    hist[base + bin] += mag;
                }
            }
        }
    }
    // joint normalization over non-overlapping 2x2 cell groups
    let blocks_x = cells_x.div_ceil(2);
    let blocks_y = cells_y.div_ceil(2);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let mut members = Vec::with_capacity(4);
            for cy in (by * 2)..((by * 2 + 2).min(cells_y)) {
                for cx in (bx * 2)..((bx * 2 + 2).min(cells_x)) {
                    members.push((cy * cells_x + cx) * bins);
                }
            }
            normalize_block(&mut hist, &members, bins);
        }
    }
    Ok(hist)
}

fn normalize_block(hist: &mut [f64], members: &[usize], bins: usize) {
    let norm_sq: f64 = members
        .iter()
        .flat_map(|&base| hist[base..base + bins].iter())
        .map(|v| v * v)
        .sum();
    if norm_sq <= 0.0 {
        return;
    }
    let inv = 1.0 / norm_sq.sqrt();
    let mut clipped_sq = 0.0;
    for &base in members {
        for v in &mut hist[base..base + bins] {
            *v = (*v * inv).min(0.2);
            clipped_sq += *v * *v;
        }
    }
    if clipped_sq > 0.0 {
        let inv2 = 1.0 / clipped_sq.sqrt();
        for &base in members {
            for v in &mut hist[base..base + bins] {
                *v *= inv2;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GrayImage;

    #[test]
    fn grid_counts_match_valid_positions() {
        let img = GrayImage::filled(64, 64, 0.5);
        let ds = dense_descriptors(&img, 8, 16).unwrap();
        assert_eq!(ds.len(), 49);
        let centers: Vec<usize> = (1..=7).map(|k| k * 8).collect();
        for d in &ds {
            assert!(centers.contains(&d.center.0));
            assert!(centers.contains(&d.center.1));
        }
    }

    #[test]
    fn constant_image_gives_zero_descriptors() {
        let img = GrayImage::filled(32, 32, 0.7);
        let ds = dense_descriptors(&img, 8, 16).unwrap();
        assert!(ds.iter().all(|d| d.values.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn vertical_step_edge_energy_is_horizontal() {
        // step from dark to bright along x: gradient points in +x (theta = 0)
        let img = GrayImage::from_fn(48, 48, |x, _| if x < 24 { 0.1 } else { 0.9 });
        let ds = dense_descriptors(&img, 4, 16).unwrap();
        let mut horiz = 0.0;
        let mut total = 0.0;
        for d in &ds {
            for (i, v) in d.values.iter().enumerate() {
                total += v;
                let bin = i % 8;
                // bins 0 and 4 hold gradients pointing +x and -x
                if bin == 0 || bin == 4 {
                    horiz += v;
                }
            }
        }
        assert!(total > 0.0);
        assert!(horiz / total > 0.99, "horizontal share {}", horiz / total);
    }

    #[test]
    fn vertical_step_edge_matches_analytic_binning_oracle() {
        let img = GrayImage::from_fn(48, 48, |x, _| if x < 24 { 0.1 } else { 0.9 });
        // oracle: recompute one interior descriptor with plain loops
        let ds = dense_descriptors(&img, 4, 16).unwrap();
        let d = ds.iter().find(|d| d.center == (24, 24)).unwrap();
        let mut oracle = vec![0.0f64; 128];
        let sigma = 8.0f64;
        for py in 0..16usize {
            for px in 0..16usize {
                let (x, y) = (24 - 8 + px, 24 - 8 + py);
                let gx = (img.get(x + 1, y) - img.get(x - 1, y)) as f64 * 0.5;
                let gy = (img.get(x, y + 1) - img.get(x, y - 1)) as f64 * 0.5;
                let mag = (gx * gx + gy * gy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                let mut theta = gy.atan2(gx);
                if theta < 0.0 {
                    theta += std::f64::consts::TAU;
                }
                let bin = ((theta / std::f64::consts::TAU * 8.0) as usize).min(7);
                let dx = px as f64 + 0.5 - 8.0;
                let dy = py as f64 + 0.5 - 8.0;
                let w = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                oracle[((py / 4) * 4 + px / 4) * 8 + bin] += mag * w;
            }
        }
        for (a, b) in d.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_covariance_on_grid() {
        let motif = |x: usize, y: usize| -> f32 {
            let dx = x as f32 - 20.0;
            let dy = y as f32 - 22.0;
            (0.5 + 0.4 * ((dx * 0.7).sin() * (dy * 0.5).cos())).clamp(0.0, 1.0)
        };
        let stride = 4usize;
        let a = GrayImage::from_fn(64, 64, motif);
        let b = GrayImage::from_fn(64, 64, |x, y| {
            if x >= stride && y >= stride {
                motif(x - stride, y - stride)
            } else {
                0.5
            }
        });
        let ga = dense_descriptor_grid(&a, stride, 16).unwrap();
        let gb = dense_descriptor_grid(&b, stride, 16).unwrap();
        let find = |g: &DescriptorGrid, c: (usize, usize)| -> Option<LocalDescriptor> {
            g.descriptors.iter().find(|d| d.center == c).cloned()
        };
        // interior descriptors reproduce bit-exactly at the shifted center
        let mut compared = 0;
        for d in &ga.descriptors {
            let (cx, cy) = d.center;
            // stay away from the border strip that saw new content
            if cx < 16 || cy < 16 || cx + stride + 16 > 64 || cy + stride + 16 > 64 {
                continue;
            }
            let shifted = find(&gb, (cx + stride, cy + stride)).unwrap();
            assert_eq!(d.values, shifted.values);
            compared += 1;
        }
        assert!(compared > 10);
    }

    #[test]
    fn normalize_root_cases() {
        let zero = LocalDescriptor { values: vec![0.0; 128], center: (0, 0) };
        assert!(normalize_root(&zero).values.iter().all(|v| *v == 0.0));

        let mut onehot = vec![0.0; 128];
        onehot[5] = 3.0;
        let d = LocalDescriptor { values: onehot, center: (0, 0) };
        let n = normalize_root(&d);
        assert!((n.values[5] - 1.0).abs() < 1e-12);

        let mut v = vec![0.0; 128];
        v[0] = 3.0;
        v[1] = 1.0;
        let n = normalize_root(&LocalDescriptor { values: v, center: (0, 0) });
        assert!((n.values[0] - 0.75f64.sqrt()).abs() < 1e-12);
        assert!((n.values[1] - 0.25f64.sqrt()).abs() < 1e-12);
        let l2: f64 = n.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((l2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn block_histogram_constant_image_is_zero() {
        let img = GrayImage::filled(64, 64, 0.5);
        let h = block_gradient_histogram(&img, 8, 8, 8).unwrap();
        assert_eq!(h.len(), 8 * 8 * 8);
        assert!(h.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn block_histogram_len_and_determinism() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            let dx = x as f32 - 32.0;
            let dy = y as f32 - 32.0;
            if dx * dx + dy * dy < 300.0 {
                0.9
            } else {
                0.1
            }
        });
        let a = block_gradient_histogram(&img, 8, 8, 8).unwrap();
        let b = block_gradient_histogram(&img, 8, 8, 8).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().any(|v| *v > 0.0));
    }

    #[test]
    fn block_histogram_rot180_flips_cells() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            (0.5 + 0.3 * ((x as f32 * 0.3).sin() + (y as f32 * 0.21).cos()) / 2.0).clamp(0.0, 1.0)
        });
        let rot = GrayImage::from_fn(64, 64, |x, y| img.get(63 - x, 63 - y));
        let (cx, cy, bins) = (8usize, 8usize, 8usize);
        let a = block_gradient_histogram(&img, cx, cy, bins).unwrap();
        let b = block_gradient_histogram(&rot, cx, cy, bins).unwrap();
        // unsigned orientations survive 180-degree rotation; cells flip
        for gy in 0..cy {
            for gx in 0..cx {
                let src = (gy * cx + gx) * bins;
                let dst = ((cy - 1 - gy) * cx + (cx - 1 - gx)) * bins;
                for k in 0..bins {
                    assert!(
                        (a[src + k] - b[dst + k]).abs() < 1e-9,
                        "cell ({gx},{gy}) bin {k}"
                    );
                }
            }
        }
    }

    #[test]
    fn block_histogram_rejects_oversized_grid() {
        let img = GrayImage::filled(8, 8, 0.5);
        assert!(block_gradient_histogram(&img, 16, 2, 8).is_err());
    }
}
