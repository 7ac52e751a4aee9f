use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle in pixel coordinates (origin top-left, y down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_degenerate(&self) -> bool {
        self.w <= 0.0 || self.h <= 0.0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }
}

/// Axis-aligned affine map `(x, y) -> (sx * x + tx, sy * y + ty)`.
///
/// This is the only transform the pipeline needs: face crops are produced by
/// translation (cropping) followed by per-axis scaling (resampling), so crop
/// coordinates relate to source coordinates by scale plus offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub sx: f64,
    pub sy: f64,
    pub tx: f64,
    pub ty: f64,
}

impl AffineMap {
    pub fn identity() -> Self {
        AffineMap { sx: 1.0, sy: 1.0, tx: 0.0, ty: 0.0 }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineMap { sx: 1.0, sy: 1.0, tx, ty }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.sx * x + self.tx, self.sy * y + self.ty)
    }

    /// Inverse map; scales must be nonzero.
    pub fn inverse(&self) -> AffineMap {
        AffineMap {
            sx: 1.0 / self.sx,
            sy: 1.0 / self.sy,
            tx: -self.tx / self.sx,
            ty: -self.ty / self.sy,
        }
    }

    /// `self` after `other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        AffineMap {
            sx: self.sx * other.sx,
            sy: self.sy * other.sy,
            tx: self.sx * other.tx + self.tx,
            ty: self.sy * other.ty + self.ty,
        }
    }

    pub fn apply_rect(&self, r: &Rect) -> Rect {
        let (x0, y0) = self.apply(r.x, r.y);
        let (x1, y1) = self.apply(r.x + r.w, r.y + r.h);
        Rect::new(x0.min(x1), y0.min(y1), (x1 - x0).abs(), (y1 - y0).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_roundtrip() {
        let m = AffineMap { sx: 1.5, sy: 0.5, tx: -10.0, ty: 3.0 };
        let inv = m.inverse();
        let (x, y) = m.apply(7.0, -2.0);
        let (bx, by) = inv.apply(x, y);
        assert!((bx - 7.0).abs() < 1e-12 && (by + 2.0).abs() < 1e-12);
    }

    #[test]
    fn compose_order() {
        let a = AffineMap::translation(1.0, 2.0);
        let b = AffineMap { sx: 2.0, sy: 2.0, tx: 0.0, ty: 0.0 };
        // b after a: scale the translated point
        let m = b.compose(&a);
        assert_eq!(m.apply(0.0, 0.0), (2.0, 4.0));
    }
}
