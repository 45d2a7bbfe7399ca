//! Affine pre-transforms applied jointly to a grid and its mask.

use rand::Rng;

use super::grid::{ForegroundMask, LatentGrid};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `dst = A · src + t` in cell-index coordinates (x right, y down).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine2<T> {
    pub a: [[T; 2]; 2],
    pub t: [T; 2],
}

impl<T: Scalar> Affine2<T> {
    pub fn identity() -> Self {
        Self { a: [[T::one(), T::zero()], [T::zero(), T::one()]], t: [T::zero(); 2] }
    }

    pub fn translation(dx: T, dy: T) -> Self {
        Self { t: [dx, dy], ..Self::identity() }
    }

    /// Rotation by `angle` radians and uniform `scale` about `(cx, cy)`.
    pub fn rotation_about(angle: T, scale: T, cx: T, cy: T) -> Self {
        let (s, c) = angle.sin_cos();
        let a = [[scale * c, -scale * s], [scale * s, scale * c]];
        let t = [cx - a[0][0] * cx - a[0][1] * cy, cy - a[1][0] * cx - a[1][1] * cy];
        Self { a, t }
    }

    /// Mild random warp around the grid center: rotation up to ±15°, scale
    /// in [0.9, 1.1], shift up to a tenth of each side.
    pub fn random<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Self {
        let angle = T::lit(rng.random_range(-15.0f64..=15.0).to_radians());
        let scale = T::lit(rng.random_range(0.9f64..=1.1));
        let (w, h) = (width as f64, height as f64);
        let mut m = Self::rotation_about(angle, scale, T::lit((w - 1.0) / 2.0), T::lit((h - 1.0) / 2.0));
        m.t[0] = m.t[0] + T::lit(rng.random_range(-0.1..=0.1) * w);
        m.t[1] = m.t[1] + T::lit(rng.random_range(-0.1..=0.1) * h);
        m
    }

    pub fn determinant(&self) -> T {
        self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0]
    }

    pub fn apply(&self, x: T, y: T) -> (T, T) {
        (
            self.a[0][0] * x + self.a[0][1] * y + self.t[0],
            self.a[1][0] * x + self.a[1][1] * y + self.t[1],
        )
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.determinant();
        let scale = self.a.iter().flatten().fold(T::zero(), |m, v| m.max(v.abs()));
        if !det.is_finite() || det.abs() <= T::lit(1e-12) * scale * scale || scale == T::zero() {
            return Err(Error::invalid("affine transform is singular"));
        }
        let inv = [
            [self.a[1][1] / det, -self.a[0][1] / det],
            [-self.a[1][0] / det, self.a[0][0] / det],
        ];
        let t = [
            -(inv[0][0] * self.t[0] + inv[0][1] * self.t[1]),
            -(inv[1][0] * self.t[0] + inv[1][1] * self.t[1]),
        ];
        Ok(Self { a: inv, t })
    }
}

fn in_frame<T: Scalar>(sx: T, sy: T, width: usize, height: usize) -> bool {
    sx >= T::zero()
        && sy >= T::zero()
        && sx <= T::from_usize(width - 1).unwrap()
        && sy <= T::from_usize(height - 1).unwrap()
}

/// Resamples grid (bilinear) and mask (nearest) under `params`. Cells whose
/// preimage falls outside the source are zero.
pub fn geometric_transform<T: Scalar>(
    grid: &LatentGrid<T>,
    mask: &ForegroundMask<T>,
    params: &Affine2<T>,
) -> Result<(LatentGrid<T>, ForegroundMask<T>)> {
    if !mask.matches(grid) {
        return Err(Error::DimensionMismatch {
            expected: grid.width() * grid.height(),
            found: mask.width() * mask.height(),
        });
    }
    let inv = params.inverse()?;
    let (w, h, ch) = (grid.width(), grid.height(), grid.channels());
    let mut out = vec![T::zero(); w * h * ch];
    let mut out_mask = vec![T::zero(); w * h];
    for dy in 0..h {
        for dx in 0..w {
            let (sx, sy) = inv.apply(T::from_usize(dx).unwrap(), T::from_usize(dy).unwrap());
            if !in_frame(sx, sy, w, h) {
                continue;
            }
            let x0 = sx.floor().to_usize().unwrap().min(w - 1);
            let y0 = sy.floor().to_usize().unwrap().min(h - 1);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let fx = sx - T::from_usize(x0).unwrap();
            let fy = sy - T::from_usize(y0).unwrap();
            let one = T::one();
            for c in 0..ch {
                let top = grid.get(x0, y0, c) * (one - fx) + grid.get(x1, y0, c) * fx;
                let bottom = grid.get(x0, y1, c) * (one - fx) + grid.get(x1, y1, c) * fx;
                out[(dy * w + dx) * ch + c] = top * (one - fy) + bottom * fy;
            }
            let nx = sx.round().to_usize().unwrap().min(w - 1);
            let ny = sy.round().to_usize().unwrap().min(h - 1);
            out_mask[dy * w + dx] = mask.get(nx, ny);
        }
    }
    Ok((LatentGrid::new(w, h, ch, out)?, ForegroundMask::new(w, h, out_mask)?))
}
