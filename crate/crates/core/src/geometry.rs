//! Axis-aligned boxes in center + size convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Box given by its center `(x, y)` and size `(w, h)`, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    /// Builds a box from corner coordinates `(x1, y1, x2, y2)`.
    pub fn from_corners(x1: T, y1: T, x2: T, y2: T) -> Result<Self> {
        let two = T::lit(2.0);
        Self::new((x1 + x2) / two, (y1 + y2) / two, x2 - x1, y2 - y1)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite();
        if !finite {
            return Err(Error::invalid("bounding box has non-finite coordinates"));
        }
        if self.w <= T::zero() || self.h <= T::zero() {
            return Err(Error::invalid(format!(
                "bounding box needs positive size, got w={} h={}",
                self.w, self.h
            )));
        }
        if !self.area().is_finite() {
            return Err(Error::invalid("bounding box area overflows"));
        }
        Ok(())
    }

    #[inline]
    pub fn area(&self) -> T {
        self.w * self.h
    }

    /// `(x1, y1, x2, y2)`
    #[inline]
    pub fn corners(&self) -> (T, T, T, T) {
        let hw = self.w / T::lit(2.0);
        let hh = self.h / T::lit(2.0);
        (self.x - hw, self.y - hh, self.x + hw, self.y + hh)
    }

    /// Converts the coordinates to another scalar type.
    pub fn cast<U: Scalar>(&self) -> BoundingBox<U> {
        BoundingBox { x: U::lit(self.x.as_f64()), y: U::lit(self.y.as_f64()), w: U::lit(self.w.as_f64()), h: U::lit(self.h.as_f64()) }
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        Self { x: self.x + dx, y: self.y + dy, ..*self }
    }

    pub fn intersection(&self, other: &Self) -> T {
        let (ax1, ay1, ax2, ay2) = self.corners();
        let (bx1, by1, bx2, by2) = other.corners();
        let iw = (ax2.min(bx2) - ax1.max(bx1)).max(T::zero());
        let ih = (ay2.min(by2) - ay1.max(by1)).max(T::zero());
        iw * ih
    }

    pub fn iou(&self, other: &Self) -> T {
        iou_2d(self, other)
    }
}

/// Intersection over union of two boxes.
pub fn iou_2d<T: Scalar>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let inter = a.intersection(b);
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}
