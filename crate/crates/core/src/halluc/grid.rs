use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;

/// Row-major `height × width × channels` latent array.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid<T> {
    width: usize,
    height: usize,
    channels: usize,
    values: Vec<T>,
}

impl<T: Scalar> LatentGrid<T> {
    pub fn new(width: usize, height: usize, channels: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        let expected = width * height * channels;
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid contains non-finite values"));
        }
        Ok(Self { width, height, channels, values })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.values[self.index(x, y, c)]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Same shape, new values. Used by samplers that map element-wise.
    pub(crate) fn with_values(&self, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        Self { values, ..*self }
    }

    /// ∞-norm distance.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert!(self.same_shape(other), "grid shapes differ");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Per-pixel foreground weight in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundMask<T> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Scalar> ForegroundMask<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch { expected: width * height, found: values.len() });
        }
        if values.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::invalid("mask values must lie in [0, 1]"));
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![T::zero(); width * height] }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self { width, height, values: vec![T::one(); width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    pub fn matches<U: Scalar>(&self, grid: &LatentGrid<U>) -> bool {
        self.width == grid.width() && self.height == grid.height()
    }

    pub fn count_set(&self) -> usize {
        self.values.iter().filter(|&&v| v > T::zero()).count()
    }
}

/// Object region contributing to the positive mask.
#[derive(Debug, Clone, PartialEq)]
pub enum PositiveRegion<T> {
    /// The whole box is foreground.
    Box(BoundingBox<T>),
    /// Instance mask on the full grid, gated by its box area.
    Instance { bbox: BoundingBox<T>, mask: ForegroundMask<T> },
}

impl<T: Scalar> PositiveRegion<T> {
    fn bbox(&self) -> &BoundingBox<T> {
        match self {
            PositiveRegion::Box(b) | PositiveRegion::Instance { bbox: b, .. } => b,
        }
    }
}

/// Union of all regions whose box area exceeds `min_area`. A cell belongs to
/// a box when its center lies inside it; boxes are clipped to the grid.
pub fn build_positive_mask<T: Scalar>(
    regions: &[PositiveRegion<T>],
    width: usize,
    height: usize,
    min_area: T,
) -> Result<ForegroundMask<T>> {
    let mut mask = ForegroundMask::zeros(width, height);
    let half = T::lit(0.5);
    for region in regions.iter().filter(|r| r.bbox().area() > min_area) {
        match region {
            PositiveRegion::Box(b) => {
                let (x1, y1, x2, y2) = b.corners();
                for y in 0..height {
                    let cy = T::from_usize(y).unwrap() + half;
                    if cy < y1 || cy >= y2 {
                        continue;
                    }
                    for x in 0..width {
                        let cx = T::from_usize(x).unwrap() + half;
                        if cx >= x1 && cx < x2 {
                            mask.values[y * width + x] = T::one();
                        }
                    }
                }
            }
            PositiveRegion::Instance { mask: inst, .. } => {
                if inst.width != width || inst.height != height {
                    return Err(Error::DimensionMismatch { expected: width * height, found: inst.values.len() });
                }
                for (m, &v) in mask.values.iter_mut().zip(&inst.values) {
                    *m = m.max(v);
                }
            }
        }
    }
    Ok(mask)
}
