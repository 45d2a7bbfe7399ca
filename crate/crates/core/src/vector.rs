//! Small dense-vector helpers over scalar slices.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Returns `v / ‖v‖₂`. Fails on empty, zero or non-finite vectors.
pub fn normalized<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    if v.is_empty() {
        return Err(Error::invalid("empty embedding vector"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("embedding contains non-finite values"));
    }
    let n = norm(v);
    if n <= T::zero() || !n.is_finite() {
        return Err(Error::invalid("embedding has zero norm"));
    }
    Ok(v.iter().map(|&x| x / n).collect())
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log Σ exp(x_i)` computed with max subtraction.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let total: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + total.ln()
}
