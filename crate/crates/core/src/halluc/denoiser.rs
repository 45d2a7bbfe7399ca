//! Reverse-process interface and the analytic toy denoiser.

use rand::Rng;

use super::grid::LatentGrid;
use super::schedule::{standard_normal, NoiseSchedule};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Gaussian reverse-step parameters: mean grid and isotropic standard
/// deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput<T> {
    pub mean: LatentGrid<T>,
    pub stdev: T,
}

/// Predicts `x_{k−1}` from `x_k`.
///
/// `conditioning` is an opaque token (e.g. an image caption) handed through
/// to the implementation untouched.
pub trait Denoiser<T> {
    fn reverse(
        &self,
        x: &LatentGrid<T>,
        k: usize,
        sched: &NoiseSchedule<T>,
        conditioning: Option<&str>,
    ) -> Result<DenoiserOutput<T>>;
}

/// Exact posterior `q(x_{k−1} | x_k, x_0 = target)` of the forward process.
#[derive(Debug, Clone)]
pub struct ToyDenoiser<T> {
    target: LatentGrid<T>,
}

impl<T: Scalar> ToyDenoiser<T> {
    pub fn new(target: LatentGrid<T>) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &LatentGrid<T> {
        &self.target
    }

    /// `(c_target, c_x, variance)` with mean `c_target · x_0 + c_x · x_k`.
    pub fn posterior_coefficients(sched: &NoiseSchedule<T>, k: usize) -> (T, T, T) {
        let ab_prev = sched.alpha_bar(k - 1);
        let one_minus_ab = sched.level(k);
        let delta = sched.delta(k);
        let c_target = ab_prev.sqrt() * delta / one_minus_ab;
        let c_x = sched.alpha(k).sqrt() * (T::one() - ab_prev) / one_minus_ab;
        let var = (T::one() - ab_prev) * delta / one_minus_ab;
        (c_target, c_x, var.max(T::zero()))
    }
}

impl<T: Scalar> Denoiser<T> for ToyDenoiser<T> {
    fn reverse(
        &self,
        x: &LatentGrid<T>,
        k: usize,
        sched: &NoiseSchedule<T>,
        _conditioning: Option<&str>,
    ) -> Result<DenoiserOutput<T>> {
        sched.check_step(k, false)?;
        if !x.same_shape(&self.target) {
            return Err(Error::DimensionMismatch { expected: self.target.values().len(), found: x.values().len() });
        }
        let (ct, cx, var) = Self::posterior_coefficients(sched, k);
        let mean = x
            .values()
            .iter()
            .zip(self.target.values())
            .map(|(&xv, &tv)| ct * tv + cx * xv)
            .collect();
        Ok(DenoiserOutput { mean: x.with_values(mean), stdev: var.sqrt() })
    }
}

/// One reverse step: the denoiser mean, plus Gaussian noise unless
/// `deterministic`.
pub fn reverse_step<T: Scalar, D: Denoiser<T> + ?Sized, R: Rng + ?Sized>(
    denoiser: &D,
    x: &LatentGrid<T>,
    k: usize,
    sched: &NoiseSchedule<T>,
    conditioning: Option<&str>,
    deterministic: bool,
    rng: &mut R,
) -> Result<LatentGrid<T>> {
    let out = denoiser.reverse(x, k, sched, conditioning)?;
    if !out.mean.same_shape(x) {
        return Err(Error::DimensionMismatch { expected: x.values().len(), found: out.mean.values().len() });
    }
    if !(out.stdev >= T::zero()) {
        return Err(Error::invalid(format!("denoiser returned stdev {}", out.stdev)));
    }
    if deterministic || out.stdev == T::zero() {
        return Ok(out.mean);
    }
    let sd = out.stdev;
    let values = out
        .mean
        .values()
        .iter()
        .map(|&m| m + sd * standard_normal::<T, R>(rng))
        .collect();
    Ok(out.mean.with_values(values))
}
