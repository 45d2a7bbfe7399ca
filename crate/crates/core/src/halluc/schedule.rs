//! Variance schedule and the Gaussian forward process.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::grid::LatentGrid;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub(crate) fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

/// Per-step variances `δ_1 … δ_K` with `α_k = 1 − δ_k` and cumulative
/// `ᾱ_k = α_1 ⋯ α_k` (`ᾱ_0 = 1`).
///
/// The noise level of step `k` is `1 − ᾱ_k`, the total variance a sample of
/// step `k` carries relative to the clean input.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule<T> {
    deltas: Vec<T>,
    alpha_bars: Vec<T>,
}

impl<T: Scalar> NoiseSchedule<T> {
    /// Builds a schedule from per-step variances, first step first.
    pub fn from_deltas(deltas: Vec<T>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        let mut alpha_bars = Vec::with_capacity(deltas.len() + 1);
        alpha_bars.push(T::one());
        for &d in &deltas {
            if !(d > T::zero() && d < T::one()) {
                return Err(Error::Config(format!("step variance {d} outside (0, 1)")));
            }
            let prev = *alpha_bars.last().unwrap();
            alpha_bars.push(prev * (T::one() - d));
        }
        Self::checked(deltas, alpha_bars)
    }

    /// `steps` steps whose noise level rises linearly from 0 to `delta0`:
    /// level(k) = delta0 · k / steps.
    pub fn linear_levels(delta0: T, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if !(delta0 > T::zero() && delta0 < T::one()) {
            return Err(Error::Config(format!("initial noise level {delta0} outside (0, 1)")));
        }
        let k_total = T::from_usize(steps).unwrap();
        let alpha_bars: Vec<T> = (0..=steps)
            .map(|k| T::one() - delta0 * T::from_usize(k).unwrap() / k_total)
            .collect();
        let deltas = alpha_bars.windows(2).map(|w| T::one() - w[1] / w[0]).collect();
        Self::checked(deltas, alpha_bars)
    }

    fn checked(deltas: Vec<T>, alpha_bars: Vec<T>) -> Result<Self> {
        for w in alpha_bars.windows(2) {
            if !(w[1] < w[0]) || !(w[1] > T::zero()) {
                return Err(Error::Config("cumulative schedule must decrease strictly within (0, 1)".into()));
            }
        }
        if deltas.iter().any(|&d| !(d > T::zero() && d < T::one())) {
            return Err(Error::Config("step variances must lie in (0, 1)".into()));
        }
        Ok(Self { deltas, alpha_bars })
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.deltas.len()
    }

    /// `δ_k` for `k` in `1..=K`.
    pub fn delta(&self, k: usize) -> T {
        self.deltas[k - 1]
    }

    pub fn alpha(&self, k: usize) -> T {
        T::one() - self.delta(k)
    }

    /// `ᾱ_k` for `k` in `0..=K`.
    pub fn alpha_bar(&self, k: usize) -> T {
        self.alpha_bars[k]
    }

    /// `1 − ᾱ_k`.
    pub fn level(&self, k: usize) -> T {
        T::one() - self.alpha_bars[k]
    }

    pub(crate) fn check_step(&self, k: usize, allow_zero: bool) -> Result<()> {
        if (k == 0 && !allow_zero) || k > self.steps() {
            Err(Error::invalid(format!("step {k} outside schedule of {} steps", self.steps())))
        } else {
            Ok(())
        }
    }
}

/// Draws `x_k ~ N(√(1 − δ_k) · x_{k−1}, δ_k I)`.
pub fn forward_noise_step<T: Scalar, R: Rng + ?Sized>(
    x: &LatentGrid<T>,
    k: usize,
    sched: &NoiseSchedule<T>,
    rng: &mut R,
) -> Result<LatentGrid<T>> {
    sched.check_step(k, false)?;
    let (scale, sd) = (sched.alpha(k).sqrt(), sched.delta(k).sqrt());
    Ok(x.with_values(x.values().iter().map(|&v| scale * v + sd * standard_normal::<T, R>(rng)).collect()))
}

/// Draws `x_k ~ N(√ᾱ_k · x_0, (1 − ᾱ_k) I)` in one shot; `k = 0` returns `x_0`.
pub fn forward_noise_to<T: Scalar, R: Rng + ?Sized>(
    x0: &LatentGrid<T>,
    k: usize,
    sched: &NoiseSchedule<T>,
    rng: &mut R,
) -> Result<LatentGrid<T>> {
    sched.check_step(k, true)?;
    if k == 0 {
        return Ok(x0.clone());
    }
    let (scale, sd) = (sched.alpha_bar(k).sqrt(), sched.level(k).sqrt());
    Ok(x0.with_values(x0.values().iter().map(|&v| scale * v + sd * standard_normal::<T, R>(rng)).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(samples: &[f64]) -> (f64, f64) {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    // Standard error of the sample variance of a Gaussian: σ²·√(2/(n−1)).
    fn assert_gaussian_moments(samples: &[f64], mean: f64, var: f64) {
        let n = samples.len() as f64;
        let (m, v) = moments(samples);
        assert!((m - mean).abs() < 3.0 * (var / n).sqrt(), "mean {m} vs {mean}");
        assert!((v - var).abs() < 3.0 * var * (2.0 / (n - 1.0)).sqrt(), "var {v} vs {var}");
    }

    #[test]
    fn schedule_rejects_out_of_range() {
        assert!(NoiseSchedule::from_deltas(vec![0.1, 1.0]).is_err());
        assert!(NoiseSchedule::from_deltas(vec![0.0]).is_err());
        assert!(NoiseSchedule::<f64>::from_deltas(vec![]).is_err());
        assert!(NoiseSchedule::linear_levels(1.0, 10).is_err());
        assert!(NoiseSchedule::linear_levels(0.5, 0).is_err());
    }

    #[test]
    fn linear_levels_shape() {
        let s = NoiseSchedule::linear_levels(0.75, 50).unwrap();
        assert_eq!(s.steps(), 50);
        assert_eq!(s.alpha_bar(0), 1.0);
        for k in 1..=50 {
            approx::assert_abs_diff_eq!(s.level(k), 0.75 * k as f64 / 50.0, epsilon = 1e-12);
            assert!(s.alpha_bar(k) < s.alpha_bar(k - 1) && s.alpha_bar(k) > 0.0);
            let prod: f64 = (1..=k).map(|i| s.alpha(i)).product();
            approx::assert_relative_eq!(prod, s.alpha_bar(k), max_relative = 1e-12);
        }
    }

    #[test]
    fn step_moments() {
        let s = NoiseSchedule::from_deltas(vec![0.19]).unwrap();
        let x = LatentGrid::filled(100, 100, 1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = forward_noise_step(&x, 1, &s, &mut rng).unwrap();
        assert_gaussian_moments(out.values(), 0.9, 0.19);
    }

    #[test]
    fn tiny_delta_is_near_identity() {
        let s = NoiseSchedule::from_deltas(vec![1e-12]).unwrap();
        let x = LatentGrid::filled(10, 10, 1, 0.4).unwrap();
        let out = forward_noise_step(&x, 1, &s, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(out.max_abs_diff(&x) < 1e-5);
    }

    #[test]
    fn closed_form_matches_iterated() {
        let s = NoiseSchedule::<f64>::from_deltas(vec![0.1, 0.2, 0.15, 0.3]).unwrap();
        let x = LatentGrid::filled(1, 1, 1, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut iterated, mut direct) = (Vec::new(), Vec::new());
        for _ in 0..10_000 {
            let mut y = x.clone();
            for k in 1..=4 {
                y = forward_noise_step(&y, k, &s, &mut rng).unwrap();
            }
            iterated.push(y.values()[0]);
            direct.push(forward_noise_to(&x, 4, &s, &mut rng).unwrap().values()[0]);
        }
        let mean = s.alpha_bar(4).sqrt() * 2.0;
        let var = s.level(4);
        assert_gaussian_moments(&iterated, mean, var);
        assert_gaussian_moments(&direct, mean, var);
    }

    #[test]
    fn one_step_closed_form_equals_step() {
        let s = NoiseSchedule::from_deltas(vec![0.3]).unwrap();
        let x = LatentGrid::filled(3, 2, 2, -1.5).unwrap();
        let a = forward_noise_step(&x, 1, &s, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = forward_noise_to(&x, 1, &s, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn long_schedule_washes_out_signal() {
        let s = NoiseSchedule::from_deltas(vec![0.5; 60]).unwrap();
        let x = LatentGrid::filled(100, 100, 1, 5.0).unwrap();
        let out = forward_noise_to(&x, 60, &s, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_gaussian_moments(out.values(), 0.0, 1.0);
    }

    #[test]
    fn bad_step_index() {
        let s = NoiseSchedule::from_deltas(vec![0.2]).unwrap();
        let x = LatentGrid::filled(1, 1, 1, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(forward_noise_step(&x, 0, &s, &mut rng).is_err());
        assert!(forward_noise_step(&x, 2, &s, &mut rng).is_err());
        assert_eq!(forward_noise_to(&x, 0, &s, &mut rng).unwrap(), x);
    }
}
