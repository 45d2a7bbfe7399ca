//! Masked-diffusion data hallucination: forward noising, a pluggable reverse
//! denoiser, foreground compositing and a final homogenization phase.

mod denoiser;
mod grid;
mod schedule;
mod transform;

pub use denoiser::{reverse_step, Denoiser, DenoiserOutput, ToyDenoiser};
pub use grid::{build_positive_mask, ForegroundMask, LatentGrid, PositiveRegion};
pub use schedule::{forward_noise_step, forward_noise_to, NoiseSchedule};
pub use transform::{geometric_transform, Affine2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HallucConfig {
    /// Noise level the reference is pushed to before denoising.
    pub delta0: f64,
    pub steps: usize,
    /// Compositing stops once the noise level is at or below this.
    pub eta: f64,
    /// Minimum box area (cells²) for an object to join the positive mask.
    pub min_area: f64,
    pub seed: u64,
    /// Reverse steps return the denoiser mean without sampling.
    pub deterministic: bool,
    /// Opaque conditioning token passed to the denoiser.
    pub caption: Option<String>,
}

impl Default for HallucConfig {
    fn default() -> Self {
        Self {
            delta0: 0.75,
            steps: 50,
            eta: 0.02,
            min_area: 64.0 * 64.0,
            seed: 0,
            deterministic: false,
            caption: None,
        }
    }
}

impl HallucConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta < self.delta0 && self.delta0 < 1.0) {
            return Err(Error::Config(format!(
                "need 0 < eta < delta0 < 1, got eta={} delta0={}",
                self.eta, self.delta0
            )));
        }
        if !(self.min_area >= 0.0) {
            return Err(Error::Config("min_area must be non-negative".into()));
        }
        Ok(())
    }

    /// Linear-level schedule from `delta0` at step `steps` down to 0.
    pub fn schedule<T: Scalar>(&self) -> Result<NoiseSchedule<T>> {
        self.validate()?;
        NoiseSchedule::linear_levels(T::lit(self.delta0), self.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Masked,
    Homogenize,
}

/// Snapshot handed to the observer after each reverse iteration.
#[derive(Debug)]
pub struct StepRecord<'a, T> {
    /// Step being undone; the output sits at step `k − 1`.
    pub k: usize,
    pub level: T,
    pub phase: Phase,
    /// Denoiser output before compositing.
    pub reverse: &'a LatentGrid<T>,
    /// Foreground branch, present in the masked phase only.
    pub foreground: Option<&'a LatentGrid<T>>,
    pub output: &'a LatentGrid<T>,
}

fn composite<T: Scalar>(x: &mut LatentGrid<T>, fg: &LatentGrid<T>, mask: &ForegroundMask<T>) {
    let ch = x.channels();
    let width = x.width();
    for (i, v) in x.values_mut().iter_mut().enumerate() {
        let cell = i / ch;
        let m = mask.get(cell % width, cell / width);
        let f = fg.values()[i];
        if m == T::one() {
            *v = f;
        } else if m > T::zero() {
            *v = m * f + (T::one() - m) * *v;
        }
    }
}

/// Runs the masked denoising loop and returns the final grid.
///
/// The reference is noised to the schedule's top step. While the noise level
/// of the current step exceeds `cfg.eta`, each reverse step is followed by a
/// fresh forward draw of the reference at the new level, pasted over the
/// masked cells. The remaining steps run the denoiser alone.
pub fn masked_denoise<T, D, R>(
    reference: &LatentGrid<T>,
    mask: &ForegroundMask<T>,
    denoiser: &D,
    sched: &NoiseSchedule<T>,
    cfg: &HallucConfig,
    rng: &mut R,
) -> Result<LatentGrid<T>>
where
    T: Scalar,
    D: Denoiser<T> + ?Sized,
    R: Rng + ?Sized,
{
    masked_denoise_traced(reference, mask, denoiser, sched, cfg, rng, |_| {})
}

/// [`masked_denoise`] with a per-step observer.
pub fn masked_denoise_traced<T, D, R, F>(
    reference: &LatentGrid<T>,
    mask: &ForegroundMask<T>,
    denoiser: &D,
    sched: &NoiseSchedule<T>,
    cfg: &HallucConfig,
    rng: &mut R,
    mut observer: F,
) -> Result<LatentGrid<T>>
where
    T: Scalar,
    D: Denoiser<T> + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&StepRecord<'_, T>),
{
    cfg.validate()?;
    if !mask.matches(reference) {
        return Err(Error::DimensionMismatch {
            expected: reference.width() * reference.height(),
            found: mask.width() * mask.height(),
        });
    }
    let eta = T::lit(cfg.eta);
    let caption = cfg.caption.as_deref();
    let mut x = forward_noise_to(reference, sched.steps(), sched, rng)?;
    for k in (1..=sched.steps()).rev() {
        let level = sched.level(k);
        let reversed = reverse_step(denoiser, &x, k, sched, caption, cfg.deterministic, rng)?;
        if level > eta {
            let fg = forward_noise_to(reference, k - 1, sched, rng)?;
            let mut out = reversed.clone();
            composite(&mut out, &fg, mask);
            observer(&StepRecord { k, level, phase: Phase::Masked, reverse: &reversed, foreground: Some(&fg), output: &out });
            x = out;
        } else {
            observer(&StepRecord { k, level, phase: Phase::Homogenize, reverse: &reversed, foreground: None, output: &reversed });
            x = reversed;
        }
    }
    Ok(x)
}

/// One self-contained job: schedule and RNG come from `cfg`.
pub fn hallucinate<T, D>(
    reference: &LatentGrid<T>,
    mask: &ForegroundMask<T>,
    denoiser: &D,
    cfg: &HallucConfig,
) -> Result<LatentGrid<T>>
where
    T: Scalar,
    D: Denoiser<T> + ?Sized,
{
    let sched = cfg.schedule()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    masked_denoise(reference, mask, denoiser, &sched, cfg, &mut rng)
}

/// Independent jobs in parallel. Job `i` draws from RNG stream `i` of
/// `cfg.seed`, so results do not depend on scheduling.
pub fn hallucinate_batch<T, D>(
    jobs: &[(LatentGrid<T>, ForegroundMask<T>)],
    denoiser: &D,
    cfg: &HallucConfig,
) -> Result<Vec<LatentGrid<T>>>
where
    T: Scalar,
    D: Denoiser<T> + Sync + ?Sized,
{
    let sched = cfg.schedule()?;
    jobs.par_iter()
        .enumerate()
        .map(|(i, (reference, mask))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            masked_denoise(reference, mask, denoiser, &sched, cfg, &mut rng)
        })
        .collect()
}
