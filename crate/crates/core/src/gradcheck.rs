//! Central finite-difference verification of analytic gradients.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{aux_pair_loss, grad_loss_aux, grad_loss_track, instance_loss, AuxPair, ContrastiveInstance};
use crate::scalar::Scalar;

/// A scalar function of a flat parameter vector with a known gradient.
pub trait DifferentiableLoss<T> {
    fn value(&self, x: &[T]) -> Result<T>;
    fn gradient(&self, x: &[T]) -> Result<Vec<T>>;
}

/// Largest coordinate-wise `|fd − analytic| / max(1, |analytic|)` where `fd`
/// is the central difference `(f(x + h e_i) − f(x − h e_i)) / 2h`.
pub fn finite_diff_check<T: Scalar, L: DifferentiableLoss<T> + ?Sized>(loss: &L, point: &[T], step: T) -> Result<T> {
    if !(step > T::zero()) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {step}")));
    }
    let analytic = loss.gradient(point)?;
    if analytic.len() != point.len() {
        return Err(Error::DimensionMismatch { expected: point.len(), found: analytic.len() });
    }
    let mut x = point.to_vec();
    let mut worst = T::zero();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let up = loss.value(&x)?;
        x[i] = orig - step;
        let down = loss.value(&x)?;
        x[i] = orig;
        let fd = (up - down) / (T::lit(2.0) * step);
        let err = (fd - analytic[i]).abs() / analytic[i].abs().max(T::one());
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Per-anchor contrastive loss as a function of
/// `[anchor, positives…, negatives…]` flattened.
#[derive(Debug, Clone, Copy)]
pub struct TrackLossFn<T> {
    pub dim: usize,
    pub positives: usize,
    pub negatives: usize,
    pub temperature: T,
}

impl<T: Scalar> TrackLossFn<T> {
    pub fn for_instance(inst: &ContrastiveInstance<T>) -> Self {
        Self {
            dim: inst.anchor.len(),
            positives: inst.positives.len(),
            negatives: inst.negatives.len(),
            temperature: inst.temperature,
        }
    }

    pub fn pack(inst: &ContrastiveInstance<T>) -> Vec<T> {
        let mut out = inst.anchor.clone();
        for v in inst.positives.iter().chain(&inst.negatives) {
            out.extend_from_slice(v);
        }
        out
    }

    pub fn unpack(&self, x: &[T]) -> Result<ContrastiveInstance<T>> {
        let expected = self.dim * (1 + self.positives + self.negatives);
        if x.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: x.len() });
        }
        let mut chunks = x.chunks(self.dim).map(<[T]>::to_vec);
        let anchor = chunks.next().unwrap_or_default();
        let positives = chunks.by_ref().take(self.positives).collect();
        let negatives = chunks.collect();
        Ok(ContrastiveInstance { anchor, positives, negatives, temperature: self.temperature })
    }
}

impl<T: Scalar> DifferentiableLoss<T> for TrackLossFn<T> {
    fn value(&self, x: &[T]) -> Result<T> {
        instance_loss(&self.unpack(x)?)
    }

    fn gradient(&self, x: &[T]) -> Result<Vec<T>> {
        let g = grad_loss_track(&self.unpack(x)?)?;
        let mut out = g.anchor;
        for v in g.positives.iter().chain(&g.negatives) {
            out.extend_from_slice(v);
        }
        Ok(out)
    }
}

/// Auxiliary pair loss as a function of `[a, b]` flattened.
#[derive(Debug, Clone, Copy)]
pub struct AuxLossFn {
    pub dim: usize,
    pub same_identity: bool,
}

impl AuxLossFn {
    fn unpack<T: Scalar>(&self, x: &[T]) -> Result<AuxPair<T>> {
        if x.len() != 2 * self.dim {
            return Err(Error::DimensionMismatch { expected: 2 * self.dim, found: x.len() });
        }
        Ok(AuxPair { a: x[..self.dim].to_vec(), b: x[self.dim..].to_vec(), same_identity: self.same_identity })
    }
}

impl<T: Scalar> DifferentiableLoss<T> for AuxLossFn {
    fn value(&self, x: &[T]) -> Result<T> {
        aux_pair_loss(&self.unpack(x)?)
    }

    fn gradient(&self, x: &[T]) -> Result<Vec<T>> {
        let g = grad_loss_aux(&self.unpack(x)?)?;
        let mut out = g.a;
        out.extend(g.b);
        Ok(out)
    }
}

fn gaussian_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, dim);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random contrastive instance of embedding-like vectors: directions uniform
/// on the sphere, norms in `[0.5, 1.5]`.
pub fn random_track_instance<R: Rng>(
    rng: &mut R,
    dim: usize,
    positives: usize,
    negatives: usize,
    temperature: f64,
) -> ContrastiveInstance<f64> {
    let mut v = || {
        let s = rng.random_range(0.5..1.5);
        unit_vec(rng, dim).into_iter().map(|x| x * s).collect::<Vec<_>>()
    };
    ContrastiveInstance {
        anchor: v(),
        positives: (0..positives).map(|_| v()).collect(),
        negatives: (0..negatives).map(|_| v()).collect(),
        temperature,
    }
}

pub fn random_aux_pair<R: Rng>(rng: &mut R, dim: usize) -> AuxPair<f64> {
    let s = rng.random_range(0.5..1.5);
    let a = unit_vec(rng, dim).into_iter().map(|x| x * s).collect();
    let s = rng.random_range(0.5..1.5);
    let b = unit_vec(rng, dim).into_iter().map(|x| x * s).collect();
    AuxPair { a, b, same_identity: rng.random_bool(0.5) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradLoss {
    Track,
    Aux,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub loss: GradLoss,
    pub seed: u64,
    pub instances: usize,
    pub step: f64,
    pub temperature: f64,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
}

/// Checks `instances` random cases: dimension in `1..=8`, up to 3 positives
/// and 5 negatives for the contrastive loss.
pub fn gradcheck_sweep(loss: GradLoss, seed: u64, instances: usize, step: f64, temperature: f64) -> Result<GradCheckReport> {
    if instances == 0 {
        return Err(Error::Config("need at least one instance".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err = 0.0f64;
    let mut sum_err = 0.0f64;
    for _ in 0..instances {
        let dim = rng.random_range(1..=8);
        let err = match loss {
            GradLoss::Track => {
                let pos = rng.random_range(1..=3);
                let neg = rng.random_range(0..=5);
                let inst = random_track_instance(&mut rng, dim, pos, neg, temperature);
                finite_diff_check(&TrackLossFn::for_instance(&inst), &TrackLossFn::pack(&inst), step)?
            }
            GradLoss::Aux => {
                let pair = random_aux_pair(&mut rng, dim);
                let f = AuxLossFn { dim, same_identity: pair.same_identity };
                let mut x = pair.a.clone();
                x.extend_from_slice(&pair.b);
                finite_diff_check(&f, &x, step)?
            }
        };
        max_err = max_err.max(err);
        sum_err += err;
    }
    Ok(GradCheckReport {
        loss,
        seed,
        instances,
        step,
        temperature,
        max_rel_err: max_err,
        mean_rel_err: sum_err / instances as f64,
    })
}
