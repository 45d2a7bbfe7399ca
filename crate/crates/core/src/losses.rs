//! Multi-positive contrastive instance loss and auxiliary cosine loss, with
//! closed-form gradients.
//!
//! For an anchor `q` with positives `P` and negatives `N` at temperature `τ`:
//!
//! ```text
//! posd  = 1/|P| Σ_p exp(q·p/τ)
//! sim_p = exp(q·p/τ) / (posd + Σ_n exp(q·n/τ))
//! loss  = −1/|P| Σ_p log sim_p
//! ```

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vector::{check_dims, dot, log_sum_exp, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveInstance<T> {
    pub anchor: Vec<T>,
    pub positives: Vec<Vec<T>>,
    pub negatives: Vec<Vec<T>>,
    pub temperature: T,
}

impl<T: Scalar> ContrastiveInstance<T> {
    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::invalid("contrastive instance needs at least one positive"));
        }
        if !(self.temperature > T::zero()) || !self.temperature.is_finite() {
            return Err(Error::Config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        let d = self.anchor.len();
        for v in self.positives.iter().chain(&self.negatives) {
            check_dims(d, v.len())?;
        }
        Ok(())
    }

    fn logits(&self) -> (Vec<T>, Vec<T>) {
        let s = |v: &Vec<T>| dot(&self.anchor, v) / self.temperature;
        (self.positives.iter().map(s).collect(), self.negatives.iter().map(s).collect())
    }
}

/// `log(posd + Σ_n exp(s_n))` from positive and negative logits.
fn log_denominator<T: Scalar>(pos: &[T], neg: &[T]) -> T {
    let log_posd = log_sum_exp(pos) - T::from_usize(pos.len()).unwrap().ln();
    let mut terms = Vec::with_capacity(neg.len() + 1);
    terms.push(log_posd);
    terms.extend_from_slice(neg);
    log_sum_exp(&terms)
}

/// Mean of `exp(q·p/τ)` over the positives.
pub fn pos_d<T: Scalar>(inst: &ContrastiveInstance<T>) -> Result<T> {
    inst.validate()?;
    let (pos, _) = inst.logits();
    let total: T = pos.iter().map(|s| s.exp()).sum();
    Ok(total / T::from_usize(pos.len()).unwrap())
}

/// Contribution of a single anchor.
pub fn instance_loss<T: Scalar>(inst: &ContrastiveInstance<T>) -> Result<T> {
    inst.validate()?;
    let (pos, neg) = inst.logits();
    let mean_pos = pos.iter().copied().sum::<T>() / T::from_usize(pos.len()).unwrap();
    // Jensen guarantees log D >= mean_pos; clamp away rounding below zero.
    Ok((log_denominator(&pos, &neg) - mean_pos).max(T::zero()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// Summed over anchors.
pub fn loss_track<T: Scalar>(batch: &[ContrastiveInstance<T>]) -> Result<T> {
    loss_track_reduced(batch, Reduction::Sum)
}

pub fn loss_track_reduced<T: Scalar>(batch: &[ContrastiveInstance<T>], reduction: Reduction) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = T::zero();
    for inst in batch {
        total = total + instance_loss(inst)?;
    }
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::Mean => total / T::from_usize(batch.len()).unwrap(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackGradient<T> {
    pub anchor: Vec<T>,
    pub positives: Vec<Vec<T>>,
    pub negatives: Vec<Vec<T>>,
}

/// Gradient of [`instance_loss`] with respect to every input vector.
pub fn grad_loss_track<T: Scalar>(inst: &ContrastiveInstance<T>) -> Result<TrackGradient<T>> {
    inst.validate()?;
    let (pos, neg) = inst.logits();
    let log_d = log_denominator(&pos, &neg);
    let p = T::from_usize(pos.len()).unwrap();
    let tau = inst.temperature;

    // dL/ds_p = (sim_p - 1)/|P|, dL/ds_n = exp(s_n)/D
    let d_pos: Vec<T> = pos.iter().map(|&s| ((s - log_d).exp() - T::one()) / p).collect();
    let d_neg: Vec<T> = neg.iter().map(|&s| (s - log_d).exp()).collect();

    let dim = inst.anchor.len();
    let mut anchor = vec![T::zero(); dim];
    for (g, v) in d_pos.iter().zip(&inst.positives).chain(d_neg.iter().zip(&inst.negatives)) {
        for (a, &x) in anchor.iter_mut().zip(v) {
            *a = *a + *g * x / tau;
        }
    }
    let scale_anchor = |g: T| inst.anchor.iter().map(|&x| g * x / tau).collect::<Vec<T>>();
    Ok(TrackGradient {
        anchor,
        positives: d_pos.iter().map(|&g| scale_anchor(g)).collect(),
        negatives: d_neg.iter().map(|&g| scale_anchor(g)).collect(),
    })
}

/// Pair for the auxiliary cosine loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxPair<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub same_identity: bool,
}

impl<T: Scalar> AuxPair<T> {
    fn parts(&self) -> Result<(T, T, T, T)> {
        check_dims(self.a.len(), self.b.len())?;
        let (na, nb) = (norm(&self.a), norm(&self.b));
        if !(na > T::zero()) || !(nb > T::zero()) {
            return Err(Error::invalid("auxiliary loss on a zero vector"));
        }
        let cos = dot(&self.a, &self.b) / (na * nb);
        let target = if self.same_identity { T::one() } else { T::zero() };
        Ok((cos, target, na, nb))
    }
}

/// `(cos(a, b) − e)²` for one pair.
pub fn aux_pair_loss<T: Scalar>(pair: &AuxPair<T>) -> Result<T> {
    let (cos, target, _, _) = pair.parts()?;
    Ok((cos - target).powi(2))
}

/// Mean of [`aux_pair_loss`] over the pairs.
pub fn loss_aux<T: Scalar>(pairs: &[AuxPair<T>]) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = T::zero();
    for p in pairs {
        total = total + aux_pair_loss(p)?;
    }
    Ok(total / T::from_usize(pairs.len()).unwrap())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxGradient<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
}

/// Gradient of [`aux_pair_loss`].
pub fn grad_loss_aux<T: Scalar>(pair: &AuxPair<T>) -> Result<AuxGradient<T>> {
    let (cos, target, na, nb) = pair.parts()?;
    let k = T::lit(2.0) * (cos - target);
    let side = |u: &[T], v: &[T], nu: T, nv: T| -> Vec<T> {
        u.iter()
            .zip(v)
            .map(|(&ui, &vi)| k * (vi / (nu * nv) - cos * ui / (nu * nu)))
            .collect()
    };
    Ok(AuxGradient {
        a: side(&pair.a, &pair.b, na, nb),
        b: side(&pair.b, &pair.a, nb, na),
    })
}

/// Weights of the two association losses in the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    pub w_track: T,
    pub w_aux: T,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        Self { w_track: T::lit(0.25), w_aux: T::one() }
    }
}

/// `w_track · L_track + w_aux · L_aux`.
pub fn weighted_association_loss<T: Scalar>(
    track_batch: &[ContrastiveInstance<T>],
    aux_pairs: &[AuxPair<T>],
    weights: &LossWeights<T>,
) -> Result<T> {
    if !(weights.w_track >= T::zero() && weights.w_aux >= T::zero())
        || !weights.w_track.is_finite()
        || !weights.w_aux.is_finite()
    {
        return Err(Error::Config("loss weights must be finite and non-negative".into()));
    }
    Ok(weights.w_track * loss_track(track_batch)? + weights.w_aux * loss_aux(aux_pairs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    fn inst(pos: Vec<Vec<f64>>, neg: Vec<Vec<f64>>) -> ContrastiveInstance<f64> {
        ContrastiveInstance { anchor: vec![1.0, 0.0], positives: pos, negatives: neg, temperature: 1.0 }
    }

    #[test]
    fn pos_d_examples() {
        assert_abs_diff_eq!(pos_d(&inst(vec![vec![0.0, 1.0]], vec![])).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pos_d(&inst(vec![vec![1.0, 0.0]], vec![])).unwrap(), E, epsilon = 1e-15);
        let two = pos_d(&inst(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![])).unwrap();
        assert_abs_diff_eq!(two, (1.0 + E) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(two, 1.8591409142295225, epsilon = 1e-15);
    }

    #[test]
    fn pos_d_needs_positives() {
        assert!(pos_d(&inst(vec![], vec![])).is_err());
    }

    #[test]
    fn loss_track_examples() {
        let single = inst(vec![vec![0.3, 0.7]], vec![]);
        assert_eq!(loss_track(std::slice::from_ref(&single)).unwrap(), 0.0);

        let with_neg = inst(vec![vec![1.0, 0.0]], vec![vec![-1.0, 0.0]]);
        let l = loss_track(std::slice::from_ref(&with_neg)).unwrap();
        assert_abs_diff_eq!(l, -(E / (E + 1.0 / E)).ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(l, 0.12692801104297263, epsilon = 1e-14);

        let doubled = loss_track(&[with_neg.clone(), with_neg.clone()]).unwrap();
        assert_abs_diff_eq!(doubled, 2.0 * l, epsilon = 1e-14);
        let mean = loss_track_reduced(&[with_neg.clone(), with_neg], Reduction::Mean).unwrap();
        assert_abs_diff_eq!(mean, l, epsilon = 1e-14);
        assert!(matches!(loss_track::<f64>(&[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn loss_track_direct_formula() {
        // direct evaluation of the definition, two positives, two negatives, τ = 0.5
        let i = ContrastiveInstance {
            anchor: vec![0.6, 0.8],
            positives: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            negatives: vec![vec![-1.0, 0.0], vec![0.3, -0.2]],
            temperature: 0.5,
        };
        let e = |v: &[f64]| ((0.6 * v[0] + 0.8 * v[1]) / 0.5).exp();
        let posd = (e(&[1.0, 0.0]) + e(&[0.0, 1.0])) / 2.0;
        let denom = posd + e(&[-1.0, 0.0]) + e(&[0.3, -0.2]);
        let expected = -0.5 * ((e(&[1.0, 0.0]) / denom).ln() + (e(&[0.0, 1.0]) / denom).ln());
        assert_abs_diff_eq!(instance_loss(&i).unwrap(), expected, epsilon = 1e-13);
    }

    #[test]
    fn single_positive_has_zero_gradient() {
        let i = ContrastiveInstance {
            anchor: vec![0.2, -0.4, 0.9],
            positives: vec![vec![0.5, 0.1, -0.3]],
            negatives: vec![],
            temperature: 0.07,
        };
        let g = grad_loss_track(&i).unwrap();
        assert!(g.anchor.iter().chain(&g.positives[0]).all(|&x: &f64| x.abs() < 1e-12));
    }

    #[test]
    fn aux_examples() {
        let p = |a: Vec<f64>, b: Vec<f64>, same| AuxPair { a, b, same_identity: same };
        assert_abs_diff_eq!(loss_aux(&[p(vec![1.0, 2.0], vec![1.0, 2.0], true)]).unwrap(), 0.0, epsilon = 1e-30);
        assert_eq!(loss_aux(&[p(vec![1.0, 0.0], vec![0.0, 3.0], false)]).unwrap(), 0.0);
        assert_eq!(loss_aux(&[p(vec![1.0, 0.0], vec![0.0, 3.0], true)]).unwrap(), 1.0);
        assert!(matches!(loss_aux::<f64>(&[]), Err(Error::EmptyBatch)));
        assert!(loss_aux(&[p(vec![0.0, 0.0], vec![1.0, 0.0], true)]).is_err());
    }

    #[test]
    fn weighted_total_uses_default_weights() {
        let t = vec![inst(vec![vec![1.0, 0.0]], vec![vec![-1.0, 0.0]])];
        let a = vec![AuxPair { a: vec![1.0, 0.0], b: vec![0.0, 1.0], same_identity: true }];
        let w = weighted_association_loss(&t, &a, &LossWeights::default()).unwrap();
        assert_abs_diff_eq!(w, 0.25 * loss_track(&t).unwrap() + 1.0, epsilon = 1e-15);
    }
}
