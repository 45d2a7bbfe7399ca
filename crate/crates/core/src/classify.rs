//! Open-vocabulary classification against a vocabulary of class embeddings,
//! plus the text and image distillation losses.
//!
//! The affinity vector puts the background entry first, followed by the
//! vocabulary classes in declaration order.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BACKGROUND_ID;
use crate::scalar::Scalar;
use crate::vector::{check_dims, dot, log_sum_exp, norm, normalized, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Base,
    Novel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabClass<T> {
    pub id: i64,
    pub name: String,
    pub embed: Vec<T>,
    pub split: Split,
}

/// Class id → text embedding, plus a background embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVocabulary<T> {
    classes: Vec<VocabClass<T>>,
    background_embed: Vec<T>,
}

impl<T: Scalar> ClassVocabulary<T> {
    /// Validates ids and dimensions and L2-normalizes every embedding.
    pub fn new(classes: Vec<VocabClass<T>>, background_embed: Vec<T>) -> Result<Self> {
        let background_embed = normalized(&background_embed)?;
        let dim = background_embed.len();
        let mut seen = HashSet::new();
        let classes = classes
            .into_iter()
            .map(|c| {
                if c.id == BACKGROUND_ID {
                    return Err(Error::invalid(format!("class id {BACKGROUND_ID} is reserved for background")));
                }
                if !seen.insert(c.id) {
                    return Err(Error::invalid(format!("duplicate class id {}", c.id)));
                }
                check_dims(dim, c.embed.len())?;
                Ok(VocabClass { embed: normalized(&c.embed)?, ..c })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { classes, background_embed })
    }

    pub fn dim(&self) -> usize {
        self.background_embed.len()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[VocabClass<T>] {
        &self.classes
    }

    pub fn background_embed(&self) -> &[T] {
        &self.background_embed
    }

    pub fn get(&self, class_id: i64) -> Option<&VocabClass<T>> {
        self.classes.iter().find(|c| c.id == class_id)
    }

    pub fn contains(&self, class_id: i64) -> bool {
        self.get(class_id).is_some()
    }

    pub fn split_of(&self, class_id: i64) -> Option<Split> {
        self.get(class_id).map(|c| c.split)
    }

    /// Position of `class_id` in the affinity vector (background is 0).
    pub fn affinity_index(&self, class_id: i64) -> Option<usize> {
        if class_id == BACKGROUND_ID {
            return Some(0);
        }
        self.classes.iter().position(|c| c.id == class_id).map(|i| i + 1)
    }

    /// Class id stored at an affinity-vector position.
    pub fn class_at(&self, index: usize) -> i64 {
        if index == 0 {
            BACKGROUND_ID
        } else {
            self.classes[index - 1].id
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierConfig<T> {
    /// Softmax temperature applied to the affinities.
    pub temperature: T,
}

impl<T: Scalar> Default for ClassifierConfig<T> {
    fn default() -> Self {
        Self { temperature: T::lit(0.07) }
    }
}

impl<T: Scalar> ClassifierConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.temperature > T::zero() && self.temperature.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("temperature must be > 0, got {}", self.temperature)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification<T> {
    /// Probabilities in affinity-vector order.
    pub probs: Vec<T>,
    pub class_id: i64,
    pub confidence: T,
}

/// Cosine affinities `[cos(t, t_bg), cos(t, t_1), …]`.
pub fn class_affinities<T: Scalar>(text_pred: &[T], vocab: &ClassVocabulary<T>) -> Result<Vec<T>> {
    check_dims(vocab.dim(), text_pred.len())?;
    let n = norm(text_pred);
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::invalid("text embedding has zero or non-finite norm"));
    }
    let cos = |e: &[T]| (dot(text_pred, e) / n).max(-T::one()).min(T::one());
    let mut z = Vec::with_capacity(vocab.len() + 1);
    z.push(cos(vocab.background_embed()));
    z.extend(vocab.classes().iter().map(|c| cos(&c.embed)));
    Ok(z)
}

/// Temperature softmax over the affinities. Ties in the argmax go to the
/// lower index, so background wins a full tie.
pub fn classify<T: Scalar>(
    text_pred: &[T],
    vocab: &ClassVocabulary<T>,
    cfg: &ClassifierConfig<T>,
) -> Result<Classification<T>> {
    cfg.validate()?;
    let z = class_affinities(text_pred, vocab)?;
    let scaled: Vec<T> = z.iter().map(|&v| v / cfg.temperature).collect();
    let probs = softmax(&scaled);
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    Ok(Classification {
        class_id: vocab.class_at(best),
        confidence: probs[best],
        probs,
    })
}

/// Training sample for the distillation losses.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillSample<T> {
    pub text_pred: Vec<T>,
    pub image_pred: Vec<T>,
    pub image_teacher: Vec<T>,
    pub label: i64,
}

/// Mean cross-entropy of the temperature softmax against each label.
pub fn loss_text<T: Scalar>(
    batch: &[DistillSample<T>],
    vocab: &ClassVocabulary<T>,
    cfg: &ClassifierConfig<T>,
) -> Result<T> {
    cfg.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = T::zero();
    for s in batch {
        let target = vocab.affinity_index(s.label).ok_or(Error::UnknownClass(s.label))?;
        let scaled: Vec<T> = class_affinities(&s.text_pred, vocab)?
            .into_iter()
            .map(|v| v / cfg.temperature)
            .collect();
        total = total + (log_sum_exp(&scaled) - scaled[target]);
    }
    Ok(total / T::from_usize(batch.len()).unwrap())
}

/// Mean over the batch of `‖image_pred − image_teacher‖₁`.
pub fn loss_image<T: Scalar>(batch: &[DistillSample<T>]) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = T::zero();
    for s in batch {
        check_dims(s.image_teacher.len(), s.image_pred.len())?;
        let l1: T = s
            .image_pred
            .iter()
            .zip(&s.image_teacher)
            .map(|(&a, &b)| (a - b).abs())
            .sum();
        total = total + l1;
    }
    Ok(total / T::from_usize(batch.len()).unwrap())
}
