//! Open-vocabulary multi-object tracking toolkit.
//!
//! Detections carrying appearance and text-head embeddings are classified
//! against a user-supplied vocabulary and linked into tracks by appearance
//! similarity. Results are scored with TETA and Track-mAP under base/novel
//! class splits. The crate also carries the training losses with verified
//! gradients, the masked-diffusion hallucination schedule with a pluggable
//! denoiser, and a synthetic scenario generator used as an end-to-end oracle.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assoc;
pub mod classify;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod gradcheck;
pub mod halluc;
pub mod io;
pub mod losses;
pub mod model;
pub mod nms;
pub mod scalar;
pub mod sim;
pub mod vector;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BoundingBox = geometry::BoundingBox<f64>;
pub type Detection = model::Detection<f64>;
pub type TrackState = model::TrackState<f64>;
pub type Track = model::Track<f64>;
pub type Annotation = model::Annotation<f64>;
pub type ClassVocabulary = classify::ClassVocabulary<f64>;
pub type ClassifierConfig = classify::ClassifierConfig<f64>;
pub type AssociationConfig = assoc::AssociationConfig<f64>;
pub type TrackStore = assoc::TrackStore<f64>;
pub type Frame = assoc::Frame<f64>;
pub type ContrastiveInstance = losses::ContrastiveInstance<f64>;
pub type AuxPair = losses::AuxPair<f64>;

pub type BoundingBox32 = geometry::BoundingBox<f32>;
pub type Detection32 = model::Detection<f32>;
pub type Track32 = model::Track<f32>;
