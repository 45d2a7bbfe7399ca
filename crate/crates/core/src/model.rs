//! Detections, tracks and ground-truth annotations.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::scalar::Scalar;
use crate::vector::normalized;

/// Class id reserved for the background entry of a vocabulary.
pub const BACKGROUND_ID: i64 = -1;

/// A localized object candidate in one frame.
///
/// Embeddings are L2-normalized on construction, so dot products between
/// them are cosine similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub bbox: BoundingBox<T>,
    pub score: T,
    pub appearance: Vec<T>,
    pub text_embed: Option<Vec<T>>,
    pub frame: u64,
    pub video: String,
}

impl<T: Scalar> Detection<T> {
    pub fn new(
        video: impl Into<String>,
        frame: u64,
        bbox: BoundingBox<T>,
        score: T,
        appearance: &[T],
        text_embed: Option<&[T]>,
    ) -> Result<Self> {
        bbox.validate()?;
        if !(score >= T::zero() && score <= T::one()) {
            return Err(Error::invalid(format!("detection score {score} outside [0, 1]")));
        }
        Ok(Self {
            bbox,
            score,
            appearance: normalized(appearance)?,
            text_embed: text_embed.map(normalized).transpose()?,
            frame,
            video: video.into(),
        })
    }
}

/// Per-frame state of a track: box, confidence and class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState<T> {
    pub bbox: BoundingBox<T>,
    pub score: T,
    pub class_id: i64,
}

/// One frame-level classification result kept for temporal voting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassVote<T> {
    pub frame: u64,
    pub class_id: i64,
    pub confidence: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry<T> {
    pub frame: u64,
    pub embedding: Vec<T>,
}

/// An object identity followed through a video.
#[derive(Debug, Clone, PartialEq)]
pub struct Track<T> {
    pub id: u64,
    pub video: String,
    pub states: BTreeMap<u64, TrackState<T>>,
    /// Most recent appearance embeddings, oldest first.
    pub memory: VecDeque<MemoryEntry<T>>,
    pub class_history: Vec<ClassVote<T>>,
    pub last_seen: u64,
    /// Track-level class, fixed by temporal voting once the video ends.
    pub class_id: i64,
    /// Mean per-frame score, used to rank tracks.
    pub confidence: T,
}

impl<T: Scalar> Track<T> {
    pub fn new(id: u64, video: impl Into<String>) -> Self {
        Self {
            id,
            video: video.into(),
            states: BTreeMap::new(),
            memory: VecDeque::new(),
            class_history: Vec::new(),
            last_seen: 0,
            class_id: BACKGROUND_ID,
            confidence: T::zero(),
        }
    }

    /// Appends an observation. Frames must be strictly increasing.
    pub fn observe(
        &mut self,
        frame: u64,
        state: TrackState<T>,
        embedding: Vec<T>,
        vote: Option<ClassVote<T>>,
        memory_frames: usize,
    ) -> Result<()> {
        if let Some((&last, _)) = self.states.last_key_value() {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { frame, last });
            }
        }
        self.states.insert(frame, state);
        self.memory.push_back(MemoryEntry { frame, embedding });
        while self.memory.len() > memory_frames.max(1) {
            self.memory.pop_front();
        }
        if let Some(v) = vote {
            self.class_history.push(v);
        }
        self.last_seen = frame;
        Ok(())
    }

    /// Embedding used for matching: the latest memory entry.
    pub fn latest_embedding(&self) -> Option<&[T]> {
        self.memory.back().map(|m| m.embedding.as_slice())
    }

    pub fn mean_score(&self) -> T {
        if self.states.is_empty() {
            return T::zero();
        }
        let total: T = self.states.values().map(|s| s.score).sum();
        total / T::from_usize(self.states.len()).unwrap()
    }

    pub fn first_frame(&self) -> Option<u64> {
        self.states.keys().next().copied()
    }
}

/// A ground-truth object state in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation<T> {
    pub track_id: u64,
    pub video: String,
    pub frame: u64,
    pub bbox: BoundingBox<T>,
    pub class_id: i64,
}

/// Rejects duplicate `(video, track_id, frame)` annotations.
pub fn check_unique_annotations<T>(annos: &[Annotation<T>]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for a in annos {
        if !seen.insert((a.video.as_str(), a.track_id, a.frame)) {
            return Err(Error::invalid(format!(
                "duplicate annotation for track {} at frame {} in video {}",
                a.track_id, a.frame, a.video
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb() -> BoundingBox<f64> {
        BoundingBox::new(5.0, 5.0, 2.0, 2.0).unwrap()
    }

    #[test]
    fn detection_normalizes_embeddings() {
        let d = Detection::new("v", 0, bb(), 0.5, &[3.0, 4.0], Some(&[0.0, 2.0])).unwrap();
        assert_eq!(d.appearance, vec![0.6, 0.8]);
        assert_eq!(d.text_embed, Some(vec![0.0, 1.0]));
    }

    #[test]
    fn detection_rejects_bad_score() {
        assert!(Detection::new("v", 0, bb(), 1.5, &[1.0], None).is_err());
        assert!(Detection::new("v", 0, bb(), f64::NAN, &[1.0], None).is_err());
    }

    #[test]
    fn memory_is_bounded_fifo() {
        let mut t = Track::<f64>::new(0, "v");
        let st = TrackState { bbox: bb(), score: 0.5, class_id: 1 };
        for f in 0..5 {
            t.observe(f, st, vec![f as f64], None, 3).unwrap();
        }
        assert_eq!(t.memory.len(), 3);
        assert_eq!(t.memory.front().unwrap().frame, 2);
        assert_eq!(t.latest_embedding(), Some(&[4.0][..]));
        assert_eq!(t.last_seen, 4);
        assert!(t.observe(4, st, vec![0.0], None, 3).is_err());
    }

    #[test]
    fn duplicate_annotations_rejected() {
        let a = Annotation { track_id: 1, video: "v".into(), frame: 0, bbox: bb(), class_id: 0 };
        assert!(check_unique_annotations(&[a.clone(), a]).is_err());
    }
}
