//! TETA and Track-mAP evaluation with base/novel split reporting.

mod brute;
mod matching;
mod teta;
mod track_map;

pub use brute::{brute_force_teta, tiny_instance, TinyInstance, MAX_FRAMES, MAX_TRACKS};
pub use matching::{match_frame, TIE_TOLERANCE};
pub use teta::{teta, AssocCounts, AssocTerms, TetaConfig, TetaReport, TetaScores};
pub use track_map::{
    average_precision, group_gt_tracks, iou_3d, track_map, ClassAp, GtTrack, TrackMapConfig, TrackMapScores,
};

use serde::{Deserialize, Serialize};

use crate::classify::ClassVocabulary;
use crate::error::Result;
use crate::model::{Annotation, Track};
use crate::scalar::Scalar;

/// Class subset a score is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    All,
    Base,
    Novel,
}

impl EvalSplit {
    pub const ALL: [EvalSplit; 3] = [EvalSplit::All, EvalSplit::Base, EvalSplit::Novel];

    pub fn name(self) -> &'static str {
        match self {
            EvalSplit::All => "all",
            EvalSplit::Base => "base",
            EvalSplit::Novel => "novel",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMapReport {
    pub all: Option<TrackMapScores>,
    pub base: Option<TrackMapScores>,
    pub novel: Option<TrackMapScores>,
}

impl TrackMapReport {
    pub fn get(&self, split: EvalSplit) -> Option<&TrackMapScores> {
        match split {
            EvalSplit::All => self.all.as_ref(),
            EvalSplit::Base => self.base.as_ref(),
            EvalSplit::Novel => self.novel.as_ref(),
        }
    }
}

/// Track-mAP for every split.
pub fn track_map_report<T: Scalar>(
    tracks: &[Track<T>],
    gt: &[Annotation<T>],
    vocab: &ClassVocabulary<T>,
    cfg: &TrackMapConfig,
) -> Result<TrackMapReport> {
    Ok(TrackMapReport {
        all: track_map(tracks, gt, vocab, cfg, EvalSplit::All)?,
        base: track_map(tracks, gt, vocab, cfg, EvalSplit::Base)?,
        novel: track_map(tracks, gt, vocab, cfg, EvalSplit::Novel)?,
    })
}
