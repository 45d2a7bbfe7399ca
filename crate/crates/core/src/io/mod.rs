//! On-disk formats: JSONL detection and track streams, JSON vocabulary and
//! ground truth, and raw/PNG latent grids.

mod grid;

pub use grid::{read_grid, read_mask, read_ovtg, read_png, write_grid, write_ovtg, write_png, GridFormat, OVTG_MAGIC};

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::assoc::Frame;
use crate::classify::{ClassVocabulary, Split, VocabClass};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::model::{Annotation, Detection, Track, TrackState, BACKGROUND_ID};

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn json_error(e: serde_json::Error) -> Error {
    if e.is_io() {
        Error::Json(e)
    } else {
        parse_error(e.line(), e.to_string())
    }
}

fn to_box(b: [f64; 4]) -> Result<BoundingBox<f64>> {
    BoundingBox::new(b[0], b[1], b[2], b[3])
}

fn from_box(b: &BoundingBox<f64>) -> [f64; 4] {
    [b.x, b.y, b.w, b.h]
}

/// Reads JSON Lines, skipping blank lines. Errors carry 1-based line numbers.
fn read_jsonl<R: BufRead, T: DeserializeOwned>(reader: R) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| parse_error(i + 1, e.to_string()))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn write_jsonl<W: Write, T: Serialize>(mut writer: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionEntry {
    /// Center x, center y, width, height.
    pub bbox: [f64; 4],
    pub score: f64,
    pub embed: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_embed: Option<Vec<f64>>,
}

/// One line of a detection file: every detection of one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub video: String,
    pub frame: u64,
    pub detections: Vec<DetectionEntry>,
}

/// Parses a detection stream and checks per-video frame order and
/// embedding dimensions.
pub fn read_detections<R: BufRead>(reader: R) -> Result<Vec<DetectionRecord>> {
    let rows: Vec<(usize, DetectionRecord)> = read_jsonl(reader)?;
    let mut last: HashMap<String, u64> = HashMap::new();
    let (mut embed_dim, mut text_dim) = (None, None);
    for (line, r) in &rows {
        if let Some(&prev) = last.get(&r.video) {
            if r.frame <= prev {
                return Err(parse_error(*line, format!("frame {} of video {:?} does not follow frame {prev}", r.frame, r.video)));
            }
        }
        last.insert(r.video.clone(), r.frame);
        for d in &r.detections {
            for (dim, v) in [(&mut embed_dim, Some(&d.embed)), (&mut text_dim, d.text_embed.as_ref())] {
                if let Some(v) = v {
                    match *dim {
                        None => *dim = Some(v.len()),
                        Some(n) if n != v.len() => {
                            return Err(parse_error(*line, format!("embedding of length {} where {n} was used before", v.len())))
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

pub fn write_detections<W: Write>(writer: W, records: &[DetectionRecord]) -> Result<()> {
    write_jsonl(writer, records)
}

/// Builds per-video frame lists (videos sorted by name). Text embeddings
/// must match `text_dim` when given.
pub fn records_to_frames(records: &[DetectionRecord], text_dim: Option<usize>) -> Result<Vec<(String, Vec<Frame<f64>>)>> {
    let mut videos: BTreeMap<&str, Vec<Frame<f64>>> = BTreeMap::new();
    for r in records {
        let mut dets = Vec::with_capacity(r.detections.len());
        for d in &r.detections {
            if let (Some(dim), Some(t)) = (text_dim, &d.text_embed) {
                if t.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, found: t.len() });
                }
            }
            dets.push(Detection::new(r.video.clone(), r.frame, to_box(d.bbox)?, d.score, &d.embed, d.text_embed.as_deref())?);
        }
        videos.entry(&r.video).or_default().push(Frame { index: r.frame, detections: dets });
    }
    Ok(videos.into_iter().map(|(v, f)| (v.to_string(), f)).collect())
}

/// Inverse of [`records_to_frames`]; frames without detections are kept.
pub fn frames_to_records(videos: &[(String, Vec<Frame<f64>>)]) -> Vec<DetectionRecord> {
    videos
        .iter()
        .flat_map(|(video, frames)| {
            frames.iter().map(move |f| DetectionRecord {
                video: video.clone(),
                frame: f.index,
                detections: f
                    .detections
                    .iter()
                    .map(|d| DetectionEntry {
                        bbox: from_box(&d.bbox),
                        score: d.score,
                        embed: d.appearance.clone(),
                        text_embed: d.text_embed.clone(),
                    })
                    .collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabEntry {
    pub id: i64,
    pub name: String,
    pub embed: Vec<f64>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabularyFile {
    pub background_embed: Vec<f64>,
    pub classes: Vec<VocabEntry>,
}

impl VocabularyFile {
    pub fn to_vocab(&self) -> Result<ClassVocabulary<f64>> {
        ClassVocabulary::new(
            self.classes
                .iter()
                .map(|c| VocabClass { id: c.id, name: c.name.clone(), embed: c.embed.clone(), split: c.split })
                .collect(),
            self.background_embed.clone(),
        )
    }

    pub fn from_vocab(vocab: &ClassVocabulary<f64>) -> Self {
        Self {
            background_embed: vocab.background_embed().to_vec(),
            classes: vocab
                .classes()
                .iter()
                .map(|c| VocabEntry { id: c.id, name: c.name.clone(), embed: c.embed.clone(), split: c.split })
                .collect(),
        }
    }
}

pub fn read_vocab<R: BufRead>(reader: R) -> Result<VocabularyFile> {
    serde_json::from_reader(reader).map_err(json_error)
}

pub fn write_vocab<W: Write>(mut writer: W, file: &VocabularyFile) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, file)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtEntry {
    pub track_id: u64,
    pub video: String,
    pub frame: u64,
    pub bbox: [f64; 4],
    pub category_id: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Category {
    pub id: i64,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFile {
    pub annotations: Vec<GtEntry>,
    pub categories: Vec<Category>,
}

impl GroundTruthFile {
    /// Validated annotations. Category ids must be listed in `categories`.
    pub fn to_annotations(&self) -> Result<Vec<Annotation<f64>>> {
        let known: HashSet<i64> = self.categories.iter().map(|c| c.id).collect();
        let annos = self
            .annotations
            .iter()
            .map(|a| {
                if !known.contains(&a.category_id) {
                    return Err(Error::UnknownClass(a.category_id));
                }
                Ok(Annotation { track_id: a.track_id, video: a.video.clone(), frame: a.frame, bbox: to_box(a.bbox)?, class_id: a.category_id })
            })
            .collect::<Result<Vec<_>>>()?;
        crate::model::check_unique_annotations(&annos)?;
        Ok(annos)
    }

    /// Categories are taken from the vocabulary, in its order.
    pub fn from_annotations(annos: &[Annotation<f64>], vocab: &ClassVocabulary<f64>) -> Self {
        Self {
            annotations: annos
                .iter()
                .map(|a| GtEntry { track_id: a.track_id, video: a.video.clone(), frame: a.frame, bbox: from_box(&a.bbox), category_id: a.class_id })
                .collect(),
            categories: vocab.classes().iter().map(|c| Category { id: c.id, name: c.name.clone() }).collect(),
        }
    }
}

pub fn read_gt<R: BufRead>(reader: R) -> Result<GroundTruthFile> {
    serde_json::from_reader(reader).map_err(json_error)
}

pub fn write_gt<W: Write>(mut writer: W, file: &GroundTruthFile) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, file)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// One track state per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub video: String,
    pub frame: u64,
    pub track_id: u64,
    pub bbox: [f64; 4],
    pub score: f64,
    pub category_id: i64,
}

/// Parses a track stream, rejecting duplicate `(video, frame, track_id)`.
pub fn read_tracks<R: BufRead>(reader: R) -> Result<Vec<TrackRecord>> {
    let rows: Vec<(usize, TrackRecord)> = read_jsonl(reader)?;
    let mut seen = HashSet::new();
    for (line, r) in &rows {
        if !seen.insert((r.video.clone(), r.frame, r.track_id)) {
            return Err(parse_error(*line, format!("duplicate state for track {} at frame {} of {:?}", r.track_id, r.frame, r.video)));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}

pub fn write_tracks<W: Write>(writer: W, records: &[TrackRecord]) -> Result<()> {
    write_jsonl(writer, records)
}

/// One record per state, ordered by video, frame, track id.
pub fn tracks_to_records(tracks: &[Track<f64>]) -> Vec<TrackRecord> {
    let mut rows: Vec<TrackRecord> = tracks
        .iter()
        .flat_map(|t| {
            t.states.iter().map(move |(&frame, s)| TrackRecord {
                video: t.video.clone(),
                frame,
                track_id: t.id,
                bbox: from_box(&s.bbox),
                score: s.score,
                category_id: s.class_id,
            })
        })
        .collect();
    rows.sort_by(|a, b| a.video.cmp(&b.video).then(a.frame.cmp(&b.frame)).then(a.track_id.cmp(&b.track_id)));
    rows
}

/// Regroups records into tracks ordered by `(video, track_id)`. A track's
/// class is its most frequent state category (lower id on ties) and its
/// confidence the mean state score.
pub fn records_to_tracks(records: &[TrackRecord]) -> Result<Vec<Track<f64>>> {
    let mut map: BTreeMap<(&str, u64), Track<f64>> = BTreeMap::new();
    for r in records {
        let t = map.entry((&r.video, r.track_id)).or_insert_with(|| Track::new(r.track_id, r.video.clone()));
        if !(r.score >= 0.0 && r.score <= 1.0) {
            return Err(Error::invalid(format!("track score {} outside [0, 1]", r.score)));
        }
        let state = TrackState { bbox: to_box(r.bbox)?, score: r.score, class_id: r.category_id };
        if t.states.insert(r.frame, state).is_some() {
            return Err(Error::invalid(format!("duplicate state for track {} at frame {}", r.track_id, r.frame)));
        }
    }
    Ok(map
        .into_values()
        .map(|mut t| {
            let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
            for s in t.states.values() {
                *counts.entry(s.class_id).or_default() += 1;
            }
            let mut best = (BACKGROUND_ID, 0);
            for (&c, &n) in &counts {
                if n > best.1 {
                    best = (c, n);
                }
            }
            t.class_id = best.0;
            t.last_seen = t.states.keys().last().copied().unwrap_or(0);
            t.confidence = t.mean_score();
            t
        })
        .collect())
}
