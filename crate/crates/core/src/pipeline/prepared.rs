//! Media preprocessed to model geometry, stored compactly as 8-bit frames.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{ground_truth_ga, CohortManifest, MediaKind, MediaSource, RawFrame};
use crate::error::{Error, Result};
use crate::estimator::{Modality, ModelInput, TrainingSet};
use crate::imaging::{extract_clips, resample_to_physical_scale, temporal_subsample, Clip, ClipConfig, Frame};
use crate::scalar::Scalar;

/// One model input: a still image or one clip of a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedItem {
    /// Media path, with `#<clip start>` for clips.
    pub source: String,
    pub modality: Modality,
    pub start: usize,
    #[serde(skip)]
    pub frames: Vec<RawFrame>,
}

impl PreparedItem {
    pub fn to_input<T: Scalar>(&self) -> Result<ModelInput<T>> {
        let frames = self.frames.iter().map(RawFrame::to_frame).collect::<Result<Vec<Frame<T>>>>()?;
        Ok(match self.modality {
            Modality::Image => ModelInput::Image(frames.into_iter().next().ok_or(Error::Empty("image item"))?),
            Modality::Video => ModelInput::Clip(Clip {
                start: self.start,
                frames,
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedVisit {
    pub patient_id: String,
    pub visit_id: String,
    pub ga_days: f64,
    pub items: Vec<PreparedItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedSet {
    pub clip: ClipConfig,
    pub visits: Vec<PreparedVisit>,
    /// Run record of the command that produced the set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

const MAGIC: &[u8; 8] = b"GAPREP01";

fn preprocess_frames(frames: &[RawFrame], kind: MediaKind, cfg: &ClipConfig, path: &str) -> Result<Vec<PreparedItem>> {
    let to_target = |raw: &RawFrame, target| -> Result<RawFrame> {
        let f: Frame<f32> = raw.to_frame()?;
        Ok(RawFrame::from_frame(&resample_to_physical_scale(&f, target)?))
    };
    match kind {
        MediaKind::Image => {
            let raw = frames.first().ok_or(Error::Empty("image media"))?;
            Ok(vec![PreparedItem {
                source: path.to_string(),
                modality: Modality::Image,
                start: 0,
                frames: vec![to_target(raw, &cfg.image_target)?],
            }])
        }
        MediaKind::Video => {
            let kept = temporal_subsample(frames, cfg.temporal_stride)?;
            let resized = kept
                .iter()
                .map(|r| to_target(r, &cfg.video_target)?.to_frame::<f32>())
                .collect::<Result<Vec<_>>>()?;
            Ok(extract_clips(&resized, cfg.clip_len, cfg.window_stride)?
                .into_iter()
                .map(|c| PreparedItem {
                    source: format!("{path}#{}", c.start),
                    modality: Modality::Video,
                    start: c.start,
                    frames: c.frames.iter().map(RawFrame::from_frame).collect(),
                })
                .collect())
        }
    }
}

/// Loads, resamples and clips the media of every visit of the selected
/// patients (all patients when `patients` is `None`).
pub fn preprocess(
    cohort: &CohortManifest,
    source: &dyn MediaSource,
    cfg: &ClipConfig,
    patients: Option<&BTreeSet<String>>,
) -> Result<PreparedSet> {
    cfg.validate()?;
    let selected: Vec<_> = cohort
        .visits()
        .filter(|(p, _)| patients.is_none_or(|s| s.contains(&p.patient_id)))
        .collect();
    let visits = selected
        .par_iter()
        .map(|(p, v)| {
            let mut items = Vec::new();
            for m in &v.media {
                let raw = source.load(p, v, m)?;
                items.extend(preprocess_frames(&raw, m.kind, cfg, &m.path)?);
            }
            Ok(PreparedVisit {
                patient_id: p.patient_id.clone(),
                visit_id: v.visit_id.clone(),
                ga_days: ground_truth_ga(v)? as f64,
                items,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedSet {
        clip: cfg.clone(),
        visits,
        provenance: None,
    })
}

impl PreparedSet {
    /// `GAPREP01`, u32 LE metadata length, JSON metadata, then the pixels of
    /// every frame in item order.
    pub fn encode(&self) -> Vec<u8> {
        let mut meta = serde_json::to_value(self).expect("prepared set serialises");
        // frame geometry is carried next to the item descriptors
        for (v, mv) in self.visits.iter().zip(meta["visits"].as_array_mut().expect("visits array")) {
            for (item, mi) in v.items.iter().zip(mv["items"].as_array_mut().expect("items array")) {
                let geom: Vec<(usize, usize, f64)> =
                    item.frames.iter().map(|f| (f.width, f.height, f.pixel_spacing())).collect();
                mi["frames"] = serde_json::to_value(geom).expect("geometry serialises");
            }
        }
        let json = serde_json::to_vec(&meta).expect("metadata serialises");
        let mut out = MAGIC.to_vec();
        out.extend((json.len() as u32).to_le_bytes());
        out.extend(json);
        for f in self.visits.iter().flat_map(|v| &v.items).flat_map(|i| &i.frames) {
            out.extend(&f.data);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidInput(format!("prepared media file: {m}"));
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let meta_bytes = bytes.get(12..12 + len).ok_or_else(|| bad("truncated metadata"))?;
        let meta: serde_json::Value = serde_json::from_slice(meta_bytes).map_err(|e| bad(&e.to_string()))?;
        let mut set: PreparedSet = serde_json::from_value(meta.clone()).map_err(|e| bad(&e.to_string()))?;
        let mut pos = 12 + len;
        let visits_meta = meta["visits"].as_array().ok_or_else(|| bad("no visits"))?;
        for (v, mv) in set.visits.iter_mut().zip(visits_meta) {
            let items_meta = mv["items"].as_array().ok_or_else(|| bad("no items"))?;
            for (item, mi) in v.items.iter_mut().zip(items_meta) {
                let geom: Vec<(usize, usize, f64)> =
                    serde_json::from_value(mi["frames"].clone()).map_err(|e| bad(&e.to_string()))?;
                for (w, h, s) in geom {
                    let data = bytes.get(pos..pos + w * h).ok_or_else(|| bad("truncated pixels"))?;
                    pos += w * h;
                    let f: Frame<f32> = Frame::from_u8(w, h, s, data)?;
                    item.frames.push(RawFrame::from_frame(&f));
                }
            }
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Training examples of one modality.
    pub fn examples(&self, modality: Modality) -> ModalityExamples<'_> {
        let index = self
            .visits
            .iter()
            .enumerate()
            .flat_map(|(vi, v)| {
                v.items
                    .iter()
                    .enumerate()
                    .filter(move |(_, it)| it.modality == modality)
                    .map(move |(ii, _)| (vi, ii))
            })
            .collect();
        ModalityExamples { set: self, index }
    }
}

/// View of a [`PreparedSet`] restricted to one modality.
pub struct ModalityExamples<'a> {
    set: &'a PreparedSet,
    index: Vec<(usize, usize)>,
}

impl ModalityExamples<'_> {
    pub fn labels(&self) -> impl Iterator<Item = f64> + '_ {
        self.index.iter().map(|(v, _)| self.set.visits[*v].ga_days)
    }
}

impl<T: Scalar> TrainingSet<T> for ModalityExamples<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn example(&self, index: usize) -> Result<(ModelInput<T>, f64)> {
        let (v, i) = self.index[index];
        let visit = &self.set.visits[v];
        Ok((visit.items[i].to_input()?, visit.ga_days))
    }
}
