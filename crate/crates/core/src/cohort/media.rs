//! Access to the media referenced by a manifest, either from disk or by
//! re-rendering synthetic visits from the generator seed.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{maturity_level, render_frame, scenes, RawFrame, RenderedFrame};
use super::types::{ground_truth_ga, CohortManifest, MediaKind, MediaRef, Patient, Visit};
use crate::error::{Error, Result};
use crate::imaging::pgm;
use crate::rng::{derive_seed, rng_from_seed};

/// `index.json` of a video directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoIndex {
    pub frames: Vec<String>,
    pub pixel_spacing: f64,
    pub frame_count: usize,
}

pub trait MediaSource: Sync {
    /// Frames of one media item: one for an image, all frames in order for a
    /// video.
    fn load(&self, patient: &Patient, visit: &Visit, media: &MediaRef) -> Result<Vec<RawFrame>>;
}

/// Reads PGM files relative to a media root.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    pub root: PathBuf,
}

impl DirectorySource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl MediaSource for DirectorySource {
    fn load(&self, _: &Patient, _: &Visit, media: &MediaRef) -> Result<Vec<RawFrame>> {
        let path = self.root.join(&media.path);
        let read = |p: &Path| pgm::read::<f32>(p).map(|f| RawFrame::from_frame(&f));
        match media.kind {
            MediaKind::Image => Ok(vec![read(&path)?]),
            MediaKind::Video => {
                let index_path = path.join("index.json");
                let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
                let index: VideoIndex = serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path: index_path.display().to_string(),
                    line: e.line(),
                    message: e.to_string(),
                })?;
                if index.frames.len() != index.frame_count {
                    return Err(Error::Validation(format!(
                        "{}: frame_count {} but {} frames listed",
                        index_path.display(),
                        index.frame_count,
                        index.frames.len()
                    )));
                }
                index.frames.iter().map(|f| read(&path.join(f))).collect()
            }
        }
    }
}

/// Renders synthetic media on demand; identical to what
/// [`write_media_tree`] stores for the same seed.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticSource {
    pub seed: u64,
}

impl MediaSource for SyntheticSource {
    fn load(&self, patient: &Patient, visit: &Visit, media: &MediaRef) -> Result<Vec<RawFrame>> {
        Ok(render_media(patient, visit, media, self.seed)?
            .iter()
            .map(|r| RawFrame::from_frame(&r.frame))
            .collect())
    }
}

/// Renders one media item of a synthetic visit.
pub fn render_media(
    patient: &Patient,
    visit: &Visit,
    media: &MediaRef,
    seed: u64,
) -> Result<Vec<RenderedFrame>> {
    let latent = visit.latent.as_ref().ok_or_else(|| {
        Error::InvalidInput(format!("visit {} has no generator latents to render from", visit.visit_id))
    })?;
    let ga = ground_truth_ga(visit)? as f64;
    let mut rng = rng_from_seed(derive_seed(seed, &media.path));
    let n_frames = match media.kind {
        MediaKind::Image => None,
        MediaKind::Video => Some(media.frame_count.unwrap_or(1).max(1)),
    };
    let echo = maturity_level(ga, latent.maturity_offset_days);
    scenes(media.anatomy, patient.device, echo, n_frames, &mut rng)
        .iter()
        .map(|s| render_frame(s, &latent.true_biometry, &mut rng))
        .collect()
}

/// Writes every media item of a synthetic cohort below `root`. Returns the
/// number of files written.
pub fn write_media_tree(cohort: &CohortManifest, root: &Path, seed: u64) -> Result<usize> {
    let items: Vec<(&Patient, &Visit, &MediaRef)> = cohort
        .visits()
        .flat_map(|(p, v)| v.media.iter().map(move |m| (p, v, m)))
        .collect();
    let counts = items
        .par_iter()
        .map(|(p, v, m)| {
            let frames = render_media(p, v, m, seed)?;
            let path = root.join(&m.path);
            match m.kind {
                MediaKind::Image => {
                    if let Some(parent) = path.parent() {
                        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                    }
                    pgm::write(&frames[0].frame, &path)?;
                    Ok(1)
                }
                MediaKind::Video => {
                    fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
                    let names: Vec<String> = (0..frames.len()).map(|i| format!("frame_{i:03}.pgm")).collect();
                    for (f, name) in frames.iter().zip(&names) {
                        pgm::write(&f.frame, &path.join(name))?;
                    }
                    let index = VideoIndex {
                        frames: names,
                        pixel_spacing: m.pixel_spacing,
                        frame_count: frames.len(),
                    };
                    let index_path = path.join("index.json");
                    let json = serde_json::to_string_pretty(&index).expect("index serialises");
                    fs::write(&index_path, json).map_err(|e| Error::io(&index_path, e))?;
                    Ok(frames.len() + 1)
                }
            }
        })
        .collect::<Result<Vec<usize>>>()?;
    Ok(counts.iter().sum())
}
