use serde::{Deserialize, Serialize};

use super::{Frame, TargetGeometry};
use crate::error::{Error, Result};

/// Video/image preprocessing geometry and clip windowing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub clip_len: usize,
    pub temporal_stride: usize,
    pub window_stride: usize,
    pub video_target: TargetGeometry,
    pub image_target: TargetGeometry,
}

impl ClipConfig {
    /// Full-resolution geometry: 576x432 at 0.0333 cm/px for video and
    /// 320x240 at 0.06 cm/px for still images.
    pub fn paper() -> Self {
        Self {
            clip_len: 24,
            temporal_stride: 2,
            window_stride: 8,
            video_target: TargetGeometry::new(576, 432, 0.0333),
            image_target: TargetGeometry::new(320, 240, 0.06),
        }
    }

    /// Reduced geometry covering the same 19.2 x 14.4 cm field of view.
    pub fn desk() -> Self {
        Self {
            video_target: TargetGeometry::new(32, 24, 0.6),
            image_target: TargetGeometry::new(64, 48, 0.3),
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip_len == 0 || self.temporal_stride == 0 || self.window_stride == 0 {
            return Err(Error::Config(
                "clip length and strides must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ClipConfig {
    fn default() -> Self {
        Self::paper()
    }
}

/// Fixed-length frame sequence with its start index in the subsampled video.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip<T> {
    pub start: usize,
    pub frames: Vec<Frame<T>>,
}

/// Keeps frames `0, factor, 2*factor, ...`.
pub fn temporal_subsample<F: Clone>(frames: &[F], factor: usize) -> Result<Vec<F>> {
    if factor == 0 {
        return Err(Error::InvalidInput("temporal subsampling factor must be >= 1".into()));
    }
    Ok(frames.iter().step_by(factor).cloned().collect())
}

/// Splits a frame sequence into overlapping clips of `clip_len` frames whose
/// starts are `window_stride` apart. A sequence shorter than `clip_len`
/// yields a single clip padded by repeating its final frame.
pub fn extract_clips<T: Clone>(
    frames: &[Frame<T>],
    clip_len: usize,
    window_stride: usize,
) -> Result<Vec<Clip<T>>> {
    if frames.is_empty() {
        return Err(Error::Empty("extract_clips"));
    }
    if clip_len == 0 || window_stride == 0 {
        return Err(Error::InvalidInput("clip length and window stride must be >= 1".into()));
    }
    if frames.len() < clip_len {
        let last = frames[frames.len() - 1].clone();
        let mut padded = frames.to_vec();
        padded.resize(clip_len, last);
        return Ok(vec![Clip {
            start: 0,
            frames: padded,
        }]);
    }
    Ok((0..=frames.len() - clip_len)
        .step_by(window_stride)
        .map(|start| Clip {
            start,
            frames: frames[start..start + clip_len].to_vec(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn video(n: usize) -> Vec<Frame<f32>> {
        (0..n)
            .map(|i| Frame::filled(2, 2, 0.1, i as f32).unwrap())
            .collect()
    }

    fn ids(frames: &[Frame<f32>]) -> Vec<usize> {
        frames.iter().map(|f| f.get(0, 0) as usize).collect()
    }

    #[test]
    fn subsample_by_two() {
        let v = video(10);
        assert_eq!(ids(&temporal_subsample(&v, 2).unwrap()), vec![0, 2, 4, 6, 8]);
        assert_eq!(temporal_subsample(&v, 1).unwrap(), v);
        assert_eq!(ids(&temporal_subsample(&video(1), 2).unwrap()), vec![0]);
        assert!(temporal_subsample(&v, 0).is_err());
    }

    #[test]
    fn clip_windows() {
        let clips = extract_clips(&video(48), 24, 8).unwrap();
        let starts: Vec<usize> = clips.iter().map(|c| c.start).collect();
        assert_eq!(starts, vec![0, 8, 16, 24]);
        assert!(clips.iter().all(|c| c.frames.len() == 24));
        assert_eq!(ids(&clips[3].frames)[0], 24);

        assert_eq!(extract_clips(&video(24), 24, 8).unwrap().len(), 1);
    }

    #[test]
    fn short_video_is_padded_with_last_frame() {
        let clips = extract_clips(&video(20), 24, 8).unwrap();
        assert_eq!(clips.len(), 1);
        let got = ids(&clips[0].frames);
        assert_eq!(got.len(), 24);
        assert_eq!(&got[..20], &(0..20).collect::<Vec<_>>()[..]);
        assert_eq!(&got[20..], &[19, 19, 19, 19]);
    }

    #[test]
    fn empty_video_is_an_error() {
        assert!(extract_clips::<f32>(&[], 24, 8).is_err());
    }
}
