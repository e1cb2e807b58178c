//! Frame resampling to a fixed physical scale, temporal subsampling, clip
//! extraction and training-time augmentation.

mod augment;
mod clips;
mod frame;
pub mod pgm;
mod resample;

pub use augment::{augment_clip, augment_frame, AugmentConfig, AugmentParams};
pub use clips::{extract_clips, temporal_subsample, Clip, ClipConfig};
pub use frame::Frame;
pub use resample::{resample_to_physical_scale, TargetGeometry};
