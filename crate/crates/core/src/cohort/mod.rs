//! Cohort data model, manifest I/O, patient-level splits and the synthetic
//! cohort generator.

mod manifest;
mod media;
pub mod render;
mod split;
mod synth;
mod types;

pub use manifest::{load_manifest, parse_manifest, render_manifest, save_manifest};
pub use media::{render_media, write_media_tree, DirectorySource, MediaSource, SyntheticSource, VideoIndex};
pub use render::RawFrame;
pub use split::{split_patients, split_sizes, Split, SplitAssignment};
pub use synth::{
    median_biometry, severe_sga_z, synthesize_cohort, BiometryNoiseModel, SynthConfig, SIZE_LOG_SD,
    TRIMESTER_DAYS,
};
pub use types::*;
