//! Finger-knuckle-print recognition from binary edge maps.
//!
//! The pipeline turns a grayscale knuckle image into a pair of binary
//! templates (dark "shadow" valleys and bright "light" ridges), cleans them
//! with a shrinking-window popcount filter, crops a region of interest and
//! matches templates with mean-absolute, Hausdorff or truncated Chamfer
//! distances.

pub mod cli;
pub mod eval;
pub mod filters;
pub mod gallery;
pub mod imagecore;
pub mod roi;
pub mod similarity;

pub use filters::{preprocess, NoiseParams, PipelineParams, SobelParams};
pub use gallery::{EntryKey, FingerLabel, Gallery, GalleryEntry, MatchResult, Matcher, Pipeline};
pub use imagecore::{BinaryImage, GrayImage, ImageError, TemplatePair};
pub use roi::{extract_roi, RoiSpec};
pub use similarity::{
    chamfer, distance_transform, hausdorff, mean_absolute, pair_score, ChamferParams, Measure,
};
