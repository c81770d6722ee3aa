//! Face presentation attack detection toolkit: pixel-wise three-channel
//! annotation from landmark-prompted segmentation, region-exchange batch
//! augmentation, a dual-stream central-difference network, and the
//! evaluation protocols around them.

pub mod annotator;
pub mod chanmap;
pub mod decision;
pub mod depth;
pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod landmarks;
pub mod mask;
pub mod mcrea;
pub mod network;
pub mod pipeline;
pub mod sample;
pub mod segmenter;

pub use chanmap::{Channel, ThreeChannelMap};
pub use depth::{normalize_depth, DepthMap};
pub use error::{Error, Result};
pub use geometry::Point;
pub use landmarks::{LandmarkSet, FACE_REGIONS};
pub use mask::{MaskLabel, RegionMask};
pub use sample::{PaiRegionSpec, Sample, Split, TruthLabel};
