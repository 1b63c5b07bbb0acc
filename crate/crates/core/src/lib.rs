//! Superpixel-boundary mask augmentation for weather image classification.
//!
//! The pipeline: decode an image ([`imgcore`]), segment it with SLIC
//! ([`superpixel`]), paint the segment boundaries in a solid colour
//! ([`maskaug`]), extract a feature vector ([`features`]), train one linear
//! max-margin model per weather category ([`svm`]) on partitions from
//! [`datasetman`], and score the held-out split with average precision
//! ([`evalkit`]). [`cli`] drives the full raw / 25 / 50 / 75 / 100 superpixel
//! grid from one JSON config.

pub mod cli;
pub mod datasetman;
pub mod evalkit;
pub mod features;
pub mod imgcore;
pub mod maskaug;
pub mod rng;
pub mod superpixel;
pub mod svm;
pub mod synth;

pub use datasetman::{Category, CategoryPartition, ImageRecord, PartitionOptions};
pub use evalkit::{average_precision, mean_average_precision, RankedItem, ResultsTable};
pub use features::{FeatureSet, FeatureVector};
pub use imgcore::{load_image, rgb_to_lab, save_image, Image, LabImage};
pub use maskaug::{apply_mask, augment, OverlaySpec};
pub use superpixel::{boundary_map, slic_segment, Segmentation, SlicParams};
pub use svm::{LinearModel, TrainConfig};
