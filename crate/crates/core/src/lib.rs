//! Seam carving and seam-carving tamper forensics.
//!
//! The crate covers the whole pipeline: the content-aware resizing engine
//! ([`energy`], [`carver`]), a tamper dataset generator ([`forge`]), the
//! training-time augmentations ([`augment`]), a small from-scratch neural
//! network library with an Xception-style detector ([`nn`]), the SGDR
//! training loop ([`trainer`]) and linear max-margin classifiers on tapped
//! network features ([`shallow`]).

pub mod augment;
pub mod carver;
pub mod energy;
pub mod error;
pub mod forge;
pub mod imaging;
pub mod nn;
pub mod rng;
pub mod shallow;
pub mod synth;
pub mod trainer;

pub use carver::{Axis, InsertMode, ObjectMask, Seam};
pub use energy::EnergyMap;
pub use error::{Error, Result};
pub use forge::{DatasetManifest, Label, ManifestRecord, TamperSpec};
pub use imaging::{ImageBuffer, NormalizedImage};
pub use nn::{DetectorConfig, Network, NetworkSpec, TapPoint, Tensor};
pub use trainer::{SgdrSchedule, TrainConfig};
