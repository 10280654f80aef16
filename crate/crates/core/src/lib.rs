//! Electrode trajectory localization in head CT volumes.
//!
//! The pipeline masks a CT scan to a region of interest mapped in from a
//! reference frame, thresholds each axial slice adaptively, extracts and
//! labels bright-cluster centroids, chains them into per-electrode
//! trajectories, and resamples those at uniform arc length. Supporting
//! modules cover volume I/O, rigid/affine registration, synthetic test
//! volumes, validation against ground truth, and surface-mesh export.

pub mod atlas;
pub mod calibrate;
pub mod error;
pub mod io;
pub mod mesh;
pub mod phantom;
pub mod registration;
mod rng;
pub mod segmentation;
pub mod spatial;
pub mod trajectory;
pub mod validation;
pub mod volume;

pub use error::{Error, Result};
pub use spatial::transform::AffineTransform;
pub use volume::{GridSpec, Volume};
