//! Photon-counting workbench for single-photon sources.
//!
//! The crate covers the whole measurement chain of a molecular single-photon
//! source used as a radiometric reference:
//!
//! - [`photophysics`]: closed-form emitter models and radiometric conversions.
//! - [`stream`]: continuous-time Monte-Carlo emission, stream algebra and the
//!   photon-number variance check.
//! - [`detectors`]: SPAD click model, dead-time handling, HBT beam splitter and
//!   the analog reference photodiode.
//! - [`correlate`]: start–stop and full coincidence histograms, g² normalisation.
//! - [`fit`]: weighted Levenberg–Marquardt fits of the g² and saturation models.
//! - [`calibrate`]: SPAD detection-efficiency calibration and uncertainty budget.
//! - [`presets`]: named emitter parameter sets.

pub mod calibrate;
pub mod correlate;
pub mod detectors;
mod error;
pub mod fit;
pub mod io;
pub mod photophysics;
pub mod presets;
pub mod rng;
pub mod stream;

pub use error::{Error, Result};
