//! Three-network GAN poisoning pipeline.
//!
//! A generator and discriminator are trained on a small image set while a
//! third network learns max-norm bounded perturbations that are mixed into
//! the real samples. Evaluation covers spectral-signature detection on
//! discriminator features, a trigger-patch intensity lift and a frequency
//! report of the perturbations.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod image_pipeline;
pub mod networks;
pub mod nn;
pub mod optim;
pub mod poisoning;
pub mod tensor;
pub mod training;

pub use config::{Mode, PoisonerSchedule, Profile, TrainingConfig};
pub use error::{Error, Result};
pub use image_pipeline::{EdgeMap, ImageTensor, ImageU8};
pub use networks::{NetworkId, ParamSet};
pub use poisoning::{Perturbation, TriggerConfig};
pub use tensor::{Scalar, Tensor};
