//! Behavior-conditioned planning on synthetic driving scenes.
//!
//! - [`sim`]: scenario generator, latent scene features, JSONL datasets
//! - [`codec`]: (α, v) behavior targets and the conditioning encodings
//! - [`annotation`]: justification/action records, prompt and vocabulary
//! - [`reasoner`]: causal sequence model with a behavior regression head
//! - [`wm`]: latent world model with waypoint decoder and latent predictor
//! - [`metrics`]: L2, collision rate, behavior MAE, BLEU and ROUGE
//! - [`harness`]: experiment config and the commands behind the `bwm` binary

pub mod annotation;
pub mod codec;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod reasoner;
pub mod sim;
pub mod training;
pub mod wm;

pub use error::{Error, Result};
