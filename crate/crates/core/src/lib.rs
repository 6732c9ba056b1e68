//! Spiking network engine with reward-modulated synaptic delay learning.
//!
//! A convolutional layer learns shared weight and delay kernels without
//! supervision; a class-grouped decision layer then learns with reward
//! signals, regulated by homeostasis, threshold adaptation,
//! decision-frequency balancing and a per-group activity gate.

mod error;

pub mod checkpoint;
pub mod config;
pub mod events;
pub mod export;
pub mod harness;
pub mod plasticity;
pub mod regulation;
pub mod snn;
pub mod topology;

pub use error::{Error, Result};
