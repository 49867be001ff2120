//! Channel estimation for hybrid MIMO-OFDM links with a generative prior.

pub mod bench;
pub mod channel;
pub mod dataset_io;
pub mod error;
pub mod estimators;
pub mod measurement;
pub mod neural;
pub mod numeric;
pub mod seed;
pub mod tail;
pub mod wgan;

pub use error::{Error, Result};
