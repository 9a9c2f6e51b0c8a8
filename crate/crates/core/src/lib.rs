//! Monte Carlo evaluation and optimization of keyboard layouts for gesture
//! (swipe) input.

pub mod classifier;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod geometry;
pub mod lexicon;
pub mod optimizer;
pub mod pruning;
pub mod recognition;
pub mod trajectory;

pub use error::{Error, Result};
