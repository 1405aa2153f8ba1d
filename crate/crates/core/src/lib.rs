//! Resource-mention extraction for course discussion forums.

pub mod agreement;
pub mod corpus;
pub mod crf;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod synth;
pub mod tagger;

pub use crate::error::{Error, Result};
