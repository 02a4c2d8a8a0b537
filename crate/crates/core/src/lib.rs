//! Label-efficient nuclei segmentation tooling: picks the patches of an
//! unlabeled corpus worth annotating, multiplies one annotated mask into many
//! synthetic instance masks, and scores segmentation outputs.

pub mod clustering;
pub mod corpus;
pub mod error;
pub mod features;
pub mod mask;
pub mod masksynth;
pub mod metrics;
pub mod patch;
pub mod pipeline;
pub mod seed;
pub mod selection;

pub use error::{Error, Result};
