//! Texture classification toolkit: Haralick and NMF features, kernel SVMs
//! trained by SMO, multi-level score fusion and leave-one-out evaluation.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod glcm;
pub mod haralick;
pub mod imageio;
pub mod modelio;
pub mod nmf;
pub mod preprocess;
pub mod report;
pub mod scaling;
pub mod svm;

pub use error::{Error, ErrorKind, Result};
