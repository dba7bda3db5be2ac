//! PET/CT head-and-neck tumour analysis: volume preprocessing, segmentation
//! losses and metrics, mean-field CRF refinement, radiomics, tabular feature
//! handling and survival modelling.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod volume;

pub use error::{Error, Result};
pub mod crf;
pub mod losses;
pub mod metrics;
pub mod pipeline;
pub mod folds;
pub mod radiomics;
pub mod survival;
pub mod tabular;
pub use nalgebra;
