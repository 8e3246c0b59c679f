//! Early-onset colorectal cancer risk prediction from windowed EHR histories.
//!
//! The crate covers the full pipeline: synthetic cohort generation and
//! eligibility ([`cohort`]), windowed feature extraction ([`features`]), ten
//! native classifiers with random search ([`models`]), Youden-J threshold
//! calibration ([`calibrate`]), the repeated test-run protocol
//! ([`evaluate`]), gain importance and SHAP ([`explain`]), the LLM prompting
//! arm ([`llm`]) and the stage runner behind the CLI ([`pipeline`]).

pub mod calibrate;
pub mod cohort;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod features;
pub mod llm;
pub mod models;
pub mod par;
pub mod pipeline;
pub mod seed;

pub use error::{Error, Result};
