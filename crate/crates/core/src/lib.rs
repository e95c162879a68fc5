//! Out-of-distribution detection by nonparametric subset scanning over
//! intermediate-layer activations, with ODIN input preprocessing, the
//! softmax baseline, detection metrics and skin-tone stratification.
//!
//! The usual flow:
//!
//! 1. Read background and evaluation activation stores ([`tensor_io`]).
//! 2. Turn evaluation activations into empirical p-values against the
//!    background and scan each sample for its most anomalous node subset
//!    ([`scan`]).
//! 3. Aggregate per-layer scores and evaluate them, overall and per skin
//!    tone group ([`metrics`], [`ita`]).
//!
//! [`pipeline`] wires these steps to files; [`demo`] runs everything on a
//! synthetic problem through a small reference network ([`odin`]).

pub mod config;
pub mod demo;
pub mod error;
pub mod ita;
pub mod metrics;
pub mod odin;
mod par;
pub mod pipeline;
pub mod scan;
pub mod tensor_io;

pub use error::{Error, Result};
pub use par::set_thread_count;
pub use scan::{scan_layer, Aggregation, ScanConfig, ScanResult, Statistic};
pub use tensor_io::{ActivationSet, LayerActivations};
