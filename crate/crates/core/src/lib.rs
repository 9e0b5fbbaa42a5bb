//! Content-adaptive resolution boosting for monocular depth estimators.
//!
//! A depth network is run at several input resolutions and on
//! context-selected patches; the estimates are merged into one
//! high-resolution map. Everything here is estimator-agnostic: real networks
//! plug in through [`estimator::ExternalBackend`], while the synthetic oracle
//! in [`estimator`] makes the whole chain testable without one.

pub mod context;
pub mod estimator;
pub mod merging;
pub mod metrics;
pub mod pipeline;
pub mod raster;
