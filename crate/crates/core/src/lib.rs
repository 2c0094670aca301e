//! Simulation toolkit for comparing randomised and systematic strip-trial
//! designs in on-farm experiments.
//!
//! The pipeline draws spatially varying treatment-response coefficients on a
//! row × range field lattice, generates yields under a linear or quadratic
//! nitrogen response, fits geographically weighted regression (GWR) at every
//! plot and scores each design by how well the local coefficients are
//! recovered. Results are summarised as median tables, boxplot statistics,
//! bandwidth histograms and a factorial ANOVA.
//!
//! Module map:
//!
//! * [`grid_design`] – field lattice and strip allocation.
//! * [`spatial_cov`] – AR1, Matérn, LKJ and Kronecker covariance machinery.
//! * [`simulate`] – coefficient fields, yields, and the seeded scenario batch.
//! * [`gwr`] – kernel weights, local fits, AICc and bandwidth selection.
//! * [`metrics`] – MSE, medians, boxplots and histograms.
//! * [`anova`] – sequential sums of squares and F tests.
//! * [`config`], [`io`], [`pipeline`], [`report`] – orchestration and file formats.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anova;
pub mod config;
pub mod error;
pub mod grid_design;
pub mod gwr;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod simulate;
pub mod spatial_cov;
pub mod svg;

pub use error::{Error, Result};
