//! NOAEL estimation for designed toxicology bioassays.
//!
//! The crate estimates the no-observed-adverse-effect level (NOAEL) by a
//! closed testing procedure over pairwise comparisons against control. Under
//! a monotone dose-response assumption every intersection hypothesis can be
//! tested by the pairwise test of its highest dose, so the adjusted p-value of
//! a comparison is the maximum of its own raw p-value and those of all higher
//! doses. The NOAEL is then the dose directly below the minimum effective dose.
//!
//! Leaf tests are provided for four endpoint flavours:
//!
//! * continuous responses: t-tests on a cell-means model with
//!   heteroscedasticity-consistent covariance ([`parametric`]), plus the
//!   single-step Dunnett procedure and subset Williams closure for comparison;
//! * ratio-to-control under variance heterogeneity ([`parametric::ratio_welch_test`]);
//! * ordinal severity scores: Brunner-Munzel relative-effect tests ([`nonparametric`]);
//! * tumour incidence with survival: the poly-k test ([`polyk`]).
//!
//! Simultaneous p-values use a randomized quasi-Monte Carlo integrator for
//! multivariate t probabilities ([`mvdist`]).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod contrasts;
pub mod ctp;
pub mod data;
pub mod datasets;
mod error;
pub mod mvdist;
pub mod nonparametric;
pub mod parametric;
pub mod plot;
pub mod polyk;
pub mod report;

pub use contrasts::{ContrastMatrix, RatioContrastPair};
pub use ctp::{
    ctp_adjust, estimate_noael, run_analysis, AnalysisOutcome, ClosureResult, Comparison,
    NoaelDecision, NoaelKind,
};
pub use data::{
    AnalysisConfig, AnimalRecord, ContinuousDataset, Dataset, Direction, DoseGroup, EndpointKind,
    HcKind, IncidenceDataset, Method, ScoreDataset,
};
pub use error::{Error, Result};
pub use mvdist::{CorrelationMatrix, QmcConfig, QmcResult};
pub use parametric::TestOutcome;
pub use report::ReportDocument;
