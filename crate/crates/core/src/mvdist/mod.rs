//! Univariate and multivariate normal / Student-t distribution functions.
//!
//! [`mvt_cdf`] evaluates `P(T_1 <= u_1, ..., T_m <= u_m)` for a central
//! multivariate t (or normal, `df = 0`) vector by Genz's separation of
//! variables, integrated with randomly shifted rank-1 lattice rules.

mod lattice;
mod univariate;

pub use lattice::{mvt_cdf, CorrelationMatrix, QmcConfig, QmcResult, ERROR_SCALE};
pub use univariate::{chi_scale, norm_cdf, norm_quantile, norm_sf, t_cdf, t_sf, ChiScaleTable};
