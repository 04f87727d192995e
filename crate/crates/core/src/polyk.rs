//! Poly-k survival-adjusted tumour incidence.
//!
//! An animal that dies without a tumour at time `t` counts as a fraction
//! `(t / t_max)^k` of an animal at risk; tumour-bearing animals count fully.
//! Group proportions `p* = tumours / sum(w)` are compared by a Z statistic
//! with the Bieler-Williams delta-method variance.

use serde::{Deserialize, Serialize};

use crate::data::{AnimalRecord, Direction, IncidenceDataset};
use crate::mvdist::{norm_cdf, norm_sf};
use crate::parametric::TestOutcome;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolykEstimate {
    pub label: String,
    pub n: usize,
    pub tumors: usize,
    pub weights: Vec<f64>,
    /// Adjusted number at risk, `sum(w)`.
    pub n_star: f64,
    /// Adjusted tumour proportion.
    pub p_star: f64,
    /// Bieler-Williams variance of `p_star`.
    pub variance: f64,
}

pub fn polyk_weights(group: &[AnimalRecord], k: f64, t_max: f64) -> Result<Vec<f64>> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::invalid(format!("t_max must be positive, got {t_max}")));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!("poly-k exponent must be positive, got {k}")));
    }
    group
        .iter()
        .map(|a| {
            if a.time > t_max {
                Err(Error::data(format!("time {} exceeds t_max {t_max}", a.time)))
            } else if a.tumor {
                Ok(1.0)
            } else {
                Ok((a.time / t_max).powf(k))
            }
        })
        .collect()
}

/// Poly-k estimates per group, with `t_max` the longest time on study overall.
///
/// Bieler-Williams variance (ratio-estimator delta method):
///
/// ```text
/// r_j   = y_j - p* w_j                       (sums to zero within the group)
/// var   = n / (n - 1) * sum(r_j^2) / n*^2
/// ```
pub fn polyk_estimates(ds: &IncidenceDataset, k: f64) -> Result<Vec<PolykEstimate>> {
    let t_max = ds.study_max_time();
    ds.groups()
        .iter()
        .zip(ds.observations())
        .map(|(g, animals)| {
            if animals.len() < 2 {
                return Err(Error::data(format!("group {} needs n >= 2 for a variance", g.label)));
            }
            let weights = polyk_weights(animals, k, t_max)?;
            let n_star: f64 = weights.iter().sum();
            if !(n_star > 0.0) {
                return Err(Error::Numeric(format!("group {} has no animals at risk", g.label)));
            }
            let tumors = animals.iter().filter(|a| a.tumor).count();
            let p_star = tumors as f64 / n_star;
            let n = animals.len() as f64;
            let ss: f64 = animals
                .iter()
                .zip(&weights)
                .map(|(a, w)| (f64::from(u8::from(a.tumor)) - p_star * w).powi(2))
                .sum();
            let variance = n / (n - 1.0) * ss / (n_star * n_star);
            Ok(PolykEstimate {
                label: g.label.clone(),
                n: animals.len(),
                tumors,
                weights,
                n_star,
                p_star,
                variance,
            })
        })
        .collect()
}

/// Z-test of dose group `dose_index` against control on the poly-k proportions.
pub fn polyk_contrast_test(est: &[PolykEstimate], dose_index: usize, direction: Direction) -> Result<TestOutcome> {
    if dose_index == 0 || dose_index >= est.len() {
        return Err(Error::invalid(format!("dose index {dose_index} outside 1..={}", est.len().saturating_sub(1))));
    }
    let (c, d) = (&est[0], &est[dose_index]);
    let var = c.variance + d.variance;
    if !var.is_finite() {
        return Err(Error::Numeric("non-finite poly-k variance".into()));
    }
    let diff = d.p_star - c.p_star;
    let label = format!("{}-{}", d.label, c.label);
    let mut flags = Vec::new();
    let (z, p) = if var > 0.0 {
        let z = diff / var.sqrt();
        let p = match direction {
            Direction::Greater => norm_sf(z),
            Direction::Less => norm_cdf(z),
        };
        (z, p)
    } else if diff == 0.0 {
        flags.push("degenerate: zero variance, equal proportions; p set to 0.5".into());
        (0.0, 0.5)
    } else {
        flags.push("degenerate: zero variance, unequal proportions; boundary p".into());
        let adverse = direction.sign() * diff > 0.0;
        (diff.signum() * f64::INFINITY, if adverse { 0.0 } else { 1.0 })
    };
    Ok(TestOutcome { label, statistic: z, df: f64::INFINITY, p_raw: p, p_error_estimate: 0.0, direction, flags })
}
