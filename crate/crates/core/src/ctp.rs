//! Closed testing under order restriction and the NOAEL decision.
//!
//! With doses `1..k` and a monotone dose-response, the intersection
//! hypothesis `H0[0,1..j]` is rejected whenever the pairwise comparison of
//! dose `j` with control is, so each node of the closure tree is tested by a
//! single pairwise leaf. The adjusted p-value of dose `i` is the maximum of
//! the leaf p-values of doses `i..k`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrasts::{dunnett_matrix_labelled, pad_subset, williams_matrix};
use crate::data::{AnalysisConfig, Dataset, Direction, Method};
use crate::mvdist::QmcConfig;
use crate::nonparametric::bm_test;
use crate::parametric::{
    contrast_test, fit_cell_means, hc_covariance, max_t_test, pairwise_p, ratio_welch_test, CellMeansFit,
    CovarianceEstimate, TestOutcome,
};
use crate::polyk::{polyk_contrast_test, polyk_estimates};
use crate::{Error, Result};

/// Suffix maximum: `adjusted[i] = max(raw[i..])`.
pub fn ctp_adjust(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::invalid("no p-values to adjust"));
    }
    if let Some(p) = raw.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p-value {p} outside [0, 1]")));
    }
    let mut out = raw.to_vec();
    for i in (0..out.len() - 1).rev() {
        out[i] = out[i].max(out[i + 1]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoaelKind {
    /// A tested dose is the NOAEL.
    Dose,
    /// Even the lowest dose is significant.
    NoneBelowLowest,
    /// No dose is significant; the top dose is reported with a caveat.
    TopDoseSafe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoaelDecision {
    pub kind: NoaelKind,
    pub noael_label: Option<String>,
    /// Minimum effective dose.
    pub med_label: Option<String>,
    pub alpha: f64,
    pub direction: Direction,
    pub caveat: Option<String>,
}

pub const TOP_DOSE_CAVEAT: &str = "no dose differs significantly from control; the top dose is a \
    NOAEL only as far as the design reaches and a higher dose might still be adverse";

/// NOAEL = dose directly below the minimum effective dose.
///
/// `adjusted` must be non-increasing in dose (as produced by [`ctp_adjust`]);
/// significance is `p < alpha`.
pub fn estimate_noael(adjusted: &[f64], dose_labels: &[String], alpha: f64, direction: Direction) -> Result<NoaelDecision> {
    if adjusted.len() != dose_labels.len() {
        return Err(Error::DimensionMismatch { expected: dose_labels.len(), got: adjusted.len() });
    }
    if adjusted.is_empty() {
        return Err(Error::invalid("no comparisons"));
    }
    if adjusted.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("adjusted p-values must be non-increasing in dose"));
    }
    let med = adjusted.iter().position(|&p| p < alpha);
    let decision = match med {
        Some(0) => NoaelDecision {
            kind: NoaelKind::NoneBelowLowest,
            noael_label: None,
            med_label: Some(dose_labels[0].clone()),
            alpha,
            direction,
            caveat: None,
        },
        Some(i) => NoaelDecision {
            kind: NoaelKind::Dose,
            noael_label: Some(dose_labels[i - 1].clone()),
            med_label: Some(dose_labels[i].clone()),
            alpha,
            direction,
            caveat: None,
        },
        None => NoaelDecision {
            kind: NoaelKind::TopDoseSafe,
            noael_label: dose_labels.last().cloned(),
            med_label: None,
            alpha,
            direction,
            caveat: Some(TOP_DOSE_CAVEAT.to_string()),
        },
    };
    Ok(decision)
}

/// A closure-tree node and the leaf p-value that tests it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisLink {
    pub hypothesis: String,
    pub leaf: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub dose_label: String,
    pub statistic: f64,
    pub df: f64,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub p_error_estimate: f64,
    /// Nodes of the closure tree containing this comparison.
    pub hypotheses: Vec<HypothesisLink>,
    /// Leaf that attains the maximum.
    pub max_from: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureResult {
    pub method: Method,
    pub alpha: f64,
    /// Ascending dose order.
    pub comparisons: Vec<Comparison>,
    /// Whether the raw leaf p-values were already non-increasing in dose.
    pub raw_monotone: bool,
}

impl ClosureResult {
    pub fn adjusted(&self) -> Vec<f64> {
        self.comparisons.iter().map(|c| c.adjusted_p).collect()
    }

    pub fn raw(&self) -> Vec<f64> {
        self.comparisons.iter().map(|c| c.raw_p).collect()
    }
}

fn node_label(group_labels: &[String], upto: usize) -> String {
    format!("H0[{}]", group_labels[..=upto].join(","))
}

/// Closure over leaf tests ordered by dose; `node_leaves[j]` tests `H0[0..=j+1]`.
fn close(
    method: Method,
    alpha: f64,
    group_labels: &[String],
    leaves: &[TestOutcome],
    node_p: &[f64],
    node_err: &[f64],
) -> Result<ClosureResult> {
    let k = leaves.len();
    let adjusted = ctp_adjust(node_p)?;
    let mut comparisons = Vec::with_capacity(k);
    for i in 0..k {
        let dose = i + 1;
        let mut hypotheses = vec![HypothesisLink {
            hypothesis: format!("H0[{},{}]", group_labels[0], group_labels[dose]),
            leaf: leaves[i].label.clone(),
            p: node_p[i],
        }];
        for j in i.max(1)..k {
            hypotheses.push(HypothesisLink {
                hypothesis: node_label(group_labels, j + 1),
                leaf: leaves[j].label.clone(),
                p: node_p[j],
            });
        }
        // first leaf attaining the max, scanning from the top dose down
        let top = (i..k).rev().find(|&j| node_p[j] == adjusted[i]).unwrap_or(i);
        comparisons.push(Comparison {
            label: leaves[i].label.clone(),
            dose_label: group_labels[dose].clone(),
            statistic: leaves[i].statistic,
            df: leaves[i].df,
            raw_p: node_p[i],
            adjusted_p: adjusted[i].min(1.0),
            p_error_estimate: node_err[top],
            hypotheses,
            max_from: leaves[top].label.clone(),
        });
    }
    Ok(ClosureResult {
        method,
        alpha,
        comparisons,
        raw_monotone: node_p.windows(2).all(|w| w[1] <= w[0]),
    })
}

/// Closure with pairwise leaf tests.
pub fn ctp_pairwise(method: Method, alpha: f64, group_labels: &[String], leaves: &[TestOutcome]) -> Result<ClosureResult> {
    let p: Vec<f64> = leaves.iter().map(|o| o.p_raw).collect();
    let e: Vec<f64> = leaves.iter().map(|o| o.p_error_estimate).collect();
    close(method, alpha, group_labels, leaves, &p, &e)
}

/// Closure whose node `H0[0..j]` is tested by the Williams max-t test on groups `0..=j`.
///
/// The two-group node reduces to the pairwise test of dose 1.
pub fn ctp_williams(
    fit: &CellMeansFit,
    cov: &CovarianceEstimate,
    direction: Direction,
    alpha: f64,
    qmc: &QmcConfig,
) -> Result<ClosureResult> {
    let g = fit.n_groups();
    let k = g - 1;
    let mut leaves = Vec::with_capacity(k);
    let mut node_p = Vec::with_capacity(k);
    let mut node_err = Vec::with_capacity(k);
    for j in 1..=k {
        if j == 1 {
            let o = pairwise_p(fit, cov, 1, direction)?;
            node_p.push(o.p_raw);
            node_err.push(0.0);
            leaves.push(o);
            continue;
        }
        let cm = pad_subset(&williams_matrix(&fit.group_sizes[..=j])?, g)?;
        let res = max_t_test(fit, cov, &cm, direction, qmc)?;
        node_p.push(res.p);
        node_err.push(res.p_error_estimate);
        leaves.push(TestOutcome {
            label: format!("Williams[{}]", fit.labels[..=j].join(",")),
            statistic: res.best.statistic,
            df: res.best.df,
            p_raw: res.p,
            p_error_estimate: res.p_error_estimate,
            direction,
            flags: Vec::new(),
        });
    }
    let mut result = close(Method::CtpWilliams, alpha, &fit.labels, &leaves, &node_p, &node_err)?;
    for (c, label) in result.comparisons.iter_mut().zip(&fit.labels[1..]) {
        c.label = format!("{}-{}", label, fit.labels[0]);
    }
    Ok(result)
}

/// Everything [`run_analysis`] produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutcome {
    pub closure: ClosureResult,
    pub decision: NoaelDecision,
    /// Leaf tests in dose order (for Dunnett: the per-row outcomes).
    pub leaves: Vec<TestOutcome>,
    pub warnings: Vec<String>,
}

fn continuous(ds: &Dataset, method: Method) -> Result<&crate::data::ContinuousDataset> {
    match ds {
        Dataset::Continuous(c) => Ok(c),
        other => Err(Error::MethodMismatch {
            method: method.as_str().into(),
            endpoint: other.kind().as_str().into(),
        }),
    }
}

/// Runs the configured leaf tests, closes them and derives the NOAEL.
pub fn run_analysis(ds: &Dataset, cfg: &AnalysisConfig) -> Result<AnalysisOutcome> {
    cfg.validate()?;
    let method = cfg.method;
    if method.endpoint() != ds.kind() {
        return Err(Error::MethodMismatch { method: method.as_str().into(), endpoint: ds.kind().as_str().into() });
    }
    let labels: Vec<String> = ds.groups().iter().map(|g| g.label.clone()).collect();
    let k = labels.len() - 1;
    let dir = cfg.direction;
    let mut warnings = Vec::new();

    let (closure, leaves) = match method {
        Method::CtpPairwise => {
            let fit = fit_cell_means(continuous(ds, method)?)?;
            let cov = hc_covariance(&fit, cfg.hc)?;
            let leaves = (1..=k)
                .into_par_iter()
                .map(|i| pairwise_p(&fit, &cov, i, dir))
                .collect::<Result<Vec<_>>>()?;
            (ctp_pairwise(method, cfg.alpha, &labels, &leaves)?, leaves)
        }
        Method::CtpRatio => {
            let c = continuous(ds, method)?;
            let leaves = (1..=k)
                .into_par_iter()
                .map(|i| ratio_welch_test(c, i, cfg.ratio_margin, dir))
                .collect::<Result<Vec<_>>>()?;
            (ctp_pairwise(method, cfg.alpha, &labels, &leaves)?, leaves)
        }
        Method::CtpNonparametric => {
            let Dataset::Score(s) = ds else { unreachable!("endpoint checked above") };
            let groups = s.as_real();
            let leaves = (1..=k)
                .into_par_iter()
                .map(|i| {
                    let mut o = bm_test(&groups[0], &groups[i], dir, cfg.bm_scale)?;
                    o.label = format!("{}-{}", labels[i], labels[0]);
                    Ok(o)
                })
                .collect::<Result<Vec<_>>>()?;
            (ctp_pairwise(method, cfg.alpha, &labels, &leaves)?, leaves)
        }
        Method::CtpPoly3 => {
            let Dataset::Incidence(inc) = ds else { unreachable!("endpoint checked above") };
            let est = polyk_estimates(inc, cfg.poly_k)?;
            let leaves = (1..=k).map(|i| polyk_contrast_test(&est, i, dir)).collect::<Result<Vec<_>>>()?;
            (ctp_pairwise(method, cfg.alpha, &labels, &leaves)?, leaves)
        }
        Method::CtpWilliams => {
            let fit = fit_cell_means(continuous(ds, method)?)?;
            let cov = hc_covariance(&fit, cfg.hc)?;
            let closure = ctp_williams(&fit, &cov, dir, cfg.alpha, &cfg.qmc)?;
            let leaves = (1..=k).map(|i| pairwise_p(&fit, &cov, i, dir)).collect::<Result<Vec<_>>>()?;
            (closure, leaves)
        }
        Method::Dunnett => {
            let fit = fit_cell_means(continuous(ds, method)?)?;
            let cov = hc_covariance(&fit, cfg.hc)?;
            let cm = dunnett_matrix_labelled(&fit.group_sizes, &labels)?;
            let res = contrast_test(&fit, &cov, &cm, dir, &cfg.qmc)?;
            let comparisons = res
                .outcomes
                .iter()
                .enumerate()
                .map(|(i, o)| Comparison {
                    label: o.label.clone(),
                    dose_label: labels[i + 1].clone(),
                    statistic: o.statistic,
                    df: o.df,
                    raw_p: o.p_raw,
                    adjusted_p: res.adjusted[i],
                    p_error_estimate: res.adjusted_error[i],
                    hypotheses: vec![HypothesisLink {
                        hypothesis: format!("H0[{},{}]", labels[0], labels[i + 1]),
                        leaf: o.label.clone(),
                        p: res.adjusted[i],
                    }],
                    max_from: o.label.clone(),
                })
                .collect();
            let closure = ClosureResult {
                method,
                alpha: cfg.alpha,
                comparisons,
                raw_monotone: res.outcomes.windows(2).all(|w| w[1].p_raw <= w[0].p_raw),
            };
            (closure, res.outcomes)
        }
    };

    if !closure.raw_monotone {
        let raw: Vec<String> = closure.raw().iter().map(|p| format!("{p:.4}")).collect();
        warnings.push(format!(
            "raw p-values are not monotone in dose ({}); the closure enforces monotone adjusted p-values",
            raw.join(", ")
        ));
    }
    for leaf in &leaves {
        for f in &leaf.flags {
            warnings.push(format!("{}: {f}", leaf.label));
        }
    }
    for c in &closure.comparisons {
        if c.p_error_estimate > cfg.qmc.error_target {
            warnings.push(format!(
                "{}: integration error {:.2e} above target {:.2e}",
                c.label, c.p_error_estimate, cfg.qmc.error_target
            ));
        }
    }

    // single-step p-values need not be monotone; the decision uses the significance pattern
    let adjusted = closure.adjusted();
    let pattern = if method == Method::Dunnett { ctp_adjust(&adjusted)? } else { adjusted };
    let decision = estimate_noael(&pattern, &labels[1..], cfg.alpha, dir)?;
    if let Some(c) = &decision.caveat {
        warnings.push(c.clone());
    }
    Ok(AnalysisOutcome { closure, decision, leaves, warnings })
}
