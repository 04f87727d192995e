//! One-way cell-means model, sandwich covariance and contrast t-tests.
//!
//! Simultaneous p-values follow the single-step max-t construction: the
//! contrast statistics are treated as multivariate t with the plug-in
//! correlation of the estimated contrast covariance and `N - g` degrees of
//! freedom, whatever covariance estimator produced them.

use serde::{Deserialize, Serialize};

use crate::contrasts::{ContrastMatrix, RatioContrastPair};
use crate::data::{ContinuousDataset, Direction, HcKind};
use crate::mvdist::{mvt_cdf, t_cdf, t_sf, CorrelationMatrix, QmcConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeansFit {
    pub labels: Vec<String>,
    pub means: Vec<f64>,
    /// Residuals grouped like the data.
    pub residuals: Vec<Vec<f64>>,
    pub df_resid: usize,
    pub group_sizes: Vec<usize>,
}

impl CellMeansFit {
    pub fn n_groups(&self) -> usize {
        self.means.len()
    }

    pub fn total_n(&self) -> usize {
        self.group_sizes.iter().sum()
    }
}

/// Covariance of the group-mean estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    /// Row-major `g x g`.
    pub matrix: Vec<f64>,
    pub dim: usize,
    pub kind: HcKind,
}

impl CovarianceEstimate {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.dim + j]
    }

    /// `a' V b`
    pub fn quad(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..self.dim {
                s += a[i] * self.get(i, j) * b[j];
            }
        }
        s
    }
}

/// One one-sided comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub label: String,
    pub statistic: f64,
    /// Reference degrees of freedom; infinite for normal-reference tests.
    pub df: f64,
    pub p_raw: f64,
    /// Zero for deterministic p-values.
    pub p_error_estimate: f64,
    pub direction: Direction,
    /// Boundary conventions that were applied (degenerate variance, clamped df).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// One-sided p-value of a t statistic in the adverse direction.
pub fn one_sided_p(t: f64, df: f64, direction: Direction) -> Result<f64> {
    match direction {
        Direction::Greater => t_sf(t, df),
        Direction::Less => t_cdf(t, df),
    }
}

pub fn fit_cell_means(ds: &ContinuousDataset) -> Result<CellMeansFit> {
    let mut means = Vec::with_capacity(ds.n_groups());
    let mut residuals = Vec::with_capacity(ds.n_groups());
    for (g, ys) in ds.groups().iter().zip(ds.observations()) {
        if ys.len() < 2 {
            return Err(Error::data(format!("dose group {} has n = {} < 2", g.label, ys.len())));
        }
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        means.push(mean);
        residuals.push(ys.iter().map(|y| y - mean).collect());
    }
    Ok(CellMeansFit {
        labels: ds.labels(),
        means,
        residuals,
        df_resid: ds.total_n() - ds.n_groups(),
        group_sizes: ds.group_sizes(),
    })
}

/// Sandwich covariance of the group means.
///
/// In the cell-means design every observation of group `g` has leverage
/// `h = 1/n_g`, so the estimator is diagonal with
/// `var_g = sum(e_i^2 * a_i) / n_g^2`, where `a_i` is 1 (HC0), `N/(N-g)` (HC1),
/// `1/(1-h)` (HC2) or `1/(1-h)^2` (HC3). `None` gives the pooled `s^2 / n_g`.
pub fn hc_covariance(fit: &CellMeansFit, kind: HcKind) -> Result<CovarianceEstimate> {
    let g = fit.n_groups();
    let n_total = fit.total_n() as f64;
    let pooled_s2 = if fit.df_resid > 0 {
        fit.residuals.iter().flatten().map(|e| e * e).sum::<f64>() / fit.df_resid as f64
    } else {
        f64::NAN
    };
    let mut matrix = vec![0.0; g * g];
    for (i, res) in fit.residuals.iter().enumerate() {
        let n = res.len() as f64;
        let h = 1.0 / n;
        if matches!(kind, HcKind::Hc2 | HcKind::Hc3) && res.len() < 2 {
            return Err(Error::data(format!(
                "{} needs every group n >= 2 (group {} has leverage 1)",
                kind.as_str(),
                fit.labels[i]
            )));
        }
        let ss: f64 = res.iter().map(|e| e * e).sum();
        let var = match kind {
            HcKind::None => pooled_s2 / n,
            HcKind::Hc0 => ss / (n * n),
            HcKind::Hc1 => ss / (n * n) * n_total / fit.df_resid as f64,
            HcKind::Hc2 => ss / (1.0 - h) / (n * n),
            HcKind::Hc3 => ss / ((1.0 - h) * (1.0 - h)) / (n * n),
        };
        if !var.is_finite() {
            return Err(Error::Numeric(format!("variance of group {} is not finite", fit.labels[i])));
        }
        matrix[i * g + i] = var;
    }
    Ok(CovarianceEstimate { matrix, dim: g, kind })
}

/// Per-row tests plus single-step simultaneous p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastTestResult {
    pub outcomes: Vec<TestOutcome>,
    pub adjusted: Vec<f64>,
    pub adjusted_error: Vec<f64>,
    /// Plug-in correlation of the statistics; absent for a single row.
    pub correlation: Option<CorrelationMatrix>,
    /// Degrees of freedom of the multivariate t reference.
    pub df: u32,
}

impl ContrastTestResult {
    /// p-value of the max-t test of the intersection of all rows.
    pub fn global_p(&self) -> f64 {
        self.adjusted.iter().copied().fold(1.0, f64::min)
    }

    pub fn global_error(&self) -> f64 {
        let i = (0..self.adjusted.len())
            .min_by(|&a, &b| self.adjusted[a].total_cmp(&self.adjusted[b]))
            .unwrap_or(0);
        self.adjusted_error.get(i).copied().unwrap_or(0.0)
    }
}

/// `P(max_j T_j > u)` under the joint null, clipped into `[raw, min(1, m * raw)]`,
/// the interval where the exact value always lies. Returns the value and its error.
///
/// When that interval is already narrower than the error target its upper end is
/// returned without integrating.
fn max_t_tail(u: f64, raw: f64, corr: &CorrelationMatrix, df: u32, qmc: &QmcConfig) -> Result<(f64, f64)> {
    let m = corr.dim();
    let hi = (m as f64 * raw).min(1.0);
    if hi - raw <= qmc.error_target {
        return Ok((hi, hi - raw));
    }
    let r = mvt_cdf(&vec![u; m], corr, df, qmc)?;
    Ok(((1.0 - r.value).clamp(raw, hi), r.error_estimate))
}

/// Single-step max-t p-values for statistics `stats` with covariance `contrast_cov` of the contrasts.
fn single_step(
    stats: &[f64],
    raw: &[f64],
    contrast_cov: &[f64],
    df: u32,
    direction: Direction,
    qmc: &QmcConfig,
) -> Result<(Vec<f64>, Vec<f64>, Option<CorrelationMatrix>)> {
    let m = stats.len();
    if m == 1 {
        return Ok((raw.to_vec(), vec![0.0], None));
    }
    let corr = CorrelationMatrix::from_covariance(m, contrast_cov)?;
    let mut adjusted = Vec::with_capacity(m);
    let mut errors = Vec::with_capacity(m);
    for (&t, &p) in stats.iter().zip(raw) {
        let (a, e) = max_t_tail(direction.sign() * t, p, &corr, df, qmc)?;
        adjusted.push(a);
        errors.push(e);
    }
    Ok((adjusted, errors, Some(corr)))
}

/// Contrast covariance and per-row t-tests.
fn contrast_rows(
    fit: &CellMeansFit,
    cov: &CovarianceEstimate,
    cm: &ContrastMatrix,
    direction: Direction,
) -> Result<(Vec<f64>, Vec<TestOutcome>)> {
    let g = fit.n_groups();
    if cm.width() != g {
        return Err(Error::DimensionMismatch { expected: g, got: cm.width() });
    }
    if fit.df_resid == 0 {
        return Err(Error::Numeric("no residual degrees of freedom".into()));
    }
    let df = fit.df_resid as f64;
    let m = cm.n_rows();
    let mut ccov = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            ccov[a * m + b] = cov.quad(cm.row(a), cm.row(b));
        }
    }
    let mut outcomes = Vec::with_capacity(m);
    for (j, (row, label)) in cm.rows().iter().zip(cm.labels()).enumerate() {
        let var = ccov[j * m + j];
        if !(var > 0.0) {
            return Err(Error::Numeric(format!("contrast {label} has zero variance")));
        }
        let est: f64 = row.iter().zip(&fit.means).map(|(c, mu)| c * mu).sum();
        let t = est / var.sqrt();
        outcomes.push(TestOutcome {
            label: label.clone(),
            statistic: t,
            df,
            p_raw: one_sided_p(t, df, direction)?,
            p_error_estimate: 0.0,
            direction,
            flags: Vec::new(),
        });
    }
    Ok((ccov, outcomes))
}

/// t-tests for every contrast row and their single-step simultaneous p-values.
pub fn contrast_test(
    fit: &CellMeansFit,
    cov: &CovarianceEstimate,
    cm: &ContrastMatrix,
    direction: Direction,
    qmc: &QmcConfig,
) -> Result<ContrastTestResult> {
    let (ccov, outcomes) = contrast_rows(fit, cov, cm, direction)?;
    let stats: Vec<f64> = outcomes.iter().map(|o| o.statistic).collect();
    let raw: Vec<f64> = outcomes.iter().map(|o| o.p_raw).collect();
    let (adjusted, adjusted_error, correlation) =
        single_step(&stats, &raw, &ccov, fit.df_resid as u32, direction, qmc)?;
    Ok(ContrastTestResult { outcomes, adjusted, adjusted_error, correlation, df: fit.df_resid as u32 })
}

/// Max-t test of the intersection of all contrast rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxTResult {
    /// Row with the most extreme statistic in the tested direction.
    pub best: TestOutcome,
    pub p: f64,
    pub p_error_estimate: f64,
}

/// Global max-t p-value of `cm`; agrees with [`ContrastTestResult::global_p`]
/// but needs a single integration.
pub fn max_t_test(
    fit: &CellMeansFit,
    cov: &CovarianceEstimate,
    cm: &ContrastMatrix,
    direction: Direction,
    qmc: &QmcConfig,
) -> Result<MaxTResult> {
    let (ccov, mut outcomes) = contrast_rows(fit, cov, cm, direction)?;
    let m = outcomes.len();
    let best = (0..m)
        .max_by(|&a, &b| {
            let (ua, ub) = (direction.sign() * outcomes[a].statistic, direction.sign() * outcomes[b].statistic);
            // the first of equal rows wins
            ua.total_cmp(&ub).then(b.cmp(&a))
        })
        .ok_or_else(|| Error::invalid("contrast matrix has no rows"))?;
    let best = outcomes.swap_remove(best);
    let (p, p_error_estimate) = if m == 1 {
        (best.p_raw, 0.0)
    } else {
        let corr = CorrelationMatrix::from_covariance(m, &ccov)?;
        max_t_tail(direction.sign() * best.statistic, best.p_raw, &corr, fit.df_resid as u32, qmc)?
    };
    Ok(MaxTResult { best, p, p_error_estimate })
}

/// Univariate t-test of dose group `dose_index` against control.
pub fn pairwise_p(
    fit: &CellMeansFit,
    cov: &CovarianceEstimate,
    dose_index: usize,
    direction: Direction,
) -> Result<TestOutcome> {
    let g = fit.n_groups();
    if dose_index == 0 || dose_index >= g {
        return Err(Error::invalid(format!("dose index {dose_index} outside 1..={}", g - 1)));
    }
    if fit.df_resid == 0 {
        return Err(Error::Numeric("no residual degrees of freedom".into()));
    }
    let var = cov.get(dose_index, dose_index) + cov.get(0, 0) - 2.0 * cov.get(0, dose_index);
    let diff = fit.means[dose_index] - fit.means[0];
    let label = format!("{}-{}", fit.labels[dose_index], fit.labels[0]);
    let df = fit.df_resid as f64;
    let mut flags = Vec::new();
    let t = if var > 0.0 {
        diff / var.sqrt()
    } else if diff == 0.0 {
        flags.push("degenerate: zero variance, equal means".to_string());
        0.0
    } else {
        return Err(Error::Numeric(format!("contrast {label} has zero variance")));
    };
    Ok(TestOutcome {
        label,
        statistic: t,
        df,
        p_raw: one_sided_p(t, df, direction)?,
        p_error_estimate: 0.0,
        direction,
        flags,
    })
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch-type test of `mean_d / mean_0 > rho0` (or `<`), Satterthwaite df.
pub fn ratio_welch_test(
    ds: &ContinuousDataset,
    dose_index: usize,
    margin: f64,
    direction: Direction,
) -> Result<TestOutcome> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::invalid(format!("ratio margin must be positive, got {margin}")));
    }
    if dose_index == 0 || dose_index >= ds.n_groups() {
        return Err(Error::invalid(format!("dose index {dose_index} outside 1..={}", ds.n_doses())));
    }
    let (y0, yd) = (ds.group(0), ds.group(dose_index));
    let (m0, v0) = mean_var(y0);
    let (md, vd) = mean_var(yd);
    let a = vd / yd.len() as f64;
    let b = margin * margin * v0 / y0.len() as f64;
    let label = format!("{}/{}", ds.groups()[dose_index].label, ds.groups()[0].label);
    if !(a + b > 0.0) {
        return Err(Error::Numeric(format!("ratio test {label}: both groups have zero variance")));
    }
    let t = (md - margin * m0) / (a + b).sqrt();
    let df = (a + b).powi(2) / (a * a / (yd.len() - 1) as f64 + b * b / (y0.len() - 1) as f64);
    Ok(TestOutcome {
        label,
        statistic: t,
        df,
        p_raw: one_sided_p(t, df, direction)?,
        p_error_estimate: 0.0,
        direction,
        flags: Vec::new(),
    })
}

/// Simultaneous ratio-to-control tests under heterogeneous variances.
///
/// Row `j` tests `(num_j - rho0 den_j) . mu` with its own Satterthwaite df;
/// the joint reference is a multivariate t with the plug-in correlation and
/// the smallest row df (rounded down, at least 1).
pub fn ratio_simultaneous(
    ds: &ContinuousDataset,
    pair: &RatioContrastPair,
    direction: Direction,
    qmc: &QmcConfig,
) -> Result<ContrastTestResult> {
    let g = ds.n_groups();
    if pair.numerator.iter().chain(&pair.denominator).any(|r| r.len() != g) {
        return Err(Error::DimensionMismatch { expected: g, got: pair.numerator[0].len() });
    }
    let summaries: Vec<(f64, f64, f64)> = ds
        .observations()
        .iter()
        .map(|ys| {
            let (m, v) = mean_var(ys);
            (m, v / ys.len() as f64, (ys.len() - 1) as f64)
        })
        .collect();
    let m = pair.n_rows();
    let coefs: Vec<Vec<f64>> = (0..m).map(|j| pair.linearized(j)).collect();
    let mut ccov = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            ccov[a * m + b] = (0..g).map(|i| coefs[a][i] * coefs[b][i] * summaries[i].1).sum();
        }
    }
    let mut outcomes = Vec::with_capacity(m);
    let mut stats = Vec::with_capacity(m);
    let mut raw = Vec::with_capacity(m);
    let mut min_df = f64::INFINITY;
    for (j, c) in coefs.iter().enumerate() {
        let var = ccov[j * m + j];
        if !(var > 0.0) {
            return Err(Error::Numeric(format!("ratio test {} has zero variance", pair.labels[j])));
        }
        let est: f64 = (0..g).map(|i| c[i] * summaries[i].0).sum();
        let t = est / var.sqrt();
        let denom: f64 = (0..g).map(|i| (c[i] * c[i] * summaries[i].1).powi(2) / summaries[i].2).sum();
        let df = var * var / denom;
        min_df = min_df.min(df);
        let p = one_sided_p(t, df, direction)?;
        stats.push(t);
        raw.push(p);
        outcomes.push(TestOutcome {
            label: pair.labels[j].clone(),
            statistic: t,
            df,
            p_raw: p,
            p_error_estimate: 0.0,
            direction,
            flags: Vec::new(),
        });
    }
    let df = (min_df.floor() as u32).max(1);
    let (adjusted, adjusted_error, correlation) = single_step(&stats, &raw, &ccov, df, direction, qmc)?;
    Ok(ContrastTestResult { outcomes, adjusted, adjusted_error, correlation, df })
}
