//! Contrast matrices for comparisons against the control.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Coefficient rows over group means; every row sums to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastMatrix {
    rows: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl ContrastMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("contrast matrix needs at least one row"));
        }
        if labels.len() != rows.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), got: labels.len() });
        }
        let width = rows[0].len();
        for (row, label) in rows.iter().zip(&labels) {
            if row.len() != width {
                return Err(Error::DimensionMismatch { expected: width, got: row.len() });
            }
            let sum: f64 = row.iter().sum();
            let scale: f64 = row.iter().map(|c| c.abs()).sum();
            if sum.abs() > 1e-12 * scale.max(1.0) * row.len() as f64 {
                return Err(Error::invalid(format!("contrast {label} sums to {sum}, not 0")));
            }
            if !(row.iter().any(|&c| c < 0.0) && row.iter().any(|&c| c > 0.0)) {
                return Err(Error::invalid(format!("contrast {label} needs positive and negative entries")));
            }
        }
        Ok(Self { rows, labels })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Number of groups the coefficients range over.
    pub fn width(&self) -> usize {
        self.rows[0].len()
    }
}

/// Ratio comparisons `numerator_j . mu / denominator_j . mu` tested against margin `rho0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioContrastPair {
    pub numerator: Vec<Vec<f64>>,
    pub denominator: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub margin: f64,
}

impl RatioContrastPair {
    pub fn n_rows(&self) -> usize {
        self.numerator.len()
    }

    /// Difference-scale coefficients `numerator - rho0 * denominator` of row `j`.
    pub fn linearized(&self, j: usize) -> Vec<f64> {
        self.numerator[j].iter().zip(&self.denominator[j]).map(|(n, d)| n - self.margin * d).collect()
    }
}

fn default_labels(k: usize) -> Vec<String> {
    (0..=k).map(|i| i.to_string()).collect()
}

fn check_groups(group_sizes: &[usize]) -> Result<()> {
    if group_sizes.len() < 2 {
        return Err(Error::invalid(format!(
            "comparisons against control need at least 2 groups, got {}",
            group_sizes.len()
        )));
    }
    if group_sizes.contains(&0) {
        return Err(Error::invalid("group sizes must be positive"));
    }
    Ok(())
}

/// Each dose against control, rows labelled `"<j>-0"`.
pub fn dunnett_matrix(group_sizes: &[usize]) -> Result<ContrastMatrix> {
    dunnett_matrix_labelled(group_sizes, &default_labels(group_sizes.len().saturating_sub(1)))
}

/// [`dunnett_matrix`] with rows labelled `"<dose>-<control>"`.
pub fn dunnett_matrix_labelled(group_sizes: &[usize], group_labels: &[String]) -> Result<ContrastMatrix> {
    check_groups(group_sizes)?;
    let g = group_sizes.len();
    let rows = (1..g)
        .map(|j| {
            let mut r = vec![0.0; g];
            r[0] = -1.0;
            r[j] = 1.0;
            r
        })
        .collect();
    let labels = (1..g).map(|j| format!("{}-{}", group_labels[j], group_labels[0])).collect();
    ContrastMatrix::new(rows, labels)
}

/// Control against the size-weighted mean of the `j` highest doses, `j = 1..k`.
pub fn williams_matrix(group_sizes: &[usize]) -> Result<ContrastMatrix> {
    check_groups(group_sizes)?;
    let g = group_sizes.len();
    let k = g - 1;
    let mut rows = Vec::with_capacity(k);
    let mut labels = Vec::with_capacity(k);
    for j in 1..=k {
        let top = g - j..g;
        let total: usize = group_sizes[top.clone()].iter().sum();
        let mut r = vec![0.0; g];
        r[0] = -1.0;
        for i in top {
            r[i] = group_sizes[i] as f64 / total as f64;
        }
        rows.push(r);
        labels.push(if j == 1 { format!("C{j}: {k} vs 0") } else { format!("C{j}: {}..{k} vs 0", g - j) });
    }
    ContrastMatrix::new(rows, labels)
}

/// Appends zero columns so the contrasts span `total_groups` groups.
pub fn pad_subset(cm: &ContrastMatrix, total_groups: usize) -> Result<ContrastMatrix> {
    if total_groups < cm.width() {
        return Err(Error::invalid(format!(
            "cannot pad {} columns down to {total_groups}",
            cm.width()
        )));
    }
    let rows = cm
        .rows()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.resize(total_groups, 0.0);
            r
        })
        .collect();
    Ok(ContrastMatrix { rows, labels: cm.labels().to_vec() })
}

/// Ratio-to-control comparisons `j / 0`.
pub fn ratio_dunnett(group_sizes: &[usize], margin: f64) -> Result<RatioContrastPair> {
    ratio_dunnett_labelled(group_sizes, &default_labels(group_sizes.len().saturating_sub(1)), margin)
}

pub fn ratio_dunnett_labelled(
    group_sizes: &[usize],
    group_labels: &[String],
    margin: f64,
) -> Result<RatioContrastPair> {
    check_groups(group_sizes)?;
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::invalid(format!("ratio margin must be positive, got {margin}")));
    }
    let g = group_sizes.len();
    let unit = |i: usize| {
        let mut r = vec![0.0; g];
        r[i] = 1.0;
        r
    };
    Ok(RatioContrastPair {
        numerator: (1..g).map(unit).collect(),
        denominator: (1..g).map(|_| unit(0)).collect(),
        labels: (1..g).map(|j| format!("{}/{}", group_labels[j], group_labels[0])).collect(),
        margin,
    })
}
