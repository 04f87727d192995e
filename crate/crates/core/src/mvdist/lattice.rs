use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use std::sync::Arc;

use super::univariate::{norm_cdf, norm_quantile, t_cdf, ChiScaleTable};
use crate::{Error, Result};

/// `error_estimate = ERROR_SCALE * standard error` of the randomized estimate.
pub const ERROR_SCALE: f64 = 3.5;

/// Randomization replicates per lattice size.
const REPLICATES: usize = 12;
const FIRST_LATTICE: usize = 1 << 10;

/// Pivots below this conditional variance are treated as exact linear dependence.
const SINGULAR_TOL: f64 = 1e-10;

/// Symmetric, unit-diagonal, positive semidefinite matrix (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("correlation matrix must have dimension >= 1"));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        let mut entries = entries;
        for i in 0..dim {
            let d = entries[i * dim + i];
            if (d - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(format!("diagonal entry {i} is {d}, expected 1")));
            }
            entries[i * dim + i] = 1.0;
            for j in 0..i {
                let (a, b) = (entries[i * dim + j], entries[j * dim + i]);
                if !a.is_finite() || (a - b).abs() > 1e-10 {
                    return Err(Error::invalid(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
                if a.abs() > 1.0 + 1e-12 {
                    return Err(Error::invalid(format!("correlation ({i},{j}) = {a} outside [-1, 1]")));
                }
                let v = 0.5 * (a + b);
                let v = v.clamp(-1.0, 1.0);
                entries[i * dim + j] = v;
                entries[j * dim + i] = v;
            }
        }
        let m = Self { dim, entries };
        m.check_psd()?;
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self { dim, entries }
    }

    pub fn equicorrelated(dim: usize, rho: f64) -> Result<Self> {
        let entries =
            (0..dim * dim).map(|k| if k / dim == k % dim { 1.0 } else { rho }).collect();
        Self::new(dim, entries)
    }

    /// Rescales a covariance matrix `D^{-1/2} S D^{-1/2}`.
    pub fn from_covariance(dim: usize, cov: &[f64]) -> Result<Self> {
        if cov.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: cov.len() });
        }
        let sd: Vec<f64> = (0..dim).map(|i| cov[i * dim + i].sqrt()).collect();
        if let Some(i) = sd.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Numeric(format!("variance {i} is not positive")));
        }
        let entries = (0..dim * dim)
            .map(|k| {
                let (i, j) = (k / dim, k % dim);
                if i == j {
                    1.0
                } else {
                    (cov[k] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
                }
            })
            .collect();
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Principal submatrix on `keep`, in that order.
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let d = keep.len();
        let mut entries = Vec::with_capacity(d * d);
        for &i in keep {
            for &j in keep {
                entries.push(self.get(i, j));
            }
        }
        Self { dim: d, entries }
    }

    fn check_psd(&self) -> Result<()> {
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s < -1e-8 {
                        return Err(Error::NotPositiveSemidefinite { pivot: i, value: s });
                    }
                    l[i * n + i] = if s > SINGULAR_TOL { s.sqrt() } else { 0.0 };
                } else if l[j * n + j] > 0.0 {
                    l[i * n + j] = s / l[j * n + j];
                } else if s.abs() > 1e-6 {
                    return Err(Error::NotPositiveSemidefinite { pivot: j, value: s });
                }
            }
        }
        Ok(())
    }
}

/// Settings for the randomized lattice integrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QmcConfig {
    pub seed: u64,
    /// Absolute error target for the returned probability.
    pub error_target: f64,
    /// Budget on integrand evaluations.
    pub max_points: usize,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self { seed: 20230101, error_target: 1e-5, max_points: 20_000_000 }
    }
}

impl QmcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.error_target > 0.0) {
            return Err(Error::invalid(format!(
                "QMC error target must be positive, got {}",
                self.error_target
            )));
        }
        if self.max_points == 0 {
            return Err(Error::invalid("QMC point budget must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QmcResult {
    pub value: f64,
    /// `ERROR_SCALE` standard errors; zero when the value is exact.
    pub error_estimate: f64,
    pub points_used: usize,
    /// Whether `error_estimate <= error_target` was reached within the budget.
    pub target_met: bool,
}

impl QmcResult {
    fn exact(value: f64) -> Self {
        Self { value, error_estimate: 0.0, points_used: 0, target_met: true }
    }

    pub fn std_error(&self) -> f64 {
        self.error_estimate / ERROR_SCALE
    }
}

/// `P(T_1 <= upper_1, ..., T_m <= upper_m)` for a central multivariate t with
/// correlation `corr` and `df` degrees of freedom (`df = 0`: multivariate normal).
///
/// The result is deterministic for a fixed `qmc.seed`.
pub fn mvt_cdf(upper: &[f64], corr: &CorrelationMatrix, df: u32, qmc: &QmcConfig) -> Result<QmcResult> {
    qmc.validate()?;
    if upper.len() != corr.dim() {
        return Err(Error::DimensionMismatch { expected: corr.dim(), got: upper.len() });
    }
    if upper.iter().any(|u| u.is_nan()) {
        return Err(Error::Numeric("NaN integration bound".into()));
    }
    if upper.contains(&f64::NEG_INFINITY) {
        return Ok(QmcResult::exact(0.0));
    }
    // unbounded coordinates marginalize out
    let keep: Vec<usize> = (0..upper.len()).filter(|&i| upper[i].is_finite()).collect();
    let df_real = if df == 0 { f64::INFINITY } else { df as f64 };
    match keep.len() {
        0 => return Ok(QmcResult::exact(1.0)),
        1 => return Ok(QmcResult::exact(t_cdf(upper[keep[0]], df_real)?)),
        _ => {}
    }
    let bounds: Vec<f64> = keep.iter().map(|&i| upper[i]).collect();
    let sub = corr.submatrix(&keep);
    let plan = Plan::new(&bounds, &sub, df)?;
    Ok(plan.integrate(qmc))
}

/// Reordered Cholesky factor and bounds ready for integration.
struct Plan {
    m: usize,
    /// Lower-triangular factor, row-major m x m.
    chol: Vec<f64>,
    bounds: Vec<f64>,
    df: u32,
    chi: Option<Arc<ChiScaleTable>>,
}

impl Plan {
    /// Cholesky factorization with variable reordering: at each step the
    /// remaining variable with the smallest conditional probability goes next.
    fn new(bounds: &[f64], corr: &CorrelationMatrix, df: u32) -> Result<Self> {
        let m = bounds.len();
        let mut cov = corr.entries().to_vec();
        let mut b = bounds.to_vec();
        let mut chol = vec![0.0; m * m];
        let mut y = vec![0.0; m];

        for i in 0..m {
            let mut best = i;
            let mut best_prob = f64::INFINITY;
            for j in i..m {
                let mut var = cov[j * m + j];
                let mut mean = 0.0;
                for k in 0..i {
                    var -= chol[j * m + k] * chol[j * m + k];
                    mean += chol[j * m + k] * y[k];
                }
                let prob = if var > SINGULAR_TOL { norm_cdf((b[j] - mean) / var.sqrt()) } else { 1.0 };
                if prob < best_prob {
                    best_prob = prob;
                    best = j;
                }
            }
            if best != i {
                swap_sym(&mut cov, m, i, best);
                b.swap(i, best);
                for k in 0..i {
                    chol.swap(i * m + k, best * m + k);
                }
            }
            let mut var = cov[i * m + i];
            for k in 0..i {
                var -= chol[i * m + k] * chol[i * m + k];
            }
            if var < -1e-8 {
                return Err(Error::NotPositiveSemidefinite { pivot: i, value: var });
            }
            if var <= SINGULAR_TOL {
                chol[i * m + i] = 0.0;
                y[i] = 0.0;
                continue;
            }
            let piv = var.sqrt();
            chol[i * m + i] = piv;
            for r in i + 1..m {
                let mut s = cov[r * m + i];
                for k in 0..i {
                    s -= chol[r * m + k] * chol[i * m + k];
                }
                chol[r * m + i] = s / piv;
            }
            // E[Z | Z < c] for the standardized conditional bound c
            let mut mean = 0.0;
            for k in 0..i {
                mean += chol[i * m + k] * y[k];
            }
            let c = (b[i] - mean) / piv;
            let phi = (-0.5 * c * c).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let cdf = norm_cdf(c);
            y[i] = if cdf > 1e-300 { -phi / cdf } else { c };
        }
        let chi = (df > 0).then(|| ChiScaleTable::cached(df));
        Ok(Self { m, chol, bounds: b, df, chi })
    }

    /// Number of unit-cube coordinates the integrand consumes.
    fn dims(&self) -> usize {
        self.m - 1 + usize::from(self.df > 0)
    }

    fn integrand(&self, w: &[f64], y: &mut [f64]) -> f64 {
        let m = self.m;
        let (scale, w) = match &self.chi {
            Some(chi) => (chi.eval(w[0]), &w[1..]),
            None => (1.0, w),
        };
        let mut prob = 1.0;
        for i in 0..m {
            let mut mean = 0.0;
            for k in 0..i {
                mean += self.chol[i * m + k] * y[k];
            }
            let piv = self.chol[i * m + i];
            let slack = scale * self.bounds[i] - mean;
            if piv == 0.0 {
                if slack < 0.0 {
                    return 0.0;
                }
                y[i] = 0.0;
                continue;
            }
            let e = norm_cdf(slack / piv);
            prob *= e;
            if prob == 0.0 {
                return 0.0;
            }
            if i + 1 < m {
                y[i] = norm_quantile(w[i] * e);
            }
        }
        prob
    }

    /// One randomly shifted lattice pass of `n` points (each with its antithetic twin).
    fn lattice_mean(&self, gen: &[f64], shift: &[f64], n: usize) -> f64 {
        let d = gen.len();
        let mut w = vec![0.0; d];
        let mut anti = vec![0.0; d];
        let mut y = vec![0.0; self.m];
        let mut sum = 0.0;
        for k in 1..=n {
            for j in 0..d {
                let x = (k as f64 * gen[j] + shift[j]).fract();
                // tent periodization
                w[j] = (2.0 * x - 1.0).abs();
                anti[j] = 1.0 - w[j];
            }
            sum += 0.5 * (self.integrand(&w, &mut y) + self.integrand(&anti, &mut y));
        }
        sum / n as f64
    }

    fn integrate(&self, qmc: &QmcConfig) -> QmcResult {
        let d = self.dims();
        let gen = richtmyer_generator(d);
        let mut rng = ChaCha8Rng::seed_from_u64(qmc.seed);

        let mut weight_sum = 0.0;
        let mut weighted = 0.0;
        let mut used = 0usize;
        let mut n = FIRST_LATTICE;
        let (value, variance) = loop {
            let shifts: Vec<Vec<f64>> =
                (0..REPLICATES).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
            let means: Vec<f64> =
                shifts.par_iter().map(|s| self.lattice_mean(&gen, s, n)).collect();
            used += REPLICATES * n * 2;

            let r = REPLICATES as f64;
            let mean = means.iter().sum::<f64>() / r;
            let var_of_mean = means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r * (r - 1.0));
            if var_of_mean <= 0.0 {
                // every replicate agreed exactly
                break (mean, 0.0);
            }
            // inverse-variance pooling of successive lattice sizes
            weight_sum += 1.0 / var_of_mean;
            weighted += mean / var_of_mean;
            let value = weighted / weight_sum;
            let variance = 1.0 / weight_sum;

            let next = n * 3 / 2;
            if ERROR_SCALE * variance.sqrt() <= qmc.error_target || used + REPLICATES * next * 2 > qmc.max_points {
                break (value, variance);
            }
            n = next;
        };
        let error_estimate = ERROR_SCALE * variance.sqrt();
        QmcResult {
            value: value.clamp(0.0, 1.0),
            error_estimate,
            points_used: used,
            target_met: error_estimate <= qmc.error_target,
        }
    }
}

fn swap_sym(a: &mut [f64], m: usize, i: usize, j: usize) {
    for k in 0..m {
        a.swap(i * m + k, j * m + k);
    }
    for k in 0..m {
        a.swap(k * m + i, k * m + j);
    }
}

/// Fractional parts of square roots of the first `d` primes.
fn richtmyer_generator(d: usize) -> Vec<f64> {
    let mut primes = Vec::with_capacity(d);
    let mut c = 2u64;
    while primes.len() < d {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes.into_iter().map(|p| (p as f64).sqrt().fract()).collect()
}
