//! Relative effects and Brunner-Munzel tests for ordinal scores.
//!
//! The relative effect of a dose sample against control is
//! `p = P(X_0 < X_d) + 1/2 P(X_0 = X_d)`, estimated from pooled mid-ranks.
//! Values above 1/2 mean the dose group tends to score higher.

use serde::{Deserialize, Serialize};

use crate::data::{BmScale, Direction};
use crate::mvdist::{norm_cdf, norm_sf};
use crate::parametric::{one_sided_p, TestOutcome};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEffectEstimate {
    pub p_hat: f64,
    /// Estimated variance of `p_hat`.
    pub variance: f64,
    pub n0: usize,
    pub n1: usize,
    /// Brunner-Munzel approximate degrees of freedom (NaN when undefined).
    pub df: f64,
}

/// Mid-ranks (average ranks for ties), 1-based.
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        // positions start..end share rank (start+1 + end) / 2
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Placement variance `S^2` of one sample given its pooled and internal ranks.
fn placement_variance(pooled: &[f64], internal: &[f64]) -> f64 {
    let n = pooled.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = pooled.iter().sum::<f64>() / nf;
    pooled
        .iter()
        .zip(internal)
        .map(|(r, ri)| (r - ri - mean + (nf + 1.0) / 2.0).powi(2))
        .sum::<f64>()
        / (nf - 1.0)
}

pub fn relative_effect(control: &[f64], dose: &[f64]) -> Result<RelativeEffectEstimate> {
    let (n0, n1) = (control.len(), dose.len());
    if n0 == 0 || n1 == 0 {
        return Err(Error::data("relative effect needs two non-empty samples"));
    }
    let pooled: Vec<f64> = control.iter().chain(dose).copied().collect();
    let ranks = midranks(&pooled);
    let (r0, r1) = ranks.split_at(n0);
    let (f0, f1) = (n0 as f64, n1 as f64);

    // twice the mid-ranks are integers, so this stays exact for realistic n
    let twice_sum: f64 = r1.iter().map(|r| 2.0 * r).sum();
    let p_hat = (twice_sum - f1 * (f1 + 1.0)) / (2.0 * f0 * f1);

    let s0 = placement_variance(r0, &midranks(control));
    let s1 = placement_variance(r1, &midranks(dose));
    let variance = s0 / (f0 * f1 * f1) + s1 / (f1 * f0 * f0);

    let (a, b) = (s0 / f1, s1 / f0);
    let denom = if n0 > 1 { a * a / (f0 - 1.0) } else { 0.0 } + if n1 > 1 { b * b / (f1 - 1.0) } else { 0.0 };
    let df = if denom > 0.0 { (a + b).powi(2) / denom } else { f64::NAN };
    Ok(RelativeEffectEstimate { p_hat, variance, n0, n1, df })
}

/// Boundary p-value when the variance estimate is zero.
fn degenerate_p(p_hat: f64, direction: Direction, flags: &mut Vec<String>) -> f64 {
    if p_hat == 0.5 {
        flags.push("degenerate: zero variance, no effect; p set to 0.5".into());
        0.5
    } else {
        flags.push("degenerate: zero variance with complete separation; boundary p".into());
        let adverse = match direction {
            Direction::Greater => p_hat > 0.5,
            Direction::Less => p_hat < 0.5,
        };
        if adverse {
            0.0
        } else {
            1.0
        }
    }
}

/// One-sided Brunner-Munzel test of `p = 1/2` against `p > 1/2` (`Greater`) or `p < 1/2` (`Less`).
pub fn bm_test(control: &[f64], dose: &[f64], direction: Direction, scale: BmScale) -> Result<TestOutcome> {
    let est = relative_effect(control, dose)?;
    let mut flags = Vec::new();
    let label = "1-0".to_string();
    let degenerate = !(est.variance > 0.0) || (scale == BmScale::Logit && (est.p_hat <= 0.0 || est.p_hat >= 1.0));
    if degenerate {
        let p = degenerate_p(est.p_hat, direction, &mut flags);
        let statistic = if p == 0.5 { 0.0 } else { (est.p_hat - 0.5).signum() * f64::INFINITY };
        let df = if scale == BmScale::Logit { f64::INFINITY } else { 1.0 };
        return Ok(TestOutcome { label, statistic, df, p_raw: p, p_error_estimate: 0.0, direction, flags });
    }
    let (statistic, df, p_raw) = match scale {
        BmScale::Identity => {
            let mut df = est.df;
            if !(df >= 1.0) {
                flags.push(format!("df {df:.3} clamped to 1"));
                df = 1.0;
            }
            let t = (est.p_hat - 0.5) / est.variance.sqrt();
            (t, df, one_sided_p(t, df, direction)?)
        }
        BmScale::Logit => {
            let q = est.p_hat * (1.0 - est.p_hat);
            let z = (est.p_hat / (1.0 - est.p_hat)).ln() * q / est.variance.sqrt();
            let p = match direction {
                Direction::Greater => norm_sf(z),
                Direction::Less => norm_cdf(z),
            };
            (z, f64::INFINITY, p)
        }
    };
    Ok(TestOutcome { label, statistic, df, p_raw, p_error_estimate: 0.0, direction, flags })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_average_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0, 3.0]), [4.0, 1.0, 4.0, 2.0, 4.0]);
        assert_eq!(midranks(&[0.0, 0.0]), [1.5, 1.5]);
    }

    #[test]
    fn symmetric_and_separated_samples() {
        let x = [0.0, 1.0, 1.0, 3.0];
        assert_eq!(relative_effect(&x, &x).unwrap().p_hat, 0.5);
        let sep = relative_effect(&[0.0; 4], &[1.0; 3]).unwrap();
        assert_eq!(sep.p_hat, 1.0);
        assert_eq!(sep.variance, 0.0);
        assert!(relative_effect(&[], &[1.0]).is_err());
    }

    #[test]
    fn constant_samples_are_degenerate() {
        let o = bm_test(&[2.0; 5], &[2.0; 6], Direction::Greater, BmScale::Identity).unwrap();
        assert_eq!(o.p_raw, 0.5);
        assert!(o.flags[0].starts_with("degenerate"));
        let o = bm_test(&[0.0; 5], &[1.0; 6], Direction::Greater, BmScale::Identity).unwrap();
        assert_eq!(o.p_raw, 0.0);
        let o = bm_test(&[0.0; 5], &[1.0; 6], Direction::Less, BmScale::Logit).unwrap();
        assert_eq!(o.p_raw, 1.0);
    }

    #[test]
    fn direction_swap_complements() {
        let c = [0.0, 0.0, 1.0, 2.0, 2.0, 3.0];
        let d = [1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 0.0];
        for scale in [BmScale::Identity, BmScale::Logit] {
            let g = bm_test(&c, &d, Direction::Greater, scale).unwrap();
            let l = bm_test(&c, &d, Direction::Less, scale).unwrap();
            assert!((g.p_raw + l.p_raw - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn df_when_one_sample_is_constant() {
        // all placement spread sits in the dose sample, so df = n1 - 1
        let c = [0.0, 0.0];
        let d = [0.0, 5.0];
        let est = relative_effect(&c, &d).unwrap();
        assert_eq!(est.df, 1.0);
        assert_eq!(est.p_hat, 0.75);
        let o = bm_test(&c, &d, Direction::Greater, BmScale::Identity).unwrap();
        assert!(o.flags.is_empty());
        assert_eq!(o.df, 1.0);
    }
}
