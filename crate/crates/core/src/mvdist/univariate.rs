use statrs::function::beta::beta_reg;
use libm::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail, accurate far into the tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`norm_cdf`] (Wichura's AS241); `p` is clamped away from 0 and 1.
pub fn norm_quantile(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        133.141_667_891_784_38,
        1_971.590_950_306_551_3,
        13_731.693_765_509_46,
        45_921.953_931_549_87,
        67_265.770_927_008_7,
        33_430.575_583_588_13,
        2_509.080_928_730_122_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_91,
        687.187_007_492_057_9,
        5_394.196_021_424_751,
        21_213.794_301_586_597,
        39_307.895_800_092_71,
        28_729.085_735_721_943,
        5_226.495_278_852_546,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_546,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        0.241_780_725_177_450_6,
        0.022_723_844_989_269_184,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        0.689_767_334_985_1,
        0.148_103_976_427_480_08,
        0.015_198_666_563_616_457,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_9e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        0.296_560_571_828_504_87,
        0.026_532_189_526_576_124,
        0.001_242_660_947_388_078_4,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_888,
        0.136_929_880_922_735_8,
        0.014_875_361_290_850_615,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];
    fn ratio(num: &[f64; 8], den: &[f64; 8], r: f64) -> f64 {
        let horner = |c: &[f64; 8]| c.iter().rev().fold(0.0, |acc, &k| acc * r + k);
        horner(num) / horner(den)
    }

    let p = p.clamp(1e-300, 1.0 - f64::EPSILON / 2.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        return q * ratio(&A, &B, 0.180625 - q * q);
    }
    let r = (-p.min(1.0 - p).ln()).sqrt();
    let x = if r <= 5.0 { ratio(&C, &D, r - 1.6) } else { ratio(&E, &F, r - 5.0) };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Switch to the asymptotic expansion above this many degrees of freedom;
/// near the switch both routes agree to about 1e-11.
const LARGE_DF: f64 = 1e5;

/// Student-t CDF with real `df`; `df = +inf` gives the normal CDF.
pub fn t_cdf(x: f64, df: f64) -> Result<f64> {
    if !(df > 0.0) {
        return Err(Error::invalid(format!("degrees of freedom must be positive, got {df}")));
    }
    if x.is_nan() {
        return Err(Error::Numeric("t_cdf of NaN".into()));
    }
    if df.is_infinite() {
        return Ok(norm_cdf(x));
    }
    if x == 0.0 {
        return Ok(0.5);
    }
    if x.is_infinite() {
        return Ok(if x > 0.0 { 1.0 } else { 0.0 });
    }
    if df > LARGE_DF {
        // F(x) = Phi(x) - phi(x) (g1(x) / df + g2(x) / df^2) + O(df^-3)
        let g1 = (x.powi(3) + x) / 4.0;
        let g2 = (3.0 * x.powi(7) - 7.0 * x.powi(5) - 5.0 * x.powi(3) - 3.0 * x) / 96.0;
        return Ok(norm_cdf(x) - norm_pdf(x) * (g1 / df + g2 / (df * df)));
    }
    // P(T <= -|x|) = I_{df/(df+x^2)}(df/2, 1/2) / 2
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + x * x));
    Ok(if x < 0.0 { tail } else { 1.0 - tail })
}

/// Upper tail `P(T > x)`, computed without cancellation.
pub fn t_sf(x: f64, df: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Numeric("t_sf of NaN".into()));
    }
    t_cdf(-x, df)
}

/// `sqrt(Q / df)` where `Q` is the `u`-quantile of a chi-square with `df` degrees of freedom.
///
/// This is the scale variable that turns a multivariate normal into a
/// multivariate t. Solved by safeguarded Newton iteration on the regularized
/// incomplete gamma function of the smaller tail.
pub fn chi_scale(u: f64, df: u32) -> f64 {
    chi_scale_tails(u, 1.0 - u, df)
}

/// [`chi_scale`] from the lower tail `u` and its complement `uc`.
fn chi_scale_tails(u: f64, uc: f64, df: u32) -> f64 {
    let nu = df as f64;
    let u = u.clamp(1e-15, 1.0 - 1e-15);
    let uc = uc.clamp(1e-300, 1.0 - 1e-15);
    let upper = uc < 0.5;
    let a = nu / 2.0;
    let log_norm = ln_gamma(a) + a * std::f64::consts::LN_2;

    // Wilson-Hilferty start
    let z = if upper { -norm_quantile(uc) } else { norm_quantile(u) };
    let c = 2.0 / (9.0 * nu);
    let mut x = nu * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x > 0.0) {
        // lower tail: F(x) ~ (x/2)^a / Gamma(a + 1)
        x = 2.0 * (u.ln() + ln_gamma(a + 1.0)).exp().powf(1.0 / a).max(1e-300);
    }
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for _ in 0..100 {
        let f = if upper { uc - gamma_ur(a, x / 2.0) } else { gamma_lr(a, x / 2.0) - u };
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let log_pdf = (a - 1.0) * x.ln() - x / 2.0 - log_norm;
        let step = f / log_pdf.exp();
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(lo) + 1.0 };
        }
        if (next - x).abs() <= 1e-13 * x {
            x = next;
            break;
        }
        x = next;
    }
    (x / nu).sqrt()
}

/// Tabulated [`chi_scale`] for one `df`: cubic Hermite interpolation of
/// `ln s` in `z = norm_quantile(u)` on a uniform grid, exact evaluation outside it.
#[derive(Debug)]
pub struct ChiScaleTable {
    df: u32,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl ChiScaleTable {
    const Z_MAX: f64 = 7.5;
    const STEPS_PER_UNIT: f64 = 64.0;

    pub fn new(df: u32) -> Self {
        let nu = df as f64;
        let a = nu / 2.0;
        let log_norm = ln_gamma(a) + a * std::f64::consts::LN_2;
        let n = (2.0 * Self::Z_MAX * Self::STEPS_PER_UNIT) as usize + 1;
        let mut values = Vec::with_capacity(n);
        let mut slopes = Vec::with_capacity(n);
        for i in 0..n {
            let z = -Self::Z_MAX + i as f64 / Self::STEPS_PER_UNIT;
            let s = chi_scale_tails(norm_cdf(z), norm_sf(z), df);
            // ds/dz = phi(z) / f_S(s), with f_S(s) = 2 nu s f_chi2(nu s^2)
            let x = nu * s * s;
            let log_density = (2.0 * nu * s).ln() + (a - 1.0) * x.ln() - x / 2.0 - log_norm;
            values.push(s.ln());
            slopes.push(norm_pdf(z) * (-log_density).exp() / s / Self::STEPS_PER_UNIT);
        }
        Self { df, values, slopes }
    }

    /// Shared table for `df`, built on first use.
    pub fn cached(df: u32) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<u32, Arc<ChiScaleTable>>>> = OnceLock::new();
        let mut map = CACHE.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
        map.entry(df).or_insert_with(|| Arc::new(Self::new(df))).clone()
    }

    pub fn eval(&self, u: f64) -> f64 {
        let pos = (norm_quantile(u) + Self::Z_MAX) * Self::STEPS_PER_UNIT;
        let i = pos.floor();
        if !(i >= 0.0 && (i as usize) + 1 < self.values.len()) {
            return chi_scale(u, self.df);
        }
        let i = i as usize;
        let t = pos - i as f64;
        let (t2, t3) = (t * t, t * t * t);
        ((2.0 * t3 - 3.0 * t2 + 1.0) * self.values[i]
            + (t3 - 2.0 * t2 + t) * self.slopes[i]
            + (3.0 * t2 - 2.0 * t3) * self.values[i + 1]
            + (t3 - t2) * self.slopes[i + 1])
            .exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn t_cdf_closed_forms() {
        for df in [1.0, 3.5, 45.0, 1e6] {
            assert_eq!(t_cdf(0.0, df).unwrap(), 0.5);
        }
        // Cauchy quartile
        assert_relative_eq!(t_cdf(1.0, 1.0).unwrap(), 0.75, epsilon = 1e-14);
        // df = 2: F(x) = 1/2 + x / (2 sqrt(x^2 + 2))
        let x: f64 = 1.3;
        assert_relative_eq!(
            t_cdf(x, 2.0).unwrap(),
            0.5 + x / (2.0 * (x * x + 2.0).sqrt()),
            epsilon = 1e-14
        );
        assert!(t_cdf(1.0, 0.0).is_err());
        assert!(t_cdf(1.0, -3.0).is_err());
    }

    #[test]
    fn t_tends_to_normal() {
        for x in [-2.0, -0.3, 1.7] {
            assert!((t_cdf(x, 1e9).unwrap() - norm_cdf(x)).abs() < 1e-9);
            // the expansion takes over smoothly from the incomplete beta
            let below = t_cdf(x, LARGE_DF).unwrap();
            let above = t_cdf(x, LARGE_DF * (1.0 + 1e-12)).unwrap();
            assert!((below - above).abs() < 5e-11, "{below} vs {above}");
            assert_eq!(t_cdf(x, f64::INFINITY).unwrap(), norm_cdf(x));
        }
    }

    #[test]
    fn upper_tail_keeps_relative_accuracy() {
        let lower = t_cdf(-8.653233848065923, 45.0).unwrap();
        let upper = t_sf(8.653233848065923, 45.0).unwrap();
        assert_eq!(lower, upper);
        assert!(lower > 1e-11 && lower < 3e-11);
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for p in [1e-300, 1e-40, 1e-12, 0.001, 0.3, 0.5, 0.975, 0.9999] {
            assert_relative_eq!(norm_cdf(norm_quantile(p)), p, max_relative = 1e-12);
        }
    }

    #[test]
    fn chi_scale_inverts_gamma() {
        for df in [1u32, 2, 5, 45, 300] {
            for u in [1e-9, 0.01, 0.3, 0.5, 0.9, 0.999999] {
                let s = chi_scale(u, df);
                let q = s * s * df as f64;
                let back = gamma_lr(df as f64 / 2.0, q / 2.0);
                assert_relative_eq!(back, u, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn chi_table_matches_exact_inversion() {
        for df in [1u32, 2, 5, 45, 300] {
            let table = ChiScaleTable::new(df);
            for k in 0..2000 {
                let u = (k as f64 + 0.5) / 2000.0;
                let u = u.powi(3);
                assert_relative_eq!(table.eval(u), chi_scale(u, df), max_relative = 1e-10);
                assert_relative_eq!(table.eval(1.0 - u), chi_scale(1.0 - u, df), max_relative = 1e-10);
            }
            assert_eq!(table.eval(1e-20), chi_scale(1e-20, df));
        }
    }
}
