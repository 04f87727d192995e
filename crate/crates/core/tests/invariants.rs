use noael_core::contrasts::{dunnett_matrix, williams_matrix};
use noael_core::data::{parse_csv, to_csv, ParseOptions};
use noael_core::mvdist::{mvt_cdf, CorrelationMatrix, QmcConfig};
use noael_core::nonparametric::relative_effect;
use noael_core::parametric::{contrast_test, fit_cell_means, hc_covariance, pairwise_p};
use noael_core::polyk::polyk_estimates;
use noael_core::{
    ctp_adjust, run_analysis, AnalysisConfig, AnimalRecord, ContinuousDataset, Dataset, Direction, HcKind,
    IncidenceDataset, Method, ScoreDataset,
};
use proptest::prelude::*;

fn continuous() -> impl Strategy<Value = ContinuousDataset> {
    prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3..9), 2..5).prop_filter_map(
        "groups need spread",
        |groups| {
            let spread = groups.iter().all(|g| g.iter().any(|&y| (y - g[0]).abs() > 1e-3));
            let levels = groups.into_iter().enumerate().map(|(i, g)| (i.to_string(), i as f64, g)).collect();
            spread.then(|| ContinuousDataset::new(levels).ok()).flatten()
        },
    )
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0i32..6, 1..20).prop_map(|v| v.into_iter().map(f64::from).collect())
}

fn incidence() -> impl Strategy<Value = IncidenceDataset> {
    let animal = (1.0..104.0f64, any::<bool>()).prop_map(|(t, y)| AnimalRecord::new(t, y));
    prop::collection::vec(prop::collection::vec(animal, 2..15), 2..5).prop_filter_map("valid", |groups| {
        let levels = groups.into_iter().enumerate().map(|(i, g)| (i.to_string(), i as f64, g)).collect();
        IncidenceDataset::new(levels).ok()
    })
}

proptest! {
    #[test]
    fn suffix_max_is_idempotent_and_monotone(raw in prop::collection::vec(0.0..=1.0f64, 1..15)) {
        let adj = ctp_adjust(&raw).unwrap();
        prop_assert_eq!(ctp_adjust(&adj).unwrap(), adj.clone());
        prop_assert!(adj.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(adj.iter().zip(&raw).all(|(a, r)| a >= r));
        prop_assert_eq!(adj.last(), raw.last());
    }

    #[test]
    fn contrast_rows_sum_to_zero(sizes in prop::collection::vec(1usize..40, 2..8)) {
        for cm in [dunnett_matrix(&sizes).unwrap(), williams_matrix(&sizes).unwrap()] {
            prop_assert_eq!(cm.width(), sizes.len());
            for row in cm.rows() {
                prop_assert!(row.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relative_effect_is_antisymmetric(a in scores(), b in scores()) {
        let ab = relative_effect(&a, &b).unwrap().p_hat;
        let ba = relative_effect(&b, &a).unwrap().p_hat;
        prop_assert!((ab + ba - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relative_effect_ignores_monotone_transforms(a in scores(), b in scores()) {
        let f = |x: &f64| (0.7 * x).exp() - 3.0;
        let before = relative_effect(&a, &b).unwrap();
        let after = relative_effect(&a.iter().map(f).collect::<Vec<_>>(), &b.iter().map(f).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(before.p_hat, after.p_hat);
        prop_assert_eq!(before.variance, after.variance);
    }

    #[test]
    fn pairwise_p_is_location_scale_invariant(ds in continuous(), c in 0.01..100.0f64, shift in -100.0..100.0f64) {
        let moved = ContinuousDataset::new(
            ds.groups().iter().zip(ds.observations())
                .map(|(g, ys)| (g.label.clone(), g.dose_value, ys.iter().map(|y| c * y + shift).collect()))
                .collect(),
        ).unwrap();
        for kind in [HcKind::None, HcKind::Hc3] {
            let (f0, f1) = (fit_cell_means(&ds).unwrap(), fit_cell_means(&moved).unwrap());
            let (v0, v1) = (hc_covariance(&f0, kind).unwrap(), hc_covariance(&f1, kind).unwrap());
            for i in 1..ds.n_groups() {
                let p0 = pairwise_p(&f0, &v0, i, Direction::Greater).unwrap().p_raw;
                let p1 = pairwise_p(&f1, &v1, i, Direction::Greater).unwrap().p_raw;
                prop_assert!((p0 - p1).abs() < 1e-9, "{} vs {}", p0, p1);
            }
        }
    }

    #[test]
    fn opposite_directions_complement(ds in continuous()) {
        let fit = fit_cell_means(&ds).unwrap();
        let cov = hc_covariance(&fit, HcKind::Hc3).unwrap();
        for i in 1..ds.n_groups() {
            let g = pairwise_p(&fit, &cov, i, Direction::Greater).unwrap().p_raw;
            let l = pairwise_p(&fit, &cov, i, Direction::Less).unwrap().p_raw;
            prop_assert!((g + l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn balanced_hc1_averages_to_pooled(n in 3usize..10, g in 2usize..5, seed in any::<u64>()) {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let levels = (0..g).map(|i| (i.to_string(), i as f64, (0..n).map(|_| 10.0 * next()).collect())).collect();
        let fit = fit_cell_means(&ContinuousDataset::new(levels).unwrap()).unwrap();
        let hc1 = hc_covariance(&fit, HcKind::Hc1).unwrap();
        let pooled = hc_covariance(&fit, HcKind::None).unwrap();
        let mean_hc1 = (0..g).map(|i| hc1.get(i, i)).sum::<f64>() / g as f64;
        prop_assert!((mean_hc1 - pooled.get(0, 0)).abs() < 1e-12 * pooled.get(0, 0).max(1.0));
    }

    #[test]
    fn polyk_is_invariant_to_time_units(ds in incidence(), c in 0.1..10.0f64) {
        let scaled = IncidenceDataset::new(
            ds.groups().iter().zip(ds.observations())
                .map(|(g, a)| (g.label.clone(), g.dose_value, a.iter().map(|x| AnimalRecord::new(x.time * c, x.tumor)).collect()))
                .collect(),
        ).unwrap();
        let (a, b) = (polyk_estimates(&ds, 3.0).unwrap(), polyk_estimates(&scaled, 3.0).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.p_star - y.p_star).abs() < 1e-12);
            prop_assert!((x.variance - y.variance).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip(ds in continuous(), sc in prop::collection::vec(prop::collection::vec(0i64..5, 2..8), 2..4), inc in incidence()) {
        let sc = ScoreDataset::new(sc.into_iter().enumerate().map(|(i, g)| ((2 * i).to_string(), 2.0 * i as f64, g)).collect()).unwrap();
        for d in [Dataset::Continuous(ds), Dataset::Score(sc), Dataset::Incidence(inc)] {
            let text = to_csv(&d);
            let back = parse_csv(text.as_bytes(), d.kind(), &ParseOptions::default()).unwrap();
            prop_assert_eq!(back, d);
        }
    }

    #[test]
    fn analysis_adjusted_is_at_least_raw(ds in continuous()) {
        let cfg = AnalysisConfig::new(Method::CtpPairwise, Direction::Less);
        let o = run_analysis(&Dataset::Continuous(ds), &cfg).unwrap();
        prop_assert!(o.closure.comparisons.iter().all(|c| c.adjusted_p >= c.raw_p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn single_step_bounds(ds in continuous()) {
        let fit = fit_cell_means(&ds).unwrap();
        let cov = hc_covariance(&fit, HcKind::Hc3).unwrap();
        let cm = dunnett_matrix(&ds.group_sizes()).unwrap();
        let qmc = QmcConfig { error_target: 1e-4, ..QmcConfig::default() };
        let res = contrast_test(&fit, &cov, &cm, Direction::Greater, &qmc).unwrap();
        let m = cm.n_rows() as f64;
        for (a, o) in res.adjusted.iter().zip(&res.outcomes) {
            prop_assert!(*a >= o.p_raw && *a <= (m * o.p_raw).min(1.0));
        }
    }

    #[test]
    fn mvt_is_monotone_and_permutation_invariant(
        rho in -0.4..0.9f64,
        b in prop::collection::vec(-1.5..2.5f64, 3),
        bump in 0.05..1.0f64,
        df in prop::sample::select(vec![0u32, 4, 15]),
    ) {
        let corr = CorrelationMatrix::equicorrelated(3, rho).unwrap();
        let qmc = QmcConfig { error_target: 1e-4, ..QmcConfig::default() };
        let base = mvt_cdf(&b, &corr, df, &qmc).unwrap();
        let mut higher = b.clone();
        higher[1] += bump;
        let up = mvt_cdf(&higher, &corr, df, &qmc).unwrap();
        prop_assert!(up.value >= base.value - (base.error_estimate + up.error_estimate));
        let perm = [b[2], b[0], b[1]];
        let swapped = mvt_cdf(&perm, &corr, df, &qmc).unwrap();
        prop_assert!((swapped.value - base.value).abs() <= base.error_estimate + swapped.error_estimate);
    }
}
