//! Workloads shared by the benchmarks.

use noael_core::datasets;
use noael_core::{AnalysisConfig, CorrelationMatrix, Dataset, Direction, Method};

/// A bundled analysis: dataset, method and direction.
pub struct Workload {
    pub name: &'static str,
    pub dataset: Dataset,
    pub config: AnalysisConfig,
}

pub fn analyses() -> Vec<Workload> {
    let runs = [
        ("wes/ctp-pairwise", Dataset::Continuous(datasets::wes()), Method::CtpPairwise, Direction::Less),
        ("wes/dunnett", Dataset::Continuous(datasets::wes()), Method::Dunnett, Direction::Less),
        ("wes/ctp-williams", Dataset::Continuous(datasets::wes()), Method::CtpWilliams, Direction::Less),
        ("tamh/ctp-ratio", Dataset::Continuous(datasets::tamh()), Method::CtpRatio, Direction::Greater),
        ("epi/ctp-nonparametric", Dataset::Score(datasets::epi()), Method::CtpNonparametric, Direction::Greater),
    ];
    runs.into_iter()
        .map(|(name, dataset, method, direction)| Workload {
            name,
            dataset,
            config: AnalysisConfig::new(method, direction),
        })
        .collect()
}

/// Dunnett-like problem: `dim` statistics with correlation 1/2 and a common bound.
pub fn dunnett_like(dim: usize, bound: f64) -> (Vec<f64>, CorrelationMatrix) {
    (vec![bound; dim], CorrelationMatrix::equicorrelated(dim, 0.5).expect("valid correlation"))
}
