//! Versioned JSON / TSV reports.
//!
//! Numbers are rounded to six significant digits unless full precision is
//! requested; JSON and TSV carry the same rounded values.

use serde::{Deserialize, Serialize};

use crate::ctp::{AnalysisOutcome, HypothesisLink, NoaelKind};
use crate::data::{AnalysisConfig, BmScale, Direction, EndpointKind, HcKind, Method};
use crate::Result;

pub const SCHEMA_VERSION: &str = "report-v1";

/// JSON Schema of [`ReportDocument`].
pub const REPORT_SCHEMA: &str = include_str!("../../../schemas/report-v1.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportMetadata {
    pub dataset: String,
    pub endpoint: EndpointKind,
    pub method: Method,
    pub alpha: f64,
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hc: Option<HcKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly_k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_scale: Option<BmScale>,
    pub seed: u64,
    pub qmc_error_target: f64,
    pub full_precision: bool,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRow {
    pub comparison: String,
    pub dose: String,
    /// Absent when infinite (degenerate variance).
    pub statistic: Option<f64>,
    /// Absent for normal-reference tests.
    pub df: Option<f64>,
    pub raw_p: f64,
    pub adjusted_p: f64,
    pub p_error_estimate: f64,
    pub significant: bool,
    /// The comparison whose dose is the NOAEL.
    pub noael: bool,
    pub max_from: String,
    pub tree: Vec<HypothesisLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDecision {
    pub kind: NoaelKind,
    pub noael: Option<String>,
    pub med: Option<String>,
    pub alpha: f64,
    pub direction: Direction,
    pub caveat: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportDocument {
    pub schema: String,
    pub metadata: ReportMetadata,
    pub rows: Vec<ReportRow>,
    pub decision: ReportDecision,
    pub warnings: Vec<String>,
}

/// Rounds to `digits` significant digits; non-finite values and zero pass through.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1), x).parse().unwrap_or(x)
}

/// Shortest round-tripping text, in exponent form outside `[1e-4, 1e6)`.
fn tsv_number(x: f64) -> String {
    if x == 0.0 || (1e-4..1e6).contains(&x.abs()) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

impl ReportDocument {
    pub fn build(
        outcome: &AnalysisOutcome,
        cfg: &AnalysisConfig,
        dataset: &str,
        source_sha256: Option<String>,
        full_precision: bool,
    ) -> Self {
        let r = |x: f64| if full_precision { x } else { round_sig(x, 6) };
        let finite = |x: f64| x.is_finite().then(|| r(x));
        let method = cfg.method;
        let parametric = matches!(method, Method::CtpPairwise | Method::Dunnett | Method::CtpWilliams);
        let metadata = ReportMetadata {
            dataset: dataset.to_string(),
            endpoint: method.endpoint(),
            method,
            alpha: cfg.alpha,
            direction: cfg.direction,
            hc: parametric.then_some(cfg.hc),
            poly_k: (method == Method::CtpPoly3).then_some(cfg.poly_k),
            ratio_margin: (method == Method::CtpRatio).then_some(cfg.ratio_margin),
            rank_scale: (method == Method::CtpNonparametric).then_some(cfg.bm_scale),
            seed: cfg.qmc.seed,
            qmc_error_target: cfg.qmc.error_target,
            full_precision,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            source_sha256,
        };
        let d = &outcome.decision;
        let rows = outcome
            .closure
            .comparisons
            .iter()
            .map(|c| ReportRow {
                comparison: c.label.clone(),
                dose: c.dose_label.clone(),
                statistic: finite(c.statistic),
                df: finite(c.df),
                raw_p: r(c.raw_p),
                adjusted_p: r(c.adjusted_p),
                p_error_estimate: r(c.p_error_estimate),
                significant: c.adjusted_p < cfg.alpha,
                noael: d.kind == NoaelKind::Dose && d.noael_label.as_deref() == Some(c.dose_label.as_str()),
                max_from: c.max_from.clone(),
                tree: c
                    .hypotheses
                    .iter()
                    .map(|h| HypothesisLink { p: r(h.p), ..h.clone() })
                    .collect(),
            })
            .collect();
        Self {
            schema: SCHEMA_VERSION.to_string(),
            metadata,
            rows,
            decision: ReportDecision {
                kind: d.kind,
                noael: d.noael_label.clone(),
                med: d.med_label.clone(),
                alpha: d.alpha,
                direction: d.direction,
                caveat: d.caveat.clone(),
            },
            warnings: outcome.warnings.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Tab-separated table with `#`-prefixed metadata and decision lines.
    pub fn to_tsv(&self) -> String {
        let m = &self.metadata;
        let opt = |x: Option<f64>| x.map(tsv_number).unwrap_or_else(|| "NA".into());
        let mut out = String::new();
        out.push_str(&format!("# schema\t{}\n", self.schema));
        out.push_str(&format!("# dataset\t{}\n", m.dataset));
        out.push_str(&format!("# method\t{}\n", m.method));
        out.push_str(&format!("# direction\t{}\n", m.direction));
        out.push_str(&format!("# alpha\t{}\n", m.alpha));
        out.push_str(&format!("# seed\t{}\n", m.seed));
        out.push_str("comparison\tdose\tstatistic\tdf\traw_p\tadjusted_p\tp_error_estimate\tsignificant\tnoael\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                row.comparison,
                row.dose,
                opt(row.statistic),
                opt(row.df),
                tsv_number(row.raw_p),
                tsv_number(row.adjusted_p),
                tsv_number(row.p_error_estimate),
                row.significant,
                row.noael
            ));
        }
        let decision = match self.decision.kind {
            NoaelKind::Dose => self.decision.noael.clone().unwrap_or_default(),
            NoaelKind::NoneBelowLowest => "none (lowest dose already significant)".into(),
            NoaelKind::TopDoseSafe => {
                format!("{} (top dose, no significant effect)", self.decision.noael.clone().unwrap_or_default())
            }
        };
        out.push_str(&format!("# noael\t{decision}\n"));
        if let Some(med) = &self.decision.med {
            out.push_str(&format!("# med\t{med}\n"));
        }
        for w in &self.warnings {
            out.push_str(&format!("# warning\t{w}\n"));
        }
        out
    }
}
