//! Dose-group datasets, analysis configuration and CSV ingestion.
//!
//! All three endpoint flavours share one layout: an ordered list of
//! [`DoseGroup`]s (index 0 is the control, dose strictly increasing) and one
//! observation list per group. Construction sorts and validates, so every
//! dataset in circulation satisfies the group invariants.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mvdist::QmcConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseGroup {
    pub label: String,
    /// Dose in original units; the control has the smallest value.
    pub dose_value: f64,
    /// Position in dose order, 0 = control.
    pub index: usize,
    pub n: usize,
}

/// One animal in a carcinogenicity study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnimalRecord {
    /// Time on study (death or terminal sacrifice).
    pub time: f64,
    /// Tumour present at death.
    pub tumor: bool,
}

impl AnimalRecord {
    pub fn new(time: f64, tumor: bool) -> Self {
        Self { time, tumor }
    }
}

/// Per-observation validation hook for [`GroupedData`].
pub trait Observation: Clone + fmt::Debug {
    fn check(&self) -> Result<()>;
}

impl Observation for f64 {
    fn check(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::data(format!("non-finite response {self}")))
        }
    }
}

impl Observation for i64 {
    fn check(&self) -> Result<()> {
        if *self >= 0 {
            Ok(())
        } else {
            Err(Error::data(format!("negative severity score {self}")))
        }
    }
}

impl Observation for AnimalRecord {
    fn check(&self) -> Result<()> {
        if self.time.is_finite() && self.time > 0.0 {
            Ok(())
        } else {
            Err(Error::data(format!("time on study must be positive, got {}", self.time)))
        }
    }
}

/// Observations grouped by dose, groups in ascending dose order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedData<T> {
    groups: Vec<DoseGroup>,
    observations: Vec<Vec<T>>,
}

pub type ContinuousDataset = GroupedData<f64>;
pub type ScoreDataset = GroupedData<i64>;
pub type IncidenceDataset = GroupedData<AnimalRecord>;

impl<T: Observation> GroupedData<T> {
    /// Builds a dataset from `(label, dose, observations)` triples in any order.
    ///
    /// Groups are sorted by dose; the smallest dose becomes the control.
    pub fn new(levels: Vec<(String, f64, Vec<T>)>) -> Result<Self> {
        let mut levels = levels;
        if levels.len() < 2 {
            return Err(Error::data(format!(
                "need a control and at least one dose group, found {} group(s)",
                levels.len()
            )));
        }
        for (label, dose, obs) in &levels {
            if !dose.is_finite() || *dose < 0.0 {
                return Err(Error::data(format!("dose {label}: value must be finite and >= 0")));
            }
            if obs.len() < 2 {
                return Err(Error::data(format!(
                    "dose group {label} has n = {}; every group needs n >= 2",
                    obs.len()
                )));
            }
            for o in obs {
                o.check().map_err(|e| Error::data(format!("dose group {label}: {e}")))?;
            }
        }
        levels.sort_by(|a, b| a.1.total_cmp(&b.1));
        for w in levels.windows(2) {
            if w[0].1 == w[1].1 {
                return Err(Error::data(format!(
                    "dose groups {} and {} share dose value {}",
                    w[0].0, w[1].0, w[0].1
                )));
            }
        }
        let mut groups = Vec::with_capacity(levels.len());
        let mut observations = Vec::with_capacity(levels.len());
        for (index, (label, dose_value, obs)) in levels.into_iter().enumerate() {
            groups.push(DoseGroup { label, dose_value, index, n: obs.len() });
            observations.push(obs);
        }
        Ok(Self { groups, observations })
    }
}

impl<T> GroupedData<T> {
    pub fn groups(&self) -> &[DoseGroup] {
        &self.groups
    }

    pub fn observations(&self) -> &[Vec<T>] {
        &self.observations
    }

    pub fn group(&self, index: usize) -> &[T] {
        &self.observations[index]
    }

    /// Number of groups including the control.
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Number of dose groups (excluding control).
    pub fn n_doses(&self) -> usize {
        self.groups.len() - 1
    }

    pub fn total_n(&self) -> usize {
        self.groups.iter().map(|g| g.n).sum()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.n).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.label.clone()).collect()
    }
}

impl ScoreDataset {
    /// Scores as reals, for the rank machinery.
    pub fn as_real(&self) -> Vec<Vec<f64>> {
        self.observations.iter().map(|g| g.iter().map(|&s| s as f64).collect()).collect()
    }
}

impl IncidenceDataset {
    /// Longest time on study over all animals.
    pub fn study_max_time(&self) -> f64 {
        self.observations.iter().flatten().map(|a| a.time).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    Continuous,
    Score,
    Incidence,
}

/// Any of the three dataset flavours.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Continuous(ContinuousDataset),
    Score(ScoreDataset),
    Incidence(IncidenceDataset),
}

impl Dataset {
    pub fn kind(&self) -> EndpointKind {
        match self {
            Dataset::Continuous(_) => EndpointKind::Continuous,
            Dataset::Score(_) => EndpointKind::Score,
            Dataset::Incidence(_) => EndpointKind::Incidence,
        }
    }

    pub fn groups(&self) -> &[DoseGroup] {
        match self {
            Dataset::Continuous(d) => d.groups(),
            Dataset::Score(d) => d.groups(),
            Dataset::Incidence(d) => d.groups(),
        }
    }

    pub fn total_n(&self) -> usize {
        self.groups().iter().map(|g| g.n).sum()
    }
}

/// Which tail counts as adverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Increase is adverse; upper-tail p-values.
    Greater,
    /// Decrease is adverse; lower-tail p-values.
    Less,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Greater => "greater",
            Direction::Less => "less",
        }
    }

    /// +1 for `Greater`, -1 for `Less`.
    pub fn sign(self) -> f64 {
        match self {
            Direction::Greater => 1.0,
            Direction::Less => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Direction::Greater => Direction::Less,
            Direction::Less => Direction::Greater,
        }
    }
}

/// Heteroscedasticity-consistent covariance flavour; `None` is the pooled OLS covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HcKind {
    None,
    Hc0,
    Hc1,
    Hc2,
    Hc3,
}

impl HcKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HcKind::None => "none",
            HcKind::Hc0 => "hc0",
            HcKind::Hc1 => "hc1",
            HcKind::Hc2 => "hc2",
            HcKind::Hc3 => "hc3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CtpPairwise,
    Dunnett,
    CtpWilliams,
    CtpRatio,
    CtpNonparametric,
    CtpPoly3,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::CtpPairwise,
        Method::Dunnett,
        Method::CtpWilliams,
        Method::CtpRatio,
        Method::CtpNonparametric,
        Method::CtpPoly3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CtpPairwise => "ctp-pairwise",
            Method::Dunnett => "dunnett",
            Method::CtpWilliams => "ctp-williams",
            Method::CtpRatio => "ctp-ratio",
            Method::CtpNonparametric => "ctp-nonparametric",
            Method::CtpPoly3 => "ctp-poly3",
        }
    }

    pub fn endpoint(self) -> EndpointKind {
        match self {
            Method::CtpPairwise | Method::Dunnett | Method::CtpWilliams | Method::CtpRatio => {
                EndpointKind::Continuous
            }
            Method::CtpNonparametric => EndpointKind::Score,
            Method::CtpPoly3 => EndpointKind::Incidence,
        }
    }

    /// Comparisons are written `d/0` for ratio tests and `d-0` otherwise.
    pub fn ratio_scale(self) -> bool {
        matches!(self, Method::CtpRatio)
    }
}

/// Scale on which the Brunner-Munzel relative effect is tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BmScale {
    /// (p - 1/2) / se against a t reference with Brunner-Munzel df.
    #[default]
    Identity,
    /// logit(p) / se(logit p) against the standard normal.
    Logit,
}

impl BmScale {
    pub fn as_str(self) -> &'static str {
        match self {
            BmScale::Identity => "identity",
            BmScale::Logit => "logit",
        }
    }
}

macro_rules! impl_from_str {
    ($ty:ty, $what:literal, [$($variant:expr),+ $(,)?]) => {
        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let wanted = s.trim().to_ascii_lowercase();
                [$($variant),+]
                    .into_iter()
                    .find(|v| v.as_str() == wanted)
                    .ok_or_else(|| Error::invalid(format!(concat!("unknown ", $what, " '{}'"), s)))
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

impl EndpointKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EndpointKind::Continuous => "continuous",
            EndpointKind::Score => "score",
            EndpointKind::Incidence => "incidence",
        }
    }
}

impl_from_str!(EndpointKind, "endpoint", [EndpointKind::Continuous, EndpointKind::Score, EndpointKind::Incidence]);
impl_from_str!(Direction, "direction", [Direction::Greater, Direction::Less]);
impl_from_str!(HcKind, "covariance kind", [HcKind::None, HcKind::Hc0, HcKind::Hc1, HcKind::Hc2, HcKind::Hc3]);
impl_from_str!(BmScale, "rank-test scale", [BmScale::Identity, BmScale::Logit]);
impl_from_str!(
    Method,
    "method",
    [
        Method::CtpPairwise,
        Method::Dunnett,
        Method::CtpWilliams,
        Method::CtpRatio,
        Method::CtpNonparametric,
        Method::CtpPoly3,
    ]
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub direction: Direction,
    pub method: Method,
    pub hc: HcKind,
    pub qmc: QmcConfig,
    /// Exponent of the poly-k survival weight.
    pub poly_k: f64,
    /// Ratio-to-control margin rho0.
    pub ratio_margin: f64,
    pub bm_scale: BmScale,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            direction: Direction::Greater,
            method: Method::CtpPairwise,
            hc: HcKind::Hc3,
            qmc: QmcConfig::default(),
            poly_k: 3.0,
            ratio_margin: 1.0,
            bm_scale: BmScale::Identity,
        }
    }
}

impl AnalysisConfig {
    pub fn new(method: Method, direction: Direction) -> Self {
        Self { method, direction, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.poly_k > 0.0 && self.poly_k.is_finite()) {
            return Err(Error::invalid(format!("poly-k exponent must be positive, got {}", self.poly_k)));
        }
        if !(self.ratio_margin > 0.0 && self.ratio_margin.is_finite()) {
            return Err(Error::invalid(format!("ratio margin must be positive, got {}", self.ratio_margin)));
        }
        self.qmc.validate()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Dose-column value that marks the control group when it is not coded numerically.
    pub control_label: Option<String>,
}

/// Canonical text label for a numeric dose (`100`, `2.5`).
pub fn dose_label(value: f64) -> String {
    format!("{value}")
}

fn required_columns(kind: EndpointKind) -> &'static [&'static str] {
    match kind {
        EndpointKind::Continuous | EndpointKind::Score => &["dose", "response"],
        EndpointKind::Incidence => &["dose", "time", "status"],
    }
}

/// Reads a `dose,response` or `dose,time,status` CSV into a dataset.
pub fn parse_csv<R: Read>(raw: R, kind: EndpointKind, opts: &ParseOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(raw);
    let headers = rdr.headers()?.clone();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(Error::data("no data rows"));
    }
    let mut seen = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        if seen.insert(h.to_ascii_lowercase(), i).is_some() {
            return Err(Error::data(format!("duplicate column '{h}' in header")));
        }
    }
    let mut cols = Vec::new();
    for &name in required_columns(kind) {
        let idx = *seen
            .get(name)
            .ok_or_else(|| Error::data(format!("missing required column '{name}'")))?;
        cols.push(idx);
    }

    // dose key -> (label, value, rows)
    let mut levels: BTreeMap<String, (String, f64, Vec<usize>)> = BTreeMap::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (row_no, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row_no + 2;
        let mut cells = Vec::with_capacity(cols.len());
        for (&c, &name) in cols.iter().zip(required_columns(kind)) {
            let cell = rec.get(c).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::Parse { line, msg: format!("missing value in column '{name}'") });
            }
            cells.push(cell.to_string());
        }
        let dose_cell = &cells[0];
        let (label, value) = match &opts.control_label {
            Some(ctrl) if dose_cell == ctrl => (ctrl.clone(), 0.0),
            _ => {
                let v = parse_real(dose_cell, line, "dose")?;
                if v < 0.0 {
                    return Err(Error::Parse { line, msg: format!("negative dose {v}") });
                }
                if opts.control_label.is_some() && v <= 0.0 {
                    return Err(Error::Parse {
                        line,
                        msg: "numeric doses must be positive when a control label is given".into(),
                    });
                }
                (dose_label(v), v)
            }
        };
        levels.entry(label.clone()).or_insert_with(|| (label, value, Vec::new())).2.push(rows.len());
        rows.push(cells);
    }
    if rows.is_empty() {
        return Err(Error::data("no data rows"));
    }

    fn collect<T: Observation>(
        levels: BTreeMap<String, (String, f64, Vec<usize>)>,
        mut parse: impl FnMut(usize) -> Result<T>,
    ) -> Result<GroupedData<T>> {
        let mut out = Vec::with_capacity(levels.len());
        for (_, (label, value, idx)) in levels {
            let obs = idx.into_iter().map(&mut parse).collect::<Result<Vec<_>>>()?;
            out.push((label, value, obs));
        }
        GroupedData::new(out)
    }

    Ok(match kind {
        EndpointKind::Continuous => Dataset::Continuous(collect(levels, |i| {
            parse_real(&rows[i][1], i + 2, "response")
        })?),
        EndpointKind::Score => Dataset::Score(collect(levels, |i| {
            let cell = &rows[i][1];
            cell.parse::<i64>().map_err(|_| Error::Parse {
                line: i + 2,
                msg: format!("severity score '{cell}' is not a non-negative integer"),
            })
        })?),
        EndpointKind::Incidence => Dataset::Incidence(collect(levels, |i| {
            let time = parse_real(&rows[i][1], i + 2, "time")?;
            let tumor = match rows[i][2].as_str() {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line: i + 2,
                        msg: format!("status must be 0 or 1, got '{other}'"),
                    })
                }
            };
            Ok(AnimalRecord { time, tumor })
        })?),
    })
}

fn parse_real(cell: &str, line: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse { line, msg: format!("non-numeric value '{cell}' in column '{column}'") }),
    }
}

/// Writes a dataset back out in the format [`parse_csv`] reads.
pub fn to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    match ds {
        Dataset::Continuous(d) => {
            out.push_str("dose,response\n");
            for (g, obs) in d.groups().iter().zip(d.observations()) {
                for y in obs {
                    out.push_str(&format!("{},{}\n", g.label, y));
                }
            }
        }
        Dataset::Score(d) => {
            out.push_str("dose,response\n");
            for (g, obs) in d.groups().iter().zip(d.observations()) {
                for y in obs {
                    out.push_str(&format!("{},{}\n", g.label, y));
                }
            }
        }
        Dataset::Incidence(d) => {
            out.push_str("dose,time,status\n");
            for (g, obs) in d.groups().iter().zip(d.observations()) {
                for a in obs {
                    out.push_str(&format!("{},{},{}\n", g.label, a.time, u8::from(a.tumor)));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub dose_value: f64,
    pub n: usize,
    /// Response mean; time-on-study mean for incidence data.
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    /// Crude tumour proportion, incidence data only.
    pub tumor_proportion: Option<f64>,
}

fn describe(g: &DoseGroup, xs: &[f64]) -> GroupSummary {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let sd = if xs.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
    GroupSummary {
        label: g.label.clone(),
        dose_value: g.dose_value,
        n: xs.len(),
        mean,
        sd,
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        tumor_proportion: None,
    }
}

/// Per-group descriptive statistics in dose order.
pub fn summarize(ds: &Dataset) -> Vec<GroupSummary> {
    match ds {
        Dataset::Continuous(d) => {
            d.groups().iter().zip(d.observations()).map(|(g, xs)| describe(g, xs)).collect()
        }
        Dataset::Score(d) => {
            d.groups().iter().zip(d.as_real()).map(|(g, xs)| describe(g, &xs)).collect()
        }
        Dataset::Incidence(d) => d
            .groups()
            .iter()
            .zip(d.observations())
            .map(|(g, animals)| {
                let times: Vec<f64> = animals.iter().map(|a| a.time).collect();
                let tumors = animals.iter().filter(|a| a.tumor).count();
                GroupSummary {
                    tumor_proportion: Some(tumors as f64 / animals.len() as f64),
                    ..describe(g, &times)
                }
            })
            .collect(),
    }
}
