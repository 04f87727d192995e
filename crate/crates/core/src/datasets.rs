//! Bundled example datasets.
//!
//! `wes`, `tamh` and `epi` are embedded. The tumour-incidence set `bronch`
//! is not redistributed; it is read from a CSV (`dose,time,status`) found at
//! `$NOAEL_BRONCH_CSV` or `data/bronch.csv`, and its SHA-256 is checked
//! against a `<file>.sha256` sidecar when one exists.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{parse_csv, ContinuousDataset, Dataset, EndpointKind, ParseOptions, ScoreDataset};
use crate::{Error, Result};

pub const BRONCH_ENV: &str = "NOAEL_BRONCH_CSV";
pub const BRONCH_DEFAULT_PATH: &str = "data/bronch.csv";

/// Body-weight gain (g) of F344 rats over 14 days under aconiazide, mg/kg.
const WES: [(&str, &[f64]); 5] = [
    ("0", &[5.7, 10.2, 13.9, 10.3, 1.3, 12.0, 14.0, 15.1, 8.8, 12.7]),
    ("100", &[8.3, 12.3, 6.1, 10.1, 6.3, 12.0, 13.0, 13.4, 11.9, 9.9]),
    ("200", &[9.5, 8.1, 7.0, 7.8, 9.3, 12.2, 6.7, 10.6, 6.6, 7.0]),
    ("500", &[2.9, 5.6, -3.5, 9.5, 5.7, 4.9, 3.8, 5.6, 5.6, 4.2]),
    ("750", &[-8.6, 0.1, -3.9, -4.0, -7.3, -2.2, -5.2, -1.0, -8.1, -4.8]),
];

/// Relative kidney weight in a feeding study, dose groups coded 0-3.
///
/// Grouping follows the factor coding of the source listing (19/20/18/18);
/// its integer dose column disagrees on one animal.
const TAMH: [(&str, &[f64]); 4] = [
    (
        "0",
        &[
            6.593, 7.48, 6.93, 5.662, 6.789, 7.268, 6.647, 6.443, 6.713, 6.057, 6.253, 7.045, 6.552, 5.668,
            6.354, 6.511, 7.111, 6.015, 7.062,
        ],
    ),
    (
        "1",
        &[
            7.347, 7.733, 7.396, 8.173, 6.938, 6.988, 6.621, 7.508, 6.657, 7.787, 6.537, 7.369, 6.623, 6.456,
            6.507, 6.154, 5.934, 6.909, 7.252, 7.006,
        ],
    ),
    (
        "2",
        &[
            8.706, 7.257, 7.743, 7.026, 8.561, 7.674, 7.45, 8.188, 8.15, 7.619, 8.722, 7.387, 6.798, 7.617,
            8.071, 7.02, 7.821, 7.063,
        ],
    ),
    (
        "3",
        &[
            9.569, 9.362, 10.911, 9.961, 9.497, 9.911, 8.544, 10.404, 10.421, 10.065, 9.67, 8.194, 8.989, 7.347,
            7.26, 9.017, 8.847, 8.723,
        ],
    ),
];

/// Epithelial lesion severity scores in F344 rats after formaldehyde, ppm.
const EPI: [(&str, &[i64]); 4] = [
    ("0", &[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 2, 3, 3, 3, 3, 3, 3]),
    ("2", &[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2, 2, 2, 2, 2, 2, 3]),
    ("6", &[0, 0, 0, 0, 0, 1, 2, 2, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3, 3]),
    ("15", &[3, 3, 3, 4, 4]),
];

pub fn wes() -> ContinuousDataset {
    ContinuousDataset::new(
        WES.iter().map(|(l, ys)| (l.to_string(), l.parse().unwrap(), ys.to_vec())).collect(),
    )
    .expect("bundled dataset is valid")
}

pub fn tamh() -> ContinuousDataset {
    ContinuousDataset::new(
        TAMH.iter().map(|(l, ys)| (l.to_string(), l.parse().unwrap(), ys.to_vec())).collect(),
    )
    .expect("bundled dataset is valid")
}

pub fn epi() -> ScoreDataset {
    ScoreDataset::new(EPI.iter().map(|(l, ys)| (l.to_string(), l.parse().unwrap(), ys.to_vec())).collect())
        .expect("bundled dataset is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub endpoint: EndpointKind,
    pub n: usize,
    pub groups: Vec<String>,
    pub description: String,
    /// Where the data came from; for external files, the path and digest.
    pub provenance: String,
}

/// A dataset with a hex SHA-256 of its source file when it was read from disk.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub source_sha256: Option<String>,
}

pub fn bronch_path() -> PathBuf {
    std::env::var_os(BRONCH_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(BRONCH_DEFAULT_PATH))
}

/// Reads a CSV, returning the dataset and the file digest; a `.sha256` sidecar must match if present.
pub fn load_checked(path: &Path, kind: EndpointKind, opts: &ParseOptions) -> Result<Loaded> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".sha256");
    if let Ok(expected) = std::fs::read_to_string(&sidecar) {
        let expected = expected.split_whitespace().next().unwrap_or("").to_ascii_lowercase();
        if expected != digest {
            return Err(Error::data(format!(
                "checksum mismatch for {}: expected {expected}, found {digest}",
                path.display()
            )));
        }
    }
    let dataset = parse_csv(bytes.as_slice(), kind, opts)?;
    Ok(Loaded { dataset, source_sha256: Some(digest) })
}

pub fn names() -> &'static [&'static str] {
    &["wes", "tamh", "epi", "bronch"]
}

pub fn load(name: &str) -> Result<Loaded> {
    let embedded = |dataset| Ok(Loaded { dataset, source_sha256: None });
    match name.to_ascii_lowercase().as_str() {
        "wes" => embedded(Dataset::Continuous(wes())),
        "tamh" => embedded(Dataset::Continuous(tamh())),
        "epi" => embedded(Dataset::Score(epi())),
        "bronch" => {
            let path = bronch_path();
            if !path.exists() {
                return Err(Error::data(format!(
                    "bronch is not bundled; place it at {} or set {BRONCH_ENV}",
                    path.display()
                )));
            }
            load_checked(&path, EndpointKind::Incidence, &ParseOptions::default())
        }
        other => Err(Error::data(format!("unknown dataset '{other}' (known: {})", names().join(", ")))),
    }
}

/// The bundled datasets plus `bronch` when its file is present.
pub fn list() -> Vec<DatasetInfo> {
    let info = |name: &str, ds: &Dataset, description: &str, provenance: String| DatasetInfo {
        name: name.to_string(),
        endpoint: ds.kind(),
        n: ds.total_n(),
        groups: ds.groups().iter().map(|g| g.label.clone()).collect(),
        description: description.to_string(),
        provenance,
    };
    let mut out = vec![
        info(
            "wes",
            &Dataset::Continuous(wes()),
            "14-day body-weight gain (g), F344 rats, aconiazide 0/100/200/500/750 mg/kg",
            "embedded".into(),
        ),
        info(
            "tamh",
            &Dataset::Continuous(tamh()),
            "relative kidney weight, feeding study with a crop-protection compound, dose groups 0-3",
            "embedded; grouped by the listing's factor coding".into(),
        ),
        info(
            "epi",
            &Dataset::Score(epi()),
            "epithelial lesion severity scores, F344 rats, formaldehyde 0/2/6/15 ppm",
            "embedded".into(),
        ),
    ];
    if let Ok(loaded) = load("bronch") {
        out.push(info(
            "bronch",
            &loaded.dataset,
            "alveolar/bronchiolar tumours, female B6C3F1 mice, vinylcyclohexene diepoxide 0/25/50/100 mg/ml",
            format!(
                "{} (sha256 {})",
                bronch_path().display(),
                loaded.source_sha256.unwrap_or_default()
            ),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::summarize;

    #[test]
    fn bundled_shapes() {
        assert_eq!(wes().group_sizes(), [10; 5]);
        assert_eq!(tamh().group_sizes(), [19, 20, 18, 18]);
        assert_eq!(epi().group_sizes(), [29, 25, 27, 5]);
        assert_eq!(epi().labels(), ["0", "2", "6", "15"]);
        assert_eq!(wes().total_n(), 50);
        assert_eq!(tamh().total_n(), 75);
        assert_eq!(epi().total_n(), 86);
    }

    #[test]
    fn wes_control_mean_by_hand() {
        // 5.7 + 10.2 + 13.9 + 10.3 + 1.3 + 12 + 14 + 15.1 + 8.8 + 12.7 = 104.0
        let s = summarize(&Dataset::Continuous(wes()));
        assert!((s[0].mean - 10.4).abs() < 1e-12);
        assert_eq!(s[0].n, 10);
        let e = summarize(&Dataset::Score(epi()));
        assert_eq!(e[3].n, 5);
    }

    #[test]
    fn unknown_name() {
        assert!(load("nope").is_err());
    }

    #[test]
    fn checksum_sidecar_is_enforced() {
        let dir = std::env::temp_dir().join(format!("noael-ck-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("inc.csv");
        let csv = "dose,time,status\n0,100,0\n0,90,1\n25,100,1\n25,60,0\n";
        std::fs::write(&path, csv).unwrap();
        let ok = load_checked(&path, EndpointKind::Incidence, &ParseOptions::default()).unwrap();
        let digest = ok.source_sha256.unwrap();
        std::fs::write(dir.join("inc.csv.sha256"), format!("{digest}  inc.csv\n")).unwrap();
        assert!(load_checked(&path, EndpointKind::Incidence, &ParseOptions::default()).is_ok());
        std::fs::write(dir.join("inc.csv.sha256"), "00ff\n").unwrap();
        let err = load_checked(&path, EndpointKind::Incidence, &ParseOptions::default()).unwrap_err();
        assert!(err.to_string().contains("checksum mismatch"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
