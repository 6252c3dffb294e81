//! Embedding CSV files and their manifest sidecar.
//!
//! CSV header: `id,split,class,feat_0,...,feat_{d-1}` with split `labeled`
//! or `unlabeled`. `class` may be empty for unlabeled rows. The manifest
//! (`<name>.manifest.toml` next to `<name>.csv`) records K, N, M, θ and the
//! counts; without it the loader infers N from the labeled rows and K from
//! all rows.

use std::path::{Path, PathBuf};

use gface_core::data::{Sample, SplitDataset, SplitTag};
use serde::{Deserialize, Serialize};

use crate::fsio::atomic_write;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub k: usize,
    pub num_old: usize,
    pub num_new: usize,
    pub theta: f64,
    pub dim: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    /// Samples per class over both splits (only classes with known truth).
    pub class_counts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn of(ds: &SplitDataset, seed: Option<u64>) -> Self {
        Self {
            k: ds.k(),
            num_old: ds.num_old(),
            num_new: ds.num_new(),
            theta: ds.theta(),
            dim: ds.dim(),
            n_labeled: ds.labeled().count(),
            n_unlabeled: ds.unlabeled().count(),
            class_counts: ds.class_counts(),
            seed,
        }
    }
}

pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.toml")
}

pub fn to_csv(ds: &SplitDataset) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["id".to_string(), "split".into(), "class".into()];
    header.extend((0..ds.dim()).map(|j| format!("feat_{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for s in ds.samples() {
        let mut row = vec![
            s.id.to_string(),
            match s.split {
                SplitTag::Labeled => "labeled".into(),
                SplitTag::Unlabeled => "unlabeled".into(),
            },
            s.true_class.map(|c| c.to_string()).unwrap_or_default(),
        ];
        row.extend(s.features.iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Usage(format!("csv buffer: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Usage(format!("csv: {e}"))
}

/// Writes the CSV and its manifest, both atomically.
pub fn save(ds: &SplitDataset, path: &Path, seed: Option<u64>) -> Result<()> {
    let manifest = toml::to_string(&Manifest::of(ds, seed))
        .map_err(|e| Error::Config(e.to_string()))?;
    atomic_write(path, &to_csv(ds)?)?;
    atomic_write(&manifest_path(path), manifest.as_bytes())
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Loads a dataset, using the manifest sidecar when present.
pub fn load(path: &Path) -> Result<SplitDataset> {
    let mp = manifest_path(path);
    let manifest = if mp.exists() { Some(load_manifest(&mp)?) } else { None };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes, path, manifest.as_ref())
}

pub fn parse(bytes: &[u8], path: &Path, manifest: Option<&Manifest>) -> Result<SplitDataset> {
    let perr = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 4 || cols[..3] != ["id", "split", "class"] {
        return Err(perr(1, "header must start with id,split,class,feat_0".into()));
    }
    for (j, c) in cols[3..].iter().enumerate() {
        if *c != format!("feat_{j}") {
            return Err(perr(1, format!("column {} should be feat_{j}, found {c}", j + 3)));
        }
    }
    let mut samples = Vec::new();
    let mut lines = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    perr(line, format!("ragged row: {len} fields, expected {expected_len}"))
                }
                _ => perr(line, e.to_string()),
            }
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec[0]
            .trim()
            .parse::<u64>()
            .map_err(|_| perr(line, format!("bad id {:?}", &rec[0])))?;
        let split = match rec[1].trim() {
            "labeled" => SplitTag::Labeled,
            "unlabeled" => SplitTag::Unlabeled,
            other => return Err(perr(line, format!("unknown split tag {other:?}"))),
        };
        let class = match rec[2].trim() {
            "" => None,
            c => Some(
                c.parse::<usize>()
                    .map_err(|_| perr(line, format!("bad class {c:?}")))?,
            ),
        };
        if split == SplitTag::Labeled && class.is_none() {
            return Err(perr(line, "labeled row without a class".into()));
        }
        let features = rec
            .iter()
            .skip(3)
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| perr(line, format!("bad feature {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        samples.push(Sample {
            id,
            features,
            true_class: class,
            split,
        });
        lines.push(line);
    }
    if samples.is_empty() {
        return Err(perr(2, "no data rows".into()));
    }

    let (num_old, k, theta) = match manifest {
        Some(m) => (m.num_old, m.k, Some(m.theta)),
        None => {
            let max_labeled = samples
                .iter()
                .filter(|s| s.split == SplitTag::Labeled)
                .filter_map(|s| s.true_class)
                .max()
                .ok_or_else(|| perr(2, "no labeled rows".into()))?;
            let max_any = samples.iter().filter_map(|s| s.true_class).max().unwrap_or(0);
            let n = max_labeled + 1;
            if max_any < n {
                return Err(perr(
                    2,
                    "cannot infer any new class without a manifest; write one next to the file".into(),
                ));
            }
            (n, max_any + 1, None)
        }
    };
    for (s, &line) in samples.iter().zip(&lines) {
        match (s.split, s.true_class) {
            (SplitTag::Labeled, Some(c)) if c >= num_old => {
                return Err(perr(
                    line,
                    format!("labeled row has class {c}, but labeled samples must come from the {num_old} old classes"),
                ));
            }
            (_, Some(c)) if c >= k => {
                return Err(perr(line, format!("class {c} outside [0, {k})")));
            }
            _ => {}
        }
    }
    let ds = SplitDataset::new(samples, num_old, k, theta)?;
    if let Some(m) = manifest {
        if m.dim != ds.dim()
            || m.n_labeled != ds.labeled().count()
            || m.n_unlabeled != ds.unlabeled().count()
        {
            return Err(Error::Config(format!(
                "manifest for {} disagrees with the file (dim or split counts)",
                path.display()
            )));
        }
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gface_core::data::{generate_synthetic, SyntheticSpec};

    fn p() -> &'static Path {
        Path::new("x.csv")
    }

    const FOUR: &str = "id,split,class,feat_0,feat_1\n\
        0,labeled,0,1.0,2.0\n\
        1,labeled,0,1.5,2.5\n\
        2,unlabeled,0,0.5,0.1\n\
        3,unlabeled,1,-1,3\n";

    #[test]
    fn four_rows() {
        let ds = parse(FOUR.as_bytes(), p(), None).unwrap();
        assert_eq!((ds.k(), ds.num_old(), ds.len()), (2, 1, 4));
        assert_eq!(ds.theta(), 0.5);
    }

    #[test]
    fn labeled_new_class_is_rejected_with_line() {
        let m = Manifest {
            k: 2,
            num_old: 1,
            num_new: 1,
            theta: 0.5,
            dim: 2,
            n_labeled: 3,
            n_unlabeled: 1,
            class_counts: vec![],
            seed: None,
        };
        let text = format!("{FOUR}4,labeled,1,0,0\n");
        let e = parse(text.as_bytes(), p(), Some(&m)).unwrap_err().to_string();
        assert!(e.contains("line 6") && e.contains("old classes"), "{e}");
    }

    #[test]
    fn ragged_and_bad_tags() {
        let e = parse(format!("{FOUR}4,unlabeled,1,0\n").as_bytes(), p(), None)
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 6") && e.contains("ragged"), "{e}");
        let e = parse(format!("{FOUR}4,test,1,0,0\n").as_bytes(), p(), None)
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 6") && e.contains("split"), "{e}");
        assert!(parse(b"id,split,klass,feat_0\n", p(), None).is_err());
        assert!(parse(b"id,split,class,feat_0\n", p(), None).is_err());
    }

    #[test]
    fn missing_truth_needs_a_manifest() {
        let text = "id,split,class,feat_0,feat_1\n0,labeled,0,1,2\n1,labeled,1,1,2\n2,unlabeled,,0,0\n";
        assert!(parse(text.as_bytes(), p(), None).is_err());
        let m = Manifest {
            k: 3,
            num_old: 2,
            num_new: 1,
            theta: 0.25,
            dim: 2,
            n_labeled: 2,
            n_unlabeled: 1,
            class_counts: vec![],
            seed: None,
        };
        let ds = parse(text.as_bytes(), p(), Some(&m)).unwrap();
        assert_eq!(ds.theta(), 0.25);
        assert!(!ds.has_full_ground_truth());
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = generate_synthetic(&SyntheticSpec::default(), 4).unwrap();
        let bytes = to_csv(&ds).unwrap();
        let m = Manifest::of(&ds, Some(4));
        let back = parse(&bytes, p(), Some(&m)).unwrap();
        assert_eq!(back, ds);
        assert_eq!(to_csv(&back).unwrap(), bytes);
        assert_eq!(parse(&bytes, p(), None).unwrap(), ds);
    }

    #[test]
    fn save_and_load_with_manifest() {
        let d = tempfile::tempdir().unwrap();
        let path = d.path().join("data.csv");
        let ds = generate_synthetic(&SyntheticSpec::default(), 2).unwrap();
        save(&ds, &path, Some(2)).unwrap();
        let m = load_manifest(&manifest_path(&path)).unwrap();
        assert_eq!((m.k, m.num_old, m.num_new), (7, 4, 3));
        assert_eq!(m.theta, 0.4);
        assert_eq!(load(&path).unwrap(), ds);
    }
}
