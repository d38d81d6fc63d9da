//! File formats: features (CSV or binary), similarity matrices, constraint
//! lists, label files, k-NN edge exports, and the stats report.
//!
//! Binary feature layout, little-endian throughout:
//!
//! ```text
//! "CPAC" | version: u32 | n: u64 | d: u64 | n * d f32 values, row-major
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knn::KnnGraph;
use crate::potentials::{ConstraintSet, FeatureMatrix, SimilarityMatrix};

pub const BINARY_MAGIC: &[u8; 4] = b"CPAC";
pub const BINARY_VERSION: u32 = 1;
const BINARY_HEADER: usize = 4 + 4 + 8 + 8;
pub const STATS_SCHEMA_VERSION: u32 = 1;
/// Truth-label sentinel for unlabeled (distractor) points.
pub const UNLABELED: i64 = -1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FeatureFormat {
    /// `.bin` selects binary, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => FeatureFormat::Binary,
            _ => FeatureFormat::Csv,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

/// Parses comma-separated decimal rows of equal length.
pub fn parse_csv_rows(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = line.trim();
        if line.is_empty() {
            return Err(parse_err(path, line_no, "empty line"));
        }
        let row = line
            .split(',')
            .map(|field| {
                let field = field.trim();
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, line_no, format!("invalid number '{field}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected {} fields, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 0, "empty dataset"));
    }
    Ok(rows)
}

pub fn read_features(path: &Path, format: FeatureFormat) -> Result<FeatureMatrix> {
    match format {
        FeatureFormat::Csv => {
            let rows = parse_csv_rows(&read_text(path)?, path)?;
            FeatureMatrix::from_rows(&rows)
        }
        FeatureFormat::Binary => {
            let bytes = fs::read(path).map_err(io_err(path))?;
            decode_binary(&bytes, path)
        }
    }
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<FeatureMatrix> {
    let fail = |offset: usize, message: String| Error::Binary {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < BINARY_HEADER {
        return Err(fail(
            bytes.len(),
            format!("truncated header ({} bytes)", bytes.len()),
        ));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(fail(0, "bad magic, expected \"CPAC\"".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != BINARY_VERSION {
        return Err(fail(4, format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let d = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    if n == 0 {
        return Err(fail(8, "empty dataset (n = 0)".into()));
    }
    if d == 0 {
        return Err(fail(16, "zero dimension".into()));
    }
    let count = n
        .checked_mul(d)
        .and_then(|c| usize::try_from(c).ok())
        .filter(|c| c.checked_mul(4).is_some())
        .ok_or_else(|| fail(8, format!("{n} x {d} values do not fit in memory")))?;
    let want = BINARY_HEADER + count * 4;
    if bytes.len() < want {
        return Err(fail(
            bytes.len(),
            format!("truncated payload: expected {want} bytes"),
        ));
    }
    if bytes.len() > want {
        return Err(fail(want, format!("{} trailing bytes", bytes.len() - want)));
    }
    let data: Vec<f64> = bytes[BINARY_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(fail(BINARY_HEADER + 4 * pos, "non-finite value".into()));
    }
    FeatureMatrix::new(n as usize, d as usize, data)
}

/// Values are stored as `f32`.
pub fn encode_binary(features: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(BINARY_HEADER + 4 * features.as_slice().len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(features.n() as u64).to_le_bytes());
    out.extend_from_slice(&(features.dim() as u64).to_le_bytes());
    for &v in features.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn csv_rows<'a, I>(rows: I) -> String
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = String::new();
    for row in rows {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            // shortest representation that parses back to the same value
            write!(out, "{v:?}").expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn write_features(path: &Path, features: &FeatureMatrix, format: FeatureFormat) -> Result<()> {
    match format {
        FeatureFormat::Csv => {
            write_text(path, &csv_rows((0..features.n()).map(|i| features.row(i))))
        }
        FeatureFormat::Binary => fs::write(path, encode_binary(features)).map_err(io_err(path)),
    }
}

/// Square CSV matrix of similarities.
pub fn read_similarity(path: &Path) -> Result<SimilarityMatrix> {
    let rows = parse_csv_rows(&read_text(path)?, path)?;
    SimilarityMatrix::from_rows(&rows).map_err(|e| match e {
        Error::InvalidParameter(message) => parse_err(path, 0, message),
        other => other,
    })
}

pub fn write_similarity(path: &Path, sim: &SimilarityMatrix) -> Result<()> {
    write_text(path, &csv_rows((0..sim.n()).map(|i| sim.row(i))))
}

/// Lines of `i j must` or `i j cannot`; `#` starts a comment.
pub fn parse_constraints(text: &str, path: &Path) -> Result<ConstraintSet> {
    let mut set = ConstraintSet::new();
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let [a, b, kind] = fields.as_slice() else {
            return Err(parse_err(path, line_no, "expected 'i j must|cannot'"));
        };
        let index = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, line_no, format!("invalid point index '{s}'")))
        };
        let (i, j) = (index(a)?, index(b)?);
        let added = match *kind {
            "must" => set.add_must_link(i, j),
            "cannot" => set.add_cannot_link(i, j),
            other => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("unknown constraint kind '{other}'"),
                ))
            }
        };
        added.map_err(|e| parse_err(path, line_no, e.to_string()))?;
    }
    Ok(set)
}

pub fn read_constraints(path: &Path) -> Result<ConstraintSet> {
    parse_constraints(&read_text(path)?, path)
}

pub fn write_constraints(path: &Path, set: &ConstraintSet) -> Result<()> {
    let mut out = String::new();
    for k in set.must_links() {
        writeln!(out, "{} {} must", k.i, k.j).expect("write to string");
    }
    for k in set.cannot_links() {
        writeln!(out, "{} {} cannot", k.i, k.j).expect("write to string");
    }
    write_text(path, &out)
}

/// Parses an `index,label` CSV with header. Rows may come in any order but
/// must cover `0..n` exactly once.
pub fn parse_label_rows(text: &str, path: &Path) -> Result<Vec<i64>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim().replace(' ', "") == "index,label" => {}
        _ => return Err(parse_err(path, 1, "expected header 'index,label'")),
    }
    let mut slots: Vec<Option<i64>> = Vec::new();
    for (no, line) in lines {
        let line_no = no + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((idx, label)) = line.split_once(',') else {
            return Err(parse_err(path, line_no, "expected 'index,label'"));
        };
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid index '{}'", idx.trim())))?;
        let label: i64 = label
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid label '{}'", label.trim())))?;
        if idx >= slots.len() {
            slots.resize(idx + 1, None);
        }
        if slots[idx].replace(label).is_some() {
            return Err(parse_err(path, line_no, format!("duplicate index {idx}")));
        }
    }
    if slots.is_empty() {
        return Err(parse_err(path, 1, "no labels"));
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| parse_err(path, 0, format!("missing index {i}"))))
        .collect()
}

/// Predicted labels; negative values are rejected.
pub fn read_pred_labels(path: &Path) -> Result<Vec<usize>> {
    parse_label_rows(&read_text(path)?, path)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            usize::try_from(l).map_err(|_| parse_err(path, i + 2, format!("negative label {l}")))
        })
        .collect()
}

/// Truth labels; [`UNLABELED`] maps to `None`.
pub fn read_truth_labels(path: &Path) -> Result<Vec<Option<usize>>> {
    parse_label_rows(&read_text(path)?, path)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| match l {
            UNLABELED => Ok(None),
            l if l >= 0 => Ok(Some(l as usize)),
            l => Err(parse_err(path, i + 2, format!("invalid truth label {l}"))),
        })
        .collect()
}

pub fn format_labels(labels: &[usize]) -> String {
    let mut out = String::with_capacity(12 * labels.len() + 12);
    out.push_str("index,label\n");
    for (i, l) in labels.iter().enumerate() {
        writeln!(out, "{i},{l}").expect("write to string");
    }
    out
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    write_text(path, &format_labels(labels))
}

/// One `i j similarity` line per canonical edge.
pub fn write_graph<F>(path: &Path, graph: &KnnGraph, sim: F) -> Result<()>
where
    F: Fn(usize, usize) -> f64,
{
    let mut out = String::new();
    for e in graph.edges() {
        writeln!(out, "{} {} {:?}", e.i, e.j, sim(e.i, e.j)).expect("write to string");
    }
    write_text(path, &out)
}

/// Flat key-value run summary, serialized as TOML.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub command: String,
    pub num_points: usize,
    pub num_clusters: usize,
    pub num_nonsingleton: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inconsistent_triplets: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub update_list_sizes: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_flips: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inconsistent_after_merge: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_load_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_graph_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_potentials_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_inference_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_labeled: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_truth_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairwise_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bcubed_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bcubed_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bcubed_f: Option<f64>,
}

impl StatsReport {
    pub fn new(command: &str) -> Self {
        Self {
            schema_version: STATS_SCHEMA_VERSION,
            command: command.to_string(),
            ..Self::default()
        }
    }

    pub fn set_metrics(&mut self, report: &crate::metrics::MetricReport) {
        self.pairwise_precision = Some(report.pairwise.precision);
        self.pairwise_recall = Some(report.pairwise.recall);
        self.pairwise_f = Some(report.pairwise.f_score);
        self.bcubed_precision = Some(report.bcubed.precision);
        self.bcubed_recall = Some(report.bcubed.recall);
        self.bcubed_f = Some(report.bcubed.f_score);
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Stats(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let report: Self = toml::from_str(text).map_err(|e| Error::Stats(e.to_string()))?;
        if report.schema_version != STATS_SCHEMA_VERSION {
            return Err(Error::Stats(format!(
                "unsupported schema version {}",
                report.schema_version
            )));
        }
        Ok(report)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_toml()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?)
    }
}

/// Output paths emitted by the toy generator for a prefix.
pub fn toy_paths(prefix: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let with = |suffix: &str| {
        let mut name = prefix.as_os_str().to_owned();
        name.push(suffix);
        PathBuf::from(name)
    };
    (
        with("_features.csv"),
        with("_truth.csv"),
        with("_similarity.csv"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("input")
    }

    #[test]
    fn csv_features_parse() {
        let rows = parse_csv_rows("1.0,0.0\n0.0,1.0\n", p()).unwrap();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        assert_eq!((f.n(), f.dim()), (2, 2));
        assert_eq!(f.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn ragged_csv_names_line() {
        let err = parse_csv_rows("1,2\n3,4\n5\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().contains(":3:"));
        let err = parse_csv_rows("1,2\n3,x\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_csv_rows("", p()).is_err());
        assert!(parse_csv_rows("1,2\n\n3,4\n", p()).is_err());
    }

    #[test]
    fn binary_rejects_bad_input() {
        let f = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.5]]).unwrap();
        let good = encode_binary(&f);
        assert_eq!(decode_binary(&good, p()).unwrap(), f);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            decode_binary(&bad_magic, p()),
            Err(Error::Binary { offset: 0, .. })
        ));

        let truncated = &good[..good.len() - 2];
        assert!(matches!(
            decode_binary(truncated, p()),
            Err(Error::Binary { .. })
        ));
        assert!(decode_binary(&good[..10], p()).is_err());

        let mut empty = good[..BINARY_HEADER].to_vec();
        empty[8..16].copy_from_slice(&0u64.to_le_bytes());
        let err = decode_binary(&empty, p()).unwrap_err();
        assert!(err.to_string().contains("empty dataset"), "{err}");
    }

    #[test]
    fn constraint_lines() {
        let set = parse_constraints("# header\n0 1 must\n2 0 cannot # trailing\n\n", p()).unwrap();
        assert_eq!(
            set.must_links().iter().next().map(|k| (k.i, k.j)),
            Some((0, 1))
        );
        assert_eq!(
            set.cannot_links().iter().next().map(|k| (k.i, k.j)),
            Some((0, 2))
        );

        let err = parse_constraints("0 1 must\n1 0 cannot\n", p()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(parse_constraints("0 1 maybe\n", p()).is_err());
        assert!(parse_constraints("0 0 must\n", p()).is_err());
        assert!(parse_constraints("0 must\n", p()).is_err());
    }

    #[test]
    fn label_files() {
        let rows = parse_label_rows("index,label\n1,-1\n0,4\n", p()).unwrap();
        assert_eq!(rows, vec![4, -1]);
        assert!(parse_label_rows("0,1\n", p()).is_err());
        assert!(parse_label_rows("index,label\n0,1\n0,2\n", p()).is_err());
        assert!(parse_label_rows("index,label\n1,1\n", p()).is_err());
        assert_eq!(format_labels(&[0, 0, 1]), "index,label\n0,0\n1,0\n2,1\n");
    }

    #[test]
    fn stats_round_trip() {
        let mut s = StatsReport::new("cluster");
        s.num_points = 10;
        s.num_clusters = 3;
        s.num_nonsingleton = 2;
        s.iterations = Some(4);
        s.converged = Some(true);
        s.inconsistent_triplets = Some(vec![12, 3, 0]);
        s.merge_flips = Some(0);
        s.pairwise_f = Some(0.123_456_789_012_345_67);
        s.time_inference_s = Some(1.5e-3);
        let text = s.to_toml().unwrap();
        assert!(text.contains("schema_version = 1"));
        assert_eq!(StatsReport::from_toml(&text).unwrap(), s);
        assert!(StatsReport::from_toml("schema_version = 9\ncommand = \"x\"\nnum_points = 1\nnum_clusters = 1\nnum_nonsingleton = 0\n").is_err());
    }

    #[test]
    fn toy_path_suffixes() {
        let (f, t, s) = toy_paths(Path::new("/tmp/run/blobs"));
        assert_eq!(f, Path::new("/tmp/run/blobs_features.csv"));
        assert_eq!(t, Path::new("/tmp/run/blobs_truth.csv"));
        assert_eq!(s, Path::new("/tmp/run/blobs_similarity.csv"));
    }
}
