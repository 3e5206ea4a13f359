//! Embedding datasets, label files and the labeled / unlabeled / test split.
//!
//! Two on-disk embedding formats are supported:
//!
//! * binary (`.sepb`): magic `SEPB`, version `u32` LE = 1, `n: u64` LE,
//!   `d: u64` LE, `n` ids as `u64` LE, then `n * d` features as `f32` LE in
//!   row-major order. This is the lossless canonical format.
//! * CSV: header `id,f0,f1,...,f{d-1}`, one row per example.
//!
//! Labels are a two-column CSV with header `id,label`.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const BINARY_MAGIC: &[u8; 4] = b"SEPB";
pub const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    Binary,
    Csv,
}

impl EmbeddingFormat {
    /// `.csv` is CSV, anything else is treated as the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EmbeddingFormat::Csv,
            _ => EmbeddingFormat::Binary,
        }
    }
}

/// An `n x d` matrix of finite embedding coordinates with one unique id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    ids: Vec<u64>,
    features: Vec<f32>,
    dim: usize,
}

impl EmbeddingDataset {
    /// Validates and wraps row-major `features`.
    pub fn new(ids: Vec<u64>, features: Vec<f32>, dim: usize) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 {
            return Err(Error::param("embedding dimension must be at least 1"));
        }
        if features.len() != ids.len() * dim {
            return Err(Error::LengthMismatch {
                expected: ids.len() * dim,
                found: features.len(),
            });
        }
        let mut seen = HashMap::with_capacity(ids.len());
        for (row, &id) in ids.iter().enumerate() {
            if seen.insert(id, row).is_some() {
                return Err(Error::DuplicateId { row, id });
            }
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self { ids, features, dim })
    }

    /// Dataset with ids `0..n` assigned in row order.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        let mut features = Vec::with_capacity(rows.len() * dim);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::RowLength {
                    row,
                    expected: dim,
                    found: r.len(),
                });
            }
            features.extend_from_slice(r);
        }
        Self::new((0..rows.len() as u64).collect(), features, dim)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.features.chunks_exact(self.dim)
    }

    /// Map from id to row index.
    pub fn index_of(&self) -> HashMap<u64, usize> {
        self.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
    }

    /// Row indices of `ids`, in the order given.
    pub fn rows_for_ids(&self, ids: &[u64]) -> Result<Vec<usize>> {
        let index = self.index_of();
        ids.iter()
            .enumerate()
            .map(|(row, id)| {
                index
                    .get(id)
                    .copied()
                    .ok_or(Error::UnknownId { row, id: *id })
            })
            .collect()
    }

    /// New dataset made of the given rows, keeping their ids.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &r in rows {
            ids.push(self.ids[r]);
            features.extend_from_slice(self.row(r));
        }
        Self::new(ids, features, self.dim)
    }

    pub fn subset(&self, ids: &[u64]) -> Result<Self> {
        self.select_rows(&self.rows_for_ids(ids)?)
    }

    /// Copy with every row scaled to unit euclidean norm (zero rows stay zero).
    pub fn l2_normalized(&self) -> Self {
        let mut features = self.features.clone();
        for row in features.chunks_exact_mut(self.dim) {
            let norm = row.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v = (f64::from(*v) / norm) as f32;
                }
            }
        }
        Self {
            ids: self.ids.clone(),
            features,
            dim: self.dim,
        }
    }

    /// Per-coordinate variance pooled over all coordinates, as used by the
    /// "scale" RBF width heuristic.
    pub fn feature_variance(&self) -> f64 {
        let n = self.features.len() as f64;
        let mean = self.features.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        self.features
            .iter()
            .map(|&v| (f64::from(v) - mean).powi(2))
            .sum::<f64>()
            / n
    }
}

/// Where a label vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Oracle,
    Kmeans,
    External,
}

/// Integer class labels aligned with the rows of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAssignment {
    labels: Vec<usize>,
    num_classes: usize,
    provenance: Provenance,
}

impl LabelAssignment {
    pub fn new(labels: Vec<usize>, num_classes: usize, provenance: Provenance) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::param(format!(
                "class count must be at least 2, got {num_classes}"
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Self {
            labels,
            num_classes,
            provenance,
        })
    }

    /// Class count inferred as `1 + max label`, with a floor of two.
    pub fn infer(labels: Vec<usize>, provenance: Provenance) -> Result<Self> {
        let k = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
        Self::new(labels, k, provenance)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Number of classes with at least one member.
    pub fn populated_classes(&self) -> usize {
        self.histogram().iter().filter(|&&c| c > 0).count()
    }

    /// Labels of the given rows; the class count and provenance are kept.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            num_classes: self.num_classes,
            provenance: self.provenance,
        }
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.labels.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: self.labels.len(),
            });
        }
        Ok(())
    }
}

/// Disjoint labeled / unlabeled / test id sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub labeled_ids: Vec<u64>,
    pub unlabeled_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
    pub per_class_labeled: usize,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub fn load_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingDataset> {
    let bytes = read_file(path)?;
    match format {
        EmbeddingFormat::Binary => decode_binary(&bytes),
        EmbeddingFormat::Csv => decode_csv(&bytes),
    }
}

pub fn write_embeddings(
    dataset: &EmbeddingDataset,
    path: &Path,
    format: EmbeddingFormat,
) -> Result<()> {
    let bytes = match format {
        EmbeddingFormat::Binary => encode_binary(dataset),
        EmbeddingFormat::Csv => encode_csv(dataset),
    };
    write_bytes(path, &bytes)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    File::create(path)
        .and_then(|f| {
            let mut w = BufWriter::new(f);
            w.write_all(bytes)?;
            w.flush()
        })
        .map_err(|e| Error::io(path, e))
}

pub fn encode_binary(dataset: &EmbeddingDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + dataset.len() * 8 + dataset.features.len() * 4);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&BINARY_VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u64).to_le_bytes());
    out.extend_from_slice(&(dataset.dim as u64).to_le_bytes());
    for id in &dataset.ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for v in &dataset.features {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<EmbeddingDataset> {
    const HEADER: usize = 4 + 4 + 8 + 8;
    if bytes.len() < HEADER {
        return Err(Error::MalformedHeader(format!(
            "file is {} bytes, header needs {HEADER}",
            bytes.len()
        )));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(Error::MalformedHeader("bad magic, expected SEPB".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != BINARY_VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported version {version}"
        )));
    }
    let n = usize::try_from(u64_at(8)).map_err(|_| Error::MalformedHeader("n too large".into()))?;
    let d = usize::try_from(u64_at(16)).map_err(|_| Error::MalformedHeader("d too large".into()))?;
    if n == 0 || d == 0 {
        return Err(Error::MalformedHeader(format!("n={n}, d={d}")));
    }
    let expected = n
        .checked_mul(8)
        .and_then(|ids| n.checked_mul(d)?.checked_mul(4)?.checked_add(ids))
        .and_then(|body| body.checked_add(HEADER))
        .ok_or_else(|| Error::MalformedHeader("size overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::MalformedHeader(format!(
            "header declares n={n}, d={d} ({expected} bytes) but file has {} bytes",
            bytes.len()
        )));
    }
    let ids: Vec<u64> = (0..n).map(|i| u64_at(HEADER + 8 * i)).collect();
    let base = HEADER + 8 * n;
    let features: Vec<f32> = bytes[base..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingDataset::new(ids, features, d)
}

fn encode_csv(dataset: &EmbeddingDataset) -> Vec<u8> {
    let mut out = String::from("id");
    for j in 0..dataset.dim {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (id, row) in dataset.ids.iter().zip(dataset.rows()) {
        out.push_str(&id.to_string());
        for v in row {
            // Shortest round-trip representation: at most 9 significant digits for f32.
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out.into_bytes()
}

fn csv_reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes)
}

fn decode_csv(bytes: &[u8]) -> Result<EmbeddingDataset> {
    let mut reader = csv_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?
        .clone();
    if header.get(0) != Some("id") || header.len() < 2 {
        return Err(Error::MalformedHeader(
            "expected `id,f0,f1,...`".to_string(),
        ));
    }
    for (j, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::MalformedHeader(format!(
                "column {} is `{name}`, expected `f{j}`",
                j + 1
            )));
        }
    }
    let dim = header.len() - 1;
    let mut ids = Vec::new();
    let mut features = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row,
            what: "record",
            detail: e.to_string(),
        })?;
        if record.len() != dim + 1 {
            return Err(Error::RowLength {
                row,
                expected: dim + 1,
                found: record.len(),
            });
        }
        let id = record[0].parse::<u64>().map_err(|e| Error::Parse {
            row,
            what: "id",
            detail: e.to_string(),
        })?;
        ids.push(id);
        for (col, field) in record.iter().skip(1).enumerate() {
            let v = field.parse::<f32>().map_err(|e| Error::Parse {
                row,
                what: "feature",
                detail: format!("`{field}`: {e}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            features.push(v);
        }
    }
    EmbeddingDataset::new(ids, features, dim)
}

/// Reads an `id,label` file and aligns it with `ids` (the dataset's row order).
///
/// Provenance is `external` unless `as_oracle` is set. The class count is
/// `1 + max label`; classes without members are allowed here.
pub fn load_labels(path: &Path, ids: &[u64], as_oracle: bool) -> Result<LabelAssignment> {
    let bytes = read_file(path)?;
    parse_labels(&bytes, ids, as_oracle)
}

pub fn parse_labels(bytes: &[u8], ids: &[u64], as_oracle: bool) -> Result<LabelAssignment> {
    let mut reader = csv_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.len() != 2 || &header[0] != "id" || &header[1] != "label" {
        return Err(Error::MalformedHeader("expected `id,label`".into()));
    }
    let index: HashMap<u64, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut labels: Vec<Option<usize>> = vec![None; ids.len()];
    let mut rows = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row,
            what: "record",
            detail: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(Error::RowLength {
                row,
                expected: 2,
                found: record.len(),
            });
        }
        let id = record[0].parse::<u64>().map_err(|e| Error::Parse {
            row,
            what: "id",
            detail: e.to_string(),
        })?;
        let value = record[1].parse::<i64>().map_err(|e| Error::Parse {
            row,
            what: "label",
            detail: e.to_string(),
        })?;
        if value < 0 {
            return Err(Error::NegativeLabel { row, value });
        }
        let slot = *index.get(&id).ok_or(Error::UnknownId { row, id })?;
        if labels[slot].replace(value as usize).is_some() {
            return Err(Error::DuplicateId { row, id });
        }
        rows += 1;
    }
    if rows != ids.len() {
        return Err(Error::LengthMismatch {
            expected: ids.len(),
            found: rows,
        });
    }
    let labels = labels
        .into_iter()
        .zip(ids)
        .map(|(l, &id)| l.ok_or(Error::MissingId(id)))
        .collect::<Result<Vec<_>>>()?;
    let provenance = if as_oracle {
        Provenance::Oracle
    } else {
        Provenance::External
    };
    LabelAssignment::infer(labels, provenance)
}

pub fn write_labels(path: &Path, ids: &[u64], labels: &LabelAssignment) -> Result<()> {
    labels.check_len(ids.len())?;
    let mut out = String::from("id,label\n");
    for (id, l) in ids.iter().zip(labels.labels()) {
        out.push_str(&format!("{id},{l}\n"));
    }
    write_bytes(path, out.as_bytes())
}

/// Reads a one-column `id` CSV (as written for kept sets).
pub fn load_id_list(path: &Path) -> Result<Vec<u64>> {
    let bytes = read_file(path)?;
    let mut reader = csv_reader(&bytes);
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.get(0) != Some("id") {
        return Err(Error::MalformedHeader("expected `id` column".into()));
    }
    let mut seen = BTreeSet::new();
    let mut ids = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row,
            what: "record",
            detail: e.to_string(),
        })?;
        let id = record[0].parse::<u64>().map_err(|e| Error::Parse {
            row,
            what: "id",
            detail: e.to_string(),
        })?;
        if !seen.insert(id) {
            return Err(Error::DuplicateId { row, id });
        }
        ids.push(id);
    }
    Ok(ids)
}

pub fn write_id_list(path: &Path, ids: &[u64]) -> Result<()> {
    let mut out = String::from("id\n");
    for id in ids {
        out.push_str(&format!("{id}\n"));
    }
    write_bytes(path, out.as_bytes())
}

/// Class-balanced labeled pool, stratified test split, and the remainder as
/// the unlabeled pool. Each returned id set is sorted ascending.
pub fn make_split(
    dataset: &EmbeddingDataset,
    labels: &LabelAssignment,
    per_class_labeled: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitSpec> {
    labels.check_len(dataset.len())?;
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); labels.num_classes()];
    for (row, &l) in labels.labels().iter().enumerate() {
        members[l].push(row);
    }
    for (class, rows) in members.iter().enumerate() {
        if rows.len() < per_class_labeled + 1 {
            return Err(Error::ClassTooSmall {
                class,
                available: rows.len(),
                required: per_class_labeled + 1,
            });
        }
    }

    let mut rng = rng::stream(seed, "split");
    let (mut labeled, mut unlabeled, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for rows in &mut members {
        rows.shuffle(&mut rng);
        let (lab, rest) = rows.split_at(per_class_labeled);
        let n_test = ((rest.len() as f64) * test_fraction).round() as usize;
        let (tst, unl) = rest.split_at(n_test.min(rest.len()));
        labeled.extend(lab.iter().map(|&r| dataset.ids()[r]));
        test.extend(tst.iter().map(|&r| dataset.ids()[r]));
        unlabeled.extend(unl.iter().map(|&r| dataset.ids()[r]));
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec {
        labeled_ids: labeled,
        unlabeled_ids: unlabeled,
        test_ids: test,
        per_class_labeled,
    })
}
