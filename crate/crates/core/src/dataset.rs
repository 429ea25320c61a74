//! Labeled embedding datasets: loading, validation and unit normalization.
//!
//! A [`Dataset`] is an `n x d` matrix of 64-bit reals where each row carries an
//! opaque id and a gold profile label in `1..=k` (1 = highest quality).  Rows
//! are stored contiguously in row-major order.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accepted norm deviation for a row of a normalized dataset.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// On-disk layout of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guess the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::InvalidParameter(format!("unknown dataset format '{other}'"))),
        }
    }
}

/// Options controlling how profile labels in a file are interpreted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Remap sparse labels (e.g. `{2, 5, 9}`) onto `1..=k` in sorted order instead
    /// of rejecting them. The original labels are kept on the dataset.
    pub remap_sparse_profiles: bool,
}

/// An immutable labeled embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<String>,
    data: Vec<f64>,
    dim: usize,
    profiles: Vec<u32>,
    k: u32,
    item_tag: Option<String>,
    normalized: bool,
    original_labels: Option<Vec<i64>>,
}

impl Dataset {
    /// Build and validate a dataset. Profiles must cover `1..=k` without gaps.
    pub fn new(
        ids: Vec<String>,
        rows: Vec<Vec<f64>>,
        profiles: Vec<u32>,
        item_tag: Option<String>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty);
        }
        if ids.len() != rows.len() {
            return Err(Error::LengthMismatch {
                left: ids.len(),
                right: rows.len(),
            });
        }
        if profiles.len() != rows.len() {
            return Err(Error::LengthMismatch {
                left: profiles.len(),
                right: rows.len(),
            });
        }
        let dim = rows[0].len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                row: 1,
                expected: 1,
                found: 0,
            });
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    row: i + 1,
                    expected: dim,
                    found: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: i + 1 });
            }
            data.extend_from_slice(row);
        }
        for (i, &p) in profiles.iter().enumerate() {
            if p == 0 {
                return Err(Error::InvalidProfile { row: i + 1, label: 0 });
            }
        }
        let k = check_contiguous(profiles.iter().map(|&p| p as i64))?;
        Ok(Dataset {
            ids,
            data,
            dim,
            profiles,
            k: k as u32,
            item_tag,
            normalized: false,
            original_labels: None,
        })
    }

    pub fn n(&self) -> usize {
        self.profiles.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of gold profiles.
    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn profiles(&self) -> &[u32] {
        &self.profiles
    }

    pub fn item_tag(&self) -> Option<&str> {
        self.item_tag.as_deref()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Labels as they appeared in the source file, indexed by `profile - 1`,
    /// when sparse labels were remapped at load time.
    pub fn original_labels(&self) -> Option<&[i64]> {
        self.original_labels.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Row-major backing storage.
    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Member count of each profile, indexed by `profile - 1`.
    pub fn profile_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &p in &self.profiles {
            sizes[p as usize - 1] += 1;
        }
        sizes
    }

    /// Row indices grouped by profile, indexed by `profile - 1`.
    pub fn members_by_profile(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k()];
        for (i, &p) in self.profiles.iter().enumerate() {
            groups[p as usize - 1].push(i);
        }
        groups
    }

    /// Scale every row to unit Euclidean norm. Zero rows are rejected.
    pub fn unit_normalize(&self) -> Result<Dataset> {
        let mut data = self.data.clone();
        for (i, row) in data.chunks_exact_mut(self.dim).enumerate() {
            let norm = crate::simindex::norm(row);
            if norm == 0.0 {
                return Err(Error::ZeroVector { row: i + 1 });
            }
            // Already-unit rows are left bit-for-bit untouched so that the
            // operation is exactly idempotent.
            if (norm - 1.0).abs() > f64::EPSILON {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(Dataset {
            data,
            normalized: true,
            ..self.clone()
        })
    }

    /// Same rows in a different order; `order[i]` is the source row of output row `i`.
    pub fn permuted(&self, order: &[usize]) -> Result<Dataset> {
        if order.len() != self.n() {
            return Err(Error::LengthMismatch {
                left: order.len(),
                right: self.n(),
            });
        }
        let mut seen = vec![false; self.n()];
        let mut data = Vec::with_capacity(self.data.len());
        let mut ids = Vec::with_capacity(self.n());
        let mut profiles = Vec::with_capacity(self.n());
        for &src in order {
            if src >= self.n() || std::mem::replace(&mut seen[src], true) {
                return Err(Error::InvalidParameter(
                    "row order is not a permutation".into(),
                ));
            }
            data.extend_from_slice(self.row(src));
            ids.push(self.ids[src].clone());
            profiles.push(self.profiles[src]);
        }
        Ok(Dataset {
            ids,
            data,
            profiles,
            ..self.clone()
        })
    }

    pub(crate) fn mark_normalized(mut self) -> Result<Dataset> {
        for (i, row) in self.rows().enumerate() {
            let norm = crate::simindex::norm(row);
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::Parse {
                    row: i + 1,
                    message: format!("row is not unit-norm ({norm})"),
                });
            }
        }
        self.normalized = true;
        Ok(self)
    }

    /// Write one JSON object per row.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for i in 0..self.n() {
            let record = RecordRef {
                id: &self.ids[i],
                vector: self.row(i),
                profile: self.profiles[i],
                item: self.item_tag.as_deref(),
            };
            let line = serde_json::to_string(&record)
                .map_err(|e| Error::Serialization(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| Error::io("<writer>", e))?;
        }
        Ok(())
    }

    /// Write `id,profile,v0,...` rows with a header line.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string(), "profile".to_string()];
        header.extend((0..self.dim).map(|j| format!("v{j}")));
        writer
            .write_record(&header)
            .map_err(|e| Error::Serialization(e.to_string()))?;
        for i in 0..self.n() {
            let mut record = vec![self.ids[i].clone(), self.profiles[i].to_string()];
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            writer
                .write_record(&record)
                .map_err(|e| Error::Serialization(e.to_string()))?;
        }
        writer
            .flush()
            .map_err(|e| Error::io("<writer>", e))?;
        Ok(())
    }

    pub fn save(&self, path: &Path, format: Format) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let out = BufWriter::new(file);
        match format {
            Format::Jsonl => self.write_jsonl(out),
            Format::Csv => self.write_csv(out),
        }
    }
}

/// Maps each profile label to an ordinal quality rank (1 = best).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileOrdering {
    quality_rank: Vec<u32>,
}

impl ProfileOrdering {
    /// Profile `i` has rank `i`.
    pub fn identity(k: usize) -> Self {
        ProfileOrdering {
            quality_rank: (1..=k as u32).collect(),
        }
    }

    /// `ranks[p - 1]` is the quality rank of profile `p`; must be a permutation of `1..=k`.
    pub fn from_ranks(ranks: Vec<u32>) -> Result<Self> {
        let mut sorted = ranks.clone();
        sorted.sort_unstable();
        if sorted.iter().copied().ne(1..=ranks.len() as u32) {
            return Err(Error::InvalidParameter(format!(
                "quality ranks {ranks:?} are not a permutation of 1..={}",
                ranks.len()
            )));
        }
        Ok(ProfileOrdering {
            quality_rank: ranks,
        })
    }

    pub fn k(&self) -> usize {
        self.quality_rank.len()
    }

    pub fn rank(&self, profile: u32) -> u32 {
        self.quality_rank[profile as usize - 1]
    }

    /// Profile labels from best to worst quality.
    pub fn by_quality(&self) -> Vec<u32> {
        let mut profiles: Vec<u32> = (1..=self.k() as u32).collect();
        profiles.sort_by_key(|&p| self.rank(p));
        profiles
    }
}

#[derive(Deserialize)]
struct Record {
    id: String,
    vector: Vec<f64>,
    profile: i64,
    #[serde(default)]
    item: Option<String>,
}

#[derive(Serialize)]
struct RecordRef<'a> {
    id: &'a str,
    vector: &'a [f64],
    profile: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    item: Option<&'a str>,
}

/// Load a dataset with strict profile validation.
pub fn load_dataset(path: &Path, format: Format) -> Result<Dataset> {
    load_dataset_with(path, format, LoadOptions::default())
}

pub fn load_dataset_with(path: &Path, format: Format, options: LoadOptions) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let raw = match format {
        Format::Jsonl => read_jsonl(reader)?,
        Format::Csv => read_csv(reader)?,
    };
    raw.into_dataset(options)
}

/// Parse JSONL from any reader.
pub fn parse_jsonl<R: Read>(reader: R, options: LoadOptions) -> Result<Dataset> {
    read_jsonl(BufReader::new(reader))?.into_dataset(options)
}

/// Parse CSV from any reader.
pub fn parse_csv<R: Read>(reader: R, options: LoadOptions) -> Result<Dataset> {
    read_csv(reader)?.into_dataset(options)
}

struct RawRows {
    ids: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<i64>,
    item: Option<String>,
}

impl RawRows {
    fn with_capacity(n: usize) -> Self {
        RawRows {
            ids: Vec::with_capacity(n),
            rows: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
            item: None,
        }
    }

    fn push(&mut self, id: String, vector: Vec<f64>, label: i64) -> Result<()> {
        let row = self.rows.len() + 1;
        if let Some(first) = self.rows.first() {
            if first.len() != vector.len() {
                return Err(Error::DimensionMismatch {
                    row,
                    expected: first.len(),
                    found: vector.len(),
                });
            }
        } else if vector.is_empty() {
            return Err(Error::DimensionMismatch {
                row,
                expected: 1,
                found: 0,
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row });
        }
        self.ids.push(id);
        self.rows.push(vector);
        self.labels.push(label);
        Ok(())
    }

    fn into_dataset(self, options: LoadOptions) -> Result<Dataset> {
        if self.rows.is_empty() {
            return Err(Error::Empty);
        }
        let (profiles, original) = if options.remap_sparse_profiles {
            let distinct: Vec<i64> = self.labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let profiles = self
                .labels
                .iter()
                .map(|l| distinct.binary_search(l).map(|i| i as u32 + 1).unwrap_or(0))
                .collect();
            let identity = distinct.iter().copied().eq(1..=distinct.len() as i64);
            (profiles, (!identity).then_some(distinct))
        } else {
            let mut profiles = Vec::with_capacity(self.labels.len());
            for (i, &l) in self.labels.iter().enumerate() {
                if l < 1 || l > u32::MAX as i64 {
                    return Err(Error::InvalidProfile { row: i + 1, label: l });
                }
                profiles.push(l as u32);
            }
            (profiles, None)
        };
        let mut ds = Dataset::new(self.ids, self.rows, profiles, self.item)?;
        ds.original_labels = original;
        Ok(ds)
    }
}

fn read_jsonl<R: BufRead>(reader: R) -> Result<RawRows> {
    let mut raw = RawRows::with_capacity(256);
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            row: lineno + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let row = raw.rows.len() + 1;
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        match (&raw.item, record.item) {
            (None, Some(tag)) if row == 1 => raw.item = Some(tag),
            (Some(tag), Some(other)) if *tag != other => {
                return Err(Error::Parse {
                    row,
                    message: format!("item tag '{other}' differs from '{tag}'"),
                })
            }
            _ => {}
        }
        raw.push(record.id, record.vector, record.profile)?;
    }
    Ok(raw)
}

fn read_csv<R: Read>(reader: R) -> Result<RawRows> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::Headers)
        .from_reader(reader);
    let header = csv_reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "profile" {
        return Err(Error::Parse {
            row: 0,
            message: "header must be id,profile,v0,v1,...".into(),
        });
    }
    for (j, name) in header.iter().skip(2).enumerate() {
        if name != format!("v{j}") {
            return Err(Error::Parse {
                row: 0,
                message: format!("expected column 'v{j}', found '{name}'"),
            });
        }
    }
    let mut raw = RawRows::with_capacity(256);
    for (i, record) in csv_reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(Error::Parse {
                row,
                message: "missing profile column".into(),
            });
        }
        let label: i64 = record[1].trim().parse().map_err(|_| Error::Parse {
            row,
            message: format!("profile '{}' is not an integer", &record[1]),
        })?;
        let vector = record
            .iter()
            .skip(2)
            .map(|v| {
                v.trim().parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    message: format!("'{v}' is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        raw.push(record[0].to_string(), vector, label)?;
    }
    Ok(raw)
}

/// Returns `k` when the labels are exactly `1..=k`.
fn check_contiguous(labels: impl Iterator<Item = i64>) -> Result<i64> {
    let present: BTreeSet<i64> = labels.collect();
    let max = *present.iter().next_back().ok_or(Error::Empty)?;
    let missing: Vec<i64> = (1..=max).filter(|l| !present.contains(l)).collect();
    if !missing.is_empty() {
        return Err(Error::NonContiguousProfiles { missing, max });
    }
    Ok(max)
}
