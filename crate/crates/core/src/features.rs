//! Per-slot feature extraction and labelled datasets.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scenario::SlotReport;

/// Number of features per example.
pub const FEATURE_DIM: usize = 5;

/// CSV header shared by every dataset file.
pub const CSV_HEADER: [&str; 7] = ["slot_id", "mean_db", "var_db", "median_db", "uq_db", "lq_db", "label"];

/// Five-number summary of one slot's energy reports (all in dB, variance in dB²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub mean: f64,
    pub variance: f64,
    pub median: f64,
    pub upper_quartile: f64,
    pub lower_quartile: f64,
}

impl FeatureVector {
    /// Features in CSV column order: mean, variance, median, upper, lower quartile.
    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        [self.mean, self.variance, self.median, self.upper_quartile, self.lower_quartile]
    }

    pub fn from_array(a: [f64; FEATURE_DIM]) -> Self {
        Self { mean: a[0], variance: a[1], median: a[2], upper_quartile: a[3], lower_quartile: a[4] }
    }
}

/// Class of an example: `+1` for genuine PU slots, `-1` for emulation attacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Pu,
    Attack,
}

impl Label {
    pub fn as_i8(self) -> i8 {
        match self {
            Label::Pu => 1,
            Label::Attack => -1,
        }
    }

    pub fn from_i64(v: i64) -> Option<Self> {
        match v {
            1 => Some(Label::Pu),
            -1 => Some(Label::Attack),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub slot_id: u64,
    pub features: FeatureVector,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Self {
        Self { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        FEATURE_DIM
    }

    pub fn labels(&self) -> Vec<Label> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn count(&self, label: Label) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    /// Appends the rows of `other` after the rows of `self`.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut examples = self.examples.clone();
        examples.extend_from_slice(&other.examples);
        Dataset { examples }
    }

    /// Row-major `len x 5` matrix of features.
    pub fn feature_matrix(&self) -> Array2<f64> {
        rows_to_matrix(self.examples.iter().map(|e| e.features))
    }

    /// Feature matrix of the rows selected by `indices`.
    pub fn select_features(&self, indices: &[usize]) -> Array2<f64> {
        rows_to_matrix(indices.iter().map(|&i| self.examples[i].features))
    }

    /// Errors unless the dataset has at least one row; used before fitting.
    pub fn require_non_empty(&self) -> Result<&Self> {
        if self.is_empty() {
            Err(Error::Empty("dataset has no examples"))
        } else {
            Ok(self)
        }
    }
}

fn rows_to_matrix(rows: impl ExactSizeIterator<Item = FeatureVector>) -> Array2<f64> {
    let n = rows.len();
    let data: Vec<f64> = rows.flat_map(|f| f.to_array()).collect();
    Array2::from_shape_vec((n, FEATURE_DIM), data).expect("row-major feature buffer")
}

/// Quantile with linear interpolation between order statistics at position
/// `(len - 1) * q` of the ascending sort.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile of an empty list"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param("q", format!("must lie in [0, 1], got {q}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

/// [`quantile`] on an already ascending, non-empty slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Mean, population variance, median and quartiles of a slot's reports.
pub fn summarize_slot(report: &SlotReport) -> Result<FeatureVector> {
    summarize(&report.energies_db)
}

pub fn summarize(values: &[f64]) -> Result<FeatureVector> {
    let n = values.len();
    if n < 2 {
        return Err(Error::param("energies_db", format!("need at least 2 reports per slot, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(FeatureVector {
        mean,
        variance,
        median: quantile_sorted(&sorted, 0.5),
        upper_quartile: quantile_sorted(&sorted, 0.75),
        lower_quartile: quantile_sorted(&sorted, 0.25),
    })
}

/// One example per report, in slot order, all carrying `label`.
pub fn build_dataset(reports: &[SlotReport], label: Label) -> Result<Dataset> {
    let first = reports.first().ok_or(Error::Empty("no slot reports"))?;
    let n = first.energies_db.len();
    let examples = reports
        .iter()
        .map(|r| {
            if r.energies_db.len() != n {
                return Err(Error::LengthMismatch { left: n, right: r.energies_db.len() });
            }
            Ok(Example { slot_id: r.slot_id, features: summarize_slot(r)?, label })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { examples })
}

/// Writes `ds` as CSV with the [`CSV_HEADER`] columns.
///
/// Floats use Rust's shortest round-trip formatting, so reading the file back
/// reproduces every value bit for bit.
pub fn write_csv_to<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for e in &ds.examples {
        let f = e.features;
        w.write_record([
            e.slot_id.to_string(),
            f.mean.to_string(),
            f.variance.to_string(),
            f.median.to_string(),
            f.upper_quartile.to_string(),
            f.lower_quartile.to_string(),
            e.label.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv_to(ds, std::io::BufWriter::new(file))
}

/// Parses a dataset; `source` names the input in error messages.
pub fn read_csv_from<R: Read>(reader: R, source: &str) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse { path: source.to_string(), line, message };

    let mut records = r.records();
    match records.next() {
        None => return Err(parse_err(1, "missing header row".into())),
        Some(rec) => {
            let rec = rec?;
            if rec.iter().ne(CSV_HEADER.iter().copied()) {
                return Err(parse_err(1, format!("expected header `{}`", CSV_HEADER.join(","))));
            }
        }
    }

    let mut examples = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != CSV_HEADER.len() {
            return Err(parse_err(line, format!("expected {} columns, found {}", CSV_HEADER.len(), rec.len())));
        }
        let slot_id: u64 =
            rec[0].trim().parse().map_err(|_| parse_err(line, format!("invalid slot_id `{}`", &rec[0])))?;
        let mut values = [0.0; FEATURE_DIM];
        for (j, v) in values.iter_mut().enumerate() {
            let field = rec[j + 1].trim();
            *v = field
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| parse_err(line, format!("invalid {} `{field}`", CSV_HEADER[j + 1])))?;
        }
        let label = rec[6]
            .trim()
            .parse::<i64>()
            .ok()
            .and_then(Label::from_i64)
            .ok_or_else(|| parse_err(line, format!("label must be 1 or -1, got `{}`", &rec[6])))?;
        examples.push(Example { slot_id, features: FeatureVector::from_array(values), label });
    }
    Ok(Dataset { examples })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(std::io::BufReader::new(file), &path.display().to_string())
}
