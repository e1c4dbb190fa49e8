//! Record types, file loaders and the bin specification.
//!
//! Counts and predictions are read from CSV (with header) or JSON-lines.
//! Point annotations for GAME are JSON-lines only.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Ground-truth people count for one image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub image_id: String,
    pub count: u64,
}

impl CountRecord {
    pub fn new(image_id: impl Into<String>, count: u64) -> Self {
        Self {
            image_id: image_id.into(),
            count,
        }
    }
}

/// Ground truth and predicted count for one image. Predictions summed from a
/// density map are usually fractional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub gt_count: u64,
    pub pred_count: f64,
}

impl PredictionRecord {
    pub fn new(image_id: impl Into<String>, gt_count: u64, pred_count: f64) -> Self {
        Self {
            image_id: image_id.into(),
            gt_count,
            pred_count,
        }
    }

    pub fn abs_error(&self) -> f64 {
        (self.gt_count as f64 - self.pred_count).abs()
    }
}

/// Head locations for one image, used by GAME.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointAnnotatedRecord {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub gt_points: Vec<[f64; 2]>,
    pub pred_points: Vec<[f64; 2]>,
}

impl PointAnnotatedRecord {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[0] < self.width && p[1] >= 0.0 && p[1] < self.height
    }

    /// First point (ground truth, then predicted) lying outside `[0,width)x[0,height)`.
    pub fn first_out_of_bounds(&self) -> Option<[f64; 2]> {
        self.gt_points
            .iter()
            .chain(&self.pred_points)
            .copied()
            .find(|&p| !self.contains(p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// Guess from the file extension; anything that isn't `.jsonl`/`.ndjson`/`.json` is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if ["jsonl", "ndjson", "json"].contains(&e.to_ascii_lowercase().as_str()) => {
                Format::Jsonl
            }
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "jsonl" | "ndjson" => Ok(Format::Jsonl),
            other => Err(DataError::UnknownFormat(other.to_string())),
        }
    }
}

fn parse_err(line: u64, message: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        message: message.into(),
    }
}

fn csv_reader<R: Read>(source: R, expected: &[&str]) -> Result<csv::Reader<R>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(DataError::Header {
            expected: expected.join(","),
        });
    }
    Ok(rdr)
}

fn parse_count(field: &str, line: u64) -> Result<u64, DataError> {
    let v: i64 = field
        .parse()
        .map_err(|_| parse_err(line, format!("invalid integer count `{field}`")))?;
    if v < 0 {
        return Err(DataError::NegativeCount { line });
    }
    Ok(v as u64)
}

fn parse_prediction(field: &str, line: u64) -> Result<f64, DataError> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(line, format!("invalid predicted count `{field}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, "predicted count must be finite"));
    }
    if v < 0.0 {
        return Err(DataError::NegativePrediction { line });
    }
    Ok(v)
}

fn json_count(v: &serde_json::Value, key: &str, line: u64) -> Result<u64, DataError> {
    match v.get(key) {
        Some(serde_json::Value::Number(n)) => {
            if let Some(u) = n.as_u64() {
                Ok(u)
            } else if n.as_i64().is_some() {
                Err(DataError::NegativeCount { line })
            } else {
                Err(parse_err(line, format!("`{key}` must be an integer")))
            }
        }
        Some(_) => Err(parse_err(line, format!("`{key}` must be an integer"))),
        None => Err(parse_err(line, format!("missing key `{key}`"))),
    }
}

fn json_id(v: &serde_json::Value, line: u64) -> Result<String, DataError> {
    match v.get("image_id") {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
        Some(_) => Err(parse_err(line, "`image_id` must be a string")),
        None => Err(parse_err(line, "missing key `image_id`")),
    }
}

/// Iterate non-blank JSON-lines as `(line_number, value)`.
fn json_lines<R: Read>(
    source: R,
) -> impl Iterator<Item = Result<(u64, serde_json::Value), DataError>> {
    BufReader::new(source)
        .lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line_no = i as u64 + 1;
            match line {
                Err(e) => Some(Err(DataError::Io(e))),
                Ok(l) if l.trim().is_empty() => None,
                Ok(l) => Some(
                    serde_json::from_str(&l)
                        .map(|v| (line_no, v))
                        .map_err(|e| parse_err(line_no, e.to_string())),
                ),
            }
        })
}

struct IdGuard(HashSet<String>);

impl IdGuard {
    fn new() -> Self {
        Self(HashSet::new())
    }

    fn check(&mut self, id: &str, line: u64) -> Result<(), DataError> {
        if id.is_empty() {
            return Err(DataError::EmptyId { line });
        }
        if !self.0.insert(id.to_string()) {
            return Err(DataError::DuplicateId {
                id: id.to_string(),
                line,
            });
        }
        Ok(())
    }
}

/// Load ground-truth counts. CSV header is `image_id,count`; JSON-lines objects
/// carry the same keys.
pub fn load_counts<R: Read>(source: R, format: Format) -> Result<Vec<CountRecord>, DataError> {
    let mut ids = IdGuard::new();
    let mut out = Vec::new();
    match format {
        Format::Csv => {
            let mut rdr = csv_reader(source, &["image_id", "count"])?;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    parse_err(line, e.to_string())
                })?;
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                if rec.len() != 2 {
                    return Err(parse_err(
                        line,
                        format!("expected 2 fields, got {}", rec.len()),
                    ));
                }
                let count = parse_count(&rec[1], line)?;
                ids.check(&rec[0], line)?;
                out.push(CountRecord::new(&rec[0], count));
            }
        }
        Format::Jsonl => {
            for item in json_lines(source) {
                let (line, v) = item?;
                let id = json_id(&v, line)?;
                let count = json_count(&v, "count", line)?;
                ids.check(&id, line)?;
                out.push(CountRecord::new(id, count));
            }
        }
    }
    Ok(out)
}

/// Load predictions. CSV header is `image_id,gt_count,pred_count`.
pub fn load_predictions<R: Read>(
    source: R,
    format: Format,
) -> Result<Vec<PredictionRecord>, DataError> {
    let mut ids = IdGuard::new();
    let mut out = Vec::new();
    match format {
        Format::Csv => {
            let mut rdr = csv_reader(source, &["image_id", "gt_count", "pred_count"])?;
            for rec in rdr.records() {
                let rec = rec.map_err(|e| {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    parse_err(line, e.to_string())
                })?;
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                if rec.len() != 3 {
                    return Err(parse_err(
                        line,
                        format!("expected 3 fields, got {}", rec.len()),
                    ));
                }
                let gt = parse_count(&rec[1], line)?;
                let pred = parse_prediction(&rec[2], line)?;
                ids.check(&rec[0], line)?;
                out.push(PredictionRecord::new(&rec[0], gt, pred));
            }
        }
        Format::Jsonl => {
            for item in json_lines(source) {
                let (line, v) = item?;
                let id = json_id(&v, line)?;
                let gt = json_count(&v, "gt_count", line)?;
                let pred = match v.get("pred_count").and_then(|p| p.as_f64()) {
                    Some(p) if !p.is_finite() => {
                        return Err(parse_err(line, "predicted count must be finite"))
                    }
                    Some(p) if p < 0.0 => return Err(DataError::NegativePrediction { line }),
                    Some(p) => p,
                    None => return Err(parse_err(line, "missing or non-numeric `pred_count`")),
                };
                ids.check(&id, line)?;
                out.push(PredictionRecord::new(id, gt, pred));
            }
        }
    }
    Ok(out)
}

/// Load point annotations from JSON-lines. Every point must lie inside
/// `[0,width) x [0,height)`.
pub fn load_points<R: Read>(source: R) -> Result<Vec<PointAnnotatedRecord>, DataError> {
    let mut ids = IdGuard::new();
    let mut out = Vec::new();
    for item in json_lines(source) {
        let (line, v) = item?;
        let rec: PointAnnotatedRecord =
            serde_json::from_value(v).map_err(|e| parse_err(line, e.to_string()))?;
        ids.check(&rec.image_id, line)?;
        if !(rec.width > 0.0 && rec.height > 0.0 && rec.width.is_finite() && rec.height.is_finite())
        {
            return Err(DataError::InvalidDimensions {
                id: rec.image_id,
                line,
            });
        }
        if let Some([x, y]) = rec.first_out_of_bounds() {
            return Err(DataError::PointOutOfBounds {
                id: rec.image_id,
                x,
                y,
                width: rec.width,
                height: rec.height,
                line,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Count-frequency table: distinct counts in increasing order with their
/// (positive) frequencies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountHistogram {
    entries: Vec<(u64, u64)>,
    total: u64,
}

impl CountHistogram {
    pub fn from_counts<I: IntoIterator<Item = u64>>(counts: I) -> Result<Self, DataError> {
        let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
        for c in counts {
            *freq.entry(c).or_default() += 1;
        }
        if freq.is_empty() {
            return Err(DataError::EmptyInput);
        }
        Ok(Self::from_sorted(freq.into_iter().collect()))
    }

    pub fn from_records(records: &[CountRecord]) -> Result<Self, DataError> {
        Self::from_counts(records.iter().map(|r| r.count))
    }

    /// Build from explicit `(count, frequency)` pairs, which must be strictly
    /// increasing in count with frequencies of at least one.
    pub fn from_entries(entries: Vec<(u64, u64)>) -> Result<Self, DataError> {
        if entries.is_empty() {
            return Err(DataError::EmptyInput);
        }
        if entries.iter().any(|&(_, f)| f == 0) {
            return Err(DataError::InvalidBins(
                "histogram frequencies must be >= 1".into(),
            ));
        }
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(DataError::InvalidBins(
                "histogram counts must be strictly increasing".into(),
            ));
        }
        Ok(Self::from_sorted(entries))
    }

    pub(crate) fn from_sorted(entries: Vec<(u64, u64)>) -> Self {
        let total = entries.iter().map(|&(_, f)| f).sum();
        Self { entries, total }
    }

    pub fn entries(&self) -> &[(u64, u64)] {
        &self.entries
    }

    /// Total number of samples, N.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Largest observed count, C.
    pub fn max_count(&self) -> u64 {
        self.entries.last().map(|&(c, _)| c).unwrap_or(0)
    }

    /// Number of distinct counts, m.
    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.entries.iter().map(|&(c, _)| c).collect()
    }

    pub fn frequencies(&self) -> Vec<u64> {
        self.entries.iter().map(|&(_, f)| f).collect()
    }

    pub fn frequency(&self, count: u64) -> u64 {
        self.entries
            .binary_search_by_key(&count, |&(c, _)| c)
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    /// Expand back into the sorted multiset of counts.
    pub fn expand(&self) -> Vec<u64> {
        self.entries
            .iter()
            .flat_map(|&(c, f)| std::iter::repeat_n(c, f as usize))
            .collect()
    }
}

/// Inclusive integer interval `[lo, hi]` of the count range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u64; 2]", into = "[u64; 2]")]
pub struct Bin {
    pub lo: u64,
    pub hi: u64,
}

impl Bin {
    pub fn new(lo: u64, hi: u64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, count: u64) -> bool {
        self.lo <= count && count <= self.hi
    }

    /// Real-valued membership with inclusive endpoints.
    pub fn contains_real(&self, value: f64) -> bool {
        self.lo as f64 <= value && value <= self.hi as f64
    }

    pub fn width(&self) -> u64 {
        self.hi - self.lo + 1
    }
}

impl From<[u64; 2]> for Bin {
    fn from(v: [u64; 2]) -> Self {
        Bin::new(v[0], v[1])
    }
}

impl From<Bin> for [u64; 2] {
    fn from(b: Bin) -> Self {
        [b.lo, b.hi]
    }
}

/// Provenance attached to a fitted [`BinSpec`]. Unknown keys are kept in `extra`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BinMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct RawBinSpec {
    edges: Vec<Bin>,
    gamma: f64,
    alpha: usize,
    beta: u64,
    #[serde(default)]
    meta: BinMeta,
}

/// Contiguous, exhaustive partition of `[0, C]` plus the prior parameters it
/// was fitted with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBinSpec")]
pub struct BinSpec {
    edges: Vec<Bin>,
    pub gamma: f64,
    pub alpha: usize,
    pub beta: u64,
    pub meta: BinMeta,
}

impl TryFrom<RawBinSpec> for BinSpec {
    type Error = DataError;

    fn try_from(raw: RawBinSpec) -> Result<Self, Self::Error> {
        let mut spec = BinSpec::new(raw.edges, raw.gamma, raw.alpha, raw.beta)?;
        spec.meta = raw.meta;
        Ok(spec)
    }
}

impl BinSpec {
    pub fn new(edges: Vec<Bin>, gamma: f64, alpha: usize, beta: u64) -> Result<Self, DataError> {
        validate_edges(&edges)?;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(DataError::InvalidBins(format!(
                "gamma must lie in (0,1), got {gamma}"
            )));
        }
        if alpha == 0 {
            return Err(DataError::InvalidBins("alpha must be >= 1".into()));
        }
        if edges.len() > alpha {
            return Err(DataError::InvalidBins(format!(
                "{} bins exceed alpha = {alpha}",
                edges.len()
            )));
        }
        Ok(Self {
            edges,
            gamma,
            alpha,
            beta,
            meta: BinMeta::default(),
        })
    }

    /// Build from bare edges, using `alpha = N_b` and a neutral gamma. Handy for
    /// evaluation-only bins that were not fitted here.
    pub fn from_edges(edges: Vec<Bin>) -> Result<Self, DataError> {
        let n = edges.len().max(1);
        Self::new(edges, 0.5, n, 0)
    }

    pub fn edges(&self) -> &[Bin] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Upper edge of the last bin, the fitted C.
    pub fn max_count(&self) -> u64 {
        self.edges[self.edges.len() - 1].hi
    }

    pub fn bin(&self, index: usize) -> Bin {
        self.edges[index]
    }

    /// Index of the bin containing `count`. Counts above the last edge clamp
    /// into the last bin.
    pub fn assign_bin(&self, count: u64) -> usize {
        self.edges.partition_point(|b| b.lo <= count) - 1
    }

    /// Like [`assign_bin`](Self::assign_bin) but `None` above the last edge.
    pub fn assign_bin_strict(&self, count: u64) -> Option<usize> {
        (count <= self.max_count()).then(|| self.assign_bin(count))
    }

    pub fn from_json(s: &str) -> Result<Self, DataError> {
        serde_json::from_str(s).map_err(|e| parse_err(e.line() as u64, e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("bin spec serializes")
    }
}

fn validate_edges(edges: &[Bin]) -> Result<(), DataError> {
    let first = edges
        .first()
        .ok_or_else(|| DataError::InvalidBins("at least one bin is required".into()))?;
    if first.lo != 0 {
        return Err(DataError::InvalidBins(format!(
            "first bin must start at 0, got {}",
            first.lo
        )));
    }
    for (k, b) in edges.iter().enumerate() {
        if b.lo > b.hi {
            return Err(DataError::InvalidBins(format!(
                "bin {k} has lo > hi ({} > {})",
                b.lo, b.hi
            )));
        }
        if k > 0 && b.lo != edges[k - 1].hi + 1 {
            return Err(DataError::InvalidBins(format!(
                "bin {k} starts at {} but previous bin ends at {}",
                b.lo,
                edges[k - 1].hi
            )));
        }
    }
    Ok(())
}
