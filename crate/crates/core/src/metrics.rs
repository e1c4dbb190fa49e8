//! Evaluation measures for skewed count data.
//!
//! Errors are reported per bin of the ground-truth count, pooled across bins
//! with sample-size weights, globally, as a thresholded percentage error ratio
//! (TPER) curve and as grid average mean absolute error (GAME).
//!
//! Standard deviations default to the population convention (divide by `n`),
//! which is what makes the pooled variance `Σ nᵢσᵢ² / Σ nᵢ` consistent.
//!
//! TPER thresholds are multipliers of the ground truth, not percentages:
//! `TPER_θ` is the fraction of images with `|y - ŷ| >= θ·y`, and the default
//! grid runs 0, 5, ..., 100.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Bin, BinSpec, PointAnnotatedRecord, PredictionRecord};
use crate::error::MetricsError;
use crate::numeric::{compensated_sum, mean, std_dev};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdConvention {
    /// Divide by `n`.
    #[default]
    Population,
    /// Divide by `n - 1`.
    Sample,
}

impl StdConvention {
    fn ddof(self) -> usize {
        match self {
            Self::Population => 0,
            Self::Sample => 1,
        }
    }
}

/// Absolute-error statistics of one bin. Empty bins keep `mu`/`sigma` as `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin_index: usize,
    pub lo: u64,
    pub hi: u64,
    pub n: usize,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    /// Σ|y - ŷ| over the bin.
    pub abs_error_sum: f64,
}

impl BinStats {
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledStats {
    pub mu_pool: f64,
    pub sigma_pool: f64,
    pub total_n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalStats {
    pub n: usize,
    pub mae: f64,
    pub mse: f64,
    /// Standard deviation of the absolute error.
    pub std: f64,
}

fn abs_errors(preds: &[PredictionRecord]) -> Vec<f64> {
    preds.iter().map(PredictionRecord::abs_error).collect()
}

/// Group absolute errors by the bin of the ground-truth count (clamping counts
/// above the last edge) and summarize each bin.
pub fn per_bin_stats(
    preds: &[PredictionRecord],
    bins: &BinSpec,
    convention: StdConvention,
) -> Vec<BinStats> {
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); bins.len()];
    for p in preds {
        groups[bins.assign_bin(p.gt_count)].push(p.abs_error());
    }
    groups
        .iter()
        .enumerate()
        .map(|(k, errs)| {
            let Bin { lo, hi } = bins.bin(k);
            let (mu, sigma) = if errs.is_empty() {
                (None, None)
            } else {
                let mu = mean(errs);
                (Some(mu), Some(std_dev(errs, mu, convention.ddof())))
            };
            BinStats {
                bin_index: k,
                lo,
                hi,
                n: errs.len(),
                mu,
                sigma,
                abs_error_sum: compensated_sum(errs.iter().copied()),
            }
        })
        .collect()
}

/// Sample-size weighted mean and variance over the non-empty bins.
pub fn pooled_stats(stats: &[BinStats]) -> Result<PooledStats, MetricsError> {
    let filled: Vec<(f64, f64, f64)> = stats
        .iter()
        .filter_map(|s| match (s.mu, s.sigma) {
            (Some(mu), Some(sigma)) if s.n > 0 => Some((s.n as f64, mu, sigma)),
            _ => None,
        })
        .collect();
    if filled.is_empty() {
        return Err(MetricsError::AllBinsEmpty);
    }
    let total: f64 = filled.iter().map(|f| f.0).sum();
    let mu_pool = compensated_sum(filled.iter().map(|&(n, mu, _)| n * mu)) / total;
    let var_pool = compensated_sum(filled.iter().map(|&(n, _, s)| n * s * s)) / total;
    Ok(PooledStats {
        mu_pool,
        sigma_pool: var_pool.sqrt(),
        total_n: total as usize,
    })
}

pub fn global_stats(
    preds: &[PredictionRecord],
    convention: StdConvention,
) -> Result<GlobalStats, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptyPredictions);
    }
    let errs = abs_errors(preds);
    let mae = mean(&errs);
    let sq: Vec<f64> = errs.iter().map(|e| e * e).collect();
    Ok(GlobalStats {
        n: errs.len(),
        mae,
        mse: mean(&sq),
        std: std_dev(&errs, mae, convention.ddof()),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TperOptions {
    /// Leave images with zero error out of the numerator. Without this a
    /// zero-count image counts at every threshold.
    pub skip_exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TperCurve {
    pub thetas: Vec<f64>,
    pub values: Vec<f64>,
    /// Trapezoidal area divided by the threshold span, in `[0, 1]`.
    pub auc_normalized: f64,
    pub auc_raw: f64,
    /// Number of test images.
    pub t: usize,
}

/// Thresholds 0, 5, ..., 100.
pub fn default_thetas() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 5.0).collect()
}

pub fn tper_curve(
    preds: &[PredictionRecord],
    thetas: &[f64],
    opts: TperOptions,
) -> Result<TperCurve, MetricsError> {
    if thetas.is_empty() {
        return Err(MetricsError::EmptyThetas);
    }
    if thetas.iter().any(|t| !t.is_finite()) || thetas.windows(2).any(|w| w[0] > w[1]) {
        return Err(MetricsError::UnsortedThetas);
    }
    if preds.is_empty() {
        return Err(MetricsError::EmptyPredictions);
    }
    let t = preds.len();
    let values: Vec<f64> = thetas
        .iter()
        .map(|&theta| {
            let hits = preds
                .iter()
                .filter(|p| {
                    let err = p.abs_error();
                    !(opts.skip_exact && err == 0.0) && err >= theta * p.gt_count as f64
                })
                .count();
            hits as f64 / t as f64
        })
        .collect();
    let auc_raw = compensated_sum(
        thetas
            .windows(2)
            .zip(values.windows(2))
            .map(|(th, v)| (th[1] - th[0]) * (v[0] + v[1]) / 2.0),
    );
    let span = thetas[thetas.len() - 1] - thetas[0];
    let auc_normalized = if span > 0.0 {
        auc_raw / span
    } else {
        values[0]
    };
    Ok(TperCurve {
        thetas: thetas.to_vec(),
        values,
        auc_normalized,
        auc_raw,
        t,
    })
}

/// Plot-ready CSV with header `theta,tper`.
pub fn write_tper_csv<W: Write>(out: W, curve: &TperCurve) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "tper"])?;
    for (theta, v) in curve.thetas.iter().zip(&curve.values) {
        w.write_record([theta.to_string(), v.to_string()])?;
    }
    w.flush()
}

pub const MAX_GAME_LEVEL: u32 = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    #[serde(rename = "L")]
    pub level: u32,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_image: Option<Vec<u64>>,
}

fn cell_index(coord: f64, extent: f64, cells: usize) -> usize {
    (((coord / extent) * cells as f64).floor() as usize).min(cells - 1)
}

/// Σ over the `2^L x 2^L` grid of |gt − pred| point counts for one image.
/// Cells are half-open, so a point on an interior grid line belongs to the
/// higher-index cell. Each axis is split into equal spans of its own length.
pub fn game_image(rec: &PointAnnotatedRecord, level: u32) -> Result<u64, MetricsError> {
    if level > MAX_GAME_LEVEL {
        return Err(MetricsError::LevelTooLarge(level));
    }
    if let Some([x, y]) = rec.first_out_of_bounds() {
        return Err(MetricsError::PointOutOfBounds {
            id: rec.image_id.clone(),
            x,
            y,
            width: rec.width,
            height: rec.height,
        });
    }
    let side = 1usize << level;
    let mut diff = vec![0i64; side * side];
    let cell = |p: &[f64; 2]| {
        cell_index(p[1], rec.height, side) * side + cell_index(p[0], rec.width, side)
    };
    for p in &rec.gt_points {
        diff[cell(p)] += 1;
    }
    for p in &rec.pred_points {
        diff[cell(p)] -= 1;
    }
    Ok(diff.iter().map(|d| d.unsigned_abs()).sum())
}

/// Mean over images of [`game_image`].
pub fn game(
    records: &[PointAnnotatedRecord],
    level: u32,
    keep_per_image: bool,
) -> Result<GameResult, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyPredictions);
    }
    let per_image = records
        .iter()
        .map(|r| game_image(r, level))
        .collect::<Result<Vec<u64>, _>>()?;
    let as_f64: Vec<f64> = per_image.iter().map(|&v| v as f64).collect();
    Ok(GameResult {
        level,
        value: mean(&as_f64),
        per_image: keep_per_image.then_some(per_image),
    })
}

/// Collapse point annotations to whole-image counts.
pub fn point_totals(records: &[PointAnnotatedRecord]) -> Vec<PredictionRecord> {
    records
        .iter()
        .map(|r| {
            PredictionRecord::new(
                r.image_id.clone(),
                r.gt_points.len() as u64,
                r.pred_points.len() as f64,
            )
        })
        .collect()
}

/// Options shared by the evaluation entry points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub thetas: Vec<f64>,
    pub tper: TperOptions,
    pub std: StdConvention,
    pub game_levels: Vec<u32>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            thetas: default_thetas(),
            tper: TperOptions::default(),
            std: StdConvention::Population,
            game_levels: vec![0, 1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bins: Vec<Bin>,
    pub per_bin: Vec<BinStats>,
    pub pooled: PooledStats,
    pub global: GlobalStats,
    pub tper: TperCurve,
    pub game: Vec<GameResult>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

impl EvalReport {
    /// Full report. GAME entries are only produced when point annotations are given.
    pub fn build(
        preds: &[PredictionRecord],
        bins: &BinSpec,
        points: Option<&[PointAnnotatedRecord]>,
        opts: &EvalOptions,
    ) -> Result<Self, MetricsError> {
        let global = global_stats(preds, opts.std)?;
        let per_bin = per_bin_stats(preds, bins, opts.std);
        let pooled = pooled_stats(&per_bin)?;
        let tper = tper_curve(preds, &opts.thetas, opts.tper)?;
        let game = match points {
            Some(p) => opts
                .game_levels
                .iter()
                .map(|&l| game(p, l, false))
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        Ok(Self {
            bins: bins.edges().to_vec(),
            per_bin,
            pooled,
            global,
            tper,
            game,
            config: serde_json::Value::Null,
        })
    }
}
