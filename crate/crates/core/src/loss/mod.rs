//! Bin-aware loss.
//!
//! For a ground truth `y` in bin `[lo, hi]` and a prediction `ŷ`:
//!
//! ```text
//! L̂(y, ŷ) = λ1 · ln(1 + |y - ŷ|)   if lo <= ŷ <= hi
//!           |y - ŷ|                 otherwise
//! ```
//!
//! Predictions landing in the right bin are penalized logarithmically, the rest
//! linearly. The combined training objective is `L* = L + λ2 · L̂`.
//!
//! Trainers implementing this inside an autodiff framework need the two branch
//! derivatives with respect to `ŷ`: `λ1 · sign(ŷ - y) / (1 + |y - ŷ|)` inside
//! the bin and `sign(ŷ - y)` outside. [`bin_loss_grad`] evaluates them.

pub mod ablation;

use serde::{Deserialize, Serialize};

use crate::data::{Bin, BinSpec, PredictionRecord};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the logarithmic (in-bin) branch.
    pub lambda1: f64,
    /// Weight of the bin loss when added to a model loss.
    pub lambda2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl std::str::FromStr for Reduction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(format!(
                "unknown reduction `{other}` (expected mean or sum)"
            )),
        }
    }
}

/// Bin loss against an explicit bin (the one holding `y`).
pub fn bin_loss_in(y: u64, y_hat: f64, bin: Bin, lambda1: f64) -> f64 {
    let err = (y as f64 - y_hat).abs();
    if bin.contains_real(y_hat) {
        lambda1 * err.ln_1p()
    } else {
        err
    }
}

pub fn bin_loss(y: u64, y_hat: f64, bins: &BinSpec, cfg: &LossConfig) -> f64 {
    bin_loss_in(y, y_hat, bins.bin(bins.assign_bin(y)), cfg.lambda1)
}

/// Subgradient of [`bin_loss`] with respect to `ŷ` (0 at `ŷ = y`).
pub fn bin_loss_grad(y: u64, y_hat: f64, bins: &BinSpec, cfg: &LossConfig) -> f64 {
    let diff = y_hat - y as f64;
    if diff == 0.0 {
        return 0.0;
    }
    let bin = bins.bin(bins.assign_bin(y));
    if bin.contains_real(y_hat) {
        cfg.lambda1 * diff.signum() / (1.0 + diff.abs())
    } else {
        diff.signum()
    }
}

/// `model_loss + λ2 · bin_loss`.
pub fn combined_loss(model_loss: f64, y: u64, y_hat: f64, bins: &BinSpec, cfg: &LossConfig) -> f64 {
    model_loss + cfg.lambda2 * bin_loss(y, y_hat, bins, cfg)
}

/// Per-record bin losses over a prediction set.
pub fn bin_losses(preds: &[PredictionRecord], bins: &BinSpec, cfg: &LossConfig) -> Vec<f64> {
    preds
        .iter()
        .map(|p| bin_loss(p.gt_count, p.pred_count, bins, cfg))
        .collect()
}

/// Minibatch reduction of the bin loss. An empty batch reduces to 0.
pub fn batch_bin_loss(
    preds: &[PredictionRecord],
    bins: &BinSpec,
    cfg: &LossConfig,
    reduction: Reduction,
) -> f64 {
    let losses = bin_losses(preds, bins, cfg);
    if losses.is_empty() {
        return 0.0;
    }
    let total = crate::numeric::compensated_sum(losses.iter().copied());
    match reduction {
        Reduction::Sum => total,
        Reduction::Mean => total / losses.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bins() -> BinSpec {
        BinSpec::from_edges(vec![Bin::new(0, 24), Bin::new(25, 67), Bin::new(68, 500)]).unwrap()
    }

    #[test]
    fn zero_error_is_zero() {
        let cfg = LossConfig::default();
        assert_eq!(bin_loss(45, 45.0, &bins(), &cfg), 0.0);
    }

    #[test]
    fn log_branch_inside_bin() {
        let cfg = LossConfig::default();
        let got = bin_loss(45, 48.0, &bins(), &cfg);
        assert!((got - 4f64.ln()).abs() < 1e-12);
        assert!((got - 1.386_294_361_119_890_6).abs() < 1e-12);
        let cfg10 = LossConfig {
            lambda1: 10.0,
            ..cfg
        };
        assert!((bin_loss(45, 48.0, &bins(), &cfg10) - 10.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn linear_branch_outside_bin() {
        let cfg = LossConfig {
            lambda1: 7.0,
            lambda2: 1.0,
        };
        assert_eq!(bin_loss(45, 100.0, &bins(), &cfg), 55.0);
        assert_eq!(bin_loss(45, 10.5, &bins(), &cfg), 34.5);
    }

    #[test]
    fn bin_edges_are_inclusive_and_discontinuous() {
        let cfg = LossConfig::default();
        let b = bins();
        // hi edge 67 is inside, 67 + eps is outside
        assert!((bin_loss(45, 67.0, &b, &cfg) - 22f64.ln_1p()).abs() < 1e-12);
        let right = bin_loss(45, 67.0 + 1e-9, &b, &cfg);
        assert!((right - 22.0).abs() < 1e-6);
        assert!(right > bin_loss(45, 67.0, &b, &cfg));
        // lo edge 25
        assert!((bin_loss(45, 25.0, &b, &cfg) - 20f64.ln_1p()).abs() < 1e-12);
        assert!((bin_loss(45, 25.0 - 1e-9, &b, &cfg) - 20.0).abs() < 1e-6);
    }

    #[test]
    fn combined_examples() {
        let b = bins();
        let zero = LossConfig {
            lambda1: 1.0,
            lambda2: 0.0,
        };
        assert_eq!(combined_loss(3.25, 45, 100.0, &b, &zero), 3.25);

        // y = 10 in [0, 10], ŷ = 11.5 lands outside: bin loss 1.5
        let one = LossConfig::default();
        let b2 = BinSpec::from_edges(vec![Bin::new(0, 10), Bin::new(11, 20)]).unwrap();
        assert_eq!(bin_loss(10, 11.5, &b2, &one), 1.5);
        assert_eq!(combined_loss(2.5, 10, 11.5, &b2, &one), 4.0);

        let small = LossConfig {
            lambda1: 1.0,
            lambda2: 0.01,
        };
        let got = combined_loss(2.0, 45, 100.0, &b, &small);
        assert!((got - 2.55).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let b = bins();
        let cfg = LossConfig {
            lambda1: 3.0,
            lambda2: 1.0,
        };
        for (y, yh) in [
            (45u64, 50.0),
            (45, 40.0),
            (45, 90.0),
            (45, 3.0),
            (200, 150.5),
        ] {
            let h = 1e-6;
            let fd = (bin_loss(y, yh + h, &b, &cfg) - bin_loss(y, yh - h, &b, &cfg)) / (2.0 * h);
            assert!(
                (fd - bin_loss_grad(y, yh, &b, &cfg)).abs() < 1e-5,
                "{y} {yh}"
            );
        }
        assert_eq!(bin_loss_grad(45, 45.0, &b, &cfg), 0.0);
    }

    #[test]
    fn batch_reductions() {
        let b = bins();
        let cfg = LossConfig::default();
        let preds = vec![
            PredictionRecord::new("a", 45, 100.0),
            PredictionRecord::new("b", 45, 45.0),
        ];
        assert_eq!(batch_bin_loss(&preds, &b, &cfg, Reduction::Sum), 55.0);
        assert_eq!(batch_bin_loss(&preds, &b, &cfg, Reduction::Mean), 27.5);
        assert_eq!(batch_bin_loss(&[], &b, &cfg, Reduction::Mean), 0.0);
    }
}
