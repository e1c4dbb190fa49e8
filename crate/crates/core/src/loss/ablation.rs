//! λ1 × λ2 grid on a toy scalar regressor.
//!
//! A one-feature linear count regressor `ŷ = max(0, w·x + b)` is trained by
//! full-batch subgradient descent on `|y - ŷ| + λ2 · L̂(y, ŷ)` for every grid
//! cell, then scored by pooled MAE/std on a held-out split. The numbers only
//! mean something for the fixture; the harness exists to exercise the loss
//! end to end and to lay results out as a λ1-by-λ2 table.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use super::{bin_loss_grad, LossConfig};
use crate::binning::{optimal_bins, smooth, BinLikelihoodModel, PriorConfig};
use crate::data::{BinSpec, CountHistogram, PredictionRecord};
use crate::metrics::{per_bin_stats, pooled_stats, PooledStats, StdConvention};

#[derive(Clone, Debug, PartialEq)]
pub struct ToySample {
    pub feature: f64,
    pub count: u64,
}

/// Heavy-tailed synthetic regression data with a noisy multiplicative feature.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyFixture {
    pub train: Vec<ToySample>,
    pub test: Vec<ToySample>,
}

impl ToyFixture {
    pub fn synthetic(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = LogNormal::new(3.0, 1.0).expect("valid log-normal");
        let noise = Normal::new(0.0, 0.25).expect("valid normal");
        let samples: Vec<ToySample> = (0..n)
            .map(|_| {
                let count = Distribution::<f64>::sample(&counts, &mut rng).floor() as u64;
                let feature = (count as f64 + 1.0)
                    * Distribution::<f64>::sample(&noise, &mut rng).exp()
                    + rng.random_range(0.0..2.0);
                ToySample { feature, count }
            })
            .collect();
        let cut = n * 4 / 5;
        Self {
            train: samples[..cut].to_vec(),
            test: samples[cut..].to_vec(),
        }
    }

    /// Bins fitted on the smoothed train counts with a fixed prior and at
    /// most `max_bins` bins.
    pub fn fit_bins(&self, gamma: f64, max_bins: usize) -> BinSpec {
        let hist = smooth(
            &CountHistogram::from_counts(self.train.iter().map(|s| s.count))
                .expect("fixture has training samples"),
            1,
        );
        let prior = PriorConfig::new(gamma, max_bins).expect("valid prior");
        optimal_bins(&hist, &prior, BinLikelihoodModel::Multinomial)
            .expect("non-empty histogram")
            .to_bin_spec(&prior, 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyRegressor {
    pub weight: f64,
    pub bias: f64,
}

impl ToyRegressor {
    pub fn predict(&self, feature: f64) -> f64 {
        (self.weight * feature + self.bias).max(0.0)
    }

    /// Full-batch subgradient descent with a `1/sqrt(t)` step decay.
    pub fn train(
        samples: &[ToySample],
        bins: &BinSpec,
        cfg: &LossConfig,
        iterations: usize,
    ) -> Self {
        let n = samples.len() as f64;
        let x_scale = samples.iter().map(|s| s.feature).sum::<f64>() / n;
        let mut model = ToyRegressor {
            weight: 0.5,
            bias: 0.0,
        };
        for t in 0..iterations {
            let (mut gw, mut gb) = (0.0, 0.0);
            for s in samples {
                let y_hat = model.predict(s.feature);
                if model.weight * s.feature + model.bias < 0.0 {
                    continue;
                }
                let diff = y_hat - s.count as f64;
                let g = if diff == 0.0 { 0.0 } else { diff.signum() }
                    + cfg.lambda2 * bin_loss_grad(s.count, y_hat, bins, cfg);
                gw += g * s.feature;
                gb += g;
            }
            let step = 0.5 / (1.0 + t as f64).sqrt();
            model.weight -= step * gw / n / x_scale;
            model.bias -= step * x_scale * gb / n;
        }
        model
    }

    pub fn predictions(&self, samples: &[ToySample]) -> Vec<PredictionRecord> {
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                PredictionRecord::new(format!("toy{i}"), s.count, self.predict(s.feature))
            })
            .collect()
    }
}

/// Pooled MAE/std for every `(λ1, λ2)` cell; `cells[i][j]` pairs `lambda1s[i]`
/// with `lambda2s[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaGridTable {
    pub lambda1s: Vec<f64>,
    pub lambda2s: Vec<f64>,
    pub cells: Vec<Vec<PooledStats>>,
}

impl LambdaGridTable {
    pub fn default_grid() -> (Vec<f64>, Vec<f64>) {
        (vec![1.0, 10.0, 100.0], vec![0.01, 1.0])
    }
}

impl fmt::Display for LambdaGridTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "λ1 ↓ λ2 →")?;
        for l2 in &self.lambda2s {
            write!(f, " | {l2}")?;
        }
        writeln!(f)?;
        for (l1, row) in self.lambda1s.iter().zip(&self.cells) {
            write!(f, "{l1}")?;
            for c in row {
                write!(f, " | {:.1} ± {:.1}", c.mu_pool, c.sigma_pool)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn run_lambda_grid(
    fixture: &ToyFixture,
    bins: &BinSpec,
    lambda1s: &[f64],
    lambda2s: &[f64],
    iterations: usize,
) -> LambdaGridTable {
    let cells = lambda1s
        .iter()
        .map(|&lambda1| {
            lambda2s
                .iter()
                .map(|&lambda2| {
                    let cfg = LossConfig { lambda1, lambda2 };
                    let model = ToyRegressor::train(&fixture.train, bins, &cfg, iterations);
                    let preds = model.predictions(&fixture.test);
                    let stats = per_bin_stats(&preds, bins, StdConvention::Population);
                    pooled_stats(&stats).expect("test split is non-empty")
                })
                .collect()
        })
        .collect();
    LambdaGridTable {
        lambda1s: lambda1s.to_vec(),
        lambda2s: lambda2s.to_vec(),
        cells,
    }
}
