//! Cross-validated choice of the prior parameter γ.
//!
//! For every `(γ, ratio, seed)` cell the counts are shuffled with the seed,
//! split into train and held-out parts, bins are fitted on the smoothed train
//! part and the held-out counts are scored against those bins. Likelihoods are
//! averaged over seeds; per ratio the γ values are ranked by descending mean
//! likelihood, and the γ with the lowest rank sum wins.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use super::{bin_log_likelihood, optimal_bins, smooth, BinFit, BinLikelihoodModel, PriorConfig};
use crate::data::{Bin, CountHistogram};
use crate::error::BinningError;

/// Where the held-out bin probabilities come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeldOutProbabilities {
    /// Plug-in estimates from the held-out frequencies themselves.
    #[default]
    Test,
    /// Estimates from the smoothed train frequencies.
    Train,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldOutConfig {
    pub beta: u64,
    /// Upper bound on the number of bins; `None` uses the number of distinct
    /// counts after smoothing.
    pub alpha: Option<usize>,
    pub model: BinLikelihoodModel,
    pub probabilities: HeldOutProbabilities,
}

impl Default for HeldOutConfig {
    fn default() -> Self {
        Self {
            beta: 1,
            alpha: None,
            model: BinLikelihoodModel::Multinomial,
            probabilities: HeldOutProbabilities::Test,
        }
    }
}

/// Shuffle with `seed` and cut: the first `round(ratio * n)` counts are held
/// out, the rest are for training.
pub fn split_counts(
    counts: &[u64],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<u64>, Vec<u64>), BinningError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(BinningError::InvalidRatio(ratio));
    }
    let mut shuffled = counts.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (ratio * counts.len() as f64).round() as usize;
    if n_test == 0 || n_test >= counts.len() {
        return Err(BinningError::DegenerateSplit {
            train: counts.len().saturating_sub(n_test),
            test: n_test,
        });
    }
    let train = shuffled.split_off(n_test);
    Ok((train, shuffled))
}

fn resolve_prior(
    gamma: f64,
    alpha: Option<usize>,
    hist: &CountHistogram,
) -> Result<PriorConfig, BinningError> {
    PriorConfig::new(gamma, alpha.unwrap_or(hist.distinct()))
}

/// Log-likelihood of held-out counts grouped by `edges`. Counts above the last
/// edge fall into the last bin. `train` must be the smoothed train histogram
/// the edges were fitted on (only read for train-side probabilities).
pub fn test_log_likelihood(
    train: &CountHistogram,
    test: &CountHistogram,
    edges: &[Bin],
    cfg: &HeldOutConfig,
) -> f64 {
    let test = smooth(test, cfg.beta);
    let mut groups: Vec<Vec<(u64, u64)>> = vec![Vec::new(); edges.len()];
    for &(c, f) in test.entries() {
        let k = edges.partition_point(|b| b.lo <= c) - 1;
        groups[k].push((c, f));
    }
    groups
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(k, g)| match cfg.probabilities {
            HeldOutProbabilities::Test => {
                let freqs: Vec<u64> = g.iter().map(|&(_, f)| f).collect();
                bin_log_likelihood(&freqs, cfg.model)
            }
            HeldOutProbabilities::Train => train_side_bin(train, test.total(), edges[k], g, cfg),
        })
        .sum()
}

/// Score one held-out bin with parameters estimated from the train side.
/// Categories the train histogram never saw get a pseudo-frequency of
/// `max(beta, 1)`.
fn train_side_bin(
    train: &CountHistogram,
    test_total: u64,
    bin: Bin,
    group: &[(u64, u64)],
    cfg: &HeldOutConfig,
) -> f64 {
    let pseudo = cfg.beta.max(1);
    let mut categories: Vec<u64> = (bin.lo..=bin.hi.min(train.max_count())).collect();
    categories.extend(
        group
            .iter()
            .map(|&(c, _)| c)
            .filter(|&c| c > bin.hi.min(train.max_count())),
    );
    let train_freq = |c: u64| match train.frequency(c) {
        0 => pseudo,
        f => f,
    };
    let train_bin_total: u64 = categories.iter().map(|&c| train_freq(c)).sum();
    let x_total: u64 = group.iter().map(|&(_, f)| f).sum();
    let sum_ln_fact: f64 = group.iter().map(|&(_, f)| ln_factorial(f)).sum();
    match cfg.model {
        BinLikelihoodModel::Multinomial => {
            let log_p: f64 = group
                .iter()
                .map(|&(c, f)| f as f64 * (train_freq(c) as f64 / train_bin_total as f64).ln())
                .sum();
            ln_factorial(x_total) - sum_ln_fact + log_p
        }
        BinLikelihoodModel::Poisson => {
            let scale = test_total as f64 / train.total() as f64;
            let rate = train_bin_total as f64 / categories.len() as f64 * scale;
            x_total as f64 * rate.ln() - rate * group.len() as f64 - sum_ln_fact
        }
    }
}

/// Held-out log-likelihood for one `(ratio, γ, seed)` cell.
pub fn held_out_likelihood(
    counts: &[u64],
    ratio: f64,
    gamma: f64,
    seed: u64,
    cfg: &HeldOutConfig,
) -> Result<f64, BinningError> {
    let (train, test) = split_counts(counts, ratio, seed)?;
    let train = smooth(
        &CountHistogram::from_counts(train).expect("split keeps both sides non-empty"),
        cfg.beta,
    );
    let test = CountHistogram::from_counts(test).expect("split keeps both sides non-empty");
    let prior = resolve_prior(gamma, cfg.alpha, &train)?;
    let fit = optimal_bins(&train, &prior, cfg.model)?;
    Ok(test_log_likelihood(&train, &test, &fit.edges, cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchConfig {
    pub gammas: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Number of shuffles per `(γ, ratio)`; seeds run `base_seed..base_seed + seeds`.
    pub seeds: u64,
    pub base_seed: u64,
    pub held_out: HeldOutConfig,
}

impl Default for GridSearchConfig {
    fn default() -> Self {
        Self {
            gammas: (1..=9).map(|i| i as f64 / 10.0).collect(),
            ratios: vec![0.1, 0.2, 0.25],
            seeds: 10,
            base_seed: 0,
            held_out: HeldOutConfig::default(),
        }
    }
}

impl GridSearchConfig {
    pub const MIN_RECORDS: usize = 10;
}

/// Rank sums of the γ candidates and the winner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaRanking {
    pub index_sums: Vec<usize>,
    pub best: usize,
}

/// Rank candidates given `mean_likelihood[gamma][ratio]`. Per ratio the
/// candidates are sorted by descending likelihood (ties keep input order) and
/// each gets its position as rank; the lowest rank sum wins, ties going to the
/// smaller γ.
pub fn rank_gammas(gammas: &[f64], mean_likelihood: &[Vec<f64>]) -> GammaRanking {
    let n = gammas.len();
    let n_ratios = mean_likelihood.first().map_or(0, Vec::len);
    let mut index_sums = vec![0usize; n];
    #[allow(clippy::needless_range_loop)]
    for r in 0..n_ratios {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| mean_likelihood[b][r].total_cmp(&mean_likelihood[a][r]));
        for (pos, &g) in order.iter().enumerate() {
            index_sums[g] += pos;
        }
    }
    let best = (0..n)
        .min_by(|&a, &b| {
            index_sums[a]
                .cmp(&index_sums[b])
                .then(gammas[a].total_cmp(&gammas[b]))
        })
        .unwrap_or(0);
    GammaRanking { index_sums, best }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchResult {
    pub best_gamma: f64,
    /// `mean_likelihood[gamma][ratio]`, averaged over seeds.
    pub mean_likelihood: Vec<Vec<f64>>,
    pub ranking: GammaRanking,
    /// Final fit on the full smoothed data with the winning γ.
    pub fit: BinFit,
    pub prior: PriorConfig,
}

/// Grid search over γ followed by a final fit on all counts.
///
/// Cells are evaluated in parallel; each cell's randomness depends only on its
/// seed, so the result does not depend on the thread count.
pub fn grid_search_gamma(
    counts: &[u64],
    cfg: &GridSearchConfig,
) -> Result<GridSearchResult, BinningError> {
    if counts.len() < GridSearchConfig::MIN_RECORDS {
        return Err(BinningError::InsufficientData {
            got: counts.len(),
            min: GridSearchConfig::MIN_RECORDS,
        });
    }
    if cfg.gammas.is_empty() || cfg.ratios.is_empty() || cfg.seeds == 0 {
        return Err(BinningError::EmptyGrid);
    }
    for &g in &cfg.gammas {
        PriorConfig::new(g, 1)?;
    }

    let n_r = cfg.ratios.len();
    let n_s = cfg.seeds as usize;
    let cells: Vec<f64> = (0..cfg.gammas.len() * n_r * n_s)
        .into_par_iter()
        .map(|idx| {
            let g = idx / (n_r * n_s);
            let r = (idx / n_s) % n_r;
            let s = (idx % n_s) as u64;
            held_out_likelihood(
                counts,
                cfg.ratios[r],
                cfg.gammas[g],
                cfg.base_seed + s,
                &cfg.held_out,
            )
        })
        .collect::<Result<_, _>>()?;

    let mean_likelihood: Vec<Vec<f64>> = (0..cfg.gammas.len())
        .map(|g| {
            (0..n_r)
                .map(|r| {
                    let start = (g * n_r + r) * n_s;
                    cells[start..start + n_s].iter().sum::<f64>() / n_s as f64
                })
                .collect()
        })
        .collect();

    let ranking = rank_gammas(&cfg.gammas, &mean_likelihood);
    let best_gamma = cfg.gammas[ranking.best];
    let full = smooth(
        &CountHistogram::from_counts(counts.iter().copied()).expect("non-empty"),
        cfg.held_out.beta,
    );
    let prior = resolve_prior(best_gamma, cfg.held_out.alpha, &full)?;
    let fit = optimal_bins(&full, &prior, cfg.held_out.model)?;
    Ok(GridSearchResult {
        best_gamma,
        mean_likelihood,
        ranking,
        fit,
        prior,
    })
}
