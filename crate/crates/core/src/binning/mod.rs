//! MAP-optimal partitioning of the count range.
//!
//! A partition splits `[0, C]` into contiguous bins. Its log-posterior is the
//! sum of per-bin log-likelihoods plus a geometric prior on the number of bins,
//! `P(N_b) = (1 - γ) / (1 - γ^α) · γ^N_b` for `1 <= N_b <= α`. The optimum is
//! found by dynamic programming over the distinct counts ([`optimal_bins`]);
//! [`brute_force_bins`] enumerates every contiguous partition and serves as a
//! check on small inputs.
//!
//! Histograms are expected to be smoothed with [`smooth`] first so that every
//! integer in the range carries a positive frequency.

mod dp;
mod grid;
mod oracle;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::data::{Bin, BinSpec, CountHistogram};
use crate::error::BinningError;

pub use dp::{optimal_bins, DpTable, WeightedSequence};
pub use grid::{
    grid_search_gamma, held_out_likelihood, rank_gammas, split_counts, test_log_likelihood,
    GammaRanking, GridSearchConfig, GridSearchResult, HeldOutConfig, HeldOutProbabilities,
};
pub use oracle::{brute_force_bins, MAX_BRUTE_FORCE_COUNTS};

/// Geometric prior over the number of bins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub gamma: f64,
    pub alpha: usize,
}

impl PriorConfig {
    pub fn new(gamma: f64, alpha: usize) -> Result<Self, BinningError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(BinningError::InvalidGamma(gamma));
        }
        if alpha == 0 {
            return Err(BinningError::InvalidAlpha);
        }
        Ok(Self { gamma, alpha })
    }

    /// `ln P0` with `P0 = (1 - γ) / (γ (1 - γ^α))`, the constant that makes
    /// `P0 γ^n` sum to one over `n = 1..=α`.
    ///
    /// The frequently quoted `(1 - γ) / (1 - γ^α)` sums to `γ` instead. The two
    /// differ by the constant `ln γ`, so MAP partitions are the same either way.
    pub fn log_normalizer(&self) -> f64 {
        let ln_gamma = self.gamma.ln();
        (-self.gamma).ln_1p() - ln_gamma - (-(self.alpha as f64 * ln_gamma).exp_m1()).ln()
    }
}

/// Per-bin likelihood family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinLikelihoodModel {
    /// Multinomial over the distinct counts of the bin, with plug-in
    /// probabilities `x_j / X`.
    #[default]
    Multinomial,
    /// Independent Poisson frequencies sharing the bin-mean rate.
    Poisson,
}

impl std::str::FromStr for BinLikelihoodModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "multinomial" => Ok(Self::Multinomial),
            "poisson" => Ok(Self::Poisson),
            other => Err(format!("unknown likelihood model `{other}`")),
        }
    }
}

impl std::fmt::Display for BinLikelihoodModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Multinomial => "multinomial",
            Self::Poisson => "poisson",
        })
    }
}

/// Add `beta` to the frequency of every integer in `[0, C]`.
pub fn smooth(hist: &CountHistogram, beta: u64) -> CountHistogram {
    if beta == 0 {
        return hist.clone();
    }
    let mut entries = Vec::with_capacity(hist.max_count() as usize + 1);
    let mut observed = hist.entries().iter().peekable();
    for c in 0..=hist.max_count() {
        let f = match observed.peek() {
            Some(&&(oc, of)) if oc == c => {
                observed.next();
                of
            }
            _ => 0,
        };
        entries.push((c, f + beta));
    }
    CountHistogram::from_sorted(entries)
}

/// Log-likelihood of the frequencies of one bin. Zero frequencies contribute
/// nothing; an empty slice scores 0.
pub fn bin_log_likelihood(freqs: &[u64], model: BinLikelihoodModel) -> f64 {
    let total: u64 = freqs.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let x_total = total as f64;
    let sum_ln_fact: f64 = freqs.iter().map(|&x| ln_factorial(x)).sum();
    match model {
        BinLikelihoodModel::Multinomial => {
            let sum_log_p: f64 = freqs
                .iter()
                .filter(|&&x| x > 0)
                .map(|&x| x as f64 * (x as f64 / x_total).ln())
                .sum();
            ln_factorial(total) - sum_ln_fact + sum_log_p
        }
        BinLikelihoodModel::Poisson => {
            let rate = x_total / freqs.len() as f64;
            x_total * rate.ln() - x_total - sum_ln_fact
        }
    }
}

/// Log prior of a partition with `num_bins` bins; `-inf` outside `[1, α]`.
pub fn log_prior(num_bins: usize, prior: &PriorConfig) -> f64 {
    if num_bins == 0 || num_bins > prior.alpha {
        return f64::NEG_INFINITY;
    }
    prior.log_normalizer() + num_bins as f64 * prior.gamma.ln()
}

/// Log-posterior of an arbitrary partition given as bin edges: entries of
/// `hist` are grouped by edge and scored independently.
pub fn partition_log_posterior(
    hist: &CountHistogram,
    edges: &[Bin],
    prior: &PriorConfig,
    model: BinLikelihoodModel,
) -> f64 {
    let mut groups: Vec<Vec<u64>> = vec![Vec::new(); edges.len()];
    for &(c, f) in hist.entries() {
        let k = edges.partition_point(|b| b.lo <= c).saturating_sub(1);
        groups[k].push(f);
    }
    let ll: f64 = groups.iter().map(|g| bin_log_likelihood(g, model)).sum();
    ll + log_prior(edges.len(), prior)
}

/// Result of a partition search.
#[derive(Clone, Debug, PartialEq)]
pub struct BinFit {
    /// Contiguous, exhaustive bins over `[0, C]`.
    pub edges: Vec<Bin>,
    /// Index (into the histogram's distinct counts) where each bin starts.
    pub starts: Vec<usize>,
    pub log_posterior: f64,
}

impl BinFit {
    pub fn num_bins(&self) -> usize {
        self.edges.len()
    }

    pub fn to_bin_spec(&self, prior: &PriorConfig, beta: u64) -> BinSpec {
        BinSpec::new(self.edges.clone(), prior.gamma, prior.alpha, beta)
            .expect("fitted partitions are valid bin specs")
    }
}

/// Bins covering `[0, C]` from distinct-count start indices. Bin `k` spans
/// from its first distinct count up to one below the next bin's first count.
pub(crate) fn edges_from_starts(counts: &[u64], starts: &[usize]) -> Vec<Bin> {
    let last = counts[counts.len() - 1];
    starts
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let lo = if k == 0 { 0 } else { counts[s] };
            let hi = match starts.get(k + 1) {
                Some(&next) => counts[next] - 1,
                None => last,
            };
            Bin::new(lo, hi)
        })
        .collect()
}

/// Scores within this band of the maximum are treated as ties.
pub(crate) fn tie_tolerance(best: f64) -> f64 {
    1e-10 * (1.0 + best.abs())
}

/// Deterministic tie-break between two partitions: compare start indices from
/// the last bin backwards; the smaller sequence wins (wider trailing bins).
pub(crate) fn prefer_reversed(a: &[usize], b: &[usize]) -> std::cmp::Ordering {
    a.iter().rev().cmp(b.iter().rev())
}
