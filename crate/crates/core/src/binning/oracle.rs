use super::{
    bin_log_likelihood, edges_from_starts, log_prior, prefer_reversed, tie_tolerance, BinFit,
    BinLikelihoodModel, PriorConfig,
};
use crate::data::CountHistogram;
use crate::error::BinningError;

pub const MAX_BRUTE_FORCE_COUNTS: usize = 20;

/// Exhaustive search over all `2^(m-1)` contiguous partitions of the distinct
/// counts. Each bin is scored from scratch, so this shares no arithmetic with
/// the DP beyond the log-factorial.
pub fn brute_force_bins(
    hist: &CountHistogram,
    prior: &PriorConfig,
    model: BinLikelihoodModel,
) -> Result<BinFit, BinningError> {
    let m = hist.distinct();
    if m == 0 {
        return Err(BinningError::EmptyHistogram);
    }
    if m > MAX_BRUTE_FORCE_COUNTS {
        return Err(BinningError::TooManyCounts {
            got: m,
            max: MAX_BRUTE_FORCE_COUNTS,
        });
    }
    let freqs = hist.frequencies();

    let mut scored: Vec<(Vec<usize>, f64)> = Vec::with_capacity(1 << (m - 1));
    for mask in 0u32..(1u32 << (m - 1)) {
        let starts: Vec<usize> = std::iter::once(0)
            .chain((1..m).filter(|i| mask & (1 << (i - 1)) != 0))
            .collect();
        let prior_term = log_prior(starts.len(), prior);
        if prior_term == f64::NEG_INFINITY {
            continue;
        }
        let mut score = 0.0;
        for (k, &s) in starts.iter().enumerate() {
            let e = starts.get(k + 1).copied().unwrap_or(m);
            score += bin_log_likelihood(&freqs[s..e], model);
        }
        scored.push((starts, score + prior_term));
    }

    let max = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = tie_tolerance(max);
    let (starts, log_posterior) = scored
        .into_iter()
        .filter(|s| s.1 >= max - tol)
        .min_by(|a, b| prefer_reversed(&a.0, &b.0))
        .expect("alpha >= 1 admits the single-bin partition");
    Ok(BinFit {
        edges: edges_from_starts(&hist.counts(), &starts),
        starts,
        log_posterior,
    })
}
