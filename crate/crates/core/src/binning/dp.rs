use statrs::function::factorial::ln_factorial;

use super::{
    edges_from_starts, prefer_reversed, tie_tolerance, BinFit, BinLikelihoodModel, PriorConfig,
};
use crate::data::CountHistogram;
use crate::error::BinningError;

/// Prefix sums over the distinct counts of a histogram, so that the
/// log-likelihood of any run of consecutive distinct counts is O(1).
///
/// This stands in for the expanded sequence in which every count is repeated
/// by its frequency; splits are only considered between distinct counts.
#[derive(Clone, Debug)]
pub struct WeightedSequence {
    counts: Vec<u64>,
    cum_freq: Vec<u64>,
    cum_ln_fact: Vec<f64>,
    cum_xlogx: Vec<f64>,
    ln_fact: Vec<f64>,
    xlogx: Vec<f64>,
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

impl WeightedSequence {
    pub fn new(hist: &CountHistogram) -> Self {
        let m = hist.distinct();
        let mut cum_freq = Vec::with_capacity(m + 1);
        let mut cum_ln_fact = Vec::with_capacity(m + 1);
        let mut cum_xlogx = Vec::with_capacity(m + 1);
        cum_freq.push(0);
        cum_ln_fact.push(0.0);
        cum_xlogx.push(0.0);
        for &(_, f) in hist.entries() {
            cum_freq.push(cum_freq.last().unwrap() + f);
            cum_ln_fact.push(cum_ln_fact.last().unwrap() + ln_factorial(f));
            cum_xlogx.push(cum_xlogx.last().unwrap() + xlogx(f as f64));
        }
        let n = hist.total() as usize;
        Self {
            counts: hist.counts(),
            cum_freq,
            cum_ln_fact,
            cum_xlogx,
            ln_fact: (0..=n as u64).map(ln_factorial).collect(),
            xlogx: (0..=n).map(|x| xlogx(x as f64)).collect(),
        }
    }

    /// Number of distinct counts, m.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Log-likelihood of one bin holding distinct counts `start..end`.
    pub fn segment_log_likelihood(
        &self,
        start: usize,
        end: usize,
        model: BinLikelihoodModel,
    ) -> f64 {
        let total = (self.cum_freq[end] - self.cum_freq[start]) as usize;
        let ln_fact = self.cum_ln_fact[end] - self.cum_ln_fact[start];
        match model {
            BinLikelihoodModel::Multinomial => {
                let xlx = self.cum_xlogx[end] - self.cum_xlogx[start];
                self.ln_fact[total] - ln_fact + xlx - self.xlogx[total]
            }
            BinLikelihoodModel::Poisson => {
                let x = total as f64;
                let width = (end - start) as f64;
                self.xlogx[total] - x * width.ln() - x - ln_fact
            }
        }
    }
}

/// Memo of the partition DP.
///
/// `best[r]` is the best score of a partition of the first `r` distinct counts,
/// counting `ln γ` per bin but not the prior's normalizer; `last_change[r]` is
/// where that partition's last bin starts. When `α` is below the number of
/// distinct counts the table gains a bin-count dimension, stored row by row in
/// `layered` (row `k - 1` holds partitions with exactly `k` bins).
#[derive(Clone, Debug)]
pub struct DpTable {
    pub best: Vec<f64>,
    pub last_change: Vec<usize>,
    pub layered: Vec<(Vec<f64>, Vec<usize>)>,
    pub weighted_seq: WeightedSequence,
}

impl DpTable {
    pub fn build(
        hist: &CountHistogram,
        prior: &PriorConfig,
        model: BinLikelihoodModel,
    ) -> Result<Self, BinningError> {
        if hist.distinct() == 0 {
            return Err(BinningError::EmptyHistogram);
        }
        let seq = WeightedSequence::new(hist);
        let m = seq.len();
        let ln_gamma = prior.gamma.ln();
        let mut table = DpTable {
            best: Vec::new(),
            last_change: Vec::new(),
            layered: Vec::new(),
            weighted_seq: seq,
        };
        if prior.alpha >= m {
            let (best, last) = table.unconstrained(model, ln_gamma);
            table.best = best;
            table.last_change = last;
        } else {
            table.layered = table.constrained(model, ln_gamma, prior.alpha);
        }
        Ok(table)
    }

    fn unconstrained(&self, model: BinLikelihoodModel, ln_gamma: f64) -> (Vec<f64>, Vec<usize>) {
        let m = self.weighted_seq.len();
        let mut best = vec![f64::NEG_INFINITY; m + 1];
        let mut last = vec![0usize; m + 1];
        best[0] = 0.0;
        let mut cand = Vec::with_capacity(m);
        for r in 1..=m {
            cand.clear();
            cand.extend((0..r).map(|j| best[j] + self.segment(j, r, model) + ln_gamma));
            let j = argmax_first(&cand);
            best[r] = cand[j];
            last[r] = j;
        }
        (best, last)
    }

    fn constrained(
        &self,
        model: BinLikelihoodModel,
        ln_gamma: f64,
        alpha: usize,
    ) -> Vec<(Vec<f64>, Vec<usize>)> {
        let m = self.weighted_seq.len();
        let mut rows: Vec<(Vec<f64>, Vec<usize>)> = Vec::with_capacity(alpha);
        let mut first = vec![f64::NEG_INFINITY; m + 1];
        for (r, slot) in first.iter_mut().enumerate().skip(1) {
            *slot = self.segment(0, r, model) + ln_gamma;
        }
        rows.push((first, vec![0; m + 1]));
        let mut cand = Vec::with_capacity(m);
        for k in 2..=alpha {
            let prev = &rows[k - 2].0;
            let mut best = vec![f64::NEG_INFINITY; m + 1];
            let mut last = vec![0usize; m + 1];
            for r in k..=m {
                cand.clear();
                cand.extend((k - 1..r).map(|j| prev[j] + self.segment(j, r, model) + ln_gamma));
                let i = argmax_first(&cand);
                best[r] = cand[i];
                last[r] = k - 1 + i;
            }
            rows.push((best, last));
        }
        rows
    }

    fn segment(&self, start: usize, end: usize, model: BinLikelihoodModel) -> f64 {
        let ll = self.weighted_seq.segment_log_likelihood(start, end, model);
        debug_assert!(
            ll.is_finite(),
            "non-finite bin likelihood for {start}..{end}"
        );
        ll
    }

    /// Backtrack the optimal partition; returns bin start indices and the
    /// score without the prior normalizer.
    pub fn backtrack(&self) -> (Vec<usize>, f64) {
        let m = self.weighted_seq.len();
        if self.layered.is_empty() {
            let mut starts = Vec::new();
            let mut r = m;
            while r > 0 {
                r = self.last_change[r];
                starts.push(r);
            }
            starts.reverse();
            return (starts, self.best[m]);
        }

        let paths: Vec<(Vec<usize>, f64)> = (1..=self.layered.len())
            .filter(|&k| k <= m)
            .map(|k| (self.backtrack_layer(k), self.layered[k - 1].0[m]))
            .collect();
        let max = paths.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let tol = tie_tolerance(max);
        paths
            .into_iter()
            .filter(|p| p.1 >= max - tol)
            .min_by(|a, b| prefer_reversed(&a.0, &b.0))
            .expect("at least one bin count is feasible")
    }

    fn backtrack_layer(&self, bins: usize) -> Vec<usize> {
        let mut starts = Vec::with_capacity(bins);
        let mut r = self.weighted_seq.len();
        for k in (1..=bins).rev() {
            r = self.layered[k - 1].1[r];
            starts.push(r);
        }
        starts.reverse();
        starts
    }
}

/// Index of the first value within the tie tolerance of the maximum.
fn argmax_first(values: &[f64]) -> usize {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = tie_tolerance(max);
    values.iter().position(|&v| v >= max - tol).unwrap_or(0)
}

/// MAP partition of a (smoothed) histogram.
///
/// Runs in O(m²) over the m distinct counts when `α >= m`, and O(α·m²)
/// otherwise. Among tied optima the partition whose last bin starts earliest
/// wins, applied recursively.
pub fn optimal_bins(
    hist: &CountHistogram,
    prior: &PriorConfig,
    model: BinLikelihoodModel,
) -> Result<BinFit, BinningError> {
    let table = DpTable::build(hist, prior, model)?;
    let (starts, score) = table.backtrack();
    Ok(BinFit {
        edges: edges_from_starts(table.weighted_seq.counts(), &starts),
        starts,
        log_posterior: score + prior.log_normalizer(),
    })
}
