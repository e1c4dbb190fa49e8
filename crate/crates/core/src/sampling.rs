//! Balanced per-epoch minibatch schedules.
//!
//! Both schemes emit every training record exactly once per epoch, drawing
//! without replacement from per-bin pools:
//!
//! - round-robin visits bins cyclically starting at bin 0 and takes one random
//!   remaining sample from each non-exhausted bin;
//! - random-bin picks a uniformly random non-exhausted bin at every step.
//!
//! Randomness comes from ChaCha8 seeded with a SplitMix64 mix of `(seed, epoch)`,
//! so a schedule is reproducible on every platform. The emitted stream is cut
//! into consecutive batches of `batch_size`; batching never changes draw order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{BinSpec, CountRecord};
use crate::error::SamplingError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Round-robin over bins.
    Rr,
    /// Uniformly random non-empty bin per step.
    Rs,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rr" => Ok(Scheme::Rr),
            "rs" => Ok(Scheme::Rs),
            other => Err(format!("unknown scheme `{other}` (expected rr or rs)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub image_id: String,
    pub bin_index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub epoch: u64,
    pub steps: Vec<Step>,
    pub batch_size: usize,
    pub scheme: Scheme,
    pub seed: u64,
}

impl Schedule {
    pub fn batch_of(&self, step: usize) -> usize {
        step / self.batch_size
    }

    pub fn batches(&self) -> impl Iterator<Item = &[Step]> {
        self.steps.chunks(self.batch_size)
    }

    pub fn bin_sequence(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.bin_index).collect()
    }
}

pub const SCHEDULE_CSV_HEADER: &str = "epoch,step,batch,image_id,bin_index";

/// Write schedules as CSV with header `epoch,step,batch,image_id,bin_index`.
pub fn write_schedule_csv<W: Write>(out: W, schedules: &[Schedule]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCHEDULE_CSV_HEADER.split(','))?;
    for s in schedules {
        for (i, step) in s.steps.iter().enumerate() {
            w.write_record([
                s.epoch.to_string(),
                i.to_string(),
                s.batch_of(i).to_string(),
                step.image_id.clone(),
                step.bin_index.to_string(),
            ])?;
        }
    }
    w.flush()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Per-epoch stream seed.
pub fn stream_seed(seed: u64, epoch: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ epoch)
}

/// Reject records whose count lies above the last bin edge.
pub fn check_range(records: &[CountRecord], bins: &BinSpec) -> Result<(), SamplingError> {
    match records
        .iter()
        .find(|r| bins.assign_bin_strict(r.count).is_none())
    {
        Some(r) => Err(SamplingError::OutOfRange {
            id: r.image_id.clone(),
            count: r.count,
            max: bins.max_count(),
        }),
        None => Ok(()),
    }
}

struct Pools<'a> {
    records: &'a [CountRecord],
    pools: Vec<Vec<usize>>,
    remaining: usize,
    rng: ChaCha8Rng,
}

impl<'a> Pools<'a> {
    fn new(records: &'a [CountRecord], bins: &BinSpec, epoch: u64, seed: u64) -> Self {
        let mut pools = vec![Vec::new(); bins.len()];
        for (i, r) in records.iter().enumerate() {
            pools[bins.assign_bin(r.count)].push(i);
        }
        Self {
            records,
            pools,
            remaining: records.len(),
            rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, epoch)),
        }
    }

    fn draw(&mut self, bin: usize) -> Step {
        let pool = &mut self.pools[bin];
        let idx = self.rng.random_range(0..pool.len());
        let rec = pool.swap_remove(idx);
        self.remaining -= 1;
        Step {
            image_id: self.records[rec].image_id.clone(),
            bin_index: bin,
        }
    }
}

fn validate(records: &[CountRecord], batch_size: usize) -> Result<(), SamplingError> {
    if records.is_empty() {
        return Err(SamplingError::EmptyRecords);
    }
    if batch_size == 0 {
        return Err(SamplingError::ZeroBatchSize);
    }
    Ok(())
}

/// Round-robin schedule: cycle through bins in edge order, one random sample
/// per visit, skipping exhausted bins. Cycling continues across batch
/// boundaries.
pub fn schedule_rr(
    records: &[CountRecord],
    bins: &BinSpec,
    batch_size: usize,
    epoch: u64,
    seed: u64,
) -> Result<Schedule, SamplingError> {
    validate(records, batch_size)?;
    let mut pools = Pools::new(records, bins, epoch, seed);
    let mut steps = Vec::with_capacity(records.len());
    let mut bin = 0;
    while pools.remaining > 0 {
        if !pools.pools[bin].is_empty() {
            steps.push(pools.draw(bin));
        }
        bin = (bin + 1) % bins.len();
    }
    Ok(Schedule {
        epoch,
        steps,
        batch_size,
        scheme: Scheme::Rr,
        seed,
    })
}

/// Random-bin schedule: each step picks a uniformly random bin among those
/// with samples left, then a random sample from it.
pub fn schedule_rs(
    records: &[CountRecord],
    bins: &BinSpec,
    batch_size: usize,
    epoch: u64,
    seed: u64,
) -> Result<Schedule, SamplingError> {
    validate(records, batch_size)?;
    let mut pools = Pools::new(records, bins, epoch, seed);
    let mut active: Vec<usize> = (0..bins.len())
        .filter(|&b| !pools.pools[b].is_empty())
        .collect();
    let mut steps = Vec::with_capacity(records.len());
    while !active.is_empty() {
        let slot = pools.rng.random_range(0..active.len());
        let bin = active[slot];
        steps.push(pools.draw(bin));
        if pools.pools[bin].is_empty() {
            active.remove(slot);
        }
    }
    Ok(Schedule {
        epoch,
        steps,
        batch_size,
        scheme: Scheme::Rs,
        seed,
    })
}

pub fn schedule(
    scheme: Scheme,
    records: &[CountRecord],
    bins: &BinSpec,
    batch_size: usize,
    epoch: u64,
    seed: u64,
) -> Result<Schedule, SamplingError> {
    match scheme {
        Scheme::Rr => schedule_rr(records, bins, batch_size, epoch, seed),
        Scheme::Rs => schedule_rs(records, bins, batch_size, epoch, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Bin;

    fn bins(edges: &[[u64; 2]]) -> BinSpec {
        BinSpec::from_edges(edges.iter().map(|&e| Bin::from(e)).collect()).unwrap()
    }

    fn recs(items: &[(&str, u64)]) -> Vec<CountRecord> {
        items
            .iter()
            .map(|&(id, c)| CountRecord::new(id, c))
            .collect()
    }

    fn sorted_ids(s: &Schedule) -> Vec<String> {
        let mut v: Vec<String> = s.steps.iter().map(|x| x.image_id.clone()).collect();
        v.sort();
        v
    }

    #[test]
    fn rr_alternates_between_equal_bins() {
        let r = recs(&[("a1", 1), ("a2", 2), ("b1", 20), ("b2", 30)]);
        let s = schedule_rr(&r, &bins(&[[0, 10], [11, 50]]), 2, 0, 9).unwrap();
        assert_eq!(s.bin_sequence(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn rr_skips_exhausted_bins() {
        let r = recs(&[("a1", 1), ("a2", 2), ("a3", 3), ("b1", 20)]);
        let s = schedule_rr(&r, &bins(&[[0, 10], [11, 50]]), 4, 0, 1).unwrap();
        assert_eq!(s.bin_sequence(), vec![0, 1, 0, 0]);
    }

    #[test]
    fn rr_skips_empty_leading_bin() {
        let r = recs(&[("b1", 20), ("c1", 60)]);
        let s = schedule_rr(&r, &bins(&[[0, 10], [11, 50], [51, 99]]), 1, 0, 1).unwrap();
        assert_eq!(s.bin_sequence(), vec![1, 2]);
    }

    #[test]
    fn single_bin_is_seeded_shuffle() {
        let r: Vec<CountRecord> = (0..30)
            .map(|i| CountRecord::new(format!("i{i:02}"), i))
            .collect();
        let b = bins(&[[0, 100]]);
        for scheme in [Scheme::Rr, Scheme::Rs] {
            let s = schedule(scheme, &r, &b, 4, 0, 5).unwrap();
            let mut expected: Vec<String> = r.iter().map(|x| x.image_id.clone()).collect();
            expected.sort();
            assert_eq!(sorted_ids(&s), expected);
            let in_order: Vec<String> = r.iter().map(|x| x.image_id.clone()).collect();
            let got: Vec<String> = s.steps.iter().map(|x| x.image_id.clone()).collect();
            assert_ne!(got, in_order, "30 items should not come out in input order");
            assert_eq!(schedule(scheme, &r, &b, 4, 0, 5).unwrap(), s);
        }
    }

    #[test]
    fn epochs_and_seeds_change_order() {
        let r: Vec<CountRecord> = (0..40)
            .map(|i| CountRecord::new(format!("i{i}"), i % 13))
            .collect();
        let b = bins(&[[0, 3], [4, 8], [9, 12]]);
        let e0 = schedule_rs(&r, &b, 8, 0, 1).unwrap();
        let e1 = schedule_rs(&r, &b, 8, 1, 1).unwrap();
        let s2 = schedule_rs(&r, &b, 8, 0, 2).unwrap();
        assert_ne!(e0.steps, e1.steps);
        assert_ne!(e0.steps, s2.steps);
        assert_ne!(stream_seed(1, 0), stream_seed(1, 1));
    }

    #[test]
    fn counts_above_range_clamp_to_last_bin() {
        let r = recs(&[("a", 3), ("big", 999)]);
        let b = bins(&[[0, 10], [11, 50]]);
        let s = schedule_rr(&r, &b, 1, 0, 0).unwrap();
        let big = s.steps.iter().find(|x| x.image_id == "big").unwrap();
        assert_eq!(big.bin_index, 1);
        assert!(matches!(
            check_range(&r, &b),
            Err(SamplingError::OutOfRange {
                count: 999,
                max: 50,
                ..
            })
        ));
    }

    #[test]
    fn errors() {
        let b = bins(&[[0, 10]]);
        assert_eq!(
            schedule_rr(&[], &b, 1, 0, 0),
            Err(SamplingError::EmptyRecords)
        );
        assert_eq!(
            schedule_rs(&[], &b, 1, 0, 0),
            Err(SamplingError::EmptyRecords)
        );
        let r = recs(&[("a", 1)]);
        assert_eq!(
            schedule_rr(&r, &b, 0, 0, 0),
            Err(SamplingError::ZeroBatchSize)
        );
    }

    #[test]
    fn csv_batches_in_runs() {
        let r: Vec<CountRecord> = (0..10)
            .map(|i| CountRecord::new(format!("i{i}"), i))
            .collect();
        let s = schedule_rr(&r, &bins(&[[0, 4], [5, 9]]), 4, 3, 0).unwrap();
        let mut buf = Vec::new();
        write_schedule_csv(&mut buf, std::slice::from_ref(&s)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SCHEDULE_CSV_HEADER);
        let batches: Vec<&str> = lines[1..]
            .iter()
            .map(|l| l.split(',').nth(2).unwrap())
            .collect();
        assert_eq!(batches, ["0", "0", "0", "0", "1", "1", "1", "1", "2", "2"]);
        assert!(lines[1].starts_with("3,0,0,"));
        assert_eq!(
            s.batches().map(<[Step]>::len).collect::<Vec<_>>(),
            vec![4, 4, 2]
        );
    }
}
