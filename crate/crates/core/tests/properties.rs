use crowdbin::binning::{
    brute_force_bins, optimal_bins, partition_log_posterior, smooth, BinLikelihoodModel,
    PriorConfig,
};
use crowdbin::loss::{bin_loss, LossConfig};
use crowdbin::metrics::{
    default_thetas, game, global_stats, per_bin_stats, point_totals, pooled_stats, tper_curve,
    StdConvention, TperOptions,
};
use crowdbin::sampling::{schedule, Scheme};
use crowdbin::{Bin, BinSpec, CountHistogram, CountRecord, PointAnnotatedRecord, PredictionRecord};
use proptest::prelude::*;

fn histogram(max_distinct: usize) -> impl Strategy<Value = CountHistogram> {
    prop::collection::btree_map(0u64..60, 1u64..50, 1..=max_distinct)
        .prop_map(|m| CountHistogram::from_entries(m.into_iter().collect()).unwrap())
}

fn model() -> impl Strategy<Value = BinLikelihoodModel> {
    prop_oneof![
        Just(BinLikelihoodModel::Multinomial),
        Just(BinLikelihoodModel::Poisson)
    ]
}

/// Contiguous bins from 0 to `max` with the given interior cut points.
fn bins_from_cuts(mut cuts: Vec<u64>, max: u64) -> BinSpec {
    cuts.retain(|&c| c > 0 && c <= max);
    cuts.sort_unstable();
    cuts.dedup();
    let mut lo = 0;
    let mut edges = Vec::new();
    for c in cuts {
        edges.push(Bin::new(lo, c - 1));
        lo = c;
    }
    edges.push(Bin::new(lo, max));
    BinSpec::from_edges(edges).unwrap()
}

fn bin_spec() -> impl Strategy<Value = BinSpec> {
    (10u64..300, prop::collection::vec(1u64..300, 0..6))
        .prop_map(|(max, cuts)| bins_from_cuts(cuts, max))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dp_agrees_with_enumeration(hist in histogram(10), gamma in 0.05f64..0.95, m in model()) {
        let prior = PriorConfig::new(gamma, hist.distinct()).unwrap();
        let dp = optimal_bins(&hist, &prior, m).unwrap();
        let bf = brute_force_bins(&hist, &prior, m).unwrap();
        prop_assert!((dp.log_posterior - bf.log_posterior).abs() <= 1e-9);
        prop_assert_eq!(dp.edges, bf.edges);
    }

    #[test]
    fn constrained_dp_agrees_with_enumeration(hist in histogram(9), alpha in 1usize..4, m in model()) {
        let prior = PriorConfig::new(0.5, alpha).unwrap();
        let dp = optimal_bins(&hist, &prior, m).unwrap();
        let bf = brute_force_bins(&hist, &prior, m).unwrap();
        prop_assert!(dp.num_bins() <= alpha);
        prop_assert!((dp.log_posterior - bf.log_posterior).abs() <= 1e-9);
        prop_assert_eq!(dp.edges, bf.edges);
    }

    #[test]
    fn map_score_matches_recomputed_posterior(hist in histogram(30), gamma in 0.05f64..0.95, m in model()) {
        let hist = smooth(&hist, 1);
        let prior = PriorConfig::new(gamma, hist.distinct()).unwrap();
        let fit = optimal_bins(&hist, &prior, m).unwrap();
        let again = partition_log_posterior(&hist, &fit.edges, &prior, m);
        prop_assert!((fit.log_posterior - again).abs() <= 1e-9 * (1.0 + again.abs()));
        let width: u64 = fit.edges.iter().map(Bin::width).sum();
        prop_assert_eq!(width, hist.max_count() + 1);
    }

    #[test]
    fn expand_round_trips(hist in histogram(20)) {
        let expanded = hist.expand();
        prop_assert_eq!(expanded.len() as u64, hist.total());
        prop_assert_eq!(CountHistogram::from_counts(expanded).unwrap(), hist);
    }

    #[test]
    fn histogram_ignores_order(mut counts in prop::collection::vec(0u64..100, 1..200), seed in any::<u64>()) {
        let a = CountHistogram::from_counts(counts.iter().copied()).unwrap();
        let shift = (seed % counts.len() as u64) as usize;
        counts.rotate_left(shift);
        counts.reverse();
        prop_assert_eq!(CountHistogram::from_counts(counts).unwrap(), a);
    }

    #[test]
    fn smoothing_fills_the_range(hist in histogram(20), beta in 0u64..4) {
        let s = smooth(&hist, beta);
        for c in 0..=hist.max_count() {
            prop_assert_eq!(s.frequency(c), hist.frequency(c) + beta);
        }
        prop_assert_eq!(s.total(), hist.total() + beta * (hist.max_count() + 1));
    }

    #[test]
    fn assign_bin_is_monotone(bins in bin_spec(), a in 0u64..400, b in 0u64..400) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(bins.assign_bin(lo) <= bins.assign_bin(hi));
        let k = bins.assign_bin(lo);
        prop_assert!(bins.bin(k).contains(lo) || lo > bins.max_count());
    }

    #[test]
    fn schedules_are_permutations(
        counts in prop::collection::vec(0u64..300, 1..150),
        bins in bin_spec(),
        seed in any::<u64>(),
        batch in 1usize..17,
    ) {
        let records: Vec<CountRecord> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| CountRecord::new(format!("img{i}"), c))
            .collect();
        for scheme in [Scheme::Rr, Scheme::Rs] {
            let s = schedule(scheme, &records, &bins, batch, 0, seed).unwrap();
            let mut ids: Vec<&str> = s.steps.iter().map(|x| x.image_id.as_str()).collect();
            ids.sort_unstable();
            let mut expected: Vec<&str> = records.iter().map(|r| r.image_id.as_str()).collect();
            expected.sort_unstable();
            prop_assert_eq!(ids, expected);
        }
        let rr = schedule(Scheme::Rr, &records, &bins, batch, 0, seed).unwrap();
        let mut sizes = vec![0usize; bins.len()];
        for r in &records {
            sizes[bins.assign_bin(r.count)] += 1;
        }
        let mut seen = vec![0usize; bins.len()];
        for step in &rr.steps {
            seen[step.bin_index] += 1;
            let active: Vec<usize> = (0..bins.len())
                .filter(|&b| sizes[b] > 0 && seen[b] < sizes[b])
                .map(|b| seen[b])
                .collect();
            // bins still holding samples differ by at most one emission
            if let (Some(min), Some(max)) = (active.iter().min(), active.iter().max()) {
                prop_assert!(max - min <= 1);
            }
        }
    }

    #[test]
    fn bin_loss_is_bounded_by_absolute_error(bins in bin_spec(), y in 0u64..300, y_hat in 0.0f64..400.0) {
        let cfg = LossConfig::default();
        let l = bin_loss(y, y_hat, &bins, &cfg);
        let err = (y as f64 - y_hat).abs();
        prop_assert!(l >= 0.0 && l <= err + 1e-12);
        if !bins.bin(bins.assign_bin(y)).contains_real(y_hat) {
            prop_assert_eq!(l, err);
        }
    }

    #[test]
    fn pooling_one_bin_equals_global(
        pairs in prop::collection::vec((0u64..500, 0.0f64..600.0), 1..100)
    ) {
        let preds: Vec<PredictionRecord> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(y, p))| PredictionRecord::new(format!("p{i}"), y, p))
            .collect();
        let one = BinSpec::from_edges(vec![Bin::new(0, 500)]).unwrap();
        let pooled = pooled_stats(&per_bin_stats(&preds, &one, StdConvention::Population)).unwrap();
        let global = global_stats(&preds, StdConvention::Population).unwrap();
        prop_assert!((pooled.mu_pool - global.mae).abs() <= 1e-12 * (1.0 + global.mae));
        prop_assert!((pooled.sigma_pool - global.std).abs() <= 1e-12 * (1.0 + global.std));
    }

    #[test]
    fn tper_is_non_increasing(
        pairs in prop::collection::vec((0u64..500, 0.0f64..600.0), 1..100),
        skip in any::<bool>(),
    ) {
        let preds: Vec<PredictionRecord> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(y, p))| PredictionRecord::new(format!("p{i}"), y, p))
            .collect();
        let curve = tper_curve(&preds, &default_thetas(), TperOptions { skip_exact: skip }).unwrap();
        prop_assert!(curve.values.windows(2).all(|w| w[1] <= w[0]));
        if !skip {
            prop_assert_eq!(curve.values[0], 1.0);
        }
        prop_assert!((0.0..=1.0).contains(&curve.auc_normalized));
    }

    #[test]
    fn game_grows_with_level(
        gt in prop::collection::vec((0.0f64..64.0, 0.0f64..48.0), 0..40),
        pred in prop::collection::vec((0.0f64..64.0, 0.0f64..48.0), 0..40),
    ) {
        let rec = PointAnnotatedRecord {
            image_id: "img".into(),
            width: 64.0,
            height: 48.0,
            gt_points: gt.iter().map(|&(x, y)| [x, y]).collect(),
            pred_points: pred.iter().map(|&(x, y)| [x, y]).collect(),
        };
        let recs = [rec];
        let values: Vec<f64> = (0..=4).map(|l| game(&recs, l, false).unwrap().value).collect();
        prop_assert!(values.windows(2).all(|w| w[1] >= w[0]));
        let mae = global_stats(&point_totals(&recs), StdConvention::Population).unwrap().mae;
        prop_assert_eq!(values[0], mae);
    }
}
