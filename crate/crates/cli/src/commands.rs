use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crowdbin::binning::{
    grid_search_gamma, optimal_bins, smooth, BinLikelihoodModel, GridSearchConfig, HeldOutConfig,
    HeldOutProbabilities, PriorConfig,
};
use crowdbin::data::{load_counts, load_points, load_predictions};
use crowdbin::loss::{batch_bin_loss, bin_losses, LossConfig, Reduction};
use crowdbin::metrics::{
    game, tper_curve, write_tper_csv, EvalOptions, EvalReport, StdConvention, TperOptions,
};
use crowdbin::sampling::{check_range, schedule, write_schedule_csv, Scheme};
use crowdbin::{BinSpec, CountHistogram, Format};

use crate::output::{sidecar_path, Outputs};
use crate::{
    BinsCommand, BinsFitArgs, Cli, Command, EvalArgs, FormatArg, GameArgs, HeldOutArg, LossArgs,
    ModelArg, ReductionArg, ScheduleArgs, SchemeArg, TperArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let written = match &cli.command {
        Command::Bins(BinsCommand::Fit(args)) => bins_fit(args, seed)?,
        Command::Schedule(args) => run_schedule(args, seed)?,
        Command::Loss(args) => run_loss(args, seed)?,
        Command::Eval(args) => run_eval(args, seed)?,
        Command::Tper(args) => run_tper(args, seed)?,
        Command::Game(args) => run_game(args, seed)?,
    };
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

/// Resolved configuration echoed into every artifact.
fn run_config<T: Serialize>(command: &str, seed: u64, args: &T) -> Result<Value> {
    Ok(json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "args": serde_json::to_value(args)?,
    }))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn format_for(path: &Path, explicit: Option<FormatArg>) -> Format {
    match explicit {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Jsonl) => Format::Jsonl,
        None => Format::from_path(path),
    }
}

fn read_bins(path: &Path) -> Result<BinSpec> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    BinSpec::from_json(&text).with_context(|| format!("invalid bins file {}", path.display()))
}

fn model(m: ModelArg) -> BinLikelihoodModel {
    match m {
        ModelArg::Multinomial => BinLikelihoodModel::Multinomial,
        ModelArg::Poisson => BinLikelihoodModel::Poisson,
    }
}

fn bins_fit(args: &BinsFitArgs, seed: u64) -> Result<Vec<std::path::PathBuf>> {
    let records = load_counts(open(&args.counts)?, format_for(&args.counts, args.format))
        .with_context(|| format!("cannot load counts from {}", args.counts.display()))?;
    let hist = CountHistogram::from_records(&records)?;
    let model = model(args.model);

    let (fit, prior, search) = if args.grid_search {
        let counts: Vec<u64> = records.iter().map(|r| r.count).collect();
        let cfg = GridSearchConfig {
            gammas: args.gammas.clone(),
            ratios: args.ratios.clone(),
            seeds: args.repeats,
            base_seed: seed,
            held_out: HeldOutConfig {
                beta: args.beta,
                alpha: args.alpha,
                model,
                probabilities: match args.held_out_probs {
                    HeldOutArg::Test => HeldOutProbabilities::Test,
                    HeldOutArg::Train => HeldOutProbabilities::Train,
                },
            },
        };
        let res = grid_search_gamma(&counts, &cfg).context("grid search failed")?;
        let search = json!({
            "best_gamma": res.best_gamma,
            "gammas": cfg.gammas,
            "ratios": cfg.ratios,
            "mean_likelihood": res.mean_likelihood,
            "index_sums": res.ranking.index_sums,
        });
        (res.fit, res.prior, Some(search))
    } else {
        let smoothed = smooth(&hist, args.beta);
        let prior = PriorConfig::new(args.gamma, args.alpha.unwrap_or(smoothed.distinct()))?;
        (optimal_bins(&smoothed, &prior, model)?, prior, None)
    };

    let mut spec = fit.to_bin_spec(&prior, args.beta);
    spec.meta.dataset_id = args.dataset_id.clone();
    spec.meta.fitted_at =
        Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    spec.meta.seed = Some(seed);
    let extra = &mut spec.meta.extra;
    extra.insert("config".into(), run_config("bins fit", seed, args)?);
    extra.insert("model".into(), serde_json::to_value(model)?);
    extra.insert("log_posterior".into(), json!(fit.log_posterior));
    extra.insert("n_records".into(), json!(hist.total()));
    if let Some(s) = search {
        extra.insert("grid_search".into(), s);
    }

    let mut out = Outputs::new();
    out.stage_with(&args.out, |w| writeln!(w, "{}", spec.to_json_pretty()))?;
    out.commit()
}

fn run_schedule(args: &ScheduleArgs, seed: u64) -> Result<Vec<std::path::PathBuf>> {
    let records = load_counts(open(&args.counts)?, format_for(&args.counts, args.format))
        .with_context(|| format!("cannot load counts from {}", args.counts.display()))?;
    let bins = read_bins(&args.bins)?;
    if args.strict_range {
        check_range(&records, &bins)?;
    }
    let scheme = match args.scheme {
        SchemeArg::Rr => Scheme::Rr,
        SchemeArg::Rs => Scheme::Rs,
    };
    let schedules = (0..args.epochs)
        .map(|epoch| schedule(scheme, &records, &bins, args.batch_size, epoch, seed))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Outputs::new();
    out.stage_with(&args.out, |w| write_schedule_csv(w, &schedules))?;
    out.stage_json(
        &sidecar_path(&args.out),
        &json!({ "config": run_config("schedule", seed, args)?, "bins": bins.edges() }),
    )?;
    out.commit()
}

fn run_loss(args: &LossArgs, seed: u64) -> Result<Vec<std::path::PathBuf>> {
    let preds = load_predictions(
        open(&args.predictions)?,
        format_for(&args.predictions, args.format),
    )
    .with_context(|| {
        format!(
            "cannot load predictions from {}",
            args.predictions.display()
        )
    })?;
    let bins = read_bins(&args.bins)?;
    let cfg = LossConfig {
        lambda1: args.lambda1,
        lambda2: args.lambda2,
    };
    let reduction = match args.reduction {
        ReductionArg::Mean => Reduction::Mean,
        ReductionArg::Sum => Reduction::Sum,
    };
    let losses = bin_losses(&preds, &bins, &cfg);
    let reduced = batch_bin_loss(&preds, &bins, &cfg, reduction);

    let mut out = Outputs::new();
    out.stage_with(&args.out, |w| {
        writeln!(w, "image_id,gt_count,pred_count,bin_index,bin_loss")?;
        for (p, l) in preds.iter().zip(&losses) {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.image_id,
                p.gt_count,
                p.pred_count,
                bins.assign_bin(p.gt_count),
                l
            )?;
        }
        Ok(())
    })?;
    out.stage_json(
        &sidecar_path(&args.out),
        &json!({
            "config": run_config("loss", seed, args)?,
            "reduction": reduction,
            "bin_loss": reduced,
            "weighted_bin_loss": cfg.lambda2 * reduced,
        }),
    )?;
    let written = out.commit()?;
    println!("{reduced}");
    Ok(written)
}

fn tper_options(skip_exact: bool) -> TperOptions {
    TperOptions { skip_exact }
}

fn run_eval(args: &EvalArgs, seed: u64) -> Result<Vec<std::path::PathBuf>> {
    let preds = load_predictions(
        open(&args.predictions)?,
        format_for(&args.predictions, args.format),
    )
    .with_context(|| {
        format!(
            "cannot load predictions from {}",
            args.predictions.display()
        )
    })?;
    let bins = read_bins(&args.bins)?;
    let points = match &args.points {
        Some(p) => Some(
            load_points(open(p)?)
                .with_context(|| format!("cannot load points from {}", p.display()))?,
        ),
        None => None,
    };
    let opts = EvalOptions {
        thetas: args.tper.thetas.clone(),
        tper: tper_options(args.tper.tper_skip_exact),
        std: if args.sample_std {
            StdConvention::Sample
        } else {
            StdConvention::Population
        },
        game_levels: args.game_levels.clone(),
    };
    let mut report = EvalReport::build(&preds, &bins, points.as_deref(), &opts)?;
    report.config = run_config("eval", seed, args)?;

    let mut out = Outputs::new();
    out.stage_json(&args.out, &report)?;
    if let Some(path) = &args.tper_csv {
        out.stage_with(path, |w| write_tper_csv(w, &report.tper))?;
    }
    out.commit()
}

fn run_tper(args: &TperArgs, seed: u64) -> Result<Vec<std::path::PathBuf>> {
    let preds = load_predictions(
        open(&args.predictions)?,
        format_for(&args.predictions, args.format),
    )
    .with_context(|| {
        format!(
            "cannot load predictions from {}",
            args.predictions.display()
        )
    })?;
    let curve = tper_curve(
        &preds,
        &args.tper.thetas,
        tper_options(args.tper.tper_skip_exact),
    )?;

    let mut out = Outputs::new();
    out.stage_with(&args.out, |w| write_tper_csv(w, &curve))?;
    out.stage_json(
        &sidecar_path(&args.out),
        &json!({
            "config": run_config("tper", seed, args)?,
            "auc_normalized": curve.auc_normalized,
            "auc_raw": curve.auc_raw,
            "t": curve.t,
        }),
    )?;
    out.commit()
}

fn run_game(args: &GameArgs, seed: u64) -> Result<Vec<std::path::PathBuf>> {
    let points = load_points(open(&args.points)?)
        .with_context(|| format!("cannot load points from {}", args.points.display()))?;
    if args.levels.is_empty() {
        bail!("no GAME levels requested");
    }
    let results = args
        .levels
        .iter()
        .map(|&l| game(&points, l, args.per_image))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = Outputs::new();
    out.stage_json(
        &args.out,
        &json!({ "config": run_config("game", seed, args)?, "game": results }),
    )?;
    out.commit()
}
