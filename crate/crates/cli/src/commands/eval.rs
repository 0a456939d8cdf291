//! `lossforge eval`: score one loss function across repeated GAN trainings.
//!
//! Run `i` of `--runs` trains with seed `--seed + i`; the report aggregates
//! final Fréchet distances the same way search fitness does (mean plus
//! weighted spread, degenerate runs scored as infinite). The JSON report goes
//! to stdout, and into `eval.json` when `--out` is given.

use std::path::PathBuf;

use clap::Args;
use lossforge_core::gan::{train_gan, GanConfig, TrainOutcome};
use lossforge_core::genetics::FitnessRecord;
use lossforge_core::losses::LossFunction;
use rayon::prelude::*;

use crate::config::load_settings;
use crate::emit::{f64_json, json_str, write_atomic};
use crate::manifest::Manifest;
use crate::{io_error, CliError, CliResult};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Built-in loss name or .sexp file
    #[arg(long)]
    pub loss: String,

    /// Independent training runs
    #[arg(long, default_value_t = 5)]
    pub runs: usize,

    /// Base seed; run i trains with seed + i
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Optional run directory for eval.json and the manifest
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// key=value config file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Extra key=value override (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Final Fréchet distance of one training run, infinite when it degenerates.
pub fn score_run(cfg: &GanConfig, loss: &LossFunction) -> f64 {
    match train_gan(cfg, loss) {
        Ok(trained) => match trained.outcome {
            TrainOutcome::Completed => trained.final_frechet().unwrap_or(f64::INFINITY),
            TrainOutcome::Degenerate { .. } => f64::INFINITY,
        },
        Err(_) => f64::INFINITY,
    }
}

pub fn run(args: EvalArgs) -> CliResult<()> {
    if args.runs == 0 {
        return Err(CliError::Config("--runs must be at least 1".into()));
    }
    let settings = load_settings(args.config.as_deref(), &args.set)?;
    let loss = super::resolve_loss(&args.loss)?;
    settings.gan_config(args.seed)?;

    let manifest = match &args.out {
        Some(dir) => {
            super::create_out_dir(dir)?;
            Some(Manifest::start(dir, "eval", args.seed, settings.key_values())?)
        }
        None => None,
    };

    let seeds: Vec<u64> = (0..args.runs)
        .map(|i| args.seed.wrapping_add(i as u64))
        .collect();
    let fds: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = settings.gan_config(seed).expect("validated above");
            score_run(&cfg, &loss)
        })
        .collect();

    let record = FitnessRecord::from_runs(fds.clone(), settings.std_weight);
    let per_run: Vec<String> = seeds
        .iter()
        .zip(&fds)
        .enumerate()
        .map(|(i, (seed, fd))| format!("{{\"run\":{i},\"seed\":{seed},\"fd\":{}}}", f64_json(*fd)))
        .collect();
    let report = format!(
        "{{\"loss\":{},\"runs\":{},\"seed\":{},\"mean_fd\":{},\"std_fd\":{},\"scalar\":{},\"per_run\":[{}]}}\n",
        json_str(loss.name()),
        args.runs,
        args.seed,
        f64_json(record.mean),
        f64_json(record.std),
        f64_json(record.scalar),
        per_run.join(",")
    );
    print!("{report}");

    if let (Some(manifest), Some(dir)) = (manifest, &args.out) {
        let path = dir.join("eval.json");
        write_atomic(&path, &report).map_err(|e| io_error("cannot write", &path, e))?;
        manifest.finalize(&["eval.json"])?;
    }
    Ok(())
}
