//! `lossforge compare`: train GANs for several losses across a seed block
//! and tabulate final Fréchet distance plus mode coverage per loss.

use std::path::PathBuf;

use clap::Args;
use lossforge_core::gan::{train_gan, GanConfig, TrainOutcome};
use lossforge_core::losses::LossFunction;
use rayon::prelude::*;

use crate::config::load_settings;
use crate::emit::{f64_text, write_atomic};
use crate::manifest::Manifest;
use crate::{io_error, CliError, CliResult};

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Comma-separated loss names or .sexp files
    #[arg(long, value_name = "LIST")]
    pub losses: String,

    /// Training runs per loss
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,

    /// Base seed; every loss trains on seed .. seed+seeds-1
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Run directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// key=value config file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Extra key=value override (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// (final Fréchet distance, covered-mode fraction); degenerate or failed
/// runs count as infinitely bad with zero coverage.
fn run_once(cfg: &GanConfig, loss: &LossFunction) -> (f64, f64) {
    match train_gan(cfg, loss) {
        Ok(trained) => match trained.outcome {
            TrainOutcome::Completed => match trained.history.last() {
                Some(p) => (
                    p.frechet,
                    p.covered_modes as f64 / p.total_modes.max(1) as f64,
                ),
                None => (f64::INFINITY, 0.0),
            },
            TrainOutcome::Degenerate { .. } => (f64::INFINITY, 0.0),
        },
        Err(_) => (f64::INFINITY, 0.0),
    }
}

pub fn run(args: CompareArgs) -> CliResult<()> {
    let names: Vec<&str> = args
        .losses
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if names.is_empty() {
        return Err(CliError::Config(
            "--losses needs at least one loss name or .sexp file".into(),
        ));
    }
    if args.seeds == 0 {
        return Err(CliError::Config("--seeds must be at least 1".into()));
    }
    let settings = load_settings(args.config.as_deref(), &args.set)?;
    let losses: Vec<LossFunction> = names
        .iter()
        .map(|n| super::resolve_loss(n))
        .collect::<CliResult<_>>()?;
    settings.gan_config(args.seed)?;

    super::create_out_dir(&args.out)?;
    let manifest = Manifest::start(&args.out, "compare", args.seed, settings.key_values())?;

    let jobs: Vec<(usize, u64)> = (0..losses.len())
        .flat_map(|li| (0..args.seeds).map(move |si| (li, si as u64)))
        .collect();
    let results: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(li, si)| {
            let cfg = settings
                .gan_config(args.seed.wrapping_add(si))
                .expect("validated above");
            run_once(&cfg, &losses[li])
        })
        .collect();

    let mut csv = String::from("loss,best,worst,mean,std,coverage\n");
    for (li, name) in names.iter().enumerate() {
        let rows: Vec<(f64, f64)> = jobs
            .iter()
            .zip(&results)
            .filter(|((l, _), _)| *l == li)
            .map(|(_, r)| *r)
            .collect();
        let fds: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let best = fds.iter().cloned().fold(f64::INFINITY, f64::min);
        let worst = fds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = fds.iter().sum::<f64>() / fds.len() as f64;
        let std = (fds.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / fds.len() as f64)
            .sqrt();
        let coverage = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            name,
            f64_text(best),
            f64_text(worst),
            f64_text(mean),
            f64_text(std),
            f64_text(coverage)
        ));
    }

    let summary_path = args.out.join("summary.csv");
    write_atomic(&summary_path, &csv).map_err(|e| io_error("cannot write", &summary_path, e))?;
    manifest.finalize(&["summary.csv"])
}
