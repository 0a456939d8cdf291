//! `lossforge train`: one GAN training run with full history, generator
//! samples, and a summary JSON (also echoed to stdout).

use std::path::PathBuf;

use clap::Args;
use lossforge_core::derive_seed;
use lossforge_core::gan::{train_gan, LossTarget, TrainOutcome};

use crate::config::load_settings;
use crate::emit::{f64_json, f64_text, json_str, write_atomic};
use crate::manifest::Manifest;
use crate::{io_error, CliError, CliResult};

/// Stream tag for the post-training sample dump.
const SAMPLE_STREAM: u64 = 0x73616d70;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum LossOnArg {
    Both,
    Gen,
    Disc,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Built-in loss name or .sexp file
    #[arg(long)]
    pub loss: String,

    /// Which player trains on the loss (the other falls back to BCE);
    /// overrides gan.loss_on
    #[arg(long, value_enum)]
    pub loss_on: Option<LossOnArg>,

    /// Training seed
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

pub fn run(args: TrainArgs) -> CliResult<()> {
    let mut settings = load_settings(args.config.as_deref(), &args.set)?;
    if let Some(on) = args.loss_on {
        settings.loss_on = match on {
            LossOnArg::Both => LossTarget::Both,
            LossOnArg::Gen => LossTarget::Generator,
            LossOnArg::Disc => LossTarget::Discriminator,
        };
    }
    let loss = super::resolve_loss(&args.loss)?;
    let cfg = settings.gan_config(args.seed)?;

    super::create_out_dir(&args.out)?;
    let manifest = Manifest::start(&args.out, "train", args.seed, settings.key_values())?;

    let trained = train_gan(&cfg, &loss).map_err(|e| CliError::Config(e.to_string()))?;

    let mut history = String::from("step,frechet,disc_accuracy,covered_modes,total_modes\n");
    for p in &trained.history {
        history.push_str(&format!(
            "{},{},{},{},{}\n",
            p.step,
            f64_text(p.frechet),
            f64_text(p.disc_accuracy),
            p.covered_modes,
            p.total_modes
        ));
    }
    let history_path = args.out.join("history.csv");
    write_atomic(&history_path, &history)
        .map_err(|e| io_error("cannot write", &history_path, e))?;

    let points = trained.sample(cfg.eval_samples, derive_seed(cfg.seed, SAMPLE_STREAM));
    let mut samples = String::from("x,y\n");
    for p in &points {
        samples.push_str(&format!("{},{}\n", f64_text(p[0]), f64_text(p[1])));
    }
    let samples_path = args.out.join("samples.csv");
    write_atomic(&samples_path, &samples)
        .map_err(|e| io_error("cannot write", &samples_path, e))?;

    let (outcome, degenerate_step) = match trained.outcome {
        TrainOutcome::Completed => ("completed", None),
        TrainOutcome::Degenerate { step } => ("degenerate", Some(step)),
    };
    let last = trained.history.last();
    let opt = |v: Option<String>| v.unwrap_or_else(|| "null".to_string());
    let summary = format!(
        "{{\"loss\":{},\"loss_on\":{},\"seed\":{},\"steps\":{},\"outcome\":{},\"degenerate_step\":{},\"final_frechet\":{},\"final_disc_accuracy\":{},\"covered_modes\":{},\"total_modes\":{}}}\n",
        json_str(loss.name()),
        json_str(match cfg.loss_on {
            LossTarget::Both => "both",
            LossTarget::Generator => "gen",
            LossTarget::Discriminator => "disc",
        }),
        args.seed,
        cfg.steps,
        json_str(outcome),
        opt(degenerate_step.map(|s| s.to_string())),
        opt(last.map(|p| f64_json(p.frechet))),
        opt(last.map(|p| f64_json(p.disc_accuracy))),
        opt(last.map(|p| p.covered_modes.to_string())),
        opt(last.map(|p| p.total_modes.to_string())),
    );
    let summary_path = args.out.join("summary.json");
    write_atomic(&summary_path, &summary)
        .map_err(|e| io_error("cannot write", &summary_path, e))?;
    print!("{summary}");

    manifest.finalize(&["history.csv", "samples.csv", "summary.json"])
}
