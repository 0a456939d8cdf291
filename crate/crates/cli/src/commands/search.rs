//! `lossforge search`: evolve loss expressions with genetic programming.
//!
//! A run directory holds the resolved `config.txt`, one JSONL line per
//! generation in `history.jsonl`, a `checkpoint.json` rewritten after every
//! generation, and the winner in `best.sexp`. `--resume` picks the run back
//! up from the checkpoint, so raising `gp.generations` in `config.txt` and
//! resuming continues the exact same trajectory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use lossforge_core::expr::ExprTree;
use lossforge_core::gan::GanEvaluator;
use lossforge_core::genetics::{
    FitnessEvaluator, FitnessRecord, GenerationStats, GpState, Individual, ProxyEvaluator,
};

use crate::config::Settings;
use crate::emit::{f64_from_json, f64_json, json_str, write_atomic};
use crate::manifest::Manifest;
use crate::parallel::ParallelEvaluator;
use crate::{io_error, CliError, CliResult};

#[derive(Args, Debug)]
pub struct SearchArgs {
    /// Preset search configuration (1 through 8)
    #[arg(long, value_name = "ID", conflicts_with = "config")]
    pub config_id: Option<usize>,

    /// key=value config file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override gp.seed
    #[arg(long)]
    pub seed: Option<u64>,

    /// Run directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,

    /// Target expression file; fitness becomes the mean squared error
    /// against it on a fixed grid instead of GAN training
    #[arg(long, value_name = "FILE")]
    pub proxy_fitness: Option<PathBuf>,

    /// Extra key=value override, applied after --config (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Continue from the run directory's checkpoint
    #[arg(long)]
    pub resume: bool,
}

type Checkpoint = (usize, Vec<Individual>, Vec<ExprTree>, Individual);

pub fn run(args: SearchArgs) -> CliResult<()> {
    super::create_out_dir(&args.out)?;
    let config_path = args.out.join("config.txt");
    let checkpoint_path = args.out.join("checkpoint.json");
    let history_path = args.out.join("history.jsonl");
    let best_path = args.out.join("best.sexp");

    let (settings, resume_from) = if args.resume {
        if args.config_id.is_some()
            || args.config.is_some()
            || args.seed.is_some()
            || args.proxy_fitness.is_some()
            || !args.set.is_empty()
        {
            return Err(CliError::Config(
                "--resume reuses the run's config.txt; drop the other configuration flags".into(),
            ));
        }
        let text = fs::read_to_string(&config_path).map_err(|e| {
            CliError::Config(format!("cannot read {}: {e}", config_path.display()))
        })?;
        let mut settings = Settings::default();
        settings.apply_text(&text)?;
        let checkpoint = fs::read_to_string(&checkpoint_path).map_err(|e| {
            CliError::Config(format!("cannot read {}: {e}", checkpoint_path.display()))
        })?;
        (settings, Some(parse_checkpoint(&checkpoint)?))
    } else {
        let mut settings = Settings::default();
        match (args.config_id, &args.config) {
            (Some(id), None) => settings.apply_preset(id)?,
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                settings.apply_text(&text)?;
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "pass either --config-id or --config, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "a configuration source is required: --config-id 1..8 or --config FILE".into(),
                ))
            }
        }
        for kv in &args.set {
            settings.apply_line(kv).map_err(|e| match e {
                CliError::Config(msg) => CliError::Config(format!("--set {kv}: {msg}")),
                other => other,
            })?;
        }
        if let Some(seed) = args.seed {
            settings.seed = seed;
        }
        if let Some(path) = &args.proxy_fitness {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let tree = ExprTree::parse(text.trim())
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            settings.proxy_target = Some(tree.serialize());
        }
        (settings, None)
    };

    let gp_cfg = settings.gp_config()?;
    let evaluator: Box<dyn FitnessEvaluator> = match &settings.proxy_target {
        Some(sexp) => {
            let target = ExprTree::parse(sexp)
                .map_err(|e| CliError::Config(format!("gp.proxy_target: {e}")))?;
            Box::new(ParallelEvaluator::new(ProxyEvaluator::new(target)))
        }
        None => Box::new(ParallelEvaluator::new(GanEvaluator {
            config: settings.gan_config(settings.seed)?,
        })),
    };

    let manifest = Manifest::start(&args.out, "search", settings.seed, settings.key_values())?;
    write_atomic(&config_path, &settings.render())
        .map_err(|e| io_error("cannot write", &config_path, e))?;

    let mut state = match resume_from {
        Some((generation, population, archive, best)) => {
            GpState::from_checkpoint(gp_cfg, population, archive, generation, best, Vec::new())
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        None => GpState::new(gp_cfg, evaluator.as_ref())
            .map_err(|e| CliError::Config(e.to_string()))?,
    };

    let mut history = if args.resume {
        fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(&history_path)
    } else {
        fs::File::create(&history_path)
    }
    .map_err(|e| io_error("cannot open", &history_path, e))?;

    write_checkpoint(&checkpoint_path, &state)?;
    while !state.done() {
        let stats = state.step(evaluator.as_ref());
        history
            .write_all(history_line(&stats).as_bytes())
            .and_then(|_| history.flush())
            .map_err(|e| io_error("cannot write", &history_path, e))?;
        write_checkpoint(&checkpoint_path, &state)?;
    }
    drop(history);

    let best_text = format!("{}\n", state.best().tree.serialize());
    write_atomic(&best_path, &best_text).map_err(|e| io_error("cannot write", &best_path, e))?;

    manifest.finalize(&["best.sexp", "checkpoint.json", "config.txt", "history.jsonl"])
}

fn history_line(s: &GenerationStats) -> String {
    format!(
        "{{\"generation\":{},\"best_fitness\":{},\"mean_fitness\":{},\"best_expr\":{},\"archive_size\":{}}}\n",
        s.generation,
        f64_json(s.best_scalar),
        f64_json(s.mean_scalar),
        json_str(&s.best_expr),
        s.archive_size
    )
}

fn fitness_json(f: &FitnessRecord) -> String {
    let runs: Vec<String> = f.runs.iter().map(|v| f64_json(*v)).collect();
    format!(
        "{{\"mean\":{},\"std\":{},\"scalar\":{},\"runs\":[{}]}}",
        f64_json(f.mean),
        f64_json(f.std),
        f64_json(f.scalar),
        runs.join(",")
    )
}

fn individual_json(ind: &Individual) -> CliResult<String> {
    let fitness = ind.fitness.as_ref().ok_or_else(|| {
        CliError::Runtime("internal error: unevaluated individual in checkpoint".into())
    })?;
    Ok(format!(
        "{{\"expr\":{},\"birth\":{},\"fitness\":{}}}",
        json_str(&ind.tree.serialize()),
        ind.birth,
        fitness_json(fitness)
    ))
}

fn write_checkpoint(path: &Path, state: &GpState) -> CliResult<()> {
    let population: Vec<String> = state
        .population()
        .iter()
        .map(individual_json)
        .collect::<CliResult<_>>()?;
    let archive: Vec<String> = state
        .archive()
        .iter()
        .map(|t| json_str(&t.serialize()))
        .collect();
    let text = format!(
        "{{\"generation\":{},\"population\":[{}],\"archive\":[{}],\"best\":{}}}\n",
        state.generation(),
        population.join(","),
        archive.join(","),
        individual_json(state.best())?
    );
    write_atomic(path, &text).map_err(|e| io_error("cannot write", path, e))
}

fn malformed(msg: &str) -> CliError {
    CliError::Config(format!("checkpoint.json is malformed: {msg}"))
}

fn parse_individual(v: &serde_json::Value) -> CliResult<Individual> {
    let expr = v["expr"]
        .as_str()
        .ok_or_else(|| malformed("individual missing expr"))?;
    let tree = ExprTree::parse(expr).map_err(|e| malformed(&e.to_string()))?;
    let birth = v["birth"]
        .as_u64()
        .ok_or_else(|| malformed("individual missing birth"))? as usize;
    let f = &v["fitness"];
    let runs = f["runs"]
        .as_array()
        .ok_or_else(|| malformed("fitness missing runs"))?
        .iter()
        .map(|r| f64_from_json(r).ok_or_else(|| malformed("fitness runs must be numbers")))
        .collect::<CliResult<Vec<f64>>>()?;
    let fitness = FitnessRecord {
        mean: f64_from_json(&f["mean"]).ok_or_else(|| malformed("fitness missing mean"))?,
        std: f64_from_json(&f["std"]).ok_or_else(|| malformed("fitness missing std"))?,
        scalar: f64_from_json(&f["scalar"]).ok_or_else(|| malformed("fitness missing scalar"))?,
        runs,
    };
    Ok(Individual {
        tree,
        fitness: Some(fitness),
        birth,
    })
}

fn parse_checkpoint(text: &str) -> CliResult<Checkpoint> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| malformed(&e.to_string()))?;
    let generation = v["generation"]
        .as_u64()
        .ok_or_else(|| malformed("missing generation"))? as usize;
    let population = v["population"]
        .as_array()
        .ok_or_else(|| malformed("missing population"))?
        .iter()
        .map(parse_individual)
        .collect::<CliResult<Vec<_>>>()?;
    let archive = v["archive"]
        .as_array()
        .ok_or_else(|| malformed("missing archive"))?
        .iter()
        .map(|s| {
            let text = s
                .as_str()
                .ok_or_else(|| malformed("archive entries must be strings"))?;
            ExprTree::parse(text).map_err(|e| malformed(&e.to_string()))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let best = parse_individual(&v["best"])?;
    Ok((generation, population, archive, best))
}
