//! Flat key=value configuration shared by every subcommand.
//!
//! Keys are prefixed by section (`gp.`, `gan.`, `data.`) and the same text
//! format is used for `--config` files, `--set` overrides, and the resolved
//! `config.txt` written into run directories. `render` emits keys in sorted
//! order with shortest round-trip floats, so resolved configs are stable
//! across runs and can be fed straight back in.

use std::fs;
use std::path::Path;

use lossforge_core::expr::{ExprTree, GenConstraints};
use lossforge_core::gan::{DatasetKind, DatasetSpec, GanConfig, LossTarget};
use lossforge_core::genetics::{GpConfig, Selection};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionKind {
    Tournament,
    NBest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Ring,
    Grid,
}

/// Every tunable the CLI accepts, with the same defaults as the core types.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    // gp.*
    pub n: usize,
    pub generations: usize,
    pub cr: f64,
    pub m_st: f64,
    pub m_n: f64,
    pub p_a: f64,
    pub cr_a: f64,
    pub selection: SelectionKind,
    pub k_t: usize,
    pub archive_capacity: usize,
    pub runs: usize,
    pub std_weight: f64,
    pub seed: u64,
    pub min_height: usize,
    pub max_size: usize,
    pub max_init_height: usize,
    pub const_low: f64,
    pub const_high: f64,
    pub epsilon: f64,
    /// Serialized target expression for proxy fitness; empty means GAN fitness.
    pub proxy_target: Option<String>,
    // gan.*
    pub latent_dim: usize,
    pub gen_layers: Vec<usize>,
    pub disc_layers: Vec<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub loss_on: LossTarget,
    pub eval_interval: usize,
    pub eval_samples: usize,
    pub coverage_radius: f64,
    // data.*
    pub kind: DataKind,
    pub modes: usize,
    pub radius: f64,
    pub grid_k: usize,
    pub spacing: f64,
    pub sigma: f64,
    pub n_samples: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let gp = GpConfig::default();
        let gan = GanConfig::default();
        let (modes, radius) = match gan.dataset.kind {
            DatasetKind::Ring { modes, radius } => (modes, radius),
            DatasetKind::Grid { .. } => (8, 2.0),
        };
        Settings {
            n: gp.population,
            generations: gp.generations,
            cr: gp.crossover_rate,
            m_st: gp.subtree_mutation_rate,
            m_n: gp.node_mutation_rate,
            p_a: gp.archive_admission,
            cr_a: gp.archive_crossover,
            selection: SelectionKind::Tournament,
            k_t: 3,
            archive_capacity: gp.archive_capacity,
            runs: gp.fitness_runs,
            std_weight: gp.std_weight,
            seed: gp.seed,
            min_height: gp.constraints.min_height,
            max_size: gp.constraints.max_size,
            max_init_height: gp.constraints.max_init_height,
            const_low: gp.constraints.const_low,
            const_high: gp.constraints.const_high,
            epsilon: gp.constraints.epsilon,
            proxy_target: None,
            latent_dim: gan.latent_dim,
            gen_layers: gan.gen_layers.clone(),
            disc_layers: gan.disc_layers.clone(),
            lr: gan.learning_rate,
            beta1: gan.beta1,
            beta2: gan.beta2,
            batch_size: gan.batch_size,
            steps: gan.steps,
            loss_on: gan.loss_on,
            eval_interval: gan.eval_interval,
            eval_samples: gan.eval_samples,
            coverage_radius: gan.coverage_radius,
            kind: DataKind::Ring,
            modes,
            radius,
            grid_k: 5,
            spacing: 2.0,
            sigma: gan.dataset.sigma,
            n_samples: gan.dataset.n_samples,
        }
    }
}

fn bad_value(key: &str, raw: &str, want: &str) -> CliError {
    CliError::Config(format!("config key `{key}` expects {want}, got `{raw}`"))
}

fn parse_usize(key: &str, raw: &str) -> CliResult<usize> {
    raw.parse()
        .map_err(|_| bad_value(key, raw, "a non-negative integer"))
}

fn parse_u64(key: &str, raw: &str) -> CliResult<u64> {
    raw.parse()
        .map_err(|_| bad_value(key, raw, "a non-negative integer"))
}

fn parse_f64(key: &str, raw: &str) -> CliResult<f64> {
    raw.parse().map_err(|_| bad_value(key, raw, "a number"))
}

fn parse_layers(key: &str, raw: &str) -> CliResult<Vec<usize>> {
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| bad_value(key, raw, "comma-separated layer widths"))
        })
        .collect()
}

fn layers_text(layers: &[usize]) -> String {
    let parts: Vec<String> = layers.iter().map(|w| w.to_string()).collect();
    parts.join(",")
}

impl Settings {
    /// Applies one key=value pair; unknown keys and unparsable values error.
    pub fn apply(&mut self, key: &str, raw: &str) -> CliResult<()> {
        let v = raw.trim();
        match key {
            "gp.n" => self.n = parse_usize(key, v)?,
            "gp.generations" => self.generations = parse_usize(key, v)?,
            "gp.cr" => self.cr = parse_f64(key, v)?,
            "gp.m_st" => self.m_st = parse_f64(key, v)?,
            "gp.m_n" => self.m_n = parse_f64(key, v)?,
            "gp.p_a" => self.p_a = parse_f64(key, v)?,
            "gp.cr_a" => self.cr_a = parse_f64(key, v)?,
            "gp.selection" => {
                self.selection = match v {
                    "tournament" => SelectionKind::Tournament,
                    "nbest" => SelectionKind::NBest,
                    _ => return Err(bad_value(key, v, "`tournament` or `nbest`")),
                }
            }
            "gp.k_t" => self.k_t = parse_usize(key, v)?,
            "gp.archive_capacity" => self.archive_capacity = parse_usize(key, v)?,
            "gp.runs" => self.runs = parse_usize(key, v)?,
            "gp.std_weight" => self.std_weight = parse_f64(key, v)?,
            "gp.seed" => self.seed = parse_u64(key, v)?,
            "gp.min_height" => self.min_height = parse_usize(key, v)?,
            "gp.max_size" => self.max_size = parse_usize(key, v)?,
            "gp.max_init_height" => self.max_init_height = parse_usize(key, v)?,
            "gp.const_low" => self.const_low = parse_f64(key, v)?,
            "gp.const_high" => self.const_high = parse_f64(key, v)?,
            "gp.epsilon" => self.epsilon = parse_f64(key, v)?,
            "gp.proxy_target" => {
                self.proxy_target = if v.is_empty() {
                    None
                } else {
                    let tree = ExprTree::parse(v)
                        .map_err(|e| CliError::Config(format!("gp.proxy_target: {e}")))?;
                    Some(tree.serialize())
                }
            }
            "gan.latent_dim" => self.latent_dim = parse_usize(key, v)?,
            "gan.gen_layers" => self.gen_layers = parse_layers(key, v)?,
            "gan.disc_layers" => self.disc_layers = parse_layers(key, v)?,
            "gan.lr" => self.lr = parse_f64(key, v)?,
            "gan.beta1" => self.beta1 = parse_f64(key, v)?,
            "gan.beta2" => self.beta2 = parse_f64(key, v)?,
            "gan.batch_size" => self.batch_size = parse_usize(key, v)?,
            "gan.steps" => self.steps = parse_usize(key, v)?,
            "gan.loss_on" => {
                self.loss_on = match v {
                    "both" => LossTarget::Both,
                    "gen" => LossTarget::Generator,
                    "disc" => LossTarget::Discriminator,
                    _ => return Err(bad_value(key, v, "`both`, `gen`, or `disc`")),
                }
            }
            "gan.eval_interval" => self.eval_interval = parse_usize(key, v)?,
            "gan.eval_samples" => self.eval_samples = parse_usize(key, v)?,
            "gan.coverage_radius" => self.coverage_radius = parse_f64(key, v)?,
            "data.kind" => {
                self.kind = match v {
                    "ring" => DataKind::Ring,
                    "grid" => DataKind::Grid,
                    _ => return Err(bad_value(key, v, "`ring` or `grid`")),
                }
            }
            "data.modes" => self.modes = parse_usize(key, v)?,
            "data.radius" => self.radius = parse_f64(key, v)?,
            "data.k" => self.grid_k = parse_usize(key, v)?,
            "data.spacing" => self.spacing = parse_f64(key, v)?,
            "data.sigma" => self.sigma = parse_f64(key, v)?,
            "data.n_samples" => self.n_samples = parse_usize(key, v)?,
            _ => return Err(CliError::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies one `key=value` line.
    pub fn apply_line(&mut self, line: &str) -> CliResult<()> {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got `{line}`")))?;
        self.apply(key.trim(), value)
    }

    /// Applies a whole config file; `#` starts a comment, blank lines skip.
    pub fn apply_text(&mut self, text: &str) -> CliResult<()> {
        for raw in text.lines() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            self.apply_line(line)?;
        }
        Ok(())
    }

    /// Copies the four preset-controlled rates plus the selection scheme.
    pub fn apply_preset(&mut self, id: usize) -> CliResult<()> {
        let preset = GpConfig::preset(id).ok_or_else(|| {
            CliError::Config(format!("unknown config id {id}; valid ids are 1 through 8"))
        })?;
        self.m_st = preset.subtree_mutation_rate;
        self.m_n = preset.node_mutation_rate;
        self.p_a = preset.archive_admission;
        self.cr_a = preset.archive_crossover;
        match preset.selection {
            Selection::Tournament { k } => {
                self.selection = SelectionKind::Tournament;
                self.k_t = k;
            }
            Selection::NBest => self.selection = SelectionKind::NBest,
        }
        Ok(())
    }

    /// All keys in sorted order, as written to `config.txt` and the manifest.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv: Vec<(String, String)> = vec![
            ("data.k".into(), self.grid_k.to_string()),
            (
                "data.kind".into(),
                match self.kind {
                    DataKind::Ring => "ring".into(),
                    DataKind::Grid => "grid".into(),
                },
            ),
            ("data.modes".into(), self.modes.to_string()),
            ("data.n_samples".into(), self.n_samples.to_string()),
            ("data.radius".into(), format!("{}", self.radius)),
            ("data.sigma".into(), format!("{}", self.sigma)),
            ("data.spacing".into(), format!("{}", self.spacing)),
            ("gan.batch_size".into(), self.batch_size.to_string()),
            ("gan.beta1".into(), format!("{}", self.beta1)),
            ("gan.beta2".into(), format!("{}", self.beta2)),
            (
                "gan.coverage_radius".into(),
                format!("{}", self.coverage_radius),
            ),
            ("gan.disc_layers".into(), layers_text(&self.disc_layers)),
            ("gan.eval_interval".into(), self.eval_interval.to_string()),
            ("gan.eval_samples".into(), self.eval_samples.to_string()),
            ("gan.gen_layers".into(), layers_text(&self.gen_layers)),
            ("gan.latent_dim".into(), self.latent_dim.to_string()),
            (
                "gan.loss_on".into(),
                match self.loss_on {
                    LossTarget::Both => "both".into(),
                    LossTarget::Generator => "gen".into(),
                    LossTarget::Discriminator => "disc".into(),
                },
            ),
            ("gan.lr".into(), format!("{}", self.lr)),
            ("gan.steps".into(), self.steps.to_string()),
            (
                "gp.archive_capacity".into(),
                self.archive_capacity.to_string(),
            ),
            ("gp.const_high".into(), format!("{}", self.const_high)),
            ("gp.const_low".into(), format!("{}", self.const_low)),
            ("gp.cr".into(), format!("{}", self.cr)),
            ("gp.cr_a".into(), format!("{}", self.cr_a)),
            ("gp.epsilon".into(), format!("{}", self.epsilon)),
            ("gp.generations".into(), self.generations.to_string()),
            ("gp.k_t".into(), self.k_t.to_string()),
            ("gp.m_n".into(), format!("{}", self.m_n)),
            ("gp.m_st".into(), format!("{}", self.m_st)),
            ("gp.max_init_height".into(), self.max_init_height.to_string()),
            ("gp.max_size".into(), self.max_size.to_string()),
            ("gp.min_height".into(), self.min_height.to_string()),
            ("gp.n".into(), self.n.to_string()),
            ("gp.p_a".into(), format!("{}", self.p_a)),
            (
                "gp.proxy_target".into(),
                self.proxy_target.clone().unwrap_or_default(),
            ),
            ("gp.runs".into(), self.runs.to_string()),
            ("gp.seed".into(), self.seed.to_string()),
            (
                "gp.selection".into(),
                match self.selection {
                    SelectionKind::Tournament => "tournament".into(),
                    SelectionKind::NBest => "nbest".into(),
                },
            ),
            ("gp.std_weight".into(), format!("{}", self.std_weight)),
        ];
        kv.sort();
        kv
    }

    /// Resolved config as text, one key=value per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.key_values() {
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn gp_config(&self) -> CliResult<GpConfig> {
        let cfg = GpConfig {
            population: self.n,
            generations: self.generations,
            crossover_rate: self.cr,
            subtree_mutation_rate: self.m_st,
            node_mutation_rate: self.m_n,
            archive_admission: self.p_a,
            archive_crossover: self.cr_a,
            selection: match self.selection {
                SelectionKind::Tournament => Selection::Tournament { k: self.k_t },
                SelectionKind::NBest => Selection::NBest,
            },
            archive_capacity: self.archive_capacity,
            fitness_runs: self.runs,
            std_weight: self.std_weight,
            seed: self.seed,
            constraints: self.constraints(),
        };
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn constraints(&self) -> GenConstraints {
        GenConstraints {
            min_height: self.min_height,
            max_size: self.max_size,
            const_low: self.const_low,
            const_high: self.const_high,
            epsilon: self.epsilon,
            max_init_height: self.max_init_height,
        }
    }

    pub fn dataset(&self) -> DatasetSpec {
        DatasetSpec {
            kind: match self.kind {
                DataKind::Ring => DatasetKind::Ring {
                    modes: self.modes,
                    radius: self.radius,
                },
                DataKind::Grid => DatasetKind::Grid {
                    k: self.grid_k,
                    spacing: self.spacing,
                },
            },
            sigma: self.sigma,
            n_samples: self.n_samples,
        }
    }

    pub fn gan_config(&self, seed: u64) -> CliResult<GanConfig> {
        let cfg = GanConfig {
            latent_dim: self.latent_dim,
            gen_layers: self.gen_layers.clone(),
            disc_layers: self.disc_layers.clone(),
            learning_rate: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            batch_size: self.batch_size,
            steps: self.steps,
            dataset: self.dataset(),
            loss_on: self.loss_on,
            eval_interval: self.eval_interval,
            eval_samples: self.eval_samples,
            coverage_radius: self.coverage_radius,
            seed,
        };
        cfg.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

/// Defaults, then an optional config file, then `--set` overrides in order.
pub fn load_settings(config: Option<&Path>, set: &[String]) -> CliResult<Settings> {
    let mut settings = Settings::default();
    if let Some(path) = config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        settings.apply_text(&text)?;
    }
    for kv in set {
        settings.apply_line(kv).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("--set {kv}: {msg}")),
            other => other,
        })?;
    }
    Ok(settings)
}
