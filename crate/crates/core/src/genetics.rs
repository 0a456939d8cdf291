//! Genetic-programming search over loss expression trees.
//!
//! The population evolves through subtree crossover plus two mutation kinds,
//! with either tournament or truncation selection. Individuals that lose a
//! selection round can enter a bounded archive of past material, which later
//! serves as a crossover donor pool. Every per-generation decision draws from
//! an RNG seeded by `(search seed, generation)`, so a run can be checkpointed
//! and resumed bit-exactly.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;
use crate::expr::{
    random_subtree, random_terminal, random_tree, BinaryOp, ConstraintError, ExprTree,
    GenConstraints, Node, UnaryOp, BINARY_OPS, GEN_UNARY_OPS,
};
use crate::losses::LOSS_EPSILON;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

/// Scalar fitness assigned when evaluation fails or diverges.
pub const WORST_FITNESS: f64 = 1e18;

/// Depth cap for the fresh material spliced in by subtree mutation.
pub const MUTATION_DEPTH: usize = 4;

const INIT_STREAM: u64 = 0x696e6974;
const GEN_STREAM_BASE: u64 = 0x67656e0000000000;
const EVAL_STREAM_BASE: u64 = 0x6576610000000000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// `k` distinct entrants per round, best one survives; repeated until the
    /// next population is full.
    Tournament { k: usize },
    /// Keep the n best of parents and offspring combined.
    NBest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub subtree_mutation_rate: f64,
    pub node_mutation_rate: f64,
    /// probability that a selection loser is admitted to the archive
    pub archive_admission: f64,
    /// probability that a crossover partner is drawn from the archive
    pub archive_crossover: f64,
    pub selection: Selection,
    pub archive_capacity: usize,
    /// independent evaluation runs averaged into one fitness value
    pub fitness_runs: usize,
    /// weight of the run standard deviation in the fitness scalar
    pub std_weight: f64,
    pub seed: u64,
    pub constraints: GenConstraints,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population: 10,
            generations: 50,
            crossover_rate: 0.7,
            subtree_mutation_rate: 0.3,
            node_mutation_rate: 0.0,
            archive_admission: 0.0,
            archive_crossover: 0.0,
            selection: Selection::Tournament { k: 3 },
            archive_capacity: 10,
            fitness_runs: 5,
            std_weight: 1.0,
            seed: 0,
            constraints: GenConstraints::default(),
        }
    }
}

impl GpConfig {
    /// The eight preset search configurations (1-based). They differ in
    /// mutation mix, archive use, and selection scheme; everything else
    /// matches [`GpConfig::default`].
    pub fn preset(id: usize) -> Option<GpConfig> {
        let (m_st, m_n, p_adm, p_don, nbest) = match id {
            1 => (0.3, 0.0, 0.0, 0.0, false),
            2 => (0.3, 0.0, 0.5, 0.5, false),
            3 => (0.3, 0.0, 0.0, 0.0, true),
            4 => (0.3, 0.0, 0.5, 0.5, true),
            5 => (0.2, 0.1, 0.0, 0.0, false),
            6 => (0.2, 0.1, 0.5, 0.5, false),
            7 => (0.2, 0.1, 0.0, 0.0, true),
            8 => (0.2, 0.1, 0.5, 0.5, true),
            _ => return None,
        };
        Some(GpConfig {
            subtree_mutation_rate: m_st,
            node_mutation_rate: m_n,
            archive_admission: p_adm,
            archive_crossover: p_don,
            selection: if nbest {
                Selection::NBest
            } else {
                Selection::Tournament { k: 3 }
            },
            ..GpConfig::default()
        })
    }

    pub fn validate(&self) -> Result<(), GpConfigError> {
        let bad = |field, reason| Err(GpConfigError::Field { field, reason });
        if self.population < 2 {
            return bad("gp.population", "must be at least 2");
        }
        let rates = [
            ("gp.crossover_rate", self.crossover_rate),
            ("gp.subtree_mutation_rate", self.subtree_mutation_rate),
            ("gp.node_mutation_rate", self.node_mutation_rate),
            ("gp.archive_admission", self.archive_admission),
            ("gp.archive_crossover", self.archive_crossover),
        ];
        for (field, rate) in rates {
            if !rate.is_finite() || !(0.0..=1.0).contains(&rate) {
                return bad(field, "must lie in [0, 1]");
            }
        }
        if let Selection::Tournament { k } = self.selection {
            if k == 0 {
                return bad("gp.tournament_k", "must be at least 1");
            }
        }
        if self.archive_admission > 0.0 && self.archive_capacity == 0 {
            return bad("gp.archive_capacity", "must be at least 1 when admission is enabled");
        }
        if self.fitness_runs == 0 {
            return bad("gp.fitness_runs", "must be at least 1");
        }
        if !self.std_weight.is_finite() || self.std_weight < 0.0 {
            return bad("gp.std_weight", "must be finite and non-negative");
        }
        self.constraints.validate().map_err(GpConfigError::Constraints)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GpConfigError {
    Field {
        field: &'static str,
        reason: &'static str,
    },
    Constraints(ConstraintError),
}

impl fmt::Display for GpConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GpConfigError::Field { field, reason } => {
                write!(f, "invalid config: {} {}", field, reason)
            }
            GpConfigError::Constraints(e) => write!(f, "invalid config: {}", e),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GpConfigError {}

/// Aggregated evaluation result: mean and population standard deviation over
/// the per-run objectives, folded into `scalar = mean + std_weight * std`.
/// Any non-finite run marks the whole record with [`WORST_FITNESS`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitnessRecord {
    pub mean: f64,
    pub std: f64,
    pub scalar: f64,
    pub runs: Vec<f64>,
}

impl FitnessRecord {
    pub fn from_runs(runs: Vec<f64>, std_weight: f64) -> FitnessRecord {
        if runs.is_empty() || runs.iter().any(|v| !v.is_finite()) {
            return FitnessRecord {
                mean: WORST_FITNESS,
                std: 0.0,
                scalar: WORST_FITNESS,
                runs,
            };
        }
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let var = runs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        let scalar = mean + std_weight * std;
        if !scalar.is_finite() {
            return FitnessRecord {
                mean: WORST_FITNESS,
                std: 0.0,
                scalar: WORST_FITNESS,
                runs,
            };
        }
        FitnessRecord { mean, std, scalar, runs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub tree: ExprTree,
    pub fitness: Option<FitnessRecord>,
    /// generation the individual was created in (0 for the initial population)
    pub birth: usize,
}

/// Scores candidate trees. `seed` selects an independent evaluation stream;
/// implementations must be deterministic in `(tree, seed)`. Non-finite
/// scores mark a failed run.
pub trait FitnessEvaluator: Sync {
    fn evaluate(&self, tree: &ExprTree, seed: u64) -> f64;

    /// Hook for parallel implementations. Results must line up with `jobs`.
    fn evaluate_batch(&self, jobs: &[(&ExprTree, u64)]) -> Vec<f64> {
        jobs.iter().map(|(t, s)| self.evaluate(t, *s)).collect()
    }
}

/// Cheap deterministic evaluator: mean squared error against a target
/// expression on the 21-point grid `y_pred in {0, 0.05, .., 1}` with
/// `y_real` held at 1 (the real-label view, as in the shape report). The
/// evaluation seed is ignored, so repeated runs add no variance.
pub struct ProxyEvaluator {
    target: ExprTree,
    points: Vec<(f64, f64)>,
    values: Vec<f64>,
    epsilon: f64,
}

impl ProxyEvaluator {
    pub fn new(target: ExprTree) -> ProxyEvaluator {
        let epsilon = LOSS_EPSILON;
        let points: Vec<(f64, f64)> = (0..=20).map(|i| (1.0, i as f64 / 20.0)).collect();
        let values = points
            .iter()
            .map(|(yr, yp)| target.eval(*yp, *yr, epsilon))
            .collect();
        ProxyEvaluator { target, points, values, epsilon }
    }

    pub fn target(&self) -> &ExprTree {
        &self.target
    }
}

impl FitnessEvaluator for ProxyEvaluator {
    fn evaluate(&self, tree: &ExprTree, _seed: u64) -> f64 {
        let mut acc = 0.0;
        for ((y_real, y_pred), want) in self.points.iter().zip(&self.values) {
            let got = tree.eval(*y_pred, *y_real, self.epsilon);
            if !got.is_finite() {
                return f64::INFINITY;
            }
            let d = got - want;
            acc += d * d;
        }
        let mse = acc / self.points.len() as f64;
        if mse.is_finite() {
            mse
        } else {
            f64::INFINITY
        }
    }
}

// ---------------------------------------------------------------------------
// genetic operators

/// Swaps a uniformly chosen subtree of `a` with one of `b`. Retries up to 20
/// node pairings until both children satisfy the constraints; if none does,
/// the parents pass through unchanged.
pub fn crossover<R: Rng + ?Sized>(
    a: &ExprTree,
    b: &ExprTree,
    c: &GenConstraints,
    rng: &mut R,
) -> (ExprTree, ExprTree) {
    for _ in 0..20 {
        let i = rng.random_range(0..a.size());
        let j = rng.random_range(0..b.size());
        let child_a = a.with_subtree(i, b.node_at(j).clone());
        let child_b = b.with_subtree(j, a.node_at(i).clone());
        if child_a.validate(c).is_ok() && child_b.validate(c).is_ok() {
            return (child_a, child_b);
        }
    }
    (a.clone(), b.clone())
}

/// Replaces a uniformly chosen subtree with fresh random material of depth at
/// most [`MUTATION_DEPTH`]. Retries up to 10 times before returning the tree
/// unchanged.
pub fn mutate_subtree<R: Rng + ?Sized>(
    t: &ExprTree,
    c: &GenConstraints,
    rng: &mut R,
) -> ExprTree {
    for _ in 0..10 {
        let i = rng.random_range(0..t.size());
        let sub = random_subtree(c, rng, MUTATION_DEPTH, c.max_size);
        let child = t.with_subtree(i, sub);
        if child.validate(c).is_ok() {
            return child;
        }
    }
    t.clone()
}

/// Point mutation: an operator becomes a different operator of the same
/// arity, a terminal becomes a fresh random terminal. Tree shape never
/// changes. Retries up to 10 times (a terminal swap can drop the last use of
/// a variable) before returning the tree unchanged.
pub fn mutate_node<R: Rng + ?Sized>(t: &ExprTree, c: &GenConstraints, rng: &mut R) -> ExprTree {
    for _ in 0..10 {
        let i = rng.random_range(0..t.size());
        let replacement = match t.node_at(i) {
            Node::Binary(op, l, r) => {
                let others: Vec<BinaryOp> =
                    BINARY_OPS.iter().copied().filter(|o| o != op).collect();
                Node::Binary(
                    others[rng.random_range(0..others.len())],
                    l.clone(),
                    r.clone(),
                )
            }
            Node::Unary(op, a) => {
                let others: Vec<UnaryOp> =
                    GEN_UNARY_OPS.iter().copied().filter(|o| o != op).collect();
                Node::Unary(others[rng.random_range(0..others.len())], a.clone())
            }
            _ => random_terminal(c, rng),
        };
        let child = t.with_subtree(i, replacement);
        if child.validate(c).is_ok() {
            return child;
        }
    }
    t.clone()
}

// ---------------------------------------------------------------------------
// selection

#[derive(Debug, Clone)]
pub struct SelectionOutcome {
    pub survivors: Vec<Individual>,
    pub losers: Vec<Individual>,
}

fn scalar_of(ind: &Individual) -> f64 {
    ind.fitness.as_ref().map_or(WORST_FITNESS, |f| f.scalar)
}

/// Total order used everywhere a "better individual" is needed: lower fitness
/// scalar, then smaller tree, then earlier birth, then pool position.
fn rank(pool: &[Individual], a: usize, b: usize) -> core::cmp::Ordering {
    scalar_of(&pool[a])
        .total_cmp(&scalar_of(&pool[b]))
        .then(pool[a].tree.size().cmp(&pool[b].tree.size()))
        .then(pool[a].birth.cmp(&pool[b].birth))
        .then(a.cmp(&b))
}

/// Fills the next population from the combined parent+offspring pool.
/// Tournament winners are drawn with replacement across rounds; `losers` are
/// the pool members that never made it into the survivor set.
pub(crate) fn select(
    pool: Vec<Individual>,
    cfg: &GpConfig,
    rng: &mut ChaCha8Rng,
) -> SelectionOutcome {
    let n = cfg.population;
    let mut picked = vec![false; pool.len()];
    let mut survivors = Vec::with_capacity(n);
    match cfg.selection {
        Selection::Tournament { k } => {
            let k = k.min(pool.len()).max(1);
            for _ in 0..n {
                let entrants = rand::seq::index::sample(rng, pool.len(), k);
                let mut win = entrants.index(0);
                for e in entrants.iter().skip(1) {
                    if rank(&pool, e, win) == core::cmp::Ordering::Less {
                        win = e;
                    }
                }
                picked[win] = true;
                survivors.push(pool[win].clone());
            }
        }
        Selection::NBest => {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.sort_by(|&a, &b| rank(&pool, a, b));
            for &i in order.iter().take(n) {
                picked[i] = true;
                survivors.push(pool[i].clone());
            }
        }
    }
    let losers = pool
        .into_iter()
        .zip(picked)
        .filter_map(|(ind, keep)| if keep { None } else { Some(ind) })
        .collect();
    SelectionOutcome { survivors, losers }
}

// ---------------------------------------------------------------------------
// search state

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: usize,
    /// best fitness scalar seen so far (monotone over a run)
    pub best_scalar: f64,
    /// mean fitness scalar of the current population
    pub mean_scalar: f64,
    pub best_expr: String,
    pub archive_size: usize,
}

/// Search state: population, archive, best-so-far, per-expression fitness
/// cache, and the stats history. Stepping is driven externally so callers can
/// checkpoint between generations.
pub struct GpState {
    cfg: GpConfig,
    population: Vec<Individual>,
    archive: Vec<ExprTree>,
    generation: usize,
    best: Individual,
    cache: BTreeMap<String, FitnessRecord>,
    history: Vec<GenerationStats>,
    eval_seeds: Vec<u64>,
}

fn eval_seeds_for(cfg: &GpConfig) -> Vec<u64> {
    (0..cfg.fitness_runs)
        .map(|r| derive_seed(cfg.seed, EVAL_STREAM_BASE | r as u64))
        .collect()
}

/// Scores every individual that lacks a fitness record, deduplicating through
/// the cache. Uncached expressions are batched in first-occurrence order,
/// each paired with every evaluation seed.
fn evaluate_into(
    cache: &mut BTreeMap<String, FitnessRecord>,
    cfg: &GpConfig,
    eval_seeds: &[u64],
    individuals: &mut [Individual],
    eval: &dyn FitnessEvaluator,
) {
    let mut pending: Vec<(String, ExprTree)> = Vec::new();
    for ind in individuals.iter() {
        if ind.fitness.is_some() {
            continue;
        }
        let key = ind.tree.serialize();
        if !cache.contains_key(&key) && !pending.iter().any(|(k, _)| *k == key) {
            pending.push((key, ind.tree.clone()));
        }
    }
    if !pending.is_empty() {
        let mut jobs: Vec<(&ExprTree, u64)> = Vec::with_capacity(pending.len() * eval_seeds.len());
        for (_, tree) in &pending {
            for &s in eval_seeds {
                jobs.push((tree, s));
            }
        }
        let results = eval.evaluate_batch(&jobs);
        assert_eq!(results.len(), jobs.len(), "evaluator must score every job");
        for (i, (key, _)) in pending.into_iter().enumerate() {
            let runs = results[i * cfg.fitness_runs..(i + 1) * cfg.fitness_runs].to_vec();
            cache.insert(key, FitnessRecord::from_runs(runs, cfg.std_weight));
        }
    }
    for ind in individuals.iter_mut() {
        if ind.fitness.is_none() {
            ind.fitness = Some(cache[&ind.tree.serialize()].clone());
        }
    }
}

impl GpState {
    /// Builds and scores the initial population (generation 0).
    pub fn new(cfg: GpConfig, eval: &dyn FitnessEvaluator) -> Result<GpState, GpConfigError> {
        cfg.validate()?;
        let eval_seeds = eval_seeds_for(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, INIT_STREAM));
        let mut population: Vec<Individual> = (0..cfg.population)
            .map(|_| Individual {
                tree: random_tree(&cfg.constraints, &mut rng),
                fitness: None,
                birth: 0,
            })
            .collect();
        let mut cache = BTreeMap::new();
        evaluate_into(&mut cache, &cfg, &eval_seeds, &mut population, eval);
        let best_idx = (0..population.len())
            .min_by(|&a, &b| rank(&population, a, b))
            .expect("population is non-empty");
        let best = population[best_idx].clone();
        Ok(GpState {
            cfg,
            population,
            archive: Vec::new(),
            generation: 0,
            best,
            cache,
            history: Vec::new(),
            eval_seeds,
        })
    }

    /// Restores a checkpointed run. Every individual must carry its fitness
    /// record; the cache is rebuilt from them, and anything evaluated in the
    /// original run but absent here is simply re-scored on demand (evaluators
    /// are deterministic, so resumed runs stay bit-exact).
    pub fn from_checkpoint(
        cfg: GpConfig,
        population: Vec<Individual>,
        archive: Vec<ExprTree>,
        generation: usize,
        best: Individual,
        history: Vec<GenerationStats>,
    ) -> Result<GpState, GpConfigError> {
        cfg.validate()?;
        if population.len() != cfg.population {
            return Err(GpConfigError::Field {
                field: "gp.population",
                reason: "checkpoint population size differs from the config",
            });
        }
        if population.iter().any(|i| i.fitness.is_none()) || best.fitness.is_none() {
            return Err(GpConfigError::Field {
                field: "gp.population",
                reason: "checkpoint individuals must carry fitness records",
            });
        }
        let eval_seeds = eval_seeds_for(&cfg);
        let mut cache = BTreeMap::new();
        for ind in population.iter().chain(core::iter::once(&best)) {
            if let Some(f) = &ind.fitness {
                cache.insert(ind.tree.serialize(), f.clone());
            }
        }
        Ok(GpState {
            cfg,
            population,
            archive,
            generation,
            best,
            cache,
            history,
            eval_seeds,
        })
    }

    pub fn cfg(&self) -> &GpConfig {
        &self.cfg
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn archive(&self) -> &[ExprTree] {
        &self.archive
    }

    pub fn best(&self) -> &Individual {
        &self.best
    }

    pub fn history(&self) -> &[GenerationStats] {
        &self.history
    }

    pub fn done(&self) -> bool {
        self.generation >= self.cfg.generations
    }

    /// Advances one generation and returns its stats.
    ///
    /// Per shuffled parent pair: a crossover coin (rate `crossover_rate`),
    /// then, when the archive is non-empty, a donor coin (rate
    /// `archive_crossover`) that swaps the second parent for a random archive
    /// member. Non-crossing pairs copy both parents. Each child then faces
    /// independent subtree- and node-mutation coins. An odd leftover parent
    /// is copied (and mutated) as-is.
    pub fn step(&mut self, eval: &dyn FitnessEvaluator) -> GenerationStats {
        let g = self.generation + 1;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, GEN_STREAM_BASE | g as u64));
        let c = self.cfg.constraints.clone();

        let mut order: Vec<usize> = (0..self.population.len()).collect();
        order.shuffle(&mut rng);

        let mut offspring: Vec<Individual> = Vec::with_capacity(self.population.len());
        for pair in order.chunks(2) {
            let mut children = if pair.len() == 1 {
                vec![self.population[pair[0]].tree.clone()]
            } else if rng.random_bool(self.cfg.crossover_rate) {
                let donor;
                let partner = if !self.archive.is_empty()
                    && self.cfg.archive_crossover > 0.0
                    && rng.random_bool(self.cfg.archive_crossover)
                {
                    donor = self.archive[rng.random_range(0..self.archive.len())].clone();
                    &donor
                } else {
                    &self.population[pair[1]].tree
                };
                let (x, y) = crossover(&self.population[pair[0]].tree, partner, &c, &mut rng);
                vec![x, y]
            } else {
                vec![
                    self.population[pair[0]].tree.clone(),
                    self.population[pair[1]].tree.clone(),
                ]
            };
            for child in &mut children {
                if rng.random_bool(self.cfg.subtree_mutation_rate) {
                    *child = mutate_subtree(child, &c, &mut rng);
                }
                if rng.random_bool(self.cfg.node_mutation_rate) {
                    *child = mutate_node(child, &c, &mut rng);
                }
            }
            offspring.extend(children.into_iter().map(|tree| Individual {
                tree,
                fitness: None,
                birth: g,
            }));
        }

        evaluate_into(&mut self.cache, &self.cfg, &self.eval_seeds, &mut offspring, eval);

        let mut pool = core::mem::take(&mut self.population);
        pool.append(&mut offspring);
        for ind in &pool {
            if scalar_of(ind) < scalar_of(&self.best) {
                self.best = ind.clone();
            }
        }

        let SelectionOutcome { survivors, losers } = select(pool, &self.cfg, &mut rng);
        self.population = survivors;

        if self.cfg.archive_admission > 0.0 {
            for loser in &losers {
                if rng.random_bool(self.cfg.archive_admission) {
                    if self.archive.len() < self.cfg.archive_capacity {
                        self.archive.push(loser.tree.clone());
                    } else {
                        let slot = rng.random_range(0..self.archive.len());
                        self.archive[slot] = loser.tree.clone();
                    }
                }
            }
        }

        self.generation = g;
        let mean_scalar =
            self.population.iter().map(scalar_of).sum::<f64>() / self.population.len() as f64;
        let stats = GenerationStats {
            generation: g,
            best_scalar: scalar_of(&self.best),
            mean_scalar,
            best_expr: self.best.tree.serialize(),
            archive_size: self.archive.len(),
        };
        self.history.push(stats.clone());
        stats
    }

    /// Steps until the configured generation count is reached.
    pub fn run(&mut self, eval: &dyn FitnessEvaluator) {
        while !self.done() {
            self.step(eval);
        }
    }
}
