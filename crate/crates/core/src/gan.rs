//! Desk-scale GAN training on 2-D mode datasets.
//!
//! Both networks are small dense MLPs trained with hand-rolled
//! backpropagation and Adam, so every arithmetic step is explicit and a whole
//! run is reproducible from a single seed. The candidate loss can be applied
//! to the generator, the discriminator, or both; whichever side is excluded
//! falls back to binary cross-entropy.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::derive_seed;
use crate::expr::ExprTree;
use crate::genetics::FitnessEvaluator;
use crate::losses::{LossFunction, PredInput};
use crate::metrics::{frechet_from_fits, mode_coverage, GaussianFit};

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

pub const LEAKY_SLOPE: f64 = 0.2;
const ADAM_EPS: f64 = 1e-8;

// independent RNG streams derived from the run seed
const STREAM_DATA: u64 = 1;
const STREAM_GEN_INIT: u64 = 2;
const STREAM_DISC_INIT: u64 = 3;
const STREAM_TRAIN: u64 = 4;
const STREAM_EVAL: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DatasetKind {
    /// `modes` Gaussians spaced evenly on a circle of the given radius.
    Ring { modes: usize, radius: f64 },
    /// `k * k` Gaussians on a square lattice centred at the origin.
    Grid { k: usize, spacing: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    /// standard deviation of the isotropic noise around each mode centre
    pub sigma: f64,
    /// size of the fixed training pool drawn up front
    pub n_samples: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            kind: DatasetKind::Ring { modes: 8, radius: 2.0 },
            sigma: 0.05,
            n_samples: 8192,
        }
    }
}

impl DatasetSpec {
    pub fn mode_centers(&self) -> Vec<[f64; 2]> {
        match self.kind {
            DatasetKind::Ring { modes, radius } => (0..modes)
                .map(|i| {
                    let theta = core::f64::consts::TAU * i as f64 / modes as f64;
                    [radius * theta.cos(), radius * theta.sin()]
                })
                .collect(),
            DatasetKind::Grid { k, spacing } => {
                let off = (k as f64 - 1.0) / 2.0;
                let mut centers = Vec::with_capacity(k * k);
                for i in 0..k {
                    for j in 0..k {
                        centers.push([(i as f64 - off) * spacing, (j as f64 - off) * spacing]);
                    }
                }
                centers
            }
        }
    }

    /// Draws points by picking a mode uniformly, then adding isotropic
    /// Gaussian noise. Draw order per point is mode, x offset, y offset.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
        let centers = self.mode_centers();
        (0..n)
            .map(|_| {
                let c = centers[rng.random_range(0..centers.len())];
                let nx: f64 = StandardNormal.sample(rng);
                let ny: f64 = StandardNormal.sample(rng);
                [c[0] + self.sigma * nx, c[1] + self.sigma * ny]
            })
            .collect()
    }

    fn validate(&self) -> Result<(), GanConfigError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(GanConfigError::bad("data.sigma", "must be positive and finite"));
        }
        if self.n_samples == 0 {
            return Err(GanConfigError::bad("data.n_samples", "must be at least 1"));
        }
        match self.kind {
            DatasetKind::Ring { modes, radius } => {
                if modes == 0 {
                    return Err(GanConfigError::bad("data.modes", "must be at least 1"));
                }
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(GanConfigError::bad("data.radius", "must be positive and finite"));
                }
            }
            DatasetKind::Grid { k, spacing } => {
                if k == 0 {
                    return Err(GanConfigError::bad("data.k", "must be at least 1"));
                }
                if !(spacing.is_finite() && spacing > 0.0) {
                    return Err(GanConfigError::bad("data.spacing", "must be positive and finite"));
                }
            }
        }
        Ok(())
    }
}

/// Which network the candidate loss drives during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossTarget {
    Generator,
    Discriminator,
    Both,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub gen_layers: Vec<usize>,
    pub disc_layers: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub dataset: DatasetSpec,
    pub loss_on: LossTarget,
    /// evaluate every this many steps (plus once before training and once at
    /// the end)
    pub eval_interval: usize,
    pub eval_samples: usize,
    /// mode counts as covered within this many sigmas of its centre
    pub coverage_radius: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            latent_dim: 2,
            gen_layers: vec![2, 32, 32, 2],
            disc_layers: vec![2, 32, 32, 1],
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 128,
            steps: 4000,
            dataset: DatasetSpec::default(),
            loss_on: LossTarget::Both,
            eval_interval: 200,
            eval_samples: 1024,
            coverage_radius: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GanConfigError {
    pub field: &'static str,
    pub reason: &'static str,
}

impl GanConfigError {
    fn bad(field: &'static str, reason: &'static str) -> GanConfigError {
        GanConfigError { field, reason }
    }
}

impl fmt::Display for GanConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config: {} {}", self.field, self.reason)
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GanConfigError {}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GanConfigError> {
        let bad = GanConfigError::bad;
        if self.latent_dim == 0 {
            return Err(bad("gan.latent_dim", "must be at least 1"));
        }
        if self.gen_layers.len() < 2 {
            return Err(bad("gan.gen_layers", "needs input and output widths"));
        }
        if self.disc_layers.len() < 2 {
            return Err(bad("gan.disc_layers", "needs input and output widths"));
        }
        if self.gen_layers.iter().chain(&self.disc_layers).any(|w| *w == 0) {
            return Err(bad("gan.layers", "widths must be at least 1"));
        }
        if self.gen_layers[0] != self.latent_dim {
            return Err(bad("gan.gen_layers", "first width must equal latent_dim"));
        }
        if *self.gen_layers.last().unwrap() != 2 {
            return Err(bad("gan.gen_layers", "last width must be 2"));
        }
        if self.disc_layers[0] != 2 {
            return Err(bad("gan.disc_layers", "first width must be 2"));
        }
        if *self.disc_layers.last().unwrap() != 1 {
            return Err(bad("gan.disc_layers", "last width must be 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(bad("gan.learning_rate", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(bad("gan.beta", "momentum decays must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(bad("gan.batch_size", "must be at least 1"));
        }
        if self.eval_interval == 0 {
            return Err(bad("gan.eval_interval", "must be at least 1"));
        }
        if self.eval_samples < 3 {
            return Err(bad("gan.eval_samples", "needs at least 3 points to fit moments"));
        }
        if !(self.coverage_radius.is_finite() && self.coverage_radius > 0.0) {
            return Err(bad("gan.coverage_radius", "must be positive and finite"));
        }
        self.dataset.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    w: Vec<f64>, // row-major, out * inp
    b: Vec<f64>,
    inp: usize,
    out: usize,
}

/// Dense network with LeakyReLU on every layer except the last, which stays
/// linear. The discriminator output is a raw score; callers apply a sigmoid
/// when a loss wants probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    leak: f64,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl MlpGrads {
    fn reset(&mut self) {
        for layer in self.w.iter_mut().chain(self.b.iter_mut()) {
            layer.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

#[derive(Default)]
struct Tape {
    /// acts[0] is the input, acts[l + 1] the post-activation output of layer l
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-normal initialisation: weights N(0, 2 / fan_in), biases zero.
    pub fn new(dims: &[usize], leak: f64, rng: &mut ChaCha8Rng) -> Mlp {
        assert!(dims.len() >= 2, "need at least input and output widths");
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (inp, out) = (pair[0], pair[1]);
                let std = (2.0 / inp as f64).sqrt();
                let w = (0..inp * out)
                    .map(|_| {
                        let n: f64 = StandardNormal.sample(rng);
                        n * std
                    })
                    .collect();
                Layer { w, b: vec![0.0; out], inp, out }
            })
            .collect();
        Mlp { layers, leak }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inp
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape);
        tape.acts.pop().unwrap()
    }

    fn forward_tape(&self, x: &[f64], tape: &mut Tape) {
        debug_assert_eq!(x.len(), self.input_dim());
        tape.acts.resize(self.layers.len() + 1, Vec::new());
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (lo, hi) = tape.acts.split_at_mut(l + 1);
            let input = &lo[l];
            let out = &mut hi[0];
            out.clear();
            out.resize(layer.out, 0.0);
            let last = l + 1 == self.layers.len();
            for j in 0..layer.out {
                let row = &layer.w[j * layer.inp..(j + 1) * layer.inp];
                let mut acc = layer.b[j];
                for (wi, xi) in row.iter().zip(input) {
                    acc += wi * xi;
                }
                out[j] = if last || acc > 0.0 { acc } else { self.leak * acc };
            }
        }
    }

    /// Backpropagates `dout` (gradient wrt the network output) through the
    /// tape of the last forward pass. Parameter gradients accumulate into
    /// `grads`; `dinput` receives the gradient wrt the network input.
    ///
    /// LeakyReLU preserves sign, so the activation slope is recovered from
    /// the stored post-activation value.
    fn backward_tape(
        &self,
        tape: &Tape,
        dout: &[f64],
        mut grads: Option<&mut MlpGrads>,
        dinput: Option<&mut [f64]>,
    ) {
        let mut delta = dout.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            if l + 1 != self.layers.len() {
                for (d, post) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                    if *post <= 0.0 {
                        *d *= self.leak;
                    }
                }
            }
            let input = &tape.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                for j in 0..layer.out {
                    let d = delta[j];
                    g.b[l][j] += d;
                    let row = &mut g.w[l][j * layer.inp..(j + 1) * layer.inp];
                    for (gw, xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
            }
            let mut next = vec![0.0; layer.inp];
            for j in 0..layer.out {
                let d = delta[j];
                let row = &layer.w[j * layer.inp..(j + 1) * layer.inp];
                for (n, wi) in next.iter_mut().zip(row) {
                    *n += d * wi;
                }
            }
            delta = next;
        }
        if let Some(di) = dinput {
            di.copy_from_slice(&delta);
        }
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            w: self.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|p| p.is_finite()))
    }
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    t: u64,
    m: MlpGrads,
    v: MlpGrads,
}

impl Adam {
    pub fn new(shape: &Mlp, lr: f64, beta1: f64, beta2: f64) -> Adam {
        Adam {
            lr,
            beta1,
            beta2,
            t: 0,
            m: shape.zero_grads(),
            v: shape.zero_grads(),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (lr, b1, b2) = (self.lr, self.beta1, self.beta2);
        let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..params.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            update(&mut layer.w, &grads.w[l], &mut self.m.w[l], &mut self.v.w[l]);
            update(&mut layer.b, &grads.b[l], &mut self.m.b[l], &mut self.v.b[l]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub step: usize,
    pub frechet: f64,
    pub disc_accuracy: f64,
    pub covered_modes: usize,
    pub total_modes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainOutcome {
    Completed,
    /// training produced a non-finite loss, gradient, weight, or evaluation
    Degenerate { step: usize },
}

pub struct TrainedGan {
    pub history: Vec<EvalPoint>,
    pub outcome: TrainOutcome,
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub latent_dim: usize,
}

impl TrainedGan {
    pub fn final_frechet(&self) -> Option<f64> {
        self.history.last().map(|p| p.frechet)
    }

    /// Draws fresh latent noise from `seed` and maps it through the trained
    /// generator.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z = gaussian_vec(self.latent_dim, &mut rng);
                let out = self.generator.forward(&z);
                [out[0], out[1]]
            })
            .collect()
    }
}

fn gaussian_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

/// Loss value and its gradient wrt the raw discriminator score, applying the
/// sigmoid chain when the loss consumes probabilities.
fn loss_at_score(loss: &LossFunction, y: f64, score: f64) -> (f64, f64) {
    match loss.pred_input() {
        PredInput::Sigmoid => {
            let p = sigmoid(score);
            (loss.per_sample(y, p), loss.gradient(y, p) * p * (1.0 - p))
        }
        PredInput::Score => (loss.per_sample(y, score), loss.gradient(y, score)),
    }
}

fn evaluate_model(
    step: usize,
    gen: &Mlp,
    disc: &Mlp,
    cfg: &GanConfig,
    real_fit: &GaussianFit,
    real_eval: &[[f64; 2]],
    rng: &mut ChaCha8Rng,
) -> Option<EvalPoint> {
    let mut fake = Vec::with_capacity(cfg.eval_samples);
    for _ in 0..cfg.eval_samples {
        let z = gaussian_vec(cfg.latent_dim, rng);
        let out = gen.forward(&z);
        fake.push([out[0], out[1]]);
    }
    let fake_fit = GaussianFit::fit(&fake).ok()?;
    let frechet = frechet_from_fits(real_fit, &fake_fit);
    if !frechet.is_finite() {
        return None;
    }
    let real_p: Vec<f64> = real_eval.iter().map(|x| sigmoid(disc.forward(x)[0])).collect();
    let fake_p: Vec<f64> = fake.iter().map(|x| sigmoid(disc.forward(x)[0])).collect();
    let disc_accuracy = crate::metrics::discriminator_accuracy(&real_p, &fake_p).ok()?;
    let (covered_modes, total_modes) = mode_coverage(&fake, &cfg.dataset, cfg.coverage_radius);
    Some(EvalPoint { step, frechet, disc_accuracy, covered_modes, total_modes })
}

/// Runs the full alternating training loop: one discriminator update (real
/// batch labelled 1, generated batch labelled 0) then one generator update
/// (generated batch labelled 1, gradients flowing through the frozen
/// discriminator). Evaluation happens before step 0, every `eval_interval`
/// steps, and after the last step. Any non-finite loss, gradient, weight, or
/// evaluation stops the run with a degenerate outcome.
pub fn train_gan(cfg: &GanConfig, loss: &LossFunction) -> Result<TrainedGan, GanConfigError> {
    cfg.validate()?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_DATA));
    let mut gen_init = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_GEN_INIT));
    let mut disc_init = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_DISC_INIT));
    let mut train_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_TRAIN));
    let mut eval_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_EVAL));

    let dataset = cfg.dataset.sample(cfg.dataset.n_samples, &mut data_rng);
    let mut gen = Mlp::new(&cfg.gen_layers, LEAKY_SLOPE, &mut gen_init);
    let mut disc = Mlp::new(&cfg.disc_layers, LEAKY_SLOPE, &mut disc_init);
    let mut gen_opt = Adam::new(&gen, cfg.learning_rate, cfg.beta1, cfg.beta2);
    let mut disc_opt = Adam::new(&disc, cfg.learning_rate, cfg.beta1, cfg.beta2);

    let real_eval = cfg.dataset.sample(cfg.eval_samples, &mut eval_rng);
    let real_fit = GaussianFit::fit(&real_eval).expect("eval_samples is validated above 3");

    let bce = LossFunction::builtin("bce").expect("bce is built in");
    let (disc_loss, gen_loss) = match cfg.loss_on {
        LossTarget::Both => (loss, loss),
        LossTarget::Generator => (&bce, loss),
        LossTarget::Discriminator => (loss, &bce),
    };

    let m = cfg.batch_size;
    let inv_m = 1.0 / m as f64;
    let mut history = Vec::new();
    let mut outcome = TrainOutcome::Completed;
    let mut disc_grads = disc.zero_grads();
    let mut gen_grads = gen.zero_grads();
    let mut disc_tape = Tape::default();
    let mut gen_tape = Tape::default();

    'train: for step in 0..cfg.steps {
        if step % cfg.eval_interval == 0 {
            match evaluate_model(step, &gen, &disc, cfg, &real_fit, &real_eval, &mut eval_rng) {
                Some(pt) => history.push(pt),
                None => {
                    outcome = TrainOutcome::Degenerate { step };
                    break 'train;
                }
            }
        }

        // discriminator update
        disc_grads.reset();
        for half in 0..2 {
            let y = if half == 0 { 1.0 } else { 0.0 };
            for _ in 0..m {
                let x = if half == 0 {
                    dataset[train_rng.random_range(0..dataset.len())]
                } else {
                    let z = gaussian_vec(cfg.latent_dim, &mut train_rng);
                    let out = gen.forward(&z);
                    [out[0], out[1]]
                };
                disc.forward_tape(&x, &mut disc_tape);
                let score = disc_tape.acts.last().unwrap()[0];
                let (lval, dscore) = loss_at_score(disc_loss, y, score);
                if !(lval.is_finite() && dscore.is_finite()) {
                    outcome = TrainOutcome::Degenerate { step };
                    break 'train;
                }
                disc.backward_tape(&disc_tape, &[dscore * inv_m], Some(&mut disc_grads), None);
            }
        }
        disc_opt.step(&mut disc, &disc_grads);
        if !disc.params_finite() {
            outcome = TrainOutcome::Degenerate { step };
            break 'train;
        }

        // generator update, gradients flowing through the frozen discriminator
        gen_grads.reset();
        let mut dx = [0.0f64; 2];
        for _ in 0..m {
            let z = gaussian_vec(cfg.latent_dim, &mut train_rng);
            gen.forward_tape(&z, &mut gen_tape);
            let out = gen_tape.acts.last().unwrap();
            let x = [out[0], out[1]];
            disc.forward_tape(&x, &mut disc_tape);
            let score = disc_tape.acts.last().unwrap()[0];
            let (lval, dscore) = loss_at_score(gen_loss, 1.0, score);
            if !(lval.is_finite() && dscore.is_finite()) {
                outcome = TrainOutcome::Degenerate { step };
                break 'train;
            }
            disc.backward_tape(&disc_tape, &[dscore * inv_m], None, Some(&mut dx));
            gen.backward_tape(&gen_tape, &dx, Some(&mut gen_grads), None);
        }
        gen_opt.step(&mut gen, &gen_grads);
        if !gen.params_finite() {
            outcome = TrainOutcome::Degenerate { step };
            break 'train;
        }
    }

    if outcome == TrainOutcome::Completed {
        match evaluate_model(cfg.steps, &gen, &disc, cfg, &real_fit, &real_eval, &mut eval_rng) {
            Some(pt) => history.push(pt),
            None => outcome = TrainOutcome::Degenerate { step: cfg.steps },
        }
    }

    Ok(TrainedGan {
        history,
        outcome,
        generator: gen,
        discriminator: disc,
        latent_dim: cfg.latent_dim,
    })
}

/// Scores candidate trees by training a GAN and reading off the final
/// Fréchet distance. Failed or degenerate runs score infinite, which the
/// search maps to its worst-fitness sentinel.
#[derive(Clone)]
pub struct GanEvaluator {
    pub config: GanConfig,
}

impl FitnessEvaluator for GanEvaluator {
    fn evaluate(&self, tree: &ExprTree, seed: u64) -> f64 {
        let loss = match LossFunction::from_tree(tree.clone()) {
            Ok(l) => l,
            Err(_) => return f64::INFINITY,
        };
        let mut cfg = self.config.clone();
        cfg.seed = seed;
        match train_gan(&cfg, &loss) {
            Ok(t) => match t.outcome {
                TrainOutcome::Completed => t.final_frechet().unwrap_or(f64::INFINITY),
                TrainOutcome::Degenerate { .. } => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    }
}
