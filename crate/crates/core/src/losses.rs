//! Loss functions behind one interface: the evolved headline loss, the eight
//! search survivors it came from, and classic baselines.
//!
//! Every loss maps `(y_real, y_pred) -> per-sample value` and carries the
//! analytic derivative in `y_pred` so the trainer can backpropagate through
//! it. Losses declare which prediction representation they read: most consume
//! the sigmoid output, `wasserstein` and `hinge` the raw pre-sigmoid score.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{ExprTree, ValidityError};

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

/// Protection constant shared with the expression evaluator.
pub const LOSS_EPSILON: f64 = 1e-8;

/// Scale constant inside the headline loss.
pub const GANETIC_ALPHA: f64 = 3.985;

/// Which prediction representation a loss consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredInput {
    /// Discriminator output after the sigmoid, in `[0, 1]`.
    Sigmoid,
    /// Raw pre-sigmoid score, unbounded.
    Score,
}

const EPS: f64 = LOSS_EPSILON;

fn p_div(a: f64, b: f64) -> f64 {
    a / (b + EPS)
}

fn p_sqrt(x: f64) -> f64 {
    (x.abs() + EPS).sqrt()
}

fn p_log(x: f64) -> f64 {
    (x.abs() + EPS).ln()
}

// Closed forms mirror the operation order of their canonical s-expressions
// below, so both evaluation routes agree bit for bit.

fn ganetic(y: f64, p: f64) -> f64 {
    let cube = p * (p * p);
    cube + p_sqrt(GANETIC_ALPHA * p_div(y, p))
}

fn f1(y: f64, p: f64) -> f64 {
    let d = y - 4.092;
    ((2.2061f64.exp() + 1.7577f64.sin()) + d * (d * d)) - p_log(y - p)
}

fn f2(y: f64, p: f64) -> f64 {
    p_sqrt(y - p).cos().exp()
}

fn f3(y: f64, p: f64) -> f64 {
    let s = p_sqrt(y + p_log(p));
    s * (s * s)
}

fn f5(y: f64, p: f64) -> f64 {
    let s = p_sqrt(p_log(p));
    let num = p_log(p * (p * p));
    let den = (3.6278 * y) * (p * p);
    s * (s * s) + p_div(num, den)
}

fn f6(y: f64, p: f64) -> f64 {
    let d = p - y;
    let d2 = d * d;
    (p.cos() - p * p).exp() * (d2 * d2)
}

fn f7(y: f64, p: f64) -> f64 {
    let c = (y + p).cos();
    (1.0657 * y + p_div(0.4129, p)).sin() + c * c
}

fn f8(y: f64, p: f64) -> f64 {
    let cy = y.cos();
    (p * (cy * cy)) * p_log(y * p) - p_sqrt(p_log(p))
}

fn bce(y: f64, p: f64) -> f64 {
    0.0 - (y * p_log(p) + (1.0 - y) * p_log(1.0 - p))
}

fn bce_grad(y: f64, p: f64) -> f64 {
    (1.0 - y) / (1.0 - p + EPS) - y / (p + EPS)
}

fn least_squares(y: f64, p: f64) -> f64 {
    let d = p - y;
    d * d
}

fn least_squares_grad(y: f64, p: f64) -> f64 {
    2.0 * (p - y)
}

// Minimax objective in its published one-line form: the discriminator
// maximizes log D(x) + (1 - log D(G(z))). Rewritten per sample so that both
// networks minimize, the fake branch keeps the constant so values match the
// objective, while gradients coincide with the familiar non-saturating form.
fn adversarial(y: f64, p: f64) -> f64 {
    y * (0.0 - p_log(p)) + (1.0 - y) * (p_log(p) - 1.0)
}

fn adversarial_grad(y: f64, p: f64) -> f64 {
    (1.0 - 2.0 * y) / (p + EPS)
}

fn hinge(y: f64, s: f64) -> f64 {
    y * (1.0 - s).max(0.0) + (1.0 - y) * (1.0 + s).max(0.0)
}

fn hinge_grad(y: f64, s: f64) -> f64 {
    let real = if 1.0 - s > 0.0 { -1.0 } else { 0.0 };
    let fake = if 1.0 + s > 0.0 { 1.0 } else { 0.0 };
    y * real + (1.0 - y) * fake
}

fn wasserstein(y: f64, s: f64) -> f64 {
    (1.0 - 2.0 * y) * s
}

fn wasserstein_grad(y: f64, _s: f64) -> f64 {
    1.0 - 2.0 * y
}

/// Canonical tree form of the headline loss.
pub const GANETIC_SEXP: &str = "(add (mul yp (mul yp yp)) (sqrt (mul 3.985 (div yr yp))))";

const F1_SEXP: &str = "(sub (add (add (exp 2.2061) (sin 1.7577)) (mul (sub yr 4.092) (mul (sub yr 4.092) (sub yr 4.092)))) (log (sub yr yp)))";
const F2_SEXP: &str = "(exp (cos (sqrt (sub yr yp))))";
const F3_SEXP: &str = "(mul (sqrt (add yr (log yp))) (mul (sqrt (add yr (log yp))) (sqrt (add yr (log yp)))))";
const F5_SEXP: &str = "(add (mul (sqrt (log yp)) (mul (sqrt (log yp)) (sqrt (log yp)))) (div (log (mul yp (mul yp yp))) (mul (mul 3.6278 yr) (mul yp yp))))";
const F6_SEXP: &str = "(mul (exp (sub (cos yp) (mul yp yp))) (mul (mul (sub yp yr) (sub yp yr)) (mul (sub yp yr) (sub yp yr))))";
const F7_SEXP: &str = "(add (sin (add (mul 1.0657 yr) (div 0.4129 yp))) (mul (cos (add yr yp)) (cos (add yr yp))))";
const F8_SEXP: &str = "(sub (mul (mul yp (mul (cos yr) (cos yr))) (log (mul yr yp))) (sqrt (log yp)))";
const BCE_SEXP: &str = "(sub 0 (add (mul yr (log yp)) (mul (sub 1 yr) (log (sub 1 yp)))))";
const LEAST_SQUARES_SEXP: &str = "(mul (sub yp yr) (sub yp yr))";
const ADVERSARIAL_SEXP: &str = "(add (mul yr (sub 0 (log yp))) (mul (sub 1 yr) (sub (log yp) 1)))";
const WASSERSTEIN_SEXP: &str = "(mul (sub 1 (mul 2 yr)) yp)";

/// All registered built-in loss names.
pub const BUILTIN_NAMES: [&str; 14] = [
    "ganetic",
    "f1",
    "f2",
    "f3",
    "f4",
    "f5",
    "f6",
    "f7",
    "f8",
    "bce",
    "hinge",
    "least_squares",
    "wasserstein",
    "adversarial_minimax",
];

enum Grad {
    Analytic(fn(f64, f64) -> f64),
    /// Symbolic derivative of the canonical tree, shared with tree losses so
    /// built-in and parsed-tree training walk identical trajectories.
    Symbolic(ExprTree),
}

enum Body {
    Closed { f: fn(f64, f64) -> f64, grad: Grad },
    Tree { tree: ExprTree, grad: ExprTree },
}

/// A per-sample loss with its derivative in `y_pred`.
pub struct LossFunction {
    name: String,
    input: PredInput,
    canonical: Option<&'static str>,
    body: Body,
}

fn symbolic_grad(sexp: &'static str) -> Grad {
    let tree = ExprTree::parse(sexp).expect("canonical loss expressions parse");
    Grad::Symbolic(tree.differentiate())
}

impl LossFunction {
    /// Looks up a built-in loss by name (see [`BUILTIN_NAMES`]).
    pub fn builtin(name: &str) -> Option<LossFunction> {
        let (f, grad, canonical, input): (fn(f64, f64) -> f64, Grad, Option<&'static str>, PredInput) =
            match name {
                "ganetic" | "f4" => (
                    ganetic,
                    symbolic_grad(GANETIC_SEXP),
                    Some(GANETIC_SEXP),
                    PredInput::Sigmoid,
                ),
                "f1" => (f1, symbolic_grad(F1_SEXP), Some(F1_SEXP), PredInput::Sigmoid),
                "f2" => (f2, symbolic_grad(F2_SEXP), Some(F2_SEXP), PredInput::Sigmoid),
                "f3" => (f3, symbolic_grad(F3_SEXP), Some(F3_SEXP), PredInput::Sigmoid),
                "f5" => (f5, symbolic_grad(F5_SEXP), Some(F5_SEXP), PredInput::Sigmoid),
                "f6" => (f6, symbolic_grad(F6_SEXP), Some(F6_SEXP), PredInput::Sigmoid),
                "f7" => (f7, symbolic_grad(F7_SEXP), Some(F7_SEXP), PredInput::Sigmoid),
                "f8" => (f8, symbolic_grad(F8_SEXP), Some(F8_SEXP), PredInput::Sigmoid),
                "bce" => (
                    bce,
                    Grad::Analytic(bce_grad),
                    Some(BCE_SEXP),
                    PredInput::Sigmoid,
                ),
                "least_squares" => (
                    least_squares,
                    Grad::Analytic(least_squares_grad),
                    Some(LEAST_SQUARES_SEXP),
                    PredInput::Sigmoid,
                ),
                "adversarial_minimax" | "adversarial" => (
                    adversarial,
                    Grad::Analytic(adversarial_grad),
                    Some(ADVERSARIAL_SEXP),
                    PredInput::Sigmoid,
                ),
                "hinge" => (hinge, Grad::Analytic(hinge_grad), None, PredInput::Score),
                "wasserstein" => (
                    wasserstein,
                    Grad::Analytic(wasserstein_grad),
                    Some(WASSERSTEIN_SEXP),
                    PredInput::Score,
                ),
                _ => return None,
            };
        let canonical_name = match name {
            "adversarial" => "adversarial_minimax",
            // same function, one identity
            "f4" => "ganetic",
            _ => name,
        };
        Some(LossFunction {
            name: String::from(canonical_name),
            input,
            canonical,
            body: Body::Closed { f, grad },
        })
    }

    /// Wraps an expression tree as a loss. The tree must reference both
    /// variables and carry only finite constants; its symbolic derivative is
    /// taken once here.
    pub fn from_tree(tree: ExprTree) -> Result<LossFunction, ValidityError> {
        if !tree.contains_pred() {
            return Err(ValidityError::MissingPred);
        }
        if !tree.contains_real() {
            return Err(ValidityError::MissingReal);
        }
        let grad = tree.differentiate();
        Ok(LossFunction {
            name: tree.serialize(),
            input: PredInput::Sigmoid,
            canonical: None,
            body: Body::Tree { tree, grad },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn pred_input(&self) -> PredInput {
        self.input
    }

    /// Per-sample loss value.
    pub fn per_sample(&self, y_real: f64, y_pred: f64) -> f64 {
        match &self.body {
            Body::Closed { f, .. } => f(y_real, y_pred),
            Body::Tree { tree, .. } => tree.eval(y_pred, y_real, EPS),
        }
    }

    /// Derivative of [`per_sample`](Self::per_sample) in `y_pred`.
    pub fn gradient(&self, y_real: f64, y_pred: f64) -> f64 {
        match &self.body {
            Body::Closed { grad, .. } => match grad {
                Grad::Analytic(g) => g(y_real, y_pred),
                Grad::Symbolic(t) => t.eval(y_pred, y_real, EPS),
            },
            Body::Tree { grad, .. } => grad.eval(y_pred, y_real, EPS),
        }
    }

    /// S-expression form, where one exists.
    pub fn as_sexp(&self) -> Option<String> {
        match &self.body {
            Body::Closed { .. } => self.canonical.map(String::from),
            Body::Tree { tree, .. } => Some(tree.serialize()),
        }
    }
}

impl fmt::Debug for LossFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossFunction")
            .field("name", &self.name)
            .field("input", &self.input)
            .finish()
    }
}

// ---------------------------------------------------------------------------
// shape analysis

/// Loss curve over `y_pred in [0, 1]` at a fixed label, with the refined minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeReport {
    pub y_real: f64,
    /// `(y_pred, loss)` on the uniform grid.
    pub samples: Vec<(f64, f64)>,
    /// Gradient at the same grid points.
    pub gradient: Vec<f64>,
    pub argmin: f64,
    pub min_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeError {
    GridTooSmall { got: usize },
}

impl fmt::Display for ShapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeError::GridTooSmall { got } => {
                write!(f, "shape grid needs at least 16 points, got {}", got)
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ShapeError {}

fn finite_key(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Samples the loss and its gradient on a uniform `grid_n`-point grid over
/// `[0, 1]` and refines the grid minimum by golden-section search to 1e-6.
pub fn shape_report(
    loss: &LossFunction,
    y_real: f64,
    grid_n: usize,
) -> Result<ShapeReport, ShapeError> {
    if grid_n < 16 {
        return Err(ShapeError::GridTooSmall { got: grid_n });
    }
    let step = 1.0 / (grid_n - 1) as f64;
    let mut samples = Vec::with_capacity(grid_n);
    let mut gradient = Vec::with_capacity(grid_n);
    let mut best = 0usize;
    for i in 0..grid_n {
        let x = if i + 1 == grid_n { 1.0 } else { i as f64 * step };
        let v = loss.per_sample(y_real, x);
        samples.push((x, v));
        gradient.push(loss.gradient(y_real, x));
        if finite_key(v) < finite_key(samples[best].1) {
            best = i;
        }
    }

    let lo = if best == 0 { 0.0 } else { samples[best - 1].0 };
    let hi = if best + 1 == grid_n { 1.0 } else { samples[best + 1].0 };
    let inner = golden_section(|x| loss.per_sample(y_real, x), lo, hi, 1e-6);

    // the refined point competes with the bracket edges so boundary minima
    // (e.g. monotone losses) report the exact endpoint
    let mut argmin = inner;
    let mut min_value = loss.per_sample(y_real, inner);
    for x in [lo, hi, samples[best].0] {
        let v = loss.per_sample(y_real, x);
        if finite_key(v) < finite_key(min_value)
            || (finite_key(v) == finite_key(min_value) && x < argmin)
        {
            argmin = x;
            min_value = v;
        }
    }
    Ok(ShapeReport {
        y_real,
        samples,
        gradient,
        argmin,
        min_value,
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let invphi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - invphi * (b - a);
    let mut d = a + invphi * (b - a);
    let mut fc = finite_key(f(c));
    let mut fd = finite_key(f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = finite_key(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = finite_key(f(d));
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lf(name: &str) -> LossFunction {
        LossFunction::builtin(name).expect("known loss")
    }

    #[test]
    fn headline_loss_reference_values() {
        let g = lf("ganetic");
        assert_eq!(g.per_sample(0.0, 0.5), 0.125099999999999989);
        assert_eq!(g.per_sample(1.0, 0.5), 2.94811881623852345);
        assert_eq!(g.per_sample(1.0, 1.0), 2.99624647029118130);
        assert_eq!(g.per_sample(0.0, 1.0), 1.0 + (1e-8f64).sqrt());
    }

    #[test]
    fn survivor_losses_reference_values() {
        let cases: [(&str, f64, f64, f64); 7] = [
            ("f1", -1.07745531426306940, -18.8049888976554911, -57.7623808976554827),
            ("f2", 2.71828181486763620, 2.13879929075171660, 2.13879929075171660),
            ("f3", 1.00000003000000004, 0.169978988584231799, 0.577082868897820900),
            ("f5", 2.75931992653902652e-9, -1.71570222261989058, -2.07944145590901047e8),
            ("f6", 0.0, 0.117067315866334981, 0.117067315866334981),
            ("f7", 1.16893111752984336, 0.954017587937183165, 1.50524153444262843),
            ("f8", -1.41418436579876831e-4, -0.933728645759908327, -10.0428949771282703),
        ];
        for (name, at_11, at_1half, at_0half) in cases {
            let l = lf(name);
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
            assert!(rel(l.per_sample(1.0, 1.0), at_11) < 1e-12, "{} at (1,1)", name);
            assert!(rel(l.per_sample(1.0, 0.5), at_1half) < 1e-12, "{} at (1,0.5)", name);
            assert!(rel(l.per_sample(0.0, 0.5), at_0half) < 1e-12, "{} at (0,0.5)", name);
        }
        assert_eq!(lf("bce").per_sample(1.0, 0.5), 0.693147160559945408);
    }

    #[test]
    fn f4_is_the_headline_loss_bit_for_bit() {
        let a = lf("f4");
        let b = lf("ganetic");
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..10_000 {
            let p: f64 = rng.random();
            let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            assert_eq!(a.per_sample(y, p).to_bits(), b.per_sample(y, p).to_bits());
            assert_eq!(a.gradient(y, p).to_bits(), b.gradient(y, p).to_bits());
        }
    }

    #[test]
    fn closed_forms_match_their_tree_forms_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for name in ["ganetic", "f1", "f2", "f3", "f5", "f6", "f7", "f8", "bce", "least_squares", "adversarial_minimax", "wasserstein"] {
            let l = lf(name);
            let tree = ExprTree::parse(&l.as_sexp().unwrap()).unwrap();
            for _ in 0..2_000 {
                let p: f64 = rng.random();
                let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                let a = l.per_sample(y, p);
                let b = tree.eval(p, y, LOSS_EPSILON);
                assert_eq!(a.to_bits(), b.to_bits(), "{} at ({}, {}): {} vs {}", name, y, p, a, b);
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for name in BUILTIN_NAMES {
            let l = lf(name);
            for _ in 0..200 {
                let p = rng.random_range(0.05..0.95);
                let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                let sym = l.gradient(y, p);
                let num = (l.per_sample(y, p + h) - l.per_sample(y, p - h)) / (2.0 * h);
                let denom = num.abs().max(1e-3);
                assert!(
                    ((sym - num) / denom).abs() < 1e-5,
                    "{} at ({}, {}): sym {} vs fd {}",
                    name,
                    y,
                    p,
                    sym,
                    num
                );
            }
        }
    }

    #[test]
    fn headline_gradient_reference_point() {
        let g = lf("ganetic");
        let v = g.gradient(1.0, 0.5);
        assert!((v - -2.07311875644045074).abs() < 1e-6, "got {}", v);
        // label 0 reduces to the cube term
        assert!((g.gradient(0.0, 0.5) - 0.75).abs() < 1e-9);
    }

    #[test]
    fn score_losses_declare_score_input() {
        assert_eq!(lf("wasserstein").pred_input(), PredInput::Score);
        assert_eq!(lf("hinge").pred_input(), PredInput::Score);
        assert_eq!(lf("ganetic").pred_input(), PredInput::Sigmoid);
        assert_eq!(lf("bce").pred_input(), PredInput::Sigmoid);
    }

    #[test]
    fn hinge_and_wasserstein_values() {
        let h = lf("hinge");
        assert_eq!(h.per_sample(1.0, 0.3), 0.7);
        assert_eq!(h.per_sample(1.0, 2.0), 0.0);
        assert_eq!(h.per_sample(0.0, -2.0), 0.0);
        assert_eq!(h.per_sample(0.0, 0.5), 1.5);
        let w = lf("wasserstein");
        assert_eq!(w.per_sample(1.0, 1.7), -1.7);
        assert_eq!(w.per_sample(0.0, 1.7), 1.7);
    }

    #[test]
    fn adversarial_pushes_both_players_the_right_way() {
        let a = lf("adversarial_minimax");
        for p in [0.1, 0.3, 0.5, 0.7, 0.9] {
            assert!(a.gradient(1.0, p) < 0.0);
            assert!(a.gradient(0.0, p) > 0.0);
        }
        // distinct from bce on the fake branch
        let b = lf("bce");
        assert!((a.per_sample(0.0, 0.3) - b.per_sample(0.0, 0.3)).abs() > 0.1);
    }

    #[test]
    fn tree_losses_wrap_and_reject() {
        let tree = ExprTree::parse("(mul (sub yr yp) (sub yr yp))").unwrap();
        let l = LossFunction::from_tree(tree).unwrap();
        assert_eq!(l.per_sample(1.0, 0.25), 0.5625);
        let constant = ExprTree::parse_raw("(add 1 2)").unwrap();
        assert!(LossFunction::from_tree(constant).is_err());
        let pred_only = ExprTree::parse_raw("(mul yp yp)").unwrap();
        assert!(matches!(
            LossFunction::from_tree(pred_only),
            Err(ValidityError::MissingReal)
        ));
    }

    #[test]
    fn shape_of_headline_loss_at_label_one() {
        let r = shape_report(&lf("ganetic"), 1.0, 512).unwrap();
        assert!((r.argmin - 0.730207924310).abs() < 1e-4, "argmin {}", r.argmin);
        assert!((r.min_value - 2.725446598829).abs() < 1e-9, "min {}", r.min_value);
        assert_eq!(r.samples.len(), 512);
        assert_eq!(r.gradient.len(), 512);
    }

    #[test]
    fn shape_of_headline_loss_at_label_zero() {
        let r = shape_report(&lf("ganetic"), 0.0, 512).unwrap();
        assert_eq!(r.argmin, 0.0);
        assert!((r.min_value - 1e-4).abs() < 1e-12);
        let at_one = r.samples.last().unwrap().1;
        assert!((at_one - (1.0 + (1e-8f64).sqrt())).abs() < 1e-9);
        // strictly increasing: misclassifying fakes only ever costs more
        for w in r.samples.windows(2) {
            assert!(w[1].1 > w[0].1);
        }
    }

    #[test]
    fn shape_of_bce_at_label_one_is_monotone_to_one() {
        let r = shape_report(&lf("bce"), 1.0, 512).unwrap();
        assert_eq!(r.argmin, 1.0);
        for w in r.samples.windows(2) {
            assert!(w[1].1 < w[0].1);
        }
    }

    #[test]
    fn shape_of_f6_decreases_toward_label() {
        let r = shape_report(&lf("f6"), 1.0, 256).unwrap();
        for w in r.samples.windows(2) {
            assert!(w[1].1 <= w[0].1);
        }
        assert_eq!(r.samples.last().unwrap().1, 0.0);
    }

    #[test]
    fn shape_rejects_tiny_grids() {
        let err = shape_report(&lf("ganetic"), 1.0, 15).unwrap_err();
        assert_eq!(err, ShapeError::GridTooSmall { got: 15 });
    }

    #[test]
    fn every_builtin_resolves_and_unknown_does_not() {
        for name in BUILTIN_NAMES {
            assert!(LossFunction::builtin(name).is_some(), "{}", name);
        }
        assert!(LossFunction::builtin("focal").is_none());
    }
}
