//! Expression trees over protected arithmetic.
//!
//! Candidate loss functions are trees over `y_pred`/`y_real`, real constants
//! and a small operator set. Division, square root and logarithm are
//! "protected": they take `|x| + eps` (or divide by `b + eps`) so that every
//! tree evaluates to a real number on the whole domain and evolution never has
//! to special-case singularities.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;
use core::fmt;

use rand::Rng;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;

/// Two-argument operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    /// Protected: `a / (b + eps)`.
    Div,
}

/// One-argument operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    /// Protected: `sqrt(|x| + eps)`.
    Sqrt,
    /// Protected: `ln(|x| + eps)`.
    Log,
    Exp,
    Sin,
    Cos,
    /// Sign of the argument (-1, 0, +1). Only produced by [`ExprTree::differentiate`];
    /// random generation and mutation never emit it.
    Sign,
}

pub(crate) const BINARY_OPS: [BinaryOp; 4] =
    [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];

/// Unary operators eligible for random generation (everything but `Sign`).
pub(crate) const GEN_UNARY_OPS: [UnaryOp; 5] = [
    UnaryOp::Sqrt,
    UnaryOp::Log,
    UnaryOp::Exp,
    UnaryOp::Sin,
    UnaryOp::Cos,
];

impl BinaryOp {
    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Sqrt => "sqrt",
            UnaryOp::Log => "log",
            UnaryOp::Exp => "exp",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Sign => "sign",
        }
    }
}

/// A single tree node. `Pred` is the prediction input, `Real` the label input.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Pred,
    Real,
    Const(f64),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Node::Pred | Node::Real | Node::Const(_))
    }

    fn size(&self) -> usize {
        match self {
            Node::Unary(_, a) => 1 + a.size(),
            Node::Binary(_, a, b) => 1 + a.size() + b.size(),
            _ => 1,
        }
    }

    fn height(&self) -> usize {
        match self {
            Node::Unary(_, a) => 1 + a.height(),
            Node::Binary(_, a, b) => 1 + a.height().max(b.height()),
            _ => 1,
        }
    }

    fn count_var(&self, pred: bool) -> usize {
        match self {
            Node::Pred => pred as usize,
            Node::Real => !pred as usize,
            Node::Const(_) => 0,
            Node::Unary(_, a) => a.count_var(pred),
            Node::Binary(_, a, b) => a.count_var(pred) + b.count_var(pred),
        }
    }

    fn eval(&self, y_pred: f64, y_real: f64, eps: f64) -> f64 {
        match self {
            Node::Pred => y_pred,
            Node::Real => y_real,
            Node::Const(c) => *c,
            Node::Unary(op, a) => {
                let x = a.eval(y_pred, y_real, eps);
                match op {
                    UnaryOp::Sqrt => (x.abs() + eps).sqrt(),
                    UnaryOp::Log => (x.abs() + eps).ln(),
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Sign => {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else if x == 0.0 {
                            0.0
                        } else {
                            f64::NAN
                        }
                    }
                }
            }
            Node::Binary(op, a, b) => {
                let x = a.eval(y_pred, y_real, eps);
                let y = b.eval(y_pred, y_real, eps);
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => x / (y + eps),
                }
            }
        }
    }

    fn eval_tracking_margin(&self, y_pred: f64, y_real: f64, eps: f64, worst: &mut f64) -> f64 {
        match self {
            Node::Pred => y_pred,
            Node::Real => y_real,
            Node::Const(c) => *c,
            Node::Unary(op, a) => {
                let x = a.eval_tracking_margin(y_pred, y_real, eps, worst);
                match op {
                    UnaryOp::Sqrt | UnaryOp::Log | UnaryOp::Sign => {
                        *worst = worst.min(x.abs());
                    }
                    UnaryOp::Exp | UnaryOp::Sin | UnaryOp::Cos => {}
                }
                match op {
                    UnaryOp::Sqrt => (x.abs() + eps).sqrt(),
                    UnaryOp::Log => (x.abs() + eps).ln(),
                    UnaryOp::Exp => x.exp(),
                    UnaryOp::Sin => x.sin(),
                    UnaryOp::Cos => x.cos(),
                    UnaryOp::Sign => {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else if x == 0.0 {
                            0.0
                        } else {
                            f64::NAN
                        }
                    }
                }
            }
            Node::Binary(op, a, b) => {
                let x = a.eval_tracking_margin(y_pred, y_real, eps, worst);
                let y = b.eval_tracking_margin(y_pred, y_real, eps, worst);
                if *op == BinaryOp::Div {
                    *worst = worst.min((y + eps).abs());
                }
                match op {
                    BinaryOp::Add => x + y,
                    BinaryOp::Sub => x - y,
                    BinaryOp::Mul => x * y,
                    BinaryOp::Div => x / (y + eps),
                }
            }
        }
    }

    fn write_sexp(&self, out: &mut String) {
        match self {
            Node::Pred => out.push_str("yp"),
            Node::Real => out.push_str("yr"),
            Node::Const(c) => out.push_str(&format!("{}", c)),
            Node::Unary(op, a) => {
                out.push('(');
                out.push_str(op.name());
                out.push(' ');
                a.write_sexp(out);
                out.push(')');
            }
            Node::Binary(op, a, b) => {
                out.push('(');
                out.push_str(op.name());
                out.push(' ');
                a.write_sexp(out);
                out.push(' ');
                b.write_sexp(out);
                out.push(')');
            }
        }
    }

    /// Preorder lookup; index 0 is the node itself.
    fn nth(&self, k: &mut usize) -> Option<&Node> {
        if *k == 0 {
            return Some(self);
        }
        *k -= 1;
        match self {
            Node::Unary(_, a) => a.nth(k),
            Node::Binary(_, a, b) => a.nth(k).or_else(|| b.nth(k)),
            _ => None,
        }
    }

    /// Rebuilds the tree with the preorder-`k` subtree swapped for `repl`.
    fn splice(&self, k: &mut usize, repl: &mut Option<Node>) -> Node {
        if repl.is_some() {
            if *k == 0 {
                return repl.take().expect("checked");
            }
            *k -= 1;
        }
        match self {
            Node::Unary(op, a) => Node::Unary(*op, Box::new(a.splice(k, repl))),
            Node::Binary(op, a, b) => {
                let left = a.splice(k, repl);
                let right = b.splice(k, repl);
                Node::Binary(*op, Box::new(left), Box::new(right))
            }
            other => other.clone(),
        }
    }

    fn collect_terminals(&self, idx: &mut usize, out: &mut Vec<(usize, Node)>) {
        match self {
            Node::Unary(_, a) => {
                *idx += 1;
                a.collect_terminals(idx, out);
            }
            Node::Binary(_, a, b) => {
                *idx += 1;
                a.collect_terminals(idx, out);
                b.collect_terminals(idx, out);
            }
            t => {
                out.push((*idx, t.clone()));
                *idx += 1;
            }
        }
    }
}

/// An expression tree with cached size (node count) and height (single node = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ExprTree {
    root: Node,
    size: usize,
    height: usize,
}

/// Generation constraints for random trees and genetic operators.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConstraints {
    /// Minimum height of generated trees (root counts as 1).
    pub min_height: usize,
    /// Hard cap on node count for individuals.
    pub max_size: usize,
    pub const_low: f64,
    pub const_high: f64,
    /// Protection constant for div/sqrt/log.
    pub epsilon: f64,
    /// Upper end of the ramped initialization depth range.
    pub max_init_height: usize,
}

impl Default for GenConstraints {
    fn default() -> Self {
        GenConstraints {
            min_height: 2,
            max_size: 100,
            const_low: -5.0,
            const_high: 5.0,
            epsilon: 1e-8,
            max_init_height: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    MinHeightZero,
    /// `max_size` cannot hold a full tree of `min_height` (needs `2^h - 1`).
    MaxSizeTooSmall { max_size: usize, needed: usize },
    BadConstRange,
    BadEpsilon,
    InitBelowMinHeight,
}

impl fmt::Display for ConstraintError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintError::MinHeightZero => write!(f, "min_height must be at least 1"),
            ConstraintError::MaxSizeTooSmall { max_size, needed } => write!(
                f,
                "max_size {} too small: need at least {} nodes",
                max_size, needed
            ),
            ConstraintError::BadConstRange => write!(f, "const_low must be below const_high"),
            ConstraintError::BadEpsilon => write!(f, "epsilon must be a positive finite number"),
            ConstraintError::InitBelowMinHeight => {
                write!(f, "max_init_height must be at least min_height")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ConstraintError {}

impl GenConstraints {
    /// Builds constraints with the given height/size bounds, defaults elsewhere.
    pub fn new(min_height: usize, max_size: usize) -> Result<Self, ConstraintError> {
        let c = GenConstraints {
            min_height,
            max_size,
            max_init_height: GenConstraints::default().max_init_height.max(min_height),
            ..GenConstraints::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        if self.min_height == 0 {
            return Err(ConstraintError::MinHeightZero);
        }
        // a full binary tree of min_height must fit, and the two required
        // variables need an operator over them
        let full = if self.min_height >= usize::BITS as usize {
            usize::MAX
        } else {
            (1usize << self.min_height) - 1
        };
        let needed = full.max(3);
        if self.max_size < needed {
            return Err(ConstraintError::MaxSizeTooSmall {
                max_size: self.max_size,
                needed,
            });
        }
        if !(self.const_low < self.const_high)
            || !self.const_low.is_finite()
            || !self.const_high.is_finite()
        {
            return Err(ConstraintError::BadConstRange);
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(ConstraintError::BadEpsilon);
        }
        if self.max_init_height < self.min_height {
            return Err(ConstraintError::InitBelowMinHeight);
        }
        Ok(())
    }
}

/// Why a tree is not usable as an individual.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidityError {
    MissingPred,
    MissingReal,
    Oversize { size: usize, max: usize },
    NonFiniteConstant,
}

impl fmt::Display for ValidityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidityError::MissingPred => write!(f, "expression must use both yp and yr (missing yp)"),
            ValidityError::MissingReal => write!(f, "expression must use both yp and yr (missing yr)"),
            ValidityError::Oversize { size, max } => {
                write!(f, "expression has {} nodes, limit is {}", size, max)
            }
            ValidityError::NonFiniteConstant => write!(f, "expression contains a non-finite constant"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ValidityError {}

impl ExprTree {
    /// Wraps a node tree, computing the size/height caches. Performs no
    /// validity checks; see [`ExprTree::validate`].
    pub fn new(root: Node) -> Self {
        let size = root.size();
        let height = root.height();
        ExprTree { root, size, height }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains_pred(&self) -> bool {
        self.root.count_var(true) > 0
    }

    pub fn contains_real(&self) -> bool {
        self.root.count_var(false) > 0
    }

    /// Checks the individual rules: both variables present, size within the
    /// cap, all constants finite.
    pub fn validate(&self, c: &GenConstraints) -> Result<(), ValidityError> {
        if !self.contains_pred() {
            return Err(ValidityError::MissingPred);
        }
        if !self.contains_real() {
            return Err(ValidityError::MissingReal);
        }
        if self.size > c.max_size {
            return Err(ValidityError::Oversize {
                size: self.size,
                max: c.max_size,
            });
        }
        fn finite(n: &Node) -> bool {
            match n {
                Node::Const(c) => c.is_finite(),
                Node::Unary(_, a) => finite(a),
                Node::Binary(_, a, b) => finite(a) && finite(b),
                _ => true,
            }
        }
        if !finite(&self.root) {
            return Err(ValidityError::NonFiniteConstant);
        }
        Ok(())
    }

    /// Evaluates the tree under protected semantics. Total on all real inputs;
    /// may return non-finite values only through overflow (e.g. `exp`).
    pub fn eval(&self, y_pred: f64, y_real: f64, eps: f64) -> f64 {
        self.root.eval(y_pred, y_real, eps)
    }

    /// Smallest distance, over the whole evaluation at this point, from any
    /// `sqrt`/`log`/`sign` argument to the |x| kink at zero and from any
    /// `div` denominator to its pole. Infinite when no such operator occurs.
    /// Derivatives (and finite-difference checks against them) are only
    /// trustworthy where this margin is comfortably positive.
    pub fn kink_margin(&self, y_pred: f64, y_real: f64, eps: f64) -> f64 {
        let mut worst = f64::INFINITY;
        self.root.eval_tracking_margin(y_pred, y_real, eps, &mut worst);
        worst
    }

    /// Renders the canonical s-expression, e.g. `(add yp 3.985)`. Constants use
    /// the shortest decimal form that parses back to the identical float.
    pub fn serialize(&self) -> String {
        let mut out = String::with_capacity(self.size * 6);
        self.root.write_sexp(&mut out);
        out
    }

    /// Parses an s-expression and checks the both-variables rule.
    pub fn parse(input: &str) -> Result<Self, ParseError> {
        let tree = Self::parse_raw(input)?;
        if !tree.contains_pred() {
            return Err(ParseError::MissingVariable { name: "yp" });
        }
        if !tree.contains_real() {
            return Err(ParseError::MissingVariable { name: "yr" });
        }
        Ok(tree)
    }

    /// Parses without the both-variables check (gradient trees, constants).
    pub fn parse_raw(input: &str) -> Result<Self, ParseError> {
        let toks = tokenize(input);
        if toks.is_empty() {
            return Err(ParseError::EmptyInput);
        }
        let mut pos = 0;
        let node = parse_node(&toks, &mut pos, 0, input.len())?;
        if pos < toks.len() {
            return Err(ParseError::TrailingInput {
                at: toks[pos].at() + 1,
            });
        }
        Ok(ExprTree::new(node))
    }

    /// Symbolic derivative with respect to `y_pred`, under protected semantics
    /// (`d|x|/dx = sign(x)`, protection constants treated as constants).
    ///
    /// The result is a gradient program, not an individual: it may exceed the
    /// size cap, skip a variable, and contain `sign` nodes.
    pub fn differentiate(&self) -> ExprTree {
        ExprTree::new(diff(&self.root))
    }

    pub(crate) fn node_at(&self, idx: usize) -> &Node {
        let mut k = idx;
        self.root.nth(&mut k).expect("node index within tree")
    }

    pub(crate) fn with_subtree(&self, idx: usize, repl: Node) -> ExprTree {
        let mut k = idx;
        let mut r = Some(repl);
        ExprTree::new(self.root.splice(&mut k, &mut r))
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Size and height of a tree (reads the caches).
pub fn measure(t: &ExprTree) -> (usize, usize) {
    (t.size(), t.height())
}

// ---------------------------------------------------------------------------
// parsing

#[derive(Debug, Clone, PartialEq)]
pub enum ParseError {
    EmptyInput,
    /// Byte positions are 1-based; for truncated input this points just past the end.
    UnbalancedParen { at: usize },
    ExpectedOperator { at: usize },
    UnknownOperator { name: String, at: usize },
    MissingArgument { op: &'static str, at: usize },
    TooManyArguments { op: &'static str, at: usize },
    MalformedAtom { at: usize },
    NonFiniteConstant { at: usize },
    TooDeep { at: usize },
    TrailingInput { at: usize },
    MissingVariable { name: &'static str },
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::EmptyInput => write!(f, "empty input"),
            ParseError::UnbalancedParen { at } => write!(f, "unbalanced parenthesis at byte {}", at),
            ParseError::ExpectedOperator { at } => write!(f, "expected operator at byte {}", at),
            ParseError::UnknownOperator { name, at } => {
                write!(f, "unknown operator `{}` at byte {}", name, at)
            }
            ParseError::MissingArgument { op, at } => {
                write!(f, "missing argument for `{}` at byte {}", op, at)
            }
            ParseError::TooManyArguments { op, at } => {
                write!(f, "too many arguments for `{}` at byte {}", op, at)
            }
            ParseError::MalformedAtom { at } => write!(f, "malformed atom at byte {}", at),
            ParseError::NonFiniteConstant { at } => write!(f, "non-finite constant at byte {}", at),
            ParseError::TooDeep { at } => write!(f, "expression nested too deeply at byte {}", at),
            ParseError::TrailingInput { at } => write!(f, "unexpected trailing input at byte {}", at),
            ParseError::MissingVariable { name } => {
                write!(f, "expression must use both yp and yr (missing {})", name)
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy)]
enum Tok<'a> {
    Open(usize),
    Close(usize),
    Atom(&'a str, usize),
}

impl Tok<'_> {
    fn at(&self) -> usize {
        match self {
            Tok::Open(a) | Tok::Close(a) | Tok::Atom(_, a) => *a,
        }
    }
}

fn tokenize(s: &str) -> Vec<Tok<'_>> {
    let bytes = s.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'(' => {
                toks.push(Tok::Open(i));
                i += 1;
            }
            b')' => {
                toks.push(Tok::Close(i));
                i += 1;
            }
            _ => {
                let start = i;
                while i < bytes.len() && !matches!(bytes[i], b' ' | b'\t' | b'\n' | b'\r' | b'(' | b')')
                {
                    i += 1;
                }
                toks.push(Tok::Atom(&s[start..i], start));
            }
        }
    }
    toks
}

const MAX_PARSE_DEPTH: usize = 512;

fn op_arity(name: &str) -> Option<(usize, &'static str)> {
    for op in BINARY_OPS {
        if op.name() == name {
            return Some((2, op.name()));
        }
    }
    for op in [
        UnaryOp::Sqrt,
        UnaryOp::Log,
        UnaryOp::Exp,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Sign,
    ] {
        if op.name() == name {
            return Some((1, op.name()));
        }
    }
    None
}

fn build_op(name: &str, mut args: Vec<Node>) -> Node {
    match name {
        "add" => Node::Binary(BinaryOp::Add, Box::new(args.remove(0)), Box::new(args.remove(0))),
        "sub" => Node::Binary(BinaryOp::Sub, Box::new(args.remove(0)), Box::new(args.remove(0))),
        "mul" => Node::Binary(BinaryOp::Mul, Box::new(args.remove(0)), Box::new(args.remove(0))),
        "div" => Node::Binary(BinaryOp::Div, Box::new(args.remove(0)), Box::new(args.remove(0))),
        "sqrt" => Node::Unary(UnaryOp::Sqrt, Box::new(args.remove(0))),
        "log" => Node::Unary(UnaryOp::Log, Box::new(args.remove(0))),
        "exp" => Node::Unary(UnaryOp::Exp, Box::new(args.remove(0))),
        "sin" => Node::Unary(UnaryOp::Sin, Box::new(args.remove(0))),
        "cos" => Node::Unary(UnaryOp::Cos, Box::new(args.remove(0))),
        "sign" => Node::Unary(UnaryOp::Sign, Box::new(args.remove(0))),
        _ => unreachable!("operator names checked by op_arity"),
    }
}

fn parse_node(toks: &[Tok<'_>], pos: &mut usize, depth: usize, input_len: usize) -> Result<Node, ParseError> {
    let tok = match toks.get(*pos) {
        Some(t) => *t,
        None => return Err(ParseError::UnbalancedParen { at: input_len + 1 }),
    };
    if depth > MAX_PARSE_DEPTH {
        return Err(ParseError::TooDeep { at: tok.at() + 1 });
    }
    match tok {
        Tok::Close(at) => Err(ParseError::UnbalancedParen { at: at + 1 }),
        Tok::Atom(text, at) => {
            *pos += 1;
            atom_node(text, at)
        }
        Tok::Open(_) => {
            *pos += 1;
            let (name, arity, canon) = match toks.get(*pos) {
                None => return Err(ParseError::UnbalancedParen { at: input_len + 1 }),
                Some(Tok::Atom(name, at)) => match op_arity(name) {
                    Some((arity, canon)) => (*name, arity, canon),
                    None => {
                        return Err(ParseError::UnknownOperator {
                            name: String::from(*name),
                            at: at + 1,
                        })
                    }
                },
                Some(t) => return Err(ParseError::ExpectedOperator { at: t.at() + 1 }),
            };
            let _ = name;
            *pos += 1;
            let mut args = Vec::with_capacity(arity);
            for _ in 0..arity {
                match toks.get(*pos) {
                    None => return Err(ParseError::UnbalancedParen { at: input_len + 1 }),
                    Some(Tok::Close(at)) => {
                        return Err(ParseError::MissingArgument { op: canon, at: at + 1 })
                    }
                    Some(_) => args.push(parse_node(toks, pos, depth + 1, input_len)?),
                }
            }
            match toks.get(*pos) {
                None => Err(ParseError::UnbalancedParen { at: input_len + 1 }),
                Some(Tok::Close(_)) => {
                    *pos += 1;
                    Ok(build_op(canon, args))
                }
                Some(t) => Err(ParseError::TooManyArguments { op: canon, at: t.at() + 1 }),
            }
        }
    }
}

fn atom_node(text: &str, at: usize) -> Result<Node, ParseError> {
    match text {
        "yp" => Ok(Node::Pred),
        "yr" => Ok(Node::Real),
        _ => match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Node::Const(v)),
            Ok(_) => Err(ParseError::NonFiniteConstant { at: at + 1 }),
            Err(_) => Err(ParseError::MalformedAtom { at: at + 1 }),
        },
    }
}

// ---------------------------------------------------------------------------
// random generation and repair

/// Grows a random tree honoring the constraints: ramped half-and-half depth in
/// `min_height..=max_init_height`, size within `max_size`, both variables
/// present (repaired in if the raw tree misses one).
///
/// Panics if the constraints do not validate.
pub fn random_tree<R: Rng + ?Sized>(c: &GenConstraints, rng: &mut R) -> ExprTree {
    c.validate().expect("generation constraints must validate");
    for _ in 0..10_000 {
        let target = rng.random_range(c.min_height..=c.max_init_height);
        let full = rng.random_bool(0.5);
        let node = grow(c, rng, target, c.min_height, c.max_size, full);
        if let Some(repaired) = repair_variables(node, c, rng) {
            let t = ExprTree::new(repaired);
            debug_assert!(t.validate(c).is_ok());
            return t;
        }
    }
    // max_size >= 3 always admits e.g. (add yp yr), so sampling binary roots
    // eventually succeeds; this is unreachable for any validated constraints
    panic!("failed to generate a repairable tree under the given constraints");
}

/// Grows a random subtree for mutation: depth at most `max_depth`, node count
/// at most `budget`, no variable guarantees.
pub(crate) fn random_subtree<R: Rng + ?Sized>(
    c: &GenConstraints,
    rng: &mut R,
    max_depth: usize,
    budget: usize,
) -> Node {
    let target = rng.random_range(1..=max_depth.max(1));
    grow(c, rng, target, 1, budget.max(1), false)
}

pub(crate) fn random_terminal<R: Rng + ?Sized>(c: &GenConstraints, rng: &mut R) -> Node {
    match rng.random_range(0..3) {
        0 => Node::Pred,
        1 => Node::Real,
        _ => Node::Const(rng.random_range(c.const_low..=c.const_high)),
    }
}

/// `target_left`/`min_left` count levels including the current node; a node
/// with either equal to 1 is a leaf (for target) or may be one (for min).
fn grow<R: Rng + ?Sized>(
    c: &GenConstraints,
    rng: &mut R,
    target_left: usize,
    min_left: usize,
    budget: usize,
    full: bool,
) -> Node {
    debug_assert!(budget >= 1);
    let need_child = min_left.saturating_sub(1).max(1);
    let unary_ok = target_left > 1 && budget >= 1 + need_child;
    let binary_ok = target_left > 1 && budget >= 2 + need_child;
    let terminal_ok = min_left <= 1;

    // candidate ids: 0..4 binary, 4..9 unary, 9..12 terminals
    let mut pool: Vec<usize> = Vec::with_capacity(12);
    if binary_ok {
        pool.extend(0..4);
    }
    if unary_ok {
        pool.extend(4..9);
    }
    if terminal_ok && (!full || !(binary_ok || unary_ok)) {
        pool.extend(9..12);
    }
    debug_assert!(!pool.is_empty(), "constraint validation keeps the pool nonempty");

    let id = pool[rng.random_range(0..pool.len())];
    if id < 4 {
        let op = BINARY_OPS[id];
        let (left_min, right_min) = if full {
            // aim for a complete tree, degrading to whatever the budget holds
            let want = target_left - 1;
            let left = want.min(budget - 2).max(1);
            let right = want.min(budget - 1 - left).max(1);
            (left, right)
        } else if rng.random_bool(0.5) {
            (need_child, 1)
        } else {
            (1, need_child)
        };
        // reserve the right child's minimal chain before growing the left
        let left_budget = budget - 1 - right_min;
        let left = grow(c, rng, target_left - 1, left_min, left_budget, full);
        let right_budget = budget - 1 - left.size();
        let right = grow(c, rng, target_left - 1, right_min, right_budget, full);
        Node::Binary(op, Box::new(left), Box::new(right))
    } else if id < 9 {
        let op = GEN_UNARY_OPS[id - 4];
        let child_min = if full {
            (target_left - 1).min(budget - 1).max(1)
        } else {
            need_child
        };
        let child = grow(c, rng, target_left - 1, child_min, budget - 1, full);
        Node::Unary(op, Box::new(child))
    } else if id == 9 {
        Node::Pred
    } else if id == 10 {
        Node::Real
    } else {
        Node::Const(rng.random_range(c.const_low..=c.const_high))
    }
}

/// Ensures both variables appear, replacing uniformly chosen terminal leaves.
/// When the tree has a single leaf that cannot be given up, the leaf is
/// expanded into a binary node over both variables (+2 nodes); returns `None`
/// if that would break the size cap.
pub(crate) fn repair_variables<R: Rng + ?Sized>(
    mut node: Node,
    c: &GenConstraints,
    rng: &mut R,
) -> Option<Node> {
    for missing_pred in [true, false] {
        if node.count_var(missing_pred) > 0 {
            continue;
        }
        let mut terminals = Vec::new();
        let mut idx = 0;
        node.collect_terminals(&mut idx, &mut terminals);
        let other_count = node.count_var(!missing_pred);
        let candidates: Vec<usize> = terminals
            .iter()
            .filter(|(_, t)| match t {
                Node::Const(_) => true,
                Node::Pred => missing_pred || other_count >= 2,
                Node::Real => !missing_pred || other_count >= 2,
                _ => false,
            })
            .map(|(i, _)| *i)
            .collect();
        let var = if missing_pred { Node::Pred } else { Node::Real };
        if !candidates.is_empty() {
            let at = candidates[rng.random_range(0..candidates.len())];
            let mut k = at;
            let mut repl = Some(var);
            node = node.splice(&mut k, &mut repl);
        } else {
            // lone leaf holding the other variable: expand it
            if node.size() + 2 > c.max_size {
                return None;
            }
            let op = BINARY_OPS[rng.random_range(0..4)];
            let pair = if rng.random_bool(0.5) {
                Node::Binary(op, Box::new(Node::Pred), Box::new(Node::Real))
            } else {
                Node::Binary(op, Box::new(Node::Real), Box::new(Node::Pred))
            };
            let (at, _) = terminals[rng.random_range(0..terminals.len())];
            let mut k = at;
            let mut repl = Some(pair);
            node = node.splice(&mut k, &mut repl);
        }
    }
    Some(node)
}

// ---------------------------------------------------------------------------
// symbolic differentiation

fn is_zero(n: &Node) -> bool {
    matches!(n, Node::Const(c) if *c == 0.0)
}

fn is_one(n: &Node) -> bool {
    matches!(n, Node::Const(c) if *c == 1.0)
}

fn c0() -> Node {
    Node::Const(0.0)
}

fn s_add(a: Node, b: Node) -> Node {
    if is_zero(&a) {
        b
    } else if is_zero(&b) {
        a
    } else {
        Node::Binary(BinaryOp::Add, Box::new(a), Box::new(b))
    }
}

fn s_sub(a: Node, b: Node) -> Node {
    if is_zero(&b) {
        a
    } else {
        Node::Binary(BinaryOp::Sub, Box::new(a), Box::new(b))
    }
}

fn s_mul(a: Node, b: Node) -> Node {
    if is_zero(&a) || is_zero(&b) {
        c0()
    } else if is_one(&a) {
        b
    } else if is_one(&b) {
        a
    } else {
        Node::Binary(BinaryOp::Mul, Box::new(a), Box::new(b))
    }
}

fn s_div(a: Node, b: Node) -> Node {
    if is_zero(&a) {
        c0()
    } else {
        Node::Binary(BinaryOp::Div, Box::new(a), Box::new(b))
    }
}

fn un(op: UnaryOp, a: Node) -> Node {
    Node::Unary(op, Box::new(a))
}

fn diff(n: &Node) -> Node {
    match n {
        Node::Pred => Node::Const(1.0),
        Node::Real | Node::Const(_) => c0(),
        Node::Binary(BinaryOp::Add, a, b) => s_add(diff(a), diff(b)),
        Node::Binary(BinaryOp::Sub, a, b) => s_sub(diff(a), diff(b)),
        Node::Binary(BinaryOp::Mul, a, b) => {
            s_add(s_mul(diff(a), (**b).clone()), s_mul((**a).clone(), diff(b)))
        }
        // d[a/(b+eps)] = a'/(b+eps) - a b'/(b+eps)^2; the protected divisions
        // supply the +eps terms themselves
        Node::Binary(BinaryOp::Div, a, b) => s_sub(
            s_div(diff(a), (**b).clone()),
            s_div(
                s_div(s_mul((**a).clone(), diff(b)), (**b).clone()),
                (**b).clone(),
            ),
        ),
        // d sqrt(|u|+eps) = sign(u) u' / (2 sqrt(|u|+eps)); written as
        // sign(u) u' sqrt(|u|+eps) / (|u| + sqrt(|u|+eps)^2 + eps) so the
        // protected division reconstructs the 2(|u|+eps) denominator exactly
        Node::Unary(UnaryOp::Sqrt, u) => {
            let sign_u = un(UnaryOp::Sign, (**u).clone());
            let sqrt_u = un(UnaryOp::Sqrt, (**u).clone());
            s_div(
                s_mul(diff(u), s_mul(sign_u.clone(), sqrt_u.clone())),
                s_add(
                    s_mul(sign_u, (**u).clone()),
                    s_mul(sqrt_u.clone(), sqrt_u),
                ),
            )
        }
        // d ln(|u|+eps) = sign(u) u' / (|u|+eps); |u| = sign(u)*u and the
        // protected division supplies the +eps
        Node::Unary(UnaryOp::Log, u) => {
            let sign_u = un(UnaryOp::Sign, (**u).clone());
            s_div(
                s_mul(sign_u.clone(), diff(u)),
                s_mul(sign_u, (**u).clone()),
            )
        }
        Node::Unary(UnaryOp::Exp, u) => s_mul(un(UnaryOp::Exp, (**u).clone()), diff(u)),
        Node::Unary(UnaryOp::Sin, u) => s_mul(un(UnaryOp::Cos, (**u).clone()), diff(u)),
        Node::Unary(UnaryOp::Cos, u) => {
            s_sub(c0(), s_mul(un(UnaryOp::Sin, (**u).clone()), diff(u)))
        }
        // zero almost everywhere
        Node::Unary(UnaryOp::Sign, _) => c0(),
    }
}
