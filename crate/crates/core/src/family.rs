//! Point-family builders behind a name-keyed registry.
//!
//! A family is written `name:key=value,key=value`, for example
//! `equispaced:n=ceil(1.2*(2k+1))` or `epsilon_net:eps=0.25,seed=7`. Counts
//! are small arithmetic expressions in `k` and `N` (the dimension of `H_k`).

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{circle_points, epsilon_net, fibonacci_sphere, Domain, PointFamilyLevel, PointSet};
use crate::kernel::{gauss_nodes, jacobi_recurrence};
use crate::quadrature::WeightedMeasure;

/// Slack absorbed before rounding a count, so that `1.2*(2k+1)` at an
/// integer value is not pushed up by representation error.
const ROUND_FUZZ: f64 = 1e-9;

/// Builds the level `Λ_k` of a point family.
pub trait FamilyBuilder: Send + Sync {
    fn name(&self) -> &'static str;

    /// `n_k` is `dim H_k`, available to count expressions as `N`.
    fn build(&self, measure: &WeightedMeasure, k: usize, n_k: usize) -> Result<PointFamilyLevel>;
}

/// A parsed `name:key=value,...` family description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: String,
    pub params: BTreeMap<String, String>,
}

impl FamilySpec {
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let kind = kind.trim();
        if kind.is_empty() {
            return Err(Error::Config(format!("empty family name in `{s}`")));
        }
        let mut params = BTreeMap::new();
        for part in split_top_level(rest) {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("family parameter `{part}` is not key=value")))?;
            if params.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                return Err(Error::Config(format!("family parameter `{}` given twice", key.trim())));
            }
        }
        Ok(Self {
            kind: kind.to_string(),
            params,
        })
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.kind)?;
        for (i, (k, v)) in self.params.iter().enumerate() {
            write!(f, "{}{k}={v}", if i == 0 { ':' } else { ',' })?;
        }
        Ok(())
    }
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

/// Typed access to family parameters; every key must be consumed.
pub struct Params {
    family: String,
    values: BTreeMap<String, String>,
}

impl Params {
    pub fn new(spec: &FamilySpec) -> Self {
        Self {
            family: spec.kind.clone(),
            values: spec.params.clone(),
        }
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.take(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("{}: `{key}` = `{v}` is not a number", self.family)))
            })
            .transpose()
    }

    pub fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.take(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::Config(format!("{}: `{key}` = `{v}` is not an integer", self.family)))
            })
            .transpose()
    }

    pub fn take_count(&mut self, key: &str) -> Result<Option<CountExpr>> {
        self.take(key).map(|v| CountExpr::parse(&v)).transpose()
    }

    /// Fails on any parameter that was not consumed.
    pub fn finish(self, accepted: &[&str]) -> Result<()> {
        match self.values.keys().next() {
            None => Ok(()),
            Some(key) => Err(Error::Config(format!(
                "family `{}` has no parameter `{key}` (accepted: {})",
                self.family,
                accepted.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num(f64),
    K,
    N,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Floor(Box<Expr>),
    Ceil(Box<Expr>),
    Round(Box<Expr>),
}

impl Expr {
    fn eval(&self, k: f64, n: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::K => k,
            Expr::N => n,
            Expr::Add(a, b) => a.eval(k, n) + b.eval(k, n),
            Expr::Sub(a, b) => a.eval(k, n) - b.eval(k, n),
            Expr::Mul(a, b) => a.eval(k, n) * b.eval(k, n),
            Expr::Div(a, b) => a.eval(k, n) / b.eval(k, n),
            Expr::Neg(a) => -a.eval(k, n),
            Expr::Floor(a) => (a.eval(k, n) + ROUND_FUZZ).floor(),
            Expr::Ceil(a) => (a.eval(k, n) - ROUND_FUZZ).ceil(),
            Expr::Round(a) => a.eval(k, n).round(),
        }
    }
}

/// Point count as a function of `k` and `N`; non-integer values are
/// rounded up unless wrapped in `floor(..)` or `round(..)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountExpr {
    source: String,
    expr: Expr,
}

impl CountExpr {
    pub fn parse(s: &str) -> Result<Self> {
        let mut p = ExprParser {
            src: s,
            chars: s.chars().filter(|c| !c.is_whitespace()).collect(),
            pos: 0,
        };
        let expr = p.sum()?;
        if p.pos != p.chars.len() {
            return Err(p.error("trailing characters"));
        }
        Ok(Self {
            source: s.to_string(),
            expr,
        })
    }

    pub fn eval(&self, k: usize, n_k: usize) -> Result<usize> {
        let v = (self.expr.eval(k as f64, n_k as f64) - ROUND_FUZZ).ceil();
        if !v.is_finite() || !(0.0..=1e9).contains(&v) {
            return Err(Error::Config(format!(
                "count `{}` evaluates to {v} at k = {k}",
                self.source
            )));
        }
        Ok(v as usize)
    }
}

impl fmt::Display for CountExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

struct ExprParser<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
}

impl ExprParser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::Config(format!("count expression `{}`: {what} at position {}", self.src, self.pos))
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let rhs = self.product()?;
            lhs = if c == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(c @ ('*' | '/')) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = if c == '*' {
                        Expr::Mul(Box::new(lhs), Box::new(rhs))
                    } else {
                        Expr::Div(Box::new(lhs), Box::new(rhs))
                    };
                }
                // implicit product: `2k`, `3(k+1)`
                Some(c) if c.is_ascii_alphabetic() || c == '(' => {
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '.') {
                    self.pos += 1;
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                text.parse().map(Expr::Num).map_err(|_| self.error("bad number"))
            }
            Some('(') => {
                self.pos += 1;
                let e = self.sum()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().collect();
                match name.as_str() {
                    "k" => Ok(Expr::K),
                    "N" => Ok(Expr::N),
                    "floor" | "ceil" | "round" => {
                        if self.peek() != Some('(') {
                            return Err(self.error("expected `(`"));
                        }
                        let inner = Box::new(self.atom()?);
                        Ok(match name.as_str() {
                            "floor" => Expr::Floor(inner),
                            "ceil" => Expr::Ceil(inner),
                            _ => Expr::Round(inner),
                        })
                    }
                    _ => Err(self.error(&format!("unknown name `{name}`"))),
                }
            }
            _ => Err(self.error("expected a number, `k`, `N` or `(`")),
        }
    }
}

fn unsupported(op: &'static str, domain: Domain) -> Error {
    Error::Unsupported {
        op,
        domain: domain.to_string(),
    }
}

fn level_from_coords(domain: Domain, k: usize, coords: &[f64]) -> Result<PointFamilyLevel> {
    let m = domain.ambient_dim();
    let pts: Vec<Vec<f64>> = coords.chunks(m).map(|c| c.to_vec()).collect();
    let (points, _) = PointSet::project_from(domain, &pts, 1e-12)?;
    Ok(PointFamilyLevel::new(k, points))
}

/// Equispaced nodes: uniform on the interval (endpoints included) and the
/// circle, a Fibonacci lattice on the sphere, a tensor grid with
/// `⌈n^{1/m}⌉` points per axis on cubes.
#[derive(Debug, Clone)]
pub struct Equispaced {
    pub count: CountExpr,
    pub offset: f64,
}

impl FamilyBuilder for Equispaced {
    fn name(&self) -> &'static str {
        "equispaced"
    }

    fn build(&self, measure: &WeightedMeasure, k: usize, n_k: usize) -> Result<PointFamilyLevel> {
        let domain = measure.domain;
        let n = self.count.eval(k, n_k)?;
        if n == 0 {
            return Ok(PointFamilyLevel::new(k, PointSet::empty(domain)));
        }
        let coords = match domain {
            Domain::Circle => circle_points(n, self.offset),
            Domain::Sphere => fibonacci_sphere(n),
            Domain::Interval => axis(n),
            Domain::Cube2 | Domain::Cube3 => {
                let m = domain.ambient_dim();
                let per = ((n as f64).powf(1.0 / m as f64) - ROUND_FUZZ).ceil() as usize;
                let ax = axis(per);
                let mut out = Vec::with_capacity(per.pow(m as u32) * m);
                for idx in 0..per.pow(m as u32) {
                    let mut r = idx;
                    for _ in 0..m {
                        out.push(ax[r % per]);
                        r /= per;
                    }
                }
                out
            }
            Domain::Disk | Domain::Ball3 => return Err(unsupported("equispaced family", domain)),
        };
        level_from_coords(domain, k, &coords)
    }
}

fn axis(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect()
}

/// Zeros of the orthonormal polynomial of degree `n ≤ k+1` for the level's
/// weighted measure (interval only).
#[derive(Debug, Clone)]
pub struct Gauss {
    pub count: Option<CountExpr>,
}

impl FamilyBuilder for Gauss {
    fn name(&self) -> &'static str {
        "gauss"
    }

    fn build(&self, measure: &WeightedMeasure, k: usize, n_k: usize) -> Result<PointFamilyLevel> {
        if measure.domain != Domain::Interval {
            return Err(Error::Config(format!(
                "the gauss family is defined on the interval only, not {}",
                measure.domain
            )));
        }
        let n = match &self.count {
            Some(c) => c.eval(k, n_k)?,
            None => k + 1,
        };
        if n == 0 || n > k + 1 {
            return Err(Error::Config(format!("gauss family at k = {k} needs 1 ≤ n ≤ {}, got {n}", k + 1)));
        }
        let rec = jacobi_recurrence(measure, k)?;
        let (nodes, _) = gauss_nodes(&rec, n)?;
        level_from_coords(Domain::Interval, k, &nodes)
    }
}

/// Farthest-point ε-net at scale `eps/k`.
#[derive(Debug, Clone)]
pub struct EpsilonNet {
    pub eps: f64,
    pub seed: u64,
}

impl FamilyBuilder for EpsilonNet {
    fn name(&self) -> &'static str {
        "epsilon_net"
    }

    fn build(&self, measure: &WeightedMeasure, k: usize, _n_k: usize) -> Result<PointFamilyLevel> {
        epsilon_net(measure.domain, k, self.eps, self.seed)
    }
}

/// Independent points drawn from a uniform law on the domain; level `k`
/// uses stream `k` of a ChaCha8 generator seeded with `seed`.
#[derive(Debug, Clone)]
pub struct Random {
    pub count: CountExpr,
    pub seed: u64,
}

impl FamilyBuilder for Random {
    fn name(&self) -> &'static str {
        "random"
    }

    fn build(&self, measure: &WeightedMeasure, k: usize, n_k: usize) -> Result<PointFamilyLevel> {
        let domain = measure.domain;
        let n = self.count.eval(k, n_k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64);
        let coords: Vec<f64> = (0..n).flat_map(|_| random_point(domain, &mut rng)).collect();
        level_from_coords(domain, k, &coords)
    }
}

/// One point from the normalized reference measure of the domain (uniform
/// for the bodies, surface measure on the circle and sphere).
pub fn random_point<R: Rng>(domain: Domain, rng: &mut R) -> Vec<f64> {
    let m = domain.ambient_dim();
    match domain {
        Domain::Circle | Domain::Sphere => loop {
            let v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
            let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if r > 1e-8 {
                return v.iter().map(|c| c / r).collect();
            }
        },
        Domain::Interval | Domain::Cube2 | Domain::Cube3 => (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect(),
        Domain::Disk | Domain::Ball3 => loop {
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
            if v.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
                return v;
            }
        },
    }
}

/// Constructor of a builder from its parameters.
pub type BuilderFactory = fn(&FamilySpec) -> Result<Box<dyn FamilyBuilder>>;

/// Name-keyed family builders; extra kinds (such as file-backed families)
/// can be registered by callers.
pub struct FamilyRegistry {
    factories: BTreeMap<&'static str, BuilderFactory>,
}

impl Default for FamilyRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("equispaced", |spec| {
            let mut p = Params::new(spec);
            let count = p
                .take_count("n")?
                .ok_or_else(|| Error::Config("equispaced family needs `n`".into()))?;
            let offset = p.take_f64("offset")?.unwrap_or(0.0);
            p.finish(&["n", "offset"])?;
            Ok(Box::new(Equispaced { count, offset }))
        });
        r.register("gauss", |spec| {
            let mut p = Params::new(spec);
            let count = p.take_count("n")?;
            p.finish(&["n"])?;
            Ok(Box::new(Gauss { count }))
        });
        r.register("epsilon_net", |spec| {
            let mut p = Params::new(spec);
            let eps = p
                .take_f64("eps")?
                .ok_or_else(|| Error::Config("epsilon_net family needs `eps`".into()))?;
            let seed = p.take_u64("seed")?.unwrap_or(0);
            p.finish(&["eps", "seed"])?;
            if !(eps > 0.0) {
                return Err(Error::Config(format!("epsilon_net: eps = {eps} must be positive")));
            }
            Ok(Box::new(EpsilonNet { eps, seed }))
        });
        r.register("random", |spec| {
            let mut p = Params::new(spec);
            let count = p
                .take_count("n")?
                .ok_or_else(|| Error::Config("random family needs `n`".into()))?;
            let seed = p
                .take_u64("seed")?
                .ok_or_else(|| Error::Config("random family needs `seed`".into()))?;
            p.finish(&["n", "seed"])?;
            Ok(Box::new(Random { count, seed }))
        });
        r
    }
}

impl FamilyRegistry {
    pub fn register(&mut self, name: &'static str, factory: BuilderFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, spec: &FamilySpec) -> Result<Box<dyn FamilyBuilder>> {
        let factory = self.factories.get(spec.kind.as_str()).ok_or_else(|| {
            Error::Config(format!(
                "unknown family `{}` (known: {})",
                spec.kind,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory(spec)
    }

    pub fn parse(&self, s: &str) -> Result<Box<dyn FamilyBuilder>> {
        self.build(&FamilySpec::parse(s)?)
    }
}
