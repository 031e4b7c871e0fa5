//! Weighted measures and quadrature rules with certified polynomial exactness.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{circle_points, Domain, PointSet};
use crate::numeric::{gamma_half, CompensatedSum};
use crate::polyspace::enumerate_exponents;

/// Certification threshold: monomial residual relative to the total mass.
pub const CERTIFICATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseMeasure {
    /// Lebesgue measure on a full-dimensional body.
    Lebesgue,
    /// Arc length on the circle, surface area on the sphere.
    VolumeForm,
    /// `dx / √(1 − x²)` on the interval.
    Arcsine,
}

impl BaseMeasure {
    pub fn default_for(domain: Domain) -> Self {
        if domain.is_variety() {
            BaseMeasure::VolumeForm
        } else {
            BaseMeasure::Lebesgue
        }
    }
}

/// One term `coeff · x^exponent` of a polynomial weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyTerm {
    pub exponent: Vec<u32>,
    pub coeff: f64,
}

/// The continuous weight `φ` in `e^{-kφ}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightFunction {
    #[default]
    Zero,
    /// `φ(x) = |x|²`.
    Quadratic,
    Polynomial(Vec<PolyTerm>),
}

impl WeightFunction {
    pub fn is_zero(&self) -> bool {
        match self {
            WeightFunction::Zero => true,
            WeightFunction::Quadratic => false,
            WeightFunction::Polynomial(terms) => terms.iter().all(|t| t.coeff == 0.0),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            WeightFunction::Zero => 0.0,
            WeightFunction::Quadratic => x.iter().map(|c| c * c).sum(),
            WeightFunction::Polynomial(terms) => terms
                .iter()
                .map(|t| {
                    t.coeff
                        * t.exponent
                            .iter()
                            .zip(x)
                            .map(|(&e, &c)| c.powi(e as i32))
                            .product::<f64>()
                })
                .sum(),
        }
    }

    /// `e^{-kφ(x)}`.
    pub fn factor(&self, k: usize, x: &[f64]) -> f64 {
        if let WeightFunction::Zero = self {
            return 1.0;
        }
        (-(k as f64) * self.eval(x)).exp()
    }
}

/// A built-in domain with its base measure and weight `φ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMeasure {
    pub domain: Domain,
    pub base: BaseMeasure,
    pub phi: WeightFunction,
    /// Rescale the base measure to a probability measure.
    pub normalize: bool,
}

impl WeightedMeasure {
    /// Lebesgue measure on bodies, volume form on varieties, `φ = 0`, unnormalized.
    pub fn standard(domain: Domain) -> Self {
        Self {
            domain,
            base: BaseMeasure::default_for(domain),
            phi: WeightFunction::Zero,
            normalize: false,
        }
    }

    /// Arcsine measure on the interval.
    pub fn arcsine() -> Self {
        Self {
            domain: Domain::Interval,
            base: BaseMeasure::Arcsine,
            phi: WeightFunction::Zero,
            normalize: false,
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize = true;
        self
    }

    pub fn with_phi(mut self, phi: WeightFunction) -> Self {
        self.phi = phi;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.base {
            BaseMeasure::Lebesgue => !self.domain.is_variety(),
            BaseMeasure::VolumeForm => self.domain.is_variety(),
            BaseMeasure::Arcsine => self.domain == Domain::Interval,
        };
        if !ok {
            return Err(Error::Config(format!(
                "base measure {:?} is not available on {}",
                self.base, self.domain
            )));
        }
        if let WeightFunction::Polynomial(terms) = &self.phi {
            let m = self.domain.ambient_dim();
            if terms.iter().any(|t| t.exponent.len() != m || !t.coeff.is_finite()) {
                return Err(Error::Config(format!(
                    "polynomial weight terms need {m} exponents and finite coefficients"
                )));
            }
        }
        Ok(())
    }

    /// Mass of the unnormalized base measure.
    pub fn base_mass(&self) -> f64 {
        reference_moment(self.domain, self.base, &vec![0; self.domain.ambient_dim()])
    }

    /// Total mass of `μ` (1 when normalized).
    pub fn mass(&self) -> f64 {
        if self.normalize {
            1.0
        } else {
            self.base_mass()
        }
    }

    /// Exactness target for weighted Gram matrices at degree `k`.
    ///
    /// `2k` is exact when `φ = 0`; otherwise `e^{-kφ}` is not polynomial and
    /// the rule is oversampled to `2k + 2 + ⌈k·osf⌉`.
    pub fn gram_exactness(&self, k: usize, osf: f64) -> usize {
        if self.phi.is_zero() {
            2 * k
        } else {
            2 * k + 2 + (k as f64 * osf).ceil() as usize
        }
    }
}

/// Nodes and positive weights integrating polynomials of total degree at
/// most `exactness` exactly against the base measure.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: PointSet,
    pub weights: Vec<f64>,
    pub exactness: usize,
    /// Largest certification residual relative to the mass.
    pub certified_residual: f64,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.nodes.domain()
    }

    /// Weights of `e^{-kφ} dμ`.
    pub fn weighted(&self, k: usize, phi: &WeightFunction) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * phi.factor(k, x))
            .collect()
    }

    /// CSV with one node per row: coordinates then weight.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let m = self.nodes.dim();
        let header: Vec<String> = (0..m)
            .map(|i| format!("x{i}"))
            .chain(std::iter::once("weight".to_string()))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let row: Vec<String> = x.iter().chain(std::iter::once(w)).map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre on `[0, 1]`.
fn gauss_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    )
}

/// `∫ x^α` against the unnormalized base measure, in closed form.
pub fn reference_moment(domain: Domain, base: BaseMeasure, alpha: &[u32]) -> f64 {
    let all_even = alpha.iter().all(|a| a % 2 == 0);
    let deg: u32 = alpha.iter().sum();
    match (domain, base) {
        (Domain::Interval, BaseMeasure::Arcsine) => {
            if !all_even {
                return 0.0;
            }
            let a = alpha[0];
            // B((a+1)/2, 1/2)
            gamma_half(a + 1) * gamma_half(1) / gamma_half(a + 2)
        }
        (Domain::Interval | Domain::Cube2 | Domain::Cube3, _) => {
            if !all_even {
                return 0.0;
            }
            alpha.iter().map(|&a| 2.0 / (a as f64 + 1.0)).product()
        }
        (Domain::Circle | Domain::Sphere, _) => sphere_moment(alpha),
        (Domain::Disk | Domain::Ball3, _) => {
            sphere_moment(alpha) / (deg as f64 + alpha.len() as f64)
        }
    }
}

/// `∫_{S^{m-1}} x^α dσ = 2 ∏Γ((αᵢ+1)/2) / Γ((|α|+m)/2)` for even `α`.
fn sphere_moment(alpha: &[u32]) -> f64 {
    if alpha.iter().any(|a| a % 2 == 1) {
        return 0.0;
    }
    let m = alpha.len() as u32;
    let deg: u32 = alpha.iter().sum();
    let num: f64 = alpha.iter().map(|&a| gamma_half(a + 1)).product();
    2.0 * num / gamma_half(deg + m)
}

/// Builds a product rule of the requested exactness and certifies it
/// against closed-form monomial moments.
///
/// * interval: Gauss–Legendre, or Gauss–Chebyshev for the arcsine base,
///   with `⌈(d+1)/2⌉` nodes;
/// * cubes: tensor Gauss–Legendre;
/// * circle: `d+1` equispaced angles;
/// * sphere: Gauss in `cos θ` times `d+1` equispaced azimuths;
/// * disk and ball: Gauss in the radius (with the `r` or `r²` Jacobian)
///   times the circle or sphere rule.
pub fn build_rule(measure: &WeightedMeasure, exactness: usize) -> Result<QuadratureRule> {
    measure.validate()?;
    let d = exactness;
    let domain = measure.domain;
    let (coords, mut weights) = match (domain, measure.base) {
        (Domain::Interval, BaseMeasure::Arcsine) => {
            let n = (d + 2) / 2;
            let mut x: Vec<f64> = (1..=n)
                .map(|i| ((2 * i - 1) as f64 * PI / (2 * n) as f64).cos())
                .collect();
            x.reverse();
            (x, vec![PI / n as f64; n])
        }
        (Domain::Interval, _) => gauss_legendre((d + 2) / 2),
        (Domain::Cube2 | Domain::Cube3, _) => {
            let (x, w) = gauss_legendre((d + 2) / 2);
            tensor_rule(&x, &w, domain.ambient_dim())
        }
        (Domain::Circle, _) => {
            let n = d + 1;
            (circle_points(n, 0.0), vec![2.0 * PI / n as f64; n])
        }
        (Domain::Sphere, _) => sphere_rule(d),
        (Domain::Disk, _) => {
            let (r, wr) = gauss_unit((d + 3) / 2);
            let n = d + 1;
            let ring = circle_points(n, 0.0);
            let mut coords = Vec::new();
            let mut weights = Vec::new();
            for (ri, wi) in r.iter().zip(&wr) {
                for (p, _) in ring.chunks_exact(2).zip(0..n) {
                    coords.extend_from_slice(&[ri * p[0], ri * p[1]]);
                    weights.push(wi * ri * 2.0 * PI / n as f64);
                }
            }
            (coords, weights)
        }
        (Domain::Ball3, _) => {
            let (r, wr) = gauss_unit((d + 4) / 2);
            let (shell, ws) = sphere_rule(d);
            let mut coords = Vec::new();
            let mut weights = Vec::new();
            for (ri, wi) in r.iter().zip(&wr) {
                for (p, w) in shell.chunks_exact(3).zip(&ws) {
                    coords.extend(p.iter().map(|c| ri * c));
                    weights.push(wi * ri * ri * w);
                }
            }
            (coords, weights)
        }
    };
    let base_mass = measure.base_mass();
    if measure.normalize {
        for w in &mut weights {
            *w /= base_mass;
        }
    }
    let nodes = PointSet::from_raw(domain, coords);
    let certified_residual = certify(&nodes, &weights, measure, d)?;
    Ok(QuadratureRule {
        nodes,
        weights,
        exactness: d,
        certified_residual,
    })
}

fn tensor_rule(x: &[f64], w: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let total = n.pow(dim as u32);
    let mut coords = Vec::with_capacity(total * dim);
    let mut weights = Vec::with_capacity(total);
    for flat in 0..total {
        let mut r = flat;
        let mut idx = vec![0; dim];
        for c in (0..dim).rev() {
            idx[c] = r % n;
            r /= n;
        }
        coords.extend(idx.iter().map(|&i| x[i]));
        weights.push(idx.iter().map(|&i| w[i]).product());
    }
    (coords, weights)
}

fn sphere_rule(d: usize) -> (Vec<f64>, Vec<f64>) {
    let (z, wz) = gauss_legendre((d + 2) / 2);
    let n = d + 1;
    let ring = circle_points(n, 0.0);
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (zi, wi) in z.iter().zip(&wz) {
        let s = (1.0 - zi * zi).sqrt();
        for p in ring.chunks_exact(2) {
            coords.extend_from_slice(&[s * p[0], s * p[1], *zi]);
            weights.push(wi * 2.0 * PI / n as f64);
        }
    }
    (coords, weights)
}

/// Checks every monomial of degree at most `d` against its closed-form moment.
fn certify(nodes: &PointSet, weights: &[f64], measure: &WeightedMeasure, d: usize) -> Result<f64> {
    let m = nodes.dim();
    let n = nodes.len();
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::numeric("quadrature produced a non-positive weight"));
    }
    // powers[(node * m + c) * (d + 1) + e] = x_c^e
    let mut powers = vec![1.0; n * m * (d + 1)];
    for (j, x) in nodes.iter().enumerate() {
        for c in 0..m {
            let base = (j * m + c) * (d + 1);
            for e in 1..=d {
                powers[base + e] = powers[base + e - 1] * x[c];
            }
        }
    }
    let scale = measure.base_mass();
    let norm = if measure.normalize { scale } else { 1.0 };
    let mut worst: f64 = 0.0;
    for alpha in enumerate_exponents(m, d).iter() {
        let mut acc = CompensatedSum::new();
        for (j, w) in weights.iter().enumerate() {
            let mut v = *w;
            for (c, &e) in alpha.iter().enumerate() {
                v *= powers[(j * m + c) * (d + 1) + e as usize];
            }
            acc.add(v);
        }
        let reference = reference_moment(measure.domain, measure.base, alpha) / norm;
        let residual = (acc.value() - reference).abs() / (scale / norm);
        if !(residual <= CERTIFICATION_TOL) {
            return Err(Error::Certification {
                exponent: alpha.to_vec(),
                residual,
                reference,
            });
        }
        worst = worst.max(residual);
    }
    Ok(worst)
}

/// `Σ_j w_j e^{-kφ(x_j)} f(x_j)` with compensated summation in node order.
pub fn integrate<F>(rule: &QuadratureRule, f: F, weight_scale: Option<(usize, &WeightFunction)>) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut acc = CompensatedSum::new();
    for (j, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::numeric(format!(
                "integrand is {v} at node {j} ({x:?})"
            )));
        }
        let factor = weight_scale.map_or(1.0, |(k, phi)| phi.factor(k, x));
        acc.add(w * factor * v);
    }
    Ok(acc.value())
}
