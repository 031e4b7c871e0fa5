//! Kernel estimates: the off-diagonal Toeplitz functional, growth of the
//! Bergman function, Bernstein constants and convex-body scaling fits.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{circle_points, distance_to_boundary, fibonacci_sphere, norm, Domain, PointSet};
use crate::kernel::KernelEvaluator;
use crate::numeric::{loglog_fit, LineFit};
use crate::polyspace::{orthonormal_basis, OrthonormalBasis};
use crate::quadrature::{build_rule, QuadratureRule, WeightedMeasure};

/// Relative disagreement between the two routes that signals an inexact rule.
pub const OFFDIAG_CONSISTENCY_TOL: f64 = 1e-6;

/// Largest acceptable RMS residual of a scaling fit.
pub const FIT_RESIDUAL_WARN: f64 = 0.2;

/// Smallest boundary distance of an interior probe.
pub const INTERIOR_MIN_DISTANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonal {
    pub k: usize,
    /// `∬ |K_k(x,y)|² |x−y|² dμ_k dμ_k` by double quadrature.
    pub direct: f64,
    /// `Σ_c 2(tr T_{x_c²} − tr T_{x_c}²)`.
    pub via_traces: f64,
    /// `k · k^{-n} · via_traces` (`k^{-n}` alone at `k = 0`).
    pub normalized: f64,
}

impl OffDiagonal {
    pub fn relative_gap(&self) -> f64 {
        (self.direct - self.via_traces).abs() / self.direct.abs().max(f64::MIN_POSITIVE)
    }
}

/// Exactness a rule needs for the off-diagonal functional of `basis`.
pub fn offdiag_exactness(basis: &OrthonormalBasis) -> usize {
    let k = basis.degree();
    let extra = basis.measure().gram_exactness(k, 1.0).saturating_sub(2 * k);
    2 * k + 2 + extra
}

pub fn offdiag_functional(basis: &OrthonormalBasis, rule: &QuadratureRule) -> Result<OffDiagonal> {
    let k = basis.degree();
    let required = offdiag_exactness(basis);
    if rule.domain() != basis.domain() || rule.exactness < required {
        return Err(Error::contract(format!(
            "off-diagonal functional at k = {k} needs a {} rule of exactness {required}, got {} of exactness {}",
            basis.domain(),
            rule.domain(),
            rule.exactness
        )));
    }
    let w = rule.weighted(k, &basis.measure().phi);
    let v = basis.eval_points(&rule.nodes);
    let q = rule.len();
    let m = basis.domain().ambient_dim();

    let kmat = &v * v.transpose();
    let mut direct = 0.0;
    for i in 0..q {
        let xi = rule.nodes.point(i);
        let mut row = 0.0;
        for j in 0..q {
            let xj = rule.nodes.point(j);
            let d2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
            row += w[j] * kmat[(i, j)] * kmat[(i, j)] * d2;
        }
        direct += w[i] * row;
    }

    let diag: Vec<f64> = v.row_iter().map(|r| r.norm_squared()).collect();
    let mut via_traces = 0.0;
    for c in 0..m {
        let f: Vec<f64> = rule.nodes.iter().map(|x| x[c]).collect();
        let tr_f2: f64 = (0..q).map(|j| w[j] * f[j] * f[j] * diag[j]).sum();
        let mut scaled = v.clone();
        for j in 0..q {
            scaled.row_mut(j).scale_mut(w[j] * f[j]);
        }
        let t = crate::numeric::tr_mul(&scaled, &v);
        via_traces += 2.0 * (tr_f2 - t.norm_squared());
    }

    let out = OffDiagonal {
        k,
        direct,
        via_traces,
        normalized: (k.max(1) as f64) * (k.max(1) as f64).powi(-(basis.domain().intrinsic_dim() as i32)) * via_traces,
    };
    if out.relative_gap() > OFFDIAG_CONSISTENCY_TOL {
        return Err(Error::Consistency(format!(
            "off-diagonal functional at k = {k}: direct {direct:.12e} vs traces {via_traces:.12e}"
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub k: usize,
    /// `max B_{k+1}/B_k` over the grid.
    pub ratio: f64,
    /// `(1/k) log max B_k`.
    pub exponent_k: f64,
    /// `(1/(k+1)) log max B_{k+1}`.
    pub exponent_k1: f64,
}

pub fn moderate_growth_ratio(
    basis_k: &OrthonormalBasis,
    basis_k1: &OrthonormalBasis,
    grid: &PointSet,
) -> Result<GrowthReport> {
    let k = basis_k.degree();
    if basis_k.measure() != basis_k1.measure() || basis_k1.degree() != k + 1 {
        return Err(Error::contract(format!(
            "moderate growth needs bases of degrees k and k+1 over one measure, got {} and {}",
            k,
            basis_k1.degree()
        )));
    }
    if grid.domain() != basis_k.domain() || grid.is_empty() {
        return Err(Error::contract("grid does not sample the basis domain"));
    }
    let b0 = KernelEvaluator::new(basis_k).bergman_many(grid);
    let b1 = KernelEvaluator::new(basis_k1).bergman_many(grid);
    let ratio = b0.iter().zip(&b1).map(|(a, b)| b / a).fold(0.0, f64::max);
    let exponent = |b: &[f64], k: usize| b.iter().copied().fold(0.0, f64::max).ln() / k.max(1) as f64;
    Ok(GrowthReport {
        k,
        ratio,
        exponent_k: exponent(&b0, k),
        exponent_k1: exponent(&b1, k + 1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LqNorm {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    LInf,
}

impl fmt::Display for LqNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LqNorm::L1 => "1",
            LqNorm::L2 => "2",
            LqNorm::LInf => "inf",
        })
    }
}

impl FromStr for LqNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(LqNorm::L1),
            "2" => Ok(LqNorm::L2),
            "inf" | "infinity" => Ok(LqNorm::LInf),
            other => Err(Error::Config(format!("unknown norm `{other}` (expected 1, 2 or inf)"))),
        }
    }
}

/// Points and weights on which `L^q` norms are evaluated.
struct NormGrid {
    points: PointSet,
    weights: Option<Vec<f64>>,
}

fn norm_grid(basis: &OrthonormalBasis, q: LqNorm) -> Result<NormGrid> {
    let k = basis.degree().max(1);
    if q != LqNorm::LInf {
        let rule = build_rule(&WeightedMeasure::standard(basis.domain()), 4 * k)?;
        return Ok(NormGrid {
            points: rule.nodes,
            weights: Some(rule.weights),
        });
    }
    let coords = match basis.domain() {
        Domain::Circle => circle_points(64 * k, 0.0),
        Domain::Sphere => fibonacci_sphere((100 * k * k).clamp(2000, 20_000)),
        _ => unreachable!(),
    };
    let m = basis.domain().ambient_dim();
    let pts: Vec<Vec<f64>> = coords.chunks(m).map(|c| c.to_vec()).collect();
    Ok(NormGrid {
        points: PointSet::project_from(basis.domain(), &pts, 1e-12)?.0,
        weights: None,
    })
}

fn lq(values: &[f64], weights: Option<&[f64]>, q: LqNorm) -> f64 {
    match (q, weights) {
        (LqNorm::LInf, _) | (_, None) => values.iter().fold(0.0, |a, v| a.max(v.abs())),
        (LqNorm::L1, Some(w)) => values.iter().zip(w).map(|(v, w)| w * v.abs()).sum(),
        (LqNorm::L2, Some(w)) => values.iter().zip(w).map(|(v, w)| w * v * v).sum::<f64>().sqrt(),
    }
}

/// `‖∇_t p‖_q / (k ‖p‖_q)` for each coefficient vector (columns of `coeffs`).
fn bernstein_ratios(basis: &OrthonormalBasis, grid: &NormGrid, q: LqNorm, coeffs: &DMatrix<f64>) -> Vec<f64> {
    let rows: Vec<&[f64]> = grid.points.iter().collect();
    let vals = basis.eval_many(&rows) * coeffs;
    let grads: Vec<DMatrix<f64>> = basis.gradients_many(&rows).iter().map(|g| g * coeffs).collect();
    let k = basis.degree() as f64;
    let w = grid.weights.as_deref();
    (0..coeffs.ncols())
        .map(|t| {
            let p: Vec<f64> = vals.column(t).iter().copied().collect();
            let tang: Vec<f64> = rows
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    let g: Vec<f64> = grads.iter().map(|gc| gc[(j, t)]).collect();
                    let gx: f64 = g.iter().zip(*x).map(|(a, b)| a * b).sum();
                    let r2 = norm(x).powi(2);
                    let g2: f64 = g.iter().map(|a| a * a).sum();
                    (g2 - gx * gx / r2).max(0.0).sqrt()
                })
                .collect();
            let den = k * lq(&p, w, q);
            let num = lq(&tang, w, q);
            if num <= 1e-13 * lq(&p, w, q).max(1.0) {
                0.0
            } else {
                num / den
            }
        })
        .collect()
}

/// Largest `‖∇_t p‖_q/(k‖p‖_q)` over `trials` standard normal coefficient
/// vectors in the orthonormal basis.
pub fn bernstein_constant(basis: &OrthonormalBasis, q: LqNorm, trials: usize, seed: u64) -> Result<f64> {
    bernstein_constant_with(basis, q, trials, seed, &[])
}

/// As [`bernstein_constant`], with extra coefficient vectors tried first.
pub fn bernstein_constant_with(
    basis: &OrthonormalBasis,
    q: LqNorm,
    trials: usize,
    seed: u64,
    injected: &[DVector<f64>],
) -> Result<f64> {
    if !basis.domain().is_variety() {
        return Err(Error::Unsupported {
            op: "bernstein_constant",
            domain: basis.domain().to_string(),
        });
    }
    if basis.degree() == 0 {
        return Ok(0.0);
    }
    let n = basis.dim();
    if let Some(bad) = injected.iter().find(|c| c.len() != n) {
        return Err(Error::contract(format!(
            "injected coefficient vector has length {}, basis has {n}",
            bad.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = DMatrix::zeros(n, injected.len() + trials);
    for (t, c) in injected.iter().enumerate() {
        coeffs.set_column(t, c);
    }
    for t in injected.len()..coeffs.ncols() {
        for i in 0..n {
            coeffs[(i, t)] = StandardNormal.sample(&mut rng);
        }
    }
    let grid = norm_grid(basis, q)?;
    Ok(bernstein_ratios(basis, &grid, q, &coeffs)
        .into_iter()
        .fold(0.0, f64::max))
}

/// Probe of a convex body for the kernel scaling fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexProbe {
    /// Fixed point with boundary distance at least 0.2.
    Interior { point: Vec<f64> },
    /// Boundary point `x`, probed at `x − (c/k²) ν(x)`.
    BoundaryScaled { point: Vec<f64>, c: f64 },
}

impl ConvexProbe {
    fn location(&self, domain: Domain, k: usize) -> Result<Vec<f64>> {
        match self {
            ConvexProbe::Interior { point } => {
                let d = distance_to_boundary(domain, point)?;
                if d < INTERIOR_MIN_DISTANCE {
                    return Err(Error::Config(format!(
                        "interior probe {point:?} is {d:.3} from the boundary (need {INTERIOR_MIN_DISTANCE})"
                    )));
                }
                Ok(point.clone())
            }
            ConvexProbe::BoundaryScaled { point, c } => {
                if !(*c > 0.0) {
                    return Err(Error::Config(format!("boundary probe scale c = {c} must be positive")));
                }
                let nu = outward_normal(domain, point)?;
                let t = c / (k * k) as f64;
                let x: Vec<f64> = point.iter().zip(&nu).map(|(p, n)| p - t * n).collect();
                if !domain.contains(&x) {
                    return Err(Error::Config(format!(
                        "boundary probe {point:?} with c = {c} leaves {domain} at k = {k}"
                    )));
                }
                Ok(x)
            }
        }
    }

    fn regime(&self) -> ProbeRegime {
        match self {
            ConvexProbe::Interior { .. } => ProbeRegime::Interior,
            ConvexProbe::BoundaryScaled { .. } => ProbeRegime::Boundary,
        }
    }
}

fn outward_normal(domain: Domain, x: &[f64]) -> Result<Vec<f64>> {
    let on_boundary = distance_to_boundary(domain, x)? <= 1e-12;
    if !on_boundary {
        return Err(Error::Config(format!("{x:?} is not on the boundary of {domain}")));
    }
    match domain {
        Domain::Disk | Domain::Ball3 => {
            let r = norm(x);
            Ok(x.iter().map(|c| c / r).collect())
        }
        _ => {
            let faces: Vec<usize> = (0..x.len()).filter(|&i| 1.0 - x[i].abs() <= 1e-12).collect();
            if faces.len() != 1 {
                return Err(Error::Config(format!(
                    "{x:?} is a corner of {domain}; the outward normal is not unique"
                )));
            }
            let mut nu = vec![0.0; x.len()];
            nu[faces[0]] = x[faces[0]].signum();
            Ok(nu)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeRegime {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeFit {
    pub probe: ConvexProbe,
    pub regime: ProbeRegime,
    /// `B_k` at the probe location for each `k` of the sweep.
    pub values: Vec<f64>,
    pub fit: LineFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexFit {
    pub domain: Domain,
    pub ks: Vec<usize>,
    pub probes: Vec<ProbeFit>,
    /// Mean slope over interior probes.
    pub interior_exponent: Option<f64>,
    /// Mean slope over boundary-scaled probes.
    pub boundary_exponent: Option<f64>,
    pub warnings: Vec<String>,
}

/// Log-log regression of `B_k` at each probe over `ks`.
pub fn convex_kernel_fit(measure: &WeightedMeasure, ks: &[usize], probes: &[ConvexProbe]) -> Result<ConvexFit> {
    let domain = measure.domain;
    if domain.is_variety() {
        return Err(Error::Unsupported {
            op: "convex_kernel_fit",
            domain: domain.to_string(),
        });
    }
    if ks.len() < 2 || ks.contains(&0) {
        return Err(Error::Config("convex fit needs at least two positive degrees".into()));
    }
    let mut values = vec![Vec::with_capacity(ks.len()); probes.len()];
    for &k in ks {
        let basis = orthonormal_basis(measure, k)?;
        let eval = KernelEvaluator::new(&basis);
        for (probe, out) in probes.iter().zip(values.iter_mut()) {
            out.push(eval.bergman(&probe.location(domain, k)?));
        }
    }
    let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let mut warnings = Vec::new();
    let fits: Vec<ProbeFit> = probes
        .iter()
        .zip(values)
        .map(|(probe, values)| {
            let fit = loglog_fit(&kf, &values);
            if fit.residual > FIT_RESIDUAL_WARN {
                warnings.push(format!("poor fit at {probe:?}: residual {:.3}", fit.residual));
            }
            ProbeFit {
                probe: probe.clone(),
                regime: probe.regime(),
                values,
                fit,
            }
        })
        .collect();
    let mean = |r: ProbeRegime| {
        let s: Vec<f64> = fits.iter().filter(|f| f.regime == r).map(|f| f.fit.slope).collect();
        (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
    };
    Ok(ConvexFit {
        domain,
        ks: ks.to_vec(),
        interior_exponent: mean(ProbeRegime::Interior),
        boundary_exponent: mean(ProbeRegime::Boundary),
        probes: fits,
        warnings,
    })
}

/// The centre and one boundary point with `c = 1`.
pub fn default_probes(domain: Domain) -> Vec<ConvexProbe> {
    let m = domain.ambient_dim();
    let mut edge = vec![0.0; m];
    edge[0] = 1.0;
    vec![
        ConvexProbe::Interior { point: vec![0.0; m] },
        ConvexProbe::BoundaryScaled { point: edge, c: 1.0 },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dense_grid;

    fn circle_basis(k: usize) -> OrthonormalBasis {
        orthonormal_basis(&WeightedMeasure::standard(Domain::Circle), k).unwrap()
    }

    #[test]
    fn offdiag_circle_constant_term() {
        let b = circle_basis(0);
        let rule = build_rule(b.measure(), offdiag_exactness(&b)).unwrap();
        let r = offdiag_functional(&b, &rule).unwrap();
        assert!((r.direct - 2.0).abs() < 1e-12, "{r:?}");
        assert!((r.via_traces - 2.0).abs() < 1e-12);
    }

    #[test]
    fn offdiag_routes_agree_on_interval() {
        let m = WeightedMeasure::standard(Domain::Interval);
        for k in [1, 4, 9] {
            let b = orthonormal_basis(&m, k).unwrap();
            let rule = build_rule(&m, offdiag_exactness(&b)).unwrap();
            let r = offdiag_functional(&b, &rule).unwrap();
            assert!(r.relative_gap() < 1e-8 && r.direct > 0.0, "{r:?}");
        }
    }

    #[test]
    fn offdiag_rejects_short_rule() {
        let b = circle_basis(5);
        let rule = build_rule(b.measure(), 10).unwrap();
        assert!(matches!(offdiag_functional(&b, &rule), Err(Error::Contract(_))));
    }

    #[test]
    fn circle_growth_ratio_is_exact() {
        let grid = dense_grid(Domain::Circle, 50).unwrap();
        for k in [2, 7] {
            let r = moderate_growth_ratio(&circle_basis(k), &circle_basis(k + 1), &grid).unwrap();
            let want = (2 * k + 3) as f64 / (2 * k + 1) as f64;
            assert!((r.ratio - want).abs() < 1e-10);
        }
    }

    #[test]
    fn growth_needs_consecutive_degrees() {
        let grid = dense_grid(Domain::Circle, 10).unwrap();
        assert!(moderate_growth_ratio(&circle_basis(2), &circle_basis(4), &grid).is_err());
    }

    #[test]
    fn injected_extremal_hits_one() {
        let k = 6;
        let b = circle_basis(k);
        let c = b.project(|x| (k as f64 * x[1].atan2(x[0])).sin());
        let r = bernstein_constant_with(&b, LqNorm::LInf, 0, 1, &[c]).unwrap();
        assert!((r - 1.0).abs() < 1e-6, "{r}");
    }

    #[test]
    fn constant_polynomial_ratio_is_zero() {
        let b = circle_basis(3);
        let mut c = DVector::zeros(b.dim());
        c[0] = 1.0;
        let r = bernstein_constant_with(&b, LqNorm::L2, 0, 0, &[c]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn bernstein_is_seeded() {
        let b = circle_basis(5);
        let a = bernstein_constant(&b, LqNorm::L2, 10, 9).unwrap();
        assert_eq!(a, bernstein_constant(&b, LqNorm::L2, 10, 9).unwrap());
        assert!(a > 0.0 && a <= 1.0 + 1e-12);
    }

    #[test]
    fn lq_parses() {
        assert_eq!("inf".parse::<LqNorm>().unwrap(), LqNorm::LInf);
        assert!("3".parse::<LqNorm>().is_err());
        assert_eq!(serde_json::to_string(&LqNorm::L2).unwrap(), "\"2\"");
    }

    #[test]
    fn interval_probe_slopes() {
        let m = WeightedMeasure::standard(Domain::Interval);
        let fit = convex_kernel_fit(&m, &[16, 24, 32, 48, 64], &default_probes(Domain::Interval)).unwrap();
        assert!((fit.interior_exponent.unwrap() - 1.0).abs() < 0.1, "{fit:?}");
        assert!((fit.boundary_exponent.unwrap() - 2.0).abs() < 0.15, "{fit:?}");
    }

    #[test]
    fn probe_validation() {
        let m = WeightedMeasure::standard(Domain::Disk);
        let near = ConvexProbe::Interior { point: vec![0.9, 0.0] };
        assert!(convex_kernel_fit(&m, &[2, 3], &[near]).is_err());
        let corner = ConvexProbe::BoundaryScaled { point: vec![1.0, 1.0], c: 1.0 };
        let cube = WeightedMeasure::standard(Domain::Cube2);
        assert!(convex_kernel_fit(&cube, &[2, 3], &[corner]).is_err());
    }
}
