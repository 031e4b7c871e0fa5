//! Bergman measures and the density comparisons of sampling and
//! interpolating families.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framing::{biorthogonal_dual, dual_frame, frame_bounds, riesz_bounds, DualFrameData};
use crate::geometry::{dense_grid, Domain, PointFamilyLevel, PointSet};
use crate::kernel::KernelEvaluator;
use crate::numeric::{loglog_fit, LineFit};
use crate::polyspace::OrthonormalBasis;
use crate::quadrature::QuadratureRule;

use super::equilibrium::Window;
use super::transport::{wasserstein1, DiscreteMeasure};

/// `β_k = N_k^{-1} B_k dμ` on the nodes of `rule`: masses `w_j B_k(x_j)/N_k`.
pub fn bergman_measure(basis: &OrthonormalBasis, rule: &QuadratureRule) -> Result<DiscreteMeasure> {
    let b = KernelEvaluator::new(basis).bergman_many(&rule.nodes);
    let n = basis.dim() as f64;
    let masses = rule.weights.iter().zip(&b).map(|(w, b)| w * b / n).collect();
    DiscreteMeasure::new(rule.nodes.clone(), masses)
}

/// Which side of the equilibrium measure a family is expected on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    /// Counts should dominate the equilibrium mass.
    Sampling,
    /// Counts should stay below it.
    Interpolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityLevel {
    pub k: usize,
    pub n_k: usize,
    pub n_points: usize,
    /// Lower frame or Riesz bound that admitted the level.
    pub lower_bound: f64,
    /// `#(Λ_k ∩ Ω)/N_k` per window.
    pub counts: Vec<f64>,
    /// `counts − eq_masses`.
    pub margins: Vec<f64>,
    /// Points within the boundary tolerance of some window (counted inside).
    pub boundary_hits: usize,
    /// `W(σ_k, β_k)`.
    pub wasserstein: f64,
    /// Largest `𝒦(x,x) − K(x,x)` (weighted) seen on the probe grid.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subspace_excess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub kind: DensityKind,
    pub domain: Domain,
    pub windows: Vec<Window>,
    /// `μ_eq(Ω)/μ_eq(M)` per window.
    pub eq_masses: Vec<f64>,
    pub levels: Vec<DensityLevel>,
    /// Log-log fit of `W(σ_k, β_k)` against `k`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wasserstein_trend: Option<LineFit>,
}

impl DensityReport {
    pub fn worst_margin(&self) -> f64 {
        let margins = self.levels.iter().flat_map(|l| l.margins.iter().copied());
        match self.kind {
            DensityKind::Sampling => margins.fold(f64::INFINITY, f64::min),
            DensityKind::Interpolation => margins.fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn window_counts(pts: &PointSet, windows: &[Window], n_k: usize) -> (Vec<f64>, usize) {
    let mut hits = 0;
    for x in pts.iter() {
        if windows.iter().any(|w| w.on_boundary(x)) {
            hits += 1;
        }
    }
    let counts = windows
        .iter()
        .map(|w| pts.iter().filter(|x| w.contains(x)).count() as f64 / n_k as f64)
        .collect();
    (counts, hits)
}

fn check_inputs(levels: &[PointFamilyLevel], bases: &[OrthonormalBasis], windows: &[Window]) -> Result<Domain> {
    if levels.len() != bases.len() || levels.is_empty() {
        return Err(Error::contract(format!(
            "{} family levels but {} bases",
            levels.len(),
            bases.len()
        )));
    }
    let domain = bases[0].domain();
    for (level, basis) in levels.iter().zip(bases) {
        if level.k != basis.degree() || basis.domain() != domain || level.points.domain() != domain {
            return Err(Error::contract(format!(
                "family level k = {} does not match its basis (degree {}, {})",
                level.k,
                basis.degree(),
                basis.domain()
            )));
        }
    }
    for w in windows {
        w.validate(domain)?;
    }
    Ok(domain)
}

fn trend(levels: &[DensityLevel]) -> Option<LineFit> {
    let (ks, ws): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .filter(|l| l.wasserstein > 0.0 && l.k > 0)
        .map(|l| (l.k as f64, l.wasserstein))
        .unzip();
    (ks.len() >= 2).then(|| loglog_fit(&ks, &ws))
}

/// Density margins of a sampling family against the equilibrium measure,
/// with `W(σ_k, β_k)` for `σ_k = N_k^{-1} Σ c_λ δ_λ`.
pub fn landau_margin(
    levels: &[PointFamilyLevel],
    bases: &[OrthonormalBasis],
    windows: &[Window],
) -> Result<DensityReport> {
    let domain = check_inputs(levels, bases, windows)?;
    let eq_masses = windows
        .iter()
        .map(|w| w.equilibrium_mass(domain))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(levels.len());
    for (level, basis) in levels.iter().zip(bases) {
        let report = frame_bounds(basis, level)?;
        let dual = dual_frame(basis, level)?;
        let n_k = basis.dim();
        let sigma = DiscreteMeasure::new(
            level.points.clone(),
            dual.coeffs.iter().map(|c| c.max(0.0) / n_k as f64).collect(),
        )?;
        let beta = bergman_measure(basis, basis.rule())?;
        let wasserstein = wasserstein1(&sigma, &beta)?.distance;
        let (counts, boundary_hits) = window_counts(&level.points, windows, n_k);
        let margins = counts.iter().zip(&eq_masses).map(|(c, e)| c - e).collect();
        out.push(DensityLevel {
            k: level.k,
            n_k,
            n_points: level.len(),
            lower_bound: report.lower,
            counts,
            margins,
            boundary_hits,
            wasserstein,
            subspace_excess: None,
        });
    }
    Ok(DensityReport {
        kind: DensityKind::Sampling,
        domain,
        windows: windows.to_vec(),
        eq_masses,
        wasserstein_trend: trend(&out),
        levels: out,
    })
}

/// Grid on which kernel inequalities are probed.
pub fn probe_grid(domain: Domain, k: usize) -> Result<PointSet> {
    let res = match domain.intrinsic_dim() {
        1 => 16 * (k + 1),
        2 => (4 * (k + 1)).clamp(16, 160),
        _ => (2 * (k + 1)).clamp(8, 40),
    };
    dense_grid(domain, res)
}

/// Density margins of an interpolating family, compared with the Bergman
/// measure of the subspace spanned by its normalized kernels.
pub fn interpolation_margin(
    levels: &[PointFamilyLevel],
    bases: &[OrthonormalBasis],
    windows: &[Window],
) -> Result<DensityReport> {
    let domain = check_inputs(levels, bases, windows)?;
    let eq_masses = windows
        .iter()
        .map(|w| w.equilibrium_mass(domain))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(levels.len());
    for (level, basis) in levels.iter().zip(bases) {
        let report = riesz_bounds(basis, level)?;
        let dual = biorthogonal_dual(basis, level)?;
        let n_k = basis.dim();
        let rule = basis.rule();
        let sub = dual.subspace_kernel_diagonal(basis, &rule.nodes);
        let beta = DiscreteMeasure::new(
            rule.nodes.clone(),
            rule.weights
                .iter()
                .zip(&sub)
                .map(|(w, s)| (w * s / n_k as f64).max(0.0))
                .collect(),
        )?;
        let sigma = DiscreteMeasure::new(level.points.clone(), vec![1.0 / n_k as f64; level.len()])?;
        let wasserstein = if level.is_empty() {
            0.0
        } else {
            wasserstein1(&sigma, &beta)?.distance
        };
        let grid = probe_grid(domain, level.k)?;
        let excess = subspace_excess(basis, &dual, &grid)
            .max(subspace_excess(basis, &dual, &rule.nodes))
            .max(subspace_excess(basis, &dual, &level.points));
        let (counts, boundary_hits) = window_counts(&level.points, windows, n_k);
        let margins = counts.iter().zip(&eq_masses).map(|(c, e)| c - e).collect();
        out.push(DensityLevel {
            k: level.k,
            n_k,
            n_points: level.len(),
            lower_bound: report.lower,
            counts,
            margins,
            boundary_hits,
            wasserstein,
            subspace_excess: Some(excess),
        });
    }
    Ok(DensityReport {
        kind: DensityKind::Interpolation,
        domain,
        windows: windows.to_vec(),
        eq_masses,
        wasserstein_trend: trend(&out),
        levels: out,
    })
}

fn subspace_excess(basis: &OrthonormalBasis, dual: &DualFrameData, pts: &PointSet) -> f64 {
    if pts.is_empty() {
        return f64::NEG_INFINITY;
    }
    let sub = dual.subspace_kernel_diagonal(basis, pts);
    let full = KernelEvaluator::new(basis).bergman_many(pts);
    sub.iter()
        .zip(&full)
        .map(|(s, f)| s - f)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The coupling `ρ_k = N_k^{-1} Σ_λ δ_λ(y) ⊗ g_λ(x) K(λ,x)/√B_k(λ) dμ_k(x)`
/// discretized on quadrature nodes (row `λ`, column `j`).
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub plan: DMatrix<f64>,
    /// `c_λ / N_k`.
    pub sigma: Vec<f64>,
    /// `w_j B_k(x_j) / N_k`.
    pub beta: Vec<f64>,
}

impl TransportPlan {
    /// Largest deviations of the row and column sums from `σ_k` and `β_k`.
    pub fn marginal_residuals(&self) -> (f64, f64) {
        let rows = self
            .plan
            .row_iter()
            .zip(&self.sigma)
            .map(|(r, s)| (r.sum() - s).abs())
            .fold(0.0, f64::max);
        let cols = self
            .plan
            .column_iter()
            .zip(&self.beta)
            .map(|(c, b)| (c.sum() - b).abs())
            .fold(0.0, f64::max);
        (rows, cols)
    }
}

pub fn transport_plan(
    basis: &OrthonormalBasis,
    level: &PointFamilyLevel,
    rule: &QuadratureRule,
) -> Result<TransportPlan> {
    let dual = dual_frame(basis, level)?;
    let n_k = basis.dim() as f64;
    let phi = &basis.measure().phi;
    let w = rule.weighted(basis.degree(), phi);
    let v = basis.eval_points(&rule.nodes);
    // g_λ(x_j) and K(λ, x_j)/√K(λ,λ) = κ_λ · p(x_j)
    let g = &v * dual.duals.transpose();
    let kap = &v * dual.kernels.transpose();
    let mut plan = g.component_mul(&kap).transpose();
    for (j, wj) in w.iter().enumerate() {
        plan.column_mut(j).scale_mut(wj / n_k);
    }
    let beta = bergman_measure(basis, rule)?.masses;
    Ok(TransportPlan {
        plan,
        sigma: dual.coeffs.iter().map(|c| c / n_k).collect(),
        beta,
    })
}
