//! Point families as frames and Riesz sequences of normalized kernels.
//!
//! Everything runs in the coordinates of an orthonormal basis: the normalized
//! kernel `κ_λ = K(·,λ)/√K(λ,λ)` is the unit vector `p(λ)/|p(λ)|`, so the
//! analysis operator is the matrix `A` with these rows. Frame bounds are the
//! extreme eigenvalues of `AᵀA`, Riesz bounds those of the Gram matrix `AAᵀ`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dense_grid, dist2, PointFamilyLevel, PointSet};
use crate::numeric::{loglog_fit, tr_mul, LineFit};
use crate::polyspace::OrthonormalBasis;

/// Nodes with `K(λ,λ)` below this fraction of the largest value are rejected.
pub const DEGENERATE_NODE_TOL: f64 = 1e-14;

/// Smallest lower bound accepted by the dual constructions.
pub const DUAL_LOWER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Frame,
    Riesz,
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameKind::Frame => "frame",
            FrameKind::Riesz => "riesz",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub k: usize,
    pub n_points: usize,
    pub n_k: usize,
    pub lower: f64,
    pub upper: f64,
    pub kind: FrameKind,
    /// `upper / lower`, infinite when the lower bound vanishes.
    pub verdict_ratio: f64,
}

impl FrameReport {
    fn new(k: usize, n_points: usize, n_k: usize, kind: FrameKind, lower: f64, upper: f64) -> Self {
        // Eigenvalues of a semidefinite matrix can come out as -1e-17.
        let lower = lower.max(0.0);
        let upper = upper.max(lower);
        let verdict_ratio = if lower > 0.0 { upper / lower } else { f64::INFINITY };
        Self {
            k,
            n_points,
            n_k,
            lower,
            upper,
            kind,
            verdict_ratio,
        }
    }

    pub const CSV_HEADER: &'static str = "k,N_k,n_points,lower,upper,ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.17e},{:.17e},{:.17e}",
            self.k, self.n_k, self.n_points, self.lower, self.upper, self.verdict_ratio
        )
    }
}

/// Fitted slope of `log lower` against `log k` over a sweep.
pub fn sweep_trend(reports: &[FrameReport]) -> Option<LineFit> {
    let (ks, lows): (Vec<f64>, Vec<f64>) = reports
        .iter()
        .filter(|r| r.lower > 0.0 && r.k > 0)
        .map(|r| (r.k as f64, r.lower))
        .unzip();
    (ks.len() >= 2).then(|| loglog_fit(&ks, &lows))
}

/// Rows `κ_λ = p(λ)/|p(λ)|`, one per point.
pub fn normalized_kernels(basis: &OrthonormalBasis, pts: &PointSet) -> Result<DMatrix<f64>> {
    if pts.domain() != basis.domain() {
        return Err(Error::contract("point family and basis live on different domains"));
    }
    let mut a = basis.eval_points(pts);
    let norms: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let max = norms.iter().copied().fold(0.0, f64::max);
    for (j, n2) in norms.iter().enumerate() {
        if !(*n2 > DEGENERATE_NODE_TOL * max) {
            return Err(Error::Precondition(format!(
                "node {j} is degenerate: K(λ,λ) = {n2:.3e} against a maximum of {max:.3e}"
            )));
        }
        a.row_mut(j).unscale_mut(n2.sqrt());
    }
    Ok(a)
}

fn extreme_eigenvalues(m: DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let m = (&m + m.transpose()) * 0.5;
    let eig = m.symmetric_eigenvalues();
    (eig.min(), eig.max())
}

pub fn frame_bounds(basis: &OrthonormalBasis, level: &PointFamilyLevel) -> Result<FrameReport> {
    let a = normalized_kernels(basis, &level.points)?;
    let (lower, upper) = if a.nrows() == 0 {
        (0.0, 0.0)
    } else {
        extreme_eigenvalues(tr_mul(&a, &a))
    };
    Ok(FrameReport::new(level.k, level.len(), basis.dim(), FrameKind::Frame, lower, upper))
}

pub fn riesz_bounds(basis: &OrthonormalBasis, level: &PointFamilyLevel) -> Result<FrameReport> {
    let a = normalized_kernels(basis, &level.points)?;
    let at = a.transpose();
    let (lower, upper) = extreme_eigenvalues(tr_mul(&at, &at));
    Ok(FrameReport::new(level.k, level.len(), basis.dim(), FrameKind::Riesz, lower, upper))
}

/// Normalized kernels together with a dual system, all in basis coordinates.
#[derive(Debug, Clone)]
pub struct DualFrameData {
    pub kind: FrameKind,
    /// Row `λ` is `κ_λ`.
    pub kernels: DMatrix<f64>,
    /// Row `λ` is the dual element `g_λ`.
    pub duals: DMatrix<f64>,
    /// `c_λ = ⟨κ_λ, g_λ⟩`.
    pub coeffs: Vec<f64>,
}

impl DualFrameData {
    /// `Σ_λ ⟨f, g_λ⟩ κ_λ` for `f` given by its coordinates.
    pub fn reconstruct(&self, f: &DVector<f64>) -> DVector<f64> {
        let c = &self.duals * f;
        self.kernels.tr_mul(&c)
    }

    /// `[⟨g_λ, κ_μ⟩]`.
    pub fn cross_gram(&self) -> DMatrix<f64> {
        &self.duals * self.kernels.transpose()
    }

    /// `‖g_λ‖` for every `λ`.
    pub fn dual_norms(&self) -> Vec<f64> {
        self.duals.row_iter().map(|r| r.norm()).collect()
    }

    /// Values `g_λ(x)` of the dual polynomials, one row per point of `pts`.
    pub fn eval_duals(&self, basis: &OrthonormalBasis, pts: &PointSet) -> DMatrix<f64> {
        basis.eval_points(pts) * self.duals.transpose()
    }

    /// Diagonal `𝒦(x,x) e^{-kφ(x)}` of the reproducing kernel of the span of
    /// the `κ_λ`; by construction it never exceeds `B_k(x)`.
    pub fn subspace_kernel_diagonal(&self, basis: &OrthonormalBasis, pts: &PointSet) -> Vec<f64> {
        let v = basis.eval_points(pts);
        let ka = &v * self.kernels.transpose();
        let ga = &v * self.duals.transpose();
        pts.iter()
            .enumerate()
            .map(|(j, x)| ka.row(j).dot(&ga.row(j)) * basis.weight_factor(x))
            .collect()
    }
}

/// Canonical dual frame `g_λ = S^{-1} κ_λ` with `S = Σ κ_λ κ_λᵀ`, and
/// `c_λ = ⟨κ_λ, g_λ⟩`.
pub fn dual_frame(basis: &OrthonormalBasis, level: &PointFamilyLevel) -> Result<DualFrameData> {
    let report = frame_bounds(basis, level)?;
    if !(report.lower > DUAL_LOWER_TOL) {
        return Err(Error::Precondition(format!(
            "not a frame at k = {}: lower frame bound {:.3e}",
            level.k, report.lower
        )));
    }
    let kernels = normalized_kernels(basis, &level.points)?;
    // A = QR with rows κ_λ: g_λ = R^{-1} q_λ and c_λ = |q_λ|²
    let qr = kernels.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let duals = r
        .solve_upper_triangular(&q.transpose())
        .ok_or_else(|| Error::numeric("frame operator is singular"))?
        .transpose();
    let coeffs = q.row_iter().map(|row| row.norm_squared()).collect();
    Ok(DualFrameData {
        kind: FrameKind::Frame,
        kernels,
        duals,
        coeffs,
    })
}

/// Biorthogonal system `g_λ = Σ_μ (G^{-1})_{λμ} κ_μ` in the span of the `κ_λ`.
pub fn biorthogonal_dual(basis: &OrthonormalBasis, level: &PointFamilyLevel) -> Result<DualFrameData> {
    let report = riesz_bounds(basis, level)?;
    if !(report.lower > DUAL_LOWER_TOL) {
        return Err(Error::Precondition(format!(
            "not a Riesz sequence at k = {}: lower Riesz bound {:.3e}",
            level.k, report.lower
        )));
    }
    let kernels = normalized_kernels(basis, &level.points)?;
    let g = &kernels * kernels.transpose();
    let g = (&g + g.transpose()) * 0.5;
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::numeric("Gram matrix is not positive definite"))?;
    let duals = chol.solve(&kernels);
    let coeffs = kernels
        .row_iter()
        .zip(duals.row_iter())
        .map(|(k, g)| k.dot(&g))
        .collect();
    Ok(DualFrameData {
        kind: FrameKind::Riesz,
        kernels,
        duals,
        coeffs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    pub max_count: usize,
    pub constant: f64,
    pub bounded: bool,
}

/// Largest number of points of `Λ_k` in a ball `B(x, 1/k)`, maximized over a
/// dense grid of centres and over the points themselves.
pub fn carleson_count(level: &PointFamilyLevel, constant: Option<f64>) -> Result<CarlesonReport> {
    let domain = level.points.domain();
    let constant = constant.unwrap_or(8.0 * domain.grid_covering_constant());
    if level.is_empty() {
        return Ok(CarlesonReport {
            max_count: 0,
            constant,
            bounded: true,
        });
    }
    let radius = 1.0 / level.k.max(1) as f64;
    let r2 = radius * radius;
    // Grid spacing well below the radius so no cluster is missed.
    let res = ((4.0 * domain.grid_covering_constant() / radius).ceil() as usize).clamp(8, 4096);
    let grid = dense_grid(domain, res.min(grid_cap(domain)))?;
    let count = |x: &[f64]| level.points.iter().filter(|p| dist2(x, p) <= r2).count();
    let max_count = grid
        .iter()
        .chain(level.points.iter())
        .map(count)
        .max()
        .unwrap_or(0);
    Ok(CarlesonReport {
        max_count,
        constant,
        bounded: max_count as f64 <= constant,
    })
}

fn grid_cap(domain: crate::geometry::Domain) -> usize {
    match domain.intrinsic_dim() {
        1 => 4096,
        2 => 256,
        _ => 48,
    }
}
