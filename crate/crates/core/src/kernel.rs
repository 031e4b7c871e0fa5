//! Reproducing kernels, Bergman functions and the one-dimensional recurrence path.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, PointSet};
use crate::numeric::tr_mul;
use crate::polyspace::OrthonormalBasis;
use crate::quadrature::{build_rule, WeightedMeasure};

/// Below this separation the Christoffel–Darboux quotient switches to its
/// confluent form.
pub const CONFLUENT_TOL: f64 = 1e-7;

/// Evaluates `K_k` and `B_k` from an orthonormal basis.
#[derive(Debug, Clone, Copy)]
pub struct KernelEvaluator<'a> {
    basis: &'a OrthonormalBasis,
}

impl<'a> KernelEvaluator<'a> {
    pub fn new(basis: &'a OrthonormalBasis) -> Self {
        Self { basis }
    }

    pub fn basis(&self) -> &'a OrthonormalBasis {
        self.basis
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    /// `Σ p_i(x) p_i(y) e^{-k(φ(x)+φ(y))/2}`.
    pub fn kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let v = self.basis.eval_many(&[x, y]);
        let dot: f64 = v.row(0).iter().zip(v.row(1).iter()).map(|(a, b)| a * b).sum();
        dot * (self.basis.weight_factor(x) * self.basis.weight_factor(y)).sqrt()
    }

    /// `B_k(x) = K_k(x,x) e^{-kφ(x)}`.
    pub fn bergman(&self, x: &[f64]) -> f64 {
        self.basis.eval(x).norm_squared() * self.basis.weight_factor(x)
    }

    pub fn bergman_many(&self, pts: &PointSet) -> Vec<f64> {
        let v = self.basis.eval_points(pts);
        pts.iter()
            .enumerate()
            .map(|(j, x)| v.row(j).norm_squared() * self.basis.weight_factor(x))
            .collect()
    }

    /// Weighted kernel matrix `[K(x_i, x_j)]` over a point set.
    pub fn kernel_matrix(&self, pts: &PointSet) -> DMatrix<f64> {
        let mut v = self.basis.eval_points(pts);
        for (j, x) in pts.iter().enumerate() {
            let s = self.basis.weight_factor(x).sqrt();
            v.row_mut(j).scale_mut(s);
        }
        let vt = v.transpose();
        tr_mul(&vt, &vt)
    }

    /// Writes `x_1,…,x_m,bergman` rows for a profile plot.
    pub fn write_profile<W: Write>(&self, pts: &PointSet, mut out: W) -> Result<()> {
        let m = pts.dim();
        let header: Vec<String> = (1..=m).map(|c| format!("x{c}")).collect();
        writeln!(out, "{},bergman", header.join(","))?;
        for (x, b) in pts.iter().zip(self.bergman_many(pts)) {
            let coords: Vec<String> = x.iter().map(|c| format!("{c:.17e}")).collect();
            writeln!(out, "{},{b:.17e}", coords.join(","))?;
        }
        Ok(())
    }
}

/// Three-term recurrence `x q_j = a_{j+1} q_{j+1} + b_j q_j + a_j q_{j−1}` of
/// the orthonormal polynomials of a measure on the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recurrence1D {
    /// `a[j] = a_{j+1}`, the off-diagonal of the Jacobi matrix.
    pub a: Vec<f64>,
    /// `b[j] = b_j`, the diagonal.
    pub b: Vec<f64>,
    /// Total mass, so that `q_0 = 1/√mass`.
    pub mass: f64,
}

impl Recurrence1D {
    /// Highest degree `n` with `q_n` available.
    pub fn max_degree(&self) -> usize {
        self.a.len()
    }

    /// `(q_0(x), …, q_n(x))` for `n ≤ max_degree()`.
    pub fn eval(&self, n: usize, x: f64) -> Vec<f64> {
        assert!(n <= self.max_degree(), "recurrence too short for degree {n}");
        let mut q = Vec::with_capacity(n + 1);
        q.push(1.0 / self.mass.sqrt());
        for j in 0..n {
            let prev = if j == 0 { 0.0 } else { self.a[j - 1] * q[j - 1] };
            q.push(((x - self.b[j]) * q[j] - prev) / self.a[j]);
        }
        q
    }

    /// Values and derivatives of `q_0, …, q_n` at `x`.
    pub fn eval_with_derivative(&self, n: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
        assert!(n <= self.max_degree(), "recurrence too short for degree {n}");
        let mut q = vec![1.0 / self.mass.sqrt()];
        let mut dq = vec![0.0];
        for j in 0..n {
            let (p, dp) = if j == 0 {
                (0.0, 0.0)
            } else {
                (self.a[j - 1] * q[j - 1], self.a[j - 1] * dq[j - 1])
            };
            q.push(((x - self.b[j]) * q[j] - p) / self.a[j]);
            dq.push((q[j] + (x - self.b[j]) * dq[j] - dp) / self.a[j]);
        }
        (q, dq)
    }

    pub fn jacobi_matrix(&self, n: usize) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            j[(i, i)] = self.b[i];
            if i + 1 < n {
                j[(i, i + 1)] = self.a[i];
                j[(i + 1, i)] = self.a[i];
            }
        }
        j
    }
}

/// Recurrence coefficients up to `q_{k+1}` for `e^{-kφ} dμ` on the interval,
/// by the discretized Stieltjes procedure.
pub fn jacobi_recurrence(measure: &WeightedMeasure, k: usize) -> Result<Recurrence1D> {
    measure.validate()?;
    if measure.domain != Domain::Interval {
        return Err(Error::Unsupported {
            op: "jacobi_recurrence",
            domain: measure.domain.to_string(),
        });
    }
    // Twice the nodes strictly needed keeps the discrete process far from
    // exhausting the rule.
    let exactness = measure.gram_exactness(k + 1, 1.0).max(2 * k + 3) * 2;
    let rule = build_rule(measure, exactness)?;
    let x: Vec<f64> = rule.nodes.iter().map(|p| p[0]).collect();
    let w = rule.weighted(k, &measure.phi);
    let mass: f64 = w.iter().sum();
    let mut q_prev = vec![0.0; x.len()];
    let mut q: Vec<f64> = vec![1.0 / mass.sqrt(); x.len()];
    let mut a = Vec::with_capacity(k + 1);
    let mut b = Vec::with_capacity(k + 2);
    for j in 0..=k + 1 {
        let bj: f64 = x.iter().zip(&q).zip(&w).map(|((x, q), w)| w * x * q * q).sum();
        b.push(bj);
        if j == k + 1 {
            break;
        }
        let aj = if j == 0 { 0.0 } else { a[j - 1] };
        let mut next: Vec<f64> = (0..x.len())
            .map(|i| (x[i] - bj) * q[i] - aj * q_prev[i])
            .collect();
        let norm = next.iter().zip(&w).map(|(v, w)| w * v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numeric(format!(
                "recurrence coefficient a_{} lost positivity ({norm:e})",
                j + 1
            )));
        }
        next.iter_mut().for_each(|v| *v /= norm);
        a.push(norm);
        q_prev = std::mem::replace(&mut q, next);
    }
    b.truncate(k + 1);
    Ok(Recurrence1D { a, b, mass })
}

/// Gauss nodes of `q_npts` with their Christoffel weights.
pub fn gauss_nodes(rec: &Recurrence1D, npts: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if npts == 0 || npts > rec.b.len() {
        return Err(Error::contract(format!(
            "{npts} nodes requested from a recurrence of length {}",
            rec.b.len()
        )));
    }
    let eig = SymmetricEigen::try_new(rec.jacobi_matrix(npts), 1e-15, 10_000)
        .ok_or_else(|| Error::numeric("Jacobi eigen-solver did not converge"))?;
    let mut pairs: Vec<(f64, f64)> = (0..npts)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], rec.mass * v0 * v0)
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(pairs.into_iter().unzip())
}

/// `K_k(x, y) = Σ_{j≤k} q_j(x) q_j(y)` through the Christoffel–Darboux formula.
pub fn christoffel_darboux(rec: &Recurrence1D, k: usize, x: f64, y: f64) -> f64 {
    assert!(k < rec.max_degree(), "recurrence too short for degree {k}");
    let a = rec.a[k];
    if (x - y).abs() < CONFLUENT_TOL {
        let t = 0.5 * (x + y);
        let (q, dq) = rec.eval_with_derivative(k + 1, t);
        return a * (dq[k + 1] * q[k] - dq[k] * q[k + 1]);
    }
    let qx = rec.eval(k + 1, x);
    let qy = rec.eval(k + 1, y);
    a * (qx[k + 1] * qy[k] - qx[k] * qy[k + 1]) / (x - y)
}
