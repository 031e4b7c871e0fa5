//! The space `H_k`: exponent sets, Gram matrices and orthonormal bases.
//!
//! Bases are built degree by degree. The candidates for degree `j` are the
//! products `x_i · q` of the coordinate functions with the basis elements
//! added at degree `j − 1`; they are orthogonalized twice against everything
//! built so far in the discrete inner product of a certified quadrature rule,
//! and a singular value decomposition of the residual decides how many new
//! directions degree `j` contributes. On a variety the residual has a numerical
//! null space (the relations of the variety, e.g. `x² + y² − 1` on the circle),
//! which the relative cut `τ` discards. The recurrence is stored, so a basis
//! evaluates at any point without forming monomials.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, PointSet};
use crate::numeric::tr_mul;
use crate::quadrature::{build_rule, QuadratureRule, WeightedMeasure};

/// Relative singular-value cut for the numerical rank.
pub const RANK_TOL: f64 = 1e-10;

/// Largest acceptable `σ_{r+1} / σ_r` at a rank cut.
pub const MAX_RANK_GAP: f64 = 1e-3;

/// Post-construction orthonormality requirement.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// Highest degree a basis may be built for.
pub const MAX_DEGREE: usize = 64;

/// Multi-indices `α` with `|α| ≤ k` in graded-lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExponentSet {
    m: usize,
    k: usize,
    flat: Vec<u32>,
}

impl ExponentSet {
    pub fn ambient_dim(&self) -> usize {
        self.m
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.flat.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn get(&self, i: usize) -> &[u32] {
        &self.flat[i * self.m..(i + 1) * self.m]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.flat.chunks_exact(self.m)
    }

    pub fn to_vecs(&self) -> Vec<Vec<u32>> {
        self.iter().map(|a| a.to_vec()).collect()
    }

    fn index_map(&self) -> HashMap<&[u32], usize> {
        self.iter().enumerate().map(|(i, a)| (a, i)).collect()
    }
}

/// All `α ∈ ℕ^m` with `|α| ≤ k`, ordered by total degree and then lexicographically.
pub fn enumerate_exponents(m: usize, k: usize) -> ExponentSet {
    assert!(m >= 1, "enumerate_exponents: m must be positive");
    fn fill(prefix: &mut Vec<u32>, remaining: u32, slots: usize, out: &mut Vec<u32>) {
        if slots == 1 {
            out.extend_from_slice(prefix);
            out.push(remaining);
            return;
        }
        for first in 0..=remaining {
            prefix.push(first);
            fill(prefix, remaining - first, slots - 1, out);
            prefix.pop();
        }
    }
    let mut flat = Vec::new();
    let mut prefix = Vec::with_capacity(m);
    for d in 0..=k as u32 {
        fill(&mut prefix, d, m, &mut flat);
    }
    ExponentSet { m, k, flat }
}

fn monomial_values(exps: &ExponentSet, x: &[f64], out: &mut [f64]) {
    for (v, a) in out.iter_mut().zip(exps.iter()) {
        *v = a.iter().zip(x).map(|(&e, &c)| c.powi(e as i32)).product();
    }
}

/// Gram matrix of the monomials `x^α`, `|α| ≤ k`, in `L²(e^{-kφ} dμ)`.
///
/// Monomials are badly conditioned; this is meant for small degrees and as
/// an independent cross-check of [`orthonormal_basis`].
pub fn gram_matrix(measure: &WeightedMeasure, k: usize, rule: &QuadratureRule) -> Result<DMatrix<f64>> {
    let need = measure.gram_exactness(k, 1.0);
    if rule.exactness < need {
        return Err(Error::contract(format!(
            "rule exactness {} below the {need} needed for degree {k}",
            rule.exactness
        )));
    }
    let exps = enumerate_exponents(measure.domain.ambient_dim(), k);
    let p = exps.len();
    let w = rule.weighted(k, &measure.phi);
    let mut v = DMatrix::zeros(rule.len(), p);
    let mut row = vec![0.0; p];
    for (j, x) in rule.nodes.iter().enumerate() {
        monomial_values(&exps, x, &mut row);
        let s = w[j].sqrt();
        for (c, val) in row.iter().enumerate() {
            v[(j, c)] = s * val;
        }
    }
    let g = v.transpose() * &v;
    Ok((&g + g.transpose()) * 0.5)
}

/// One degree of the graded construction.
#[derive(Debug, Clone)]
struct Block {
    /// Columns of the previous degree used as candidate seeds.
    seed_start: usize,
    seed_len: usize,
    /// Maps candidates to new raw functions (`r × m·seed_len`).
    from_candidates: DMatrix<f64>,
    /// Subtracts projections onto earlier functions (`r × N_prev`).
    from_previous: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct BasisOptions {
    pub rank_tol: f64,
    pub max_rank_gap: f64,
    /// Oversampling factor for weighted rules.
    pub oversampling: f64,
}

impl Default for BasisOptions {
    fn default() -> Self {
        Self {
            rank_tol: RANK_TOL,
            max_rank_gap: MAX_RANK_GAP,
            oversampling: 1.0,
        }
    }
}

/// An `L²(e^{-kφ} dμ)`-orthonormal basis `p_1, …, p_{N_k}` of `H_k`.
#[derive(Debug, Clone)]
pub struct OrthonormalBasis {
    measure: WeightedMeasure,
    k: usize,
    rule: QuadratureRule,
    constant: f64,
    blocks: Vec<Block>,
    /// Final re-orthonormalization: `p = T · raw`.
    correction: DMatrix<f64>,
    dims: Vec<usize>,
    gram_condition: f64,
    rank_gap: f64,
    orthonormality_residual: f64,
}

/// Builds the basis with a rule of exactness `measure.gram_exactness(k, 1)`.
pub fn orthonormal_basis(measure: &WeightedMeasure, k: usize) -> Result<OrthonormalBasis> {
    let opts = BasisOptions::default();
    let rule = build_rule(measure, measure.gram_exactness(k, opts.oversampling))?;
    orthonormal_basis_with_rule(measure, k, rule, opts)
}

pub fn orthonormal_basis_with_rule(
    measure: &WeightedMeasure,
    k: usize,
    rule: QuadratureRule,
    opts: BasisOptions,
) -> Result<OrthonormalBasis> {
    measure.validate()?;
    if k > MAX_DEGREE {
        return Err(Error::Config(format!("degree {k} exceeds the maximum {MAX_DEGREE}")));
    }
    if rule.domain() != measure.domain {
        return Err(Error::contract("rule and measure live on different domains"));
    }
    let need = measure.gram_exactness(k, opts.oversampling);
    if rule.exactness < need {
        return Err(Error::contract(format!(
            "rule exactness {} below the {need} needed for degree {k}",
            rule.exactness
        )));
    }
    let m = measure.domain.ambient_dim();
    let q = rule.len();
    let sqrt_w: Vec<f64> = rule.weighted(k, &measure.phi).iter().map(|w| w.sqrt()).collect();
    let norm0 = sqrt_w.iter().map(|s| s * s).sum::<f64>().sqrt();
    if !(norm0 > 0.0) {
        return Err(Error::numeric("weighted measure has zero mass on the rule"));
    }
    let n_max = crate::numeric::binomial(m + k, k);
    let mut p = DMatrix::<f64>::zeros(q, n_max);
    for j in 0..q {
        p[(j, 0)] = sqrt_w[j] / norm0;
    }
    let mut n = 1usize;
    let mut dims = vec![1usize];
    let mut blocks = Vec::with_capacity(k);
    let mut seed = (0usize, 1usize);
    let mut gram_condition: f64 = 1.0;
    let mut rank_gap: f64 = 0.0;

    for degree in 1..=k {
        let (seed_start, seed_len) = seed;
        let c = m * seed_len;
        if seed_len == 0 {
            blocks.push(Block {
                seed_start,
                seed_len,
                from_candidates: DMatrix::zeros(0, 0),
                from_previous: DMatrix::zeros(0, n),
            });
            dims.push(n);
            seed = (n, 0);
            continue;
        }
        let mut cand = DMatrix::<f64>::zeros(q, c);
        for (j, x) in rule.nodes.iter().enumerate() {
            for (i, xi) in x.iter().enumerate() {
                for t in 0..seed_len {
                    cand[(j, i * seed_len + t)] = xi * p[(j, seed_start + t)];
                }
            }
        }
        let prev = p.columns(0, n);
        let h1 = tr_mul(&prev, &cand);
        let mut resid = cand - prev * &h1;
        let h2 = tr_mul(&prev, &resid);
        resid -= prev * &h2;
        let h = h1 + h2;

        let (lambda, vecs) = block_spectrum(&resid);
        let lmax = lambda.first().copied().unwrap_or(0.0);
        let r = lambda.iter().take_while(|&&l| l > opts.rank_tol * lmax).count();
        if r < lambda.len() && r > 0 {
            let gap = lambda[r].max(0.0) / lambda[r - 1];
            if gap > opts.max_rank_gap {
                let lo = r.saturating_sub(2);
                let hi = (r + 2).min(lambda.len());
                return Err(Error::Degenerate {
                    degree,
                    spectrum: lambda[lo..hi].iter().map(|l| l / lmax).collect(),
                });
            }
            rank_gap = rank_gap.max(gap);
        }
        if r > 0 {
            gram_condition = gram_condition.max(lmax / lambda[r - 1]);
        }
        let mut from_candidates = DMatrix::<f64>::zeros(r, c);
        for i in 0..r {
            let scale = lambda[i].sqrt();
            for col in 0..c {
                from_candidates[(i, col)] = vecs[(col, i)] / scale;
            }
        }
        let u = &resid * from_candidates.transpose();
        let from_previous = &from_candidates * h.transpose();
        if n + r > n_max {
            return Err(Error::numeric("graded construction exceeded the polynomial dimension"));
        }
        p.columns_mut(n, r).copy_from(&u);
        blocks.push(Block {
            seed_start,
            seed_len,
            from_candidates,
            from_previous,
        });
        seed = (n, r);
        n += r;
        dims.push(n);
    }

    let raw = p.columns(0, n).into_owned();
    drop(p);
    let gram = tr_mul(&raw, &raw);
    let chol = gram
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numeric("re-orthonormalization: Gram matrix is not positive definite"))?;
    let l = chol.l();
    let correction = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::numeric("re-orthonormalization: singular factor"))?;
    let fixed = &raw * correction.transpose();
    let check = tr_mul(&fixed, &fixed);
    let mut residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            residual = residual.max((check[(i, j)] - target).abs());
        }
    }
    if !(residual <= ORTHONORMALITY_TOL) {
        return Err(Error::Consistency(format!(
            "orthonormality residual {residual:.3e} after re-orthonormalization"
        )));
    }
    Ok(OrthonormalBasis {
        measure: measure.clone(),
        k,
        rule,
        constant: 1.0 / norm0,
        blocks,
        correction,
        dims,
        gram_condition,
        rank_gap,
        orthonormality_residual: residual,
    })
}

/// Eigenpairs of `RᵀR`, eigenvalues descending.
fn block_spectrum(resid: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let g = tr_mul(resid, resid);
    let g = (&g + g.transpose()) * 0.5;
    let eig = g.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lambda = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (lambda, vecs)
}

/// Serializable snapshot of a basis in monomial coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisExport {
    pub domain: Domain,
    pub measure: WeightedMeasure,
    pub k: usize,
    pub n_k: usize,
    pub gram_condition: f64,
    pub rank_gap: f64,
    pub orthonormality_residual: f64,
    pub exponents: Vec<Vec<u32>>,
    /// Row `i` holds the monomial coefficients of `p_i`.
    pub coefficients: Vec<Vec<f64>>,
}

impl OrthonormalBasis {
    pub fn measure(&self) -> &WeightedMeasure {
        &self.measure
    }

    pub fn domain(&self) -> Domain {
        self.measure.domain
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    /// `N_k = dim H_k`.
    pub fn dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// `dim H_j` for `j = 0, …, k` (with the weight of degree `k`).
    pub fn dims_by_degree(&self) -> &[usize] {
        &self.dims
    }

    pub fn gram_condition(&self) -> f64 {
        self.gram_condition
    }

    /// Worst `σ_{r+1}/σ_r` at any rank cut, 0 when every block had full rank.
    pub fn rank_gap(&self) -> f64 {
        self.rank_gap
    }

    pub fn orthonormality_residual(&self) -> f64 {
        self.orthonormality_residual
    }

    /// The quadrature rule the basis was built and verified with.
    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// `e^{-kφ(x)}`.
    pub fn weight_factor(&self, x: &[f64]) -> f64 {
        self.measure.phi.factor(self.k, x)
    }

    fn check_point(&self, x: &[f64]) {
        assert_eq!(
            x.len(),
            self.domain().ambient_dim(),
            "point dimension does not match the basis domain"
        );
    }

    /// Raw (pre-correction) values at many points, one row per point.
    fn raw_values(&self, pts: &[&[f64]]) -> DMatrix<f64> {
        let np = pts.len();
        let n = self.dim();
        let mut raw = DMatrix::<f64>::zeros(np, n);
        raw.column_mut(0).fill(self.constant);
        let mut filled = 1;
        for b in &self.blocks {
            let r = b.from_candidates.nrows();
            if r == 0 {
                continue;
            }
            let cand = self.candidates(&raw, pts, b);
            let new = cand * b.from_candidates.transpose()
                - raw.columns(0, filled) * b.from_previous.transpose();
            raw.columns_mut(filled, r).copy_from(&new);
            filled += r;
        }
        raw
    }

    fn candidates(&self, raw: &DMatrix<f64>, pts: &[&[f64]], b: &Block) -> DMatrix<f64> {
        let m = self.domain().ambient_dim();
        let mut cand = DMatrix::<f64>::zeros(pts.len(), m * b.seed_len);
        for (row, x) in pts.iter().enumerate() {
            for (i, xi) in x.iter().enumerate() {
                for t in 0..b.seed_len {
                    cand[(row, i * b.seed_len + t)] = xi * raw[(row, b.seed_start + t)];
                }
            }
        }
        cand
    }

    /// Basis values at many points: row `j` is `(p_1(x_j), …, p_N(x_j))`.
    pub fn eval_many(&self, pts: &[&[f64]]) -> DMatrix<f64> {
        for x in pts {
            self.check_point(x);
        }
        self.raw_values(pts) * self.correction.transpose()
    }

    pub fn eval_points(&self, pts: &PointSet) -> DMatrix<f64> {
        let refs: Vec<&[f64]> = pts.iter().collect();
        self.eval_many(&refs)
    }

    /// `(p_1(x), …, p_{N_k}(x))`.
    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        let row = self.eval_many(&[x]);
        DVector::from_iterator(self.dim(), row.iter().copied())
    }

    /// Ambient gradients at many points: entry `c` is the `N`-column matrix
    /// of `∂p_i/∂x_c` with one row per point.
    pub fn gradients_many(&self, pts: &[&[f64]]) -> Vec<DMatrix<f64>> {
        for x in pts {
            self.check_point(x);
        }
        let m = self.domain().ambient_dim();
        let np = pts.len();
        let n = self.dim();
        let mut raw = DMatrix::<f64>::zeros(np, n);
        raw.column_mut(0).fill(self.constant);
        let mut draw: Vec<DMatrix<f64>> = (0..m).map(|_| DMatrix::zeros(np, n)).collect();
        let mut filled = 1;
        for b in &self.blocks {
            let r = b.from_candidates.nrows();
            if r == 0 {
                continue;
            }
            let cand = self.candidates(&raw, pts, b);
            let new = cand * b.from_candidates.transpose()
                - raw.columns(0, filled) * b.from_previous.transpose();
            for (dc, d) in draw.iter_mut().enumerate() {
                // ∂(x_i q) = δ_ic q + x_i ∂q
                let mut dcand = DMatrix::<f64>::zeros(np, m * b.seed_len);
                for (row, x) in pts.iter().enumerate() {
                    for (i, xi) in x.iter().enumerate() {
                        for t in 0..b.seed_len {
                            let mut v = xi * d[(row, b.seed_start + t)];
                            if i == dc {
                                v += raw[(row, b.seed_start + t)];
                            }
                            dcand[(row, i * b.seed_len + t)] = v;
                        }
                    }
                }
                let dnew = dcand * b.from_candidates.transpose()
                    - d.columns(0, filled) * b.from_previous.transpose();
                d.columns_mut(filled, r).copy_from(&dnew);
            }
            raw.columns_mut(filled, r).copy_from(&new);
            filled += r;
        }
        draw.into_iter()
            .map(|d| d * self.correction.transpose())
            .collect()
    }

    /// `N_k × m` matrix of ambient gradients `∇p_i(x)`.
    pub fn eval_gradient(&self, x: &[f64]) -> DMatrix<f64> {
        let grads = self.gradients_many(&[x]);
        let m = grads.len();
        DMatrix::from_fn(self.dim(), m, |i, c| grads[c][(0, i)])
    }

    /// Coordinates `⟨f, p_i⟩` of `f` in `L²(e^{-kφ}dμ)`, by the basis rule.
    pub fn project<F: Fn(&[f64]) -> f64>(&self, f: F) -> DVector<f64> {
        let vals = self.eval_points(&self.rule.nodes);
        let w = self.rule.weighted(self.k, &self.measure.phi);
        let fw: DVector<f64> =
            DVector::from_iterator(w.len(), self.rule.nodes.iter().zip(&w).map(|(x, w)| w * f(x)));
        let out = tr_mul(&vals, &fw);
        DVector::from_column_slice(out.as_slice())
    }

    /// Monomial coefficients: row `i` gives `p_i = Σ_α C[i, α] x^α`.
    pub fn monomial_coefficients(&self) -> (ExponentSet, DMatrix<f64>) {
        let m = self.domain().ambient_dim();
        let exps = enumerate_exponents(m, self.k);
        let index = exps.index_map();
        let pcount = exps.len();
        let n = self.dim();
        let mut shift = vec![vec![usize::MAX; pcount]; m];
        let mut buf = vec![0u32; m];
        for (a, alpha) in exps.iter().enumerate() {
            for (i, row) in shift.iter_mut().enumerate() {
                buf.copy_from_slice(alpha);
                buf[i] += 1;
                if let Some(&t) = index.get(buf.as_slice()) {
                    row[a] = t;
                }
            }
        }
        let mut raw = DMatrix::<f64>::zeros(n, pcount);
        raw[(0, 0)] = self.constant;
        let mut filled = 1;
        for b in &self.blocks {
            let r = b.from_candidates.nrows();
            if r == 0 {
                continue;
            }
            let mut cand = DMatrix::<f64>::zeros(m * b.seed_len, pcount);
            for (i, row) in shift.iter().enumerate() {
                for t in 0..b.seed_len {
                    for a in 0..pcount {
                        let v = raw[(b.seed_start + t, a)];
                        if v != 0.0 {
                            debug_assert!(row[a] != usize::MAX);
                            cand[(i * b.seed_len + t, row[a])] += v;
                        }
                    }
                }
            }
            let new = &b.from_candidates * cand - &b.from_previous * raw.rows(0, filled);
            raw.rows_mut(filled, r).copy_from(&new);
            filled += r;
        }
        (exps, &self.correction * raw)
    }

    pub fn export(&self) -> BasisExport {
        let (exps, coeffs) = self.monomial_coefficients();
        BasisExport {
            domain: self.domain(),
            measure: self.measure.clone(),
            k: self.k,
            n_k: self.dim(),
            gram_condition: self.gram_condition,
            rank_gap: self.rank_gap,
            orthonormality_residual: self.orthonormality_residual,
            exponents: exps.to_vecs(),
            coefficients: coeffs.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}
