//! Wasserstein-1 distances between discrete measures.
//!
//! Two solvers sit behind [`TransportSolver`]: the quantile coupling for
//! measures on the line, and a transportation simplex (network simplex on the
//! bipartite graph) for everything else. Both are exact for their inputs.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euclidean_distance, Domain, PointSet};

/// Relative mass mismatch tolerated before both measures are renormalized.
pub const MASS_TOL: f64 = 1e-8;

/// Largest support handed to the simplex; larger ones are aggregated.
pub const MAX_ATOMS: usize = 2000;

/// Atoms with nonnegative masses.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    pub atoms: PointSet,
    pub masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: PointSet, masses: Vec<f64>) -> Result<Self> {
        if atoms.len() != masses.len() {
            return Err(Error::contract(format!(
                "{} atoms but {} masses",
                atoms.len(),
                masses.len()
            )));
        }
        if let Some(j) = masses.iter().position(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::contract(format!("mass {j} is {}", masses[j])));
        }
        Ok(Self { atoms, masses })
    }

    /// Equal masses summing to one.
    pub fn uniform(atoms: PointSet) -> Self {
        let n = atoms.len();
        let masses = vec![1.0 / n.max(1) as f64; n];
        Self { atoms, masses }
    }

    pub fn domain(&self) -> Domain {
        self.atoms.domain()
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        crate::numeric::compensated_sum(self.masses.iter().copied())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            atoms: self.atoms.clone(),
            masses: self.masses.iter().map(|m| m * factor).collect(),
        }
    }

    /// Merges atoms into cells of side `radius` (ambient grid), placing each
    /// aggregate at the mass-weighted centroid of its cell.
    pub fn aggregate(&self, radius: f64) -> Self {
        let m = self.atoms.dim();
        let mut cells: HashMap<Vec<i64>, usize> = HashMap::new();
        let mut sums: Vec<(Vec<f64>, f64)> = Vec::new();
        for (x, &w) in self.atoms.iter().zip(&self.masses) {
            if w == 0.0 {
                continue;
            }
            let key: Vec<i64> = x.iter().map(|c| (c / radius).floor() as i64).collect();
            let idx = *cells.entry(key).or_insert_with(|| {
                sums.push((vec![0.0; m], 0.0));
                sums.len() - 1
            });
            let (acc, mass) = &mut sums[idx];
            for (a, c) in acc.iter_mut().zip(x) {
                *a += w * c;
            }
            *mass += w;
        }
        let mut coords = Vec::with_capacity(sums.len() * m);
        let mut masses = Vec::with_capacity(sums.len());
        for (acc, mass) in sums {
            coords.extend(acc.iter().map(|a| a / mass));
            masses.push(mass);
        }
        Self {
            atoms: PointSet::from_raw(self.domain(), coords),
            masses,
        }
    }
}

/// Outcome of a Wasserstein computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub distance: f64,
    pub solver: String,
    /// Both inputs were rescaled to unit mass because their totals differed.
    pub renormalized: bool,
    /// Cell size used to coarsen oversized supports, 0 when none was needed.
    pub aggregation_radius: f64,
}

/// An exact optimal-transport solver for the ambient distance `|x − y|`.
pub trait TransportSolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn supports(&self, domain: Domain) -> bool;

    /// `W₁` between measures of equal total mass.
    fn solve(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64>;
}

/// Exact `W₁` on the line: `∫ |F_μ − F_ν|`.
#[derive(Debug, Default, Clone, Copy)]
pub struct QuantileSolver;

impl TransportSolver for QuantileSolver {
    fn name(&self) -> &'static str {
        "quantile"
    }

    fn supports(&self, domain: Domain) -> bool {
        domain.ambient_dim() == 1
    }

    fn solve(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
        let mut events: Vec<(f64, f64)> = mu
            .atoms
            .iter()
            .zip(&mu.masses)
            .map(|(x, &w)| (x[0], w))
            .chain(nu.atoms.iter().zip(&nu.masses).map(|(x, &w)| (x[0], -w)))
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut diff = 0.0;
        let mut total = 0.0;
        for pair in events.windows(2) {
            diff += pair[0].1;
            total += diff.abs() * (pair[1].0 - pair[0].0);
        }
        Ok(total)
    }
}

/// Transportation simplex on the complete bipartite graph of the supports.
#[derive(Debug, Default, Clone, Copy)]
pub struct NetworkSimplex;

impl TransportSolver for NetworkSimplex {
    fn name(&self) -> &'static str {
        "network-simplex"
    }

    fn supports(&self, _domain: Domain) -> bool {
        true
    }

    fn solve(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
        let (a, xs) = positive_atoms(mu);
        let (b, ys) = positive_atoms(nu);
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        let cost = |i: usize, j: usize| euclidean_distance(xs[i], ys[j]);
        TransportationProblem::new(a, b, &cost).solve()
    }
}

fn positive_atoms(mu: &DiscreteMeasure) -> (Vec<f64>, Vec<&[f64]>) {
    mu.atoms
        .iter()
        .zip(&mu.masses)
        .filter(|(_, &w)| w > 0.0)
        .map(|(x, &w)| (w, x))
        .unzip()
}

/// Registered solvers, looked up by name.
pub fn transport_solver(name: &str) -> Result<Box<dyn TransportSolver>> {
    match name {
        "quantile" => Ok(Box::new(QuantileSolver)),
        "network-simplex" => Ok(Box::new(NetworkSimplex)),
        other => Err(Error::Config(format!(
            "unknown transport solver `{other}` (known: quantile, network-simplex)"
        ))),
    }
}

/// The default solver for a domain.
pub fn solver_for(domain: Domain) -> Box<dyn TransportSolver> {
    if QuantileSolver.supports(domain) {
        Box::new(QuantileSolver)
    } else {
        Box::new(NetworkSimplex)
    }
}

/// `W₁(μ, ν)` with the ambient distance.
///
/// Mass common to an atom of both measures stays in place (the distance
/// depends only on `μ − ν`); supports larger than [`MAX_ATOMS`] are then
/// aggregated on a grid whose cell size is reported.
pub fn wasserstein1(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TransportResult> {
    wasserstein1_with(mu, nu, solver_for(mu.domain()).as_ref())
}

pub fn wasserstein1_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    solver: &dyn TransportSolver,
) -> Result<TransportResult> {
    if mu.domain() != nu.domain() {
        return Err(Error::contract("transport between measures on different domains"));
    }
    if !solver.supports(mu.domain()) {
        return Err(Error::Unsupported {
            op: "transport solver",
            domain: mu.domain().to_string(),
        });
    }
    let (ma, mb) = (mu.total_mass(), nu.total_mass());
    if !(ma > 0.0 && mb > 0.0) {
        return Err(Error::contract(format!(
            "transport needs positive masses, got {ma:e} and {mb:e}"
        )));
    }
    let renormalized = (ma - mb).abs() > MASS_TOL * ma.max(mb);
    let (mu, nu) = if renormalized {
        (mu.scaled(1.0 / ma), nu.scaled(1.0 / mb))
    } else {
        (mu.clone(), nu.clone())
    };
    let (mut mu, mut nu) = cancel_common(&mu, &nu);
    let mut radius: f64 = 0.0;
    if solver.name() == "network-simplex" {
        let diam = 2.0 * (mu.domain().ambient_dim() as f64).sqrt();
        let mut r = diam / 1024.0;
        while mu.len() > MAX_ATOMS || nu.len() > MAX_ATOMS {
            mu = mu.aggregate(r);
            nu = nu.aggregate(r);
            radius = r;
            r *= 1.5;
        }
    }
    let distance = solver.solve(&mu, &nu)?;
    Ok(TransportResult {
        distance,
        solver: solver.name().to_string(),
        renormalized,
        aggregation_radius: radius,
    })
}

/// Removes the mass both measures place on identical atoms.
fn cancel_common(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> (DiscreteMeasure, DiscreteMeasure) {
    let key = |x: &[f64]| x.iter().map(|c| c.to_bits()).collect::<Vec<u64>>();
    let mut nu_mass = nu.masses.clone();
    let index: HashMap<Vec<u64>, usize> = nu.atoms.iter().enumerate().map(|(j, y)| (key(y), j)).collect();
    let mut mu_mass = mu.masses.clone();
    for (i, x) in mu.atoms.iter().enumerate() {
        if let Some(&j) = index.get(&key(x)) {
            let common = mu_mass[i].min(nu_mass[j]);
            mu_mass[i] -= common;
            nu_mass[j] -= common;
        }
    }
    let keep = |set: &PointSet, masses: Vec<f64>| {
        let idx: Vec<usize> = (0..masses.len()).filter(|&i| masses[i] > 0.0).collect();
        DiscreteMeasure {
            atoms: set.subset(&idx),
            masses: idx.iter().map(|&i| masses[i]).collect(),
        }
    };
    (keep(&mu.atoms, mu_mass), keep(&nu.atoms, nu_mass))
}

/// Balanced transportation problem solved by the primal simplex on a
/// spanning-tree basis (MODI potentials, block pricing).
struct TransportationProblem<'c> {
    supply: Vec<f64>,
    demand: Vec<f64>,
    cost: &'c dyn Fn(usize, usize) -> f64,
}

#[derive(Clone, Copy)]
struct Cell {
    row: usize,
    col: usize,
    flow: f64,
}

impl<'c> TransportationProblem<'c> {
    fn new(supply: Vec<f64>, demand: Vec<f64>, cost: &'c dyn Fn(usize, usize) -> f64) -> Self {
        Self { supply, demand, cost }
    }

    fn solve(mut self) -> Result<f64> {
        let m = self.supply.len();
        let n = self.demand.len();
        // Balance exactly, then perturb the supplies so no basic flow is ever
        // zero (Charnes' anti-degeneracy device); the perturbation is far
        // below any tolerance the distance is used at.
        let sa: f64 = self.supply.iter().sum();
        let sb: f64 = self.demand.iter().sum();
        for d in &mut self.demand {
            *d *= sa / sb;
        }
        let eps = sa * 1e-14 / (m as f64 + 1.0);
        for s in &mut self.supply {
            *s += eps;
        }
        self.demand[n - 1] += eps * m as f64;

        let mut cells = self.northwest_corner();
        let nodes = m + n;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        for (c, cell) in cells.iter().enumerate() {
            adj[cell.row].push(c);
            adj[m + cell.col].push(c);
        }
        let mut u = vec![0.0; m];
        let mut v = vec![0.0; n];
        let mut parent = vec![usize::MAX; nodes];
        let mut parent_cell = vec![usize::MAX; nodes];
        let mut depth = vec![0usize; nodes];
        let max_cost = (0..m.min(64))
            .flat_map(|i| (0..n.min(64)).map(move |j| (i, j)))
            .map(|(i, j)| (self.cost)(i, j))
            .fold(0.0, f64::max)
            .max(1e-300);
        let tol = 1e-13 * max_cost;
        let block = ((m * n) as f64).sqrt().ceil() as usize;
        let mut cursor = 0usize;
        let total = m * n;
        let max_iter = 50 * total + 1000;

        for _ in 0..max_iter {
            self.potentials(&cells, &adj, &mut u, &mut v, &mut parent, &mut parent_cell, &mut depth);
            // Block pricing: scan blocks cyclically, take the best candidate
            // of the first block that has one.
            let mut best: Option<(usize, usize, f64)> = None;
            let mut scanned = 0;
            while scanned < total {
                let end = (scanned + block).min(total);
                for _ in scanned..end {
                    let i = cursor / n;
                    let j = cursor % n;
                    cursor = (cursor + 1) % total;
                    let rc = (self.cost)(i, j) - u[i] - v[j];
                    if rc < -tol && best.is_none_or(|b| rc < b.2) {
                        best = Some((i, j, rc));
                    }
                }
                scanned = end;
                if best.is_some() {
                    break;
                }
            }
            let Some((i, j, _)) = best else {
                return Ok(cells.iter().map(|c| c.flow * (self.cost)(c.row, c.col)).sum());
            };
            self.pivot(i, j, &mut cells, &mut adj, &parent, &parent_cell, &depth);
        }
        Err(Error::numeric(format!(
            "transportation simplex did not converge in {max_iter} pivots"
        )))
    }

    fn northwest_corner(&self) -> Vec<Cell> {
        let (m, n) = (self.supply.len(), self.demand.len());
        let mut s = self.supply.clone();
        let mut d = self.demand.clone();
        let mut cells = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        while cells.len() < m + n - 1 {
            let f = s[i].min(d[j]);
            cells.push(Cell { row: i, col: j, flow: f });
            s[i] -= f;
            d[j] -= f;
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || s[i] <= d[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        cells
    }

    #[allow(clippy::too_many_arguments)]
    fn potentials(
        &self,
        cells: &[Cell],
        adj: &[Vec<usize>],
        u: &mut [f64],
        v: &mut [f64],
        parent: &mut [usize],
        parent_cell: &mut [usize],
        depth: &mut [usize],
    ) {
        let m = u.len();
        parent.fill(usize::MAX);
        let mut queue = VecDeque::new();
        u[0] = 0.0;
        parent[0] = 0;
        depth[0] = 0;
        queue.push_back(0usize);
        while let Some(node) = queue.pop_front() {
            for &c in &adj[node] {
                let cell = cells[c];
                let other = if node < m { m + cell.col } else { cell.row };
                if parent[other] != usize::MAX {
                    continue;
                }
                parent[other] = node;
                parent_cell[other] = c;
                depth[other] = depth[node] + 1;
                let cij = (self.cost)(cell.row, cell.col);
                if other >= m {
                    v[cell.col] = cij - u[cell.row];
                } else {
                    u[cell.row] = cij - v[cell.col];
                }
                queue.push_back(other);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn pivot(
        &self,
        i: usize,
        j: usize,
        cells: &mut Vec<Cell>,
        adj: &mut [Vec<usize>],
        parent: &[usize],
        parent_cell: &[usize],
        depth: &[usize],
    ) {
        let m = self.supply.len();
        // Tree path between row node i and column node m + j.
        let (mut a, mut b) = (i, m + j);
        let mut from_row = Vec::new();
        let mut from_col = Vec::new();
        while a != b {
            if depth[a] >= depth[b] {
                from_row.push(parent_cell[a]);
                a = parent[a];
            } else {
                from_col.push(parent_cell[b]);
                b = parent[b];
            }
        }
        // Walking the cycle from the column side: the entering cell gains
        // flow, then signs alternate starting with a loss.
        let mut path: Vec<usize> = from_col;
        path.extend(from_row.into_iter().rev());
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (pos, &c) in path.iter().enumerate() {
            if pos % 2 == 0 && cells[c].flow < theta {
                theta = cells[c].flow;
                leave = c;
            }
        }
        for (pos, &c) in path.iter().enumerate() {
            if pos % 2 == 0 {
                cells[c].flow -= theta;
            } else {
                cells[c].flow += theta;
            }
        }
        let old = cells[leave];
        adj[old.row].retain(|&x| x != leave);
        adj[m + old.col].retain(|&x| x != leave);
        cells[leave] = Cell { row: i, col: j, flow: theta };
        adj[i].push(leave);
        adj[m + j].push(leave);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64], masses: &[f64]) -> DiscreteMeasure {
        let set = PointSet::new(Domain::Interval, &points.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap();
        DiscreteMeasure::new(set, masses.to_vec()).unwrap()
    }

    #[test]
    fn unit_translation() {
        let a = line(&[0.0], &[1.0]);
        let b = line(&[1.0], &[1.0]);
        assert!((wasserstein1(&a, &b).unwrap().distance - 1.0).abs() < 1e-15);
        let simplex = wasserstein1_with(&a, &b, &NetworkSimplex).unwrap();
        assert!((simplex.distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_measures() {
        let a = line(&[-0.5, 0.25, 0.9], &[0.2, 0.5, 0.3]);
        assert_eq!(wasserstein1(&a, &a).unwrap().distance, 0.0);
        assert_eq!(wasserstein1_with(&a, &a, &NetworkSimplex).unwrap().distance, 0.0);
    }

    #[test]
    fn solvers_agree_on_the_line() {
        let a = line(&[-0.9, -0.1, 0.3, 0.8], &[0.1, 0.4, 0.3, 0.2]);
        let b = line(&[-0.7, 0.0, 0.5], &[0.5, 0.25, 0.25]);
        let q = wasserstein1(&a, &b).unwrap().distance;
        let s = wasserstein1_with(&a, &b, &NetworkSimplex).unwrap().distance;
        assert!((q - s).abs() < 1e-12, "{q} {s}");
    }

    #[test]
    fn mismatched_masses_are_renormalized() {
        let a = line(&[0.0], &[2.0]);
        let b = line(&[0.5], &[1.0]);
        let r = wasserstein1(&a, &b).unwrap();
        assert!(r.renormalized);
        assert!((r.distance - 0.5).abs() < 1e-15);
    }

    #[test]
    fn aggregation_keeps_mass() {
        let pts: Vec<Vec<f64>> = (0..100).map(|i| vec![-1.0 + 0.02 * i as f64]).collect();
        let mu = DiscreteMeasure::uniform(PointSet::new(Domain::Interval, &pts).unwrap());
        let agg = mu.aggregate(0.1);
        assert!(agg.len() <= 21);
        assert!((agg.total_mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn solver_registry() {
        assert_eq!(transport_solver("quantile").unwrap().name(), "quantile");
        assert!(matches!(transport_solver("sinkhorn"), Err(Error::Config(_))));
        assert_eq!(solver_for(Domain::Sphere).name(), "network-simplex");
    }
}
