//! Built-in domains, point sets, grids and ε-nets.
//!
//! All domains live inside the unit box `[-1, 1]^m`: the interval `[-1, 1]`,
//! the cubes `[-1, 1]^n`, the unit circle in ℝ², the unit sphere in ℝ³, the
//! closed unit disk and the closed unit ball in ℝ³. Distances are ambient
//! Euclidean distances throughout.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for a point to count as lying on a domain.
pub const ON_DOMAIN_TOL: f64 = 1e-12;

/// Points closer than this are duplicates.
pub const DUPLICATE_TOL: f64 = 1e-14;

/// Largest candidate grid `epsilon_net` is willing to build.
pub const MAX_NET_CANDIDATES: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Interval,
    Cube2,
    Cube3,
    Circle,
    Sphere,
    Disk,
    Ball3,
}

impl Domain {
    pub const ALL: [Domain; 7] = [
        Domain::Interval,
        Domain::Cube2,
        Domain::Cube3,
        Domain::Circle,
        Domain::Sphere,
        Domain::Disk,
        Domain::Ball3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Interval => "interval",
            Domain::Cube2 => "cube2",
            Domain::Cube3 => "cube3",
            Domain::Circle => "circle",
            Domain::Sphere => "sphere",
            Domain::Disk => "disk",
            Domain::Ball3 => "ball3",
        }
    }

    pub fn ambient_dim(self) -> usize {
        match self {
            Domain::Interval => 1,
            Domain::Cube2 | Domain::Circle | Domain::Disk => 2,
            Domain::Cube3 | Domain::Sphere | Domain::Ball3 => 3,
        }
    }

    pub fn intrinsic_dim(self) -> usize {
        match self {
            Domain::Interval | Domain::Circle => 1,
            Domain::Cube2 | Domain::Sphere | Domain::Disk => 2,
            Domain::Cube3 | Domain::Ball3 => 3,
        }
    }

    pub fn is_variety(self) -> bool {
        matches!(self, Domain::Circle | Domain::Sphere)
    }

    /// Dimension of `H_k` on this domain.
    pub fn dimension(self, k: usize) -> usize {
        match self {
            Domain::Circle => 2 * k + 1,
            Domain::Sphere => (k + 1) * (k + 1),
            _ => crate::numeric::binomial(self.intrinsic_dim() + k, k),
        }
    }

    /// `C` such that `dense_grid(self, r)` has covering radius at most `C / r`.
    pub fn grid_covering_constant(self) -> f64 {
        let n = self.ambient_dim() as f64;
        match self {
            Domain::Interval => 2.0,
            Domain::Circle => PI,
            Domain::Sphere => 4.0,
            Domain::Cube2 | Domain::Cube3 => 2.0 * n.sqrt(),
            Domain::Disk | Domain::Ball3 => 4.0 * n.sqrt(),
        }
    }

    /// Violation of the defining constraint at `x` (zero on the domain).
    pub fn constraint_residual(self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.ambient_dim(), "point dimension mismatch");
        match self {
            Domain::Circle | Domain::Sphere => (norm(x) - 1.0).abs(),
            Domain::Interval | Domain::Cube2 | Domain::Cube3 => {
                x.iter().map(|c| (c.abs() - 1.0).max(0.0)).fold(0.0, f64::max)
            }
            Domain::Disk | Domain::Ball3 => (norm(x) - 1.0).max(0.0),
        }
    }

    pub fn contains(self, x: &[f64]) -> bool {
        x.iter().all(|c| c.is_finite()) && self.constraint_residual(x) <= ON_DOMAIN_TOL
    }

    /// Nearest point of the domain.
    pub fn project(self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.ambient_dim() {
            return Err(Error::contract(format!(
                "{}: expected {} coordinates, got {}",
                self,
                self.ambient_dim(),
                x.len()
            )));
        }
        match self {
            Domain::Circle | Domain::Sphere => {
                let r = norm(x);
                if r == 0.0 {
                    return Err(Error::contract("cannot project the origin onto a sphere"));
                }
                Ok(x.iter().map(|c| c / r).collect())
            }
            Domain::Interval | Domain::Cube2 | Domain::Cube3 => {
                Ok(x.iter().map(|c| c.clamp(-1.0, 1.0)).collect())
            }
            Domain::Disk | Domain::Ball3 => {
                let r = norm(x);
                if r > 1.0 {
                    Ok(x.iter().map(|c| c / r).collect())
                } else {
                    Ok(x.to_vec())
                }
            }
        }
    }

    fn check_on(self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::contract(format!(
                "{}: expected {} coordinates, got {}",
                self,
                self.ambient_dim(),
                x.len()
            )));
        }
        let r = self.constraint_residual(x);
        if !(r <= ON_DOMAIN_TOL) {
            return Err(Error::contract(format!(
                "point {x:?} is off {self} (constraint residual {r:.3e})"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Domain::ALL.iter().map(|d| d.name()).collect();
                Error::Config(format!("unknown domain `{s}`; expected one of {names:?}"))
            })
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Squared Euclidean distance.
#[inline]
pub(crate) fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Ambient Euclidean distance `|x − y|`.
///
/// Panics if the points have different dimensions.
pub fn euclidean_distance(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "euclidean_distance: dimension mismatch");
    dist2(x, y).sqrt()
}

/// Finite point set in ambient coordinates, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    domain: Domain,
    coords: Vec<f64>,
}

impl PointSet {
    /// Points already known to satisfy the domain constraint and to be distinct.
    pub(crate) fn from_raw(domain: Domain, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len() % domain.ambient_dim(), 0);
        Self { domain, coords }
    }

    /// Validates points: each is projected onto the domain, and rejected if
    /// the projection moved it by more than `max_shift`. Duplicates are
    /// rejected. Returns the set and the largest projection distance.
    pub fn project_from(
        domain: Domain,
        points: &[Vec<f64>],
        max_shift: f64,
    ) -> Result<(Self, f64)> {
        let m = domain.ambient_dim();
        let mut coords = Vec::with_capacity(points.len() * m);
        let mut worst: f64 = 0.0;
        for (i, p) in points.iter().enumerate() {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::contract(format!("point {i} has non-finite coordinates")));
            }
            let q = domain.project(p)?;
            let shift = euclidean_distance(p, &q);
            if shift > max_shift {
                return Err(Error::contract(format!(
                    "point {i} lies {shift:.3e} from {domain} (limit {max_shift:.1e})"
                )));
            }
            worst = worst.max(shift);
            coords.extend_from_slice(&q);
        }
        let set = Self { domain, coords };
        if let Some((i, j)) = set.find_duplicate() {
            return Err(Error::contract(format!("points {i} and {j} coincide")));
        }
        Ok((set, worst))
    }

    /// Points that must already lie on the domain within [`ON_DOMAIN_TOL`].
    pub fn new(domain: Domain, points: &[Vec<f64>]) -> Result<Self> {
        Self::project_from(domain, points, ON_DOMAIN_TOL).map(|(s, _)| s)
    }

    pub fn empty(domain: Domain) -> Self {
        Self {
            domain,
            coords: Vec::new(),
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.ambient_dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let m = self.dim();
        &self.coords[i * m..(i + 1) * m]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim())
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(|p| p.to_vec()).collect()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Keeps the points selected by `keep`, in order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(indices.len() * self.dim());
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        Self {
            domain: self.domain,
            coords,
        }
    }

    /// Concatenation; fails on duplicates.
    pub fn union(&self, other: &PointSet) -> Result<Self> {
        if self.domain != other.domain {
            return Err(Error::contract("union of point sets on different domains"));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let set = Self {
            domain: self.domain,
            coords,
        };
        if let Some((i, j)) = set.find_duplicate() {
            return Err(Error::contract(format!("points {i} and {j} coincide")));
        }
        Ok(set)
    }

    /// Smallest pairwise distance, `+∞` for fewer than two points.
    pub fn min_pairwise_distance(&self) -> f64 {
        let n = self.len();
        let mut best = f64::INFINITY;
        for i in 0..n {
            let pi = self.point(i);
            for j in i + 1..n {
                best = best.min(dist2(pi, self.point(j)));
            }
        }
        best.sqrt()
    }

    fn find_duplicate(&self) -> Option<(usize, usize)> {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.point(a)[0].total_cmp(&self.point(b)[0]));
        for (s, &i) in order.iter().enumerate() {
            let xi = self.point(i)[0];
            for &j in &order[s + 1..] {
                if self.point(j)[0] - xi > DUPLICATE_TOL {
                    break;
                }
                if dist2(self.point(i), self.point(j)) <= DUPLICATE_TOL * DUPLICATE_TOL {
                    return Some((i.min(j), i.max(j)));
                }
            }
        }
        None
    }
}

/// Largest distance from a point of `reference` to the nearest point of `pts`.
pub fn covering_radius(pts: &PointSet, reference: &PointSet) -> f64 {
    if pts.is_empty() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for x in reference.iter() {
        let mut best = f64::INFINITY;
        for p in pts.iter() {
            best = best.min(dist2(x, p));
            if best <= worst {
                break;
            }
        }
        worst = worst.max(best);
    }
    worst.sqrt()
}

/// One level `Λ_k` of a point family together with its separation constant.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFamilyLevel {
    pub k: usize,
    pub points: PointSet,
    /// Largest `ε` with `|λ − λ'| ≥ ε/k` for all distinct pairs (`+∞` below two points).
    pub separation: f64,
}

impl PointFamilyLevel {
    pub fn new(k: usize, points: PointSet) -> Self {
        let separation = points.min_pairwise_distance() * k.max(1) as f64;
        Self {
            k,
            points,
            separation,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn linspace(res: usize) -> Vec<f64> {
    (0..res)
        .map(|i| -1.0 + 2.0 * i as f64 / (res - 1) as f64)
        .collect()
}

/// Equispaced points on the unit circle, starting at angle 0.
pub fn circle_points(n: usize, offset: f64) -> Vec<f64> {
    let mut coords = Vec::with_capacity(2 * n);
    for i in 0..n {
        let t = offset + 2.0 * PI * i as f64 / n as f64;
        coords.push(t.cos());
        coords.push(t.sin());
    }
    coords
}

/// Fibonacci lattice with `n` points on the unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<f64> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut coords = Vec::with_capacity(3 * n);
    for i in 0..n {
        let z = 1.0 - (2 * i + 1) as f64 / n as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let t = golden * i as f64;
        coords.extend_from_slice(&[r * t.cos(), r * t.sin(), z]);
    }
    coords
}

fn tensor_grid(axis: &[f64], dim: usize, keep: impl Fn(&[f64]) -> bool) -> Vec<f64> {
    let n = axis.len();
    let total = n.pow(dim as u32);
    let mut coords = Vec::new();
    let mut p = vec![0.0; dim];
    for flat in 0..total {
        let mut r = flat;
        for c in (0..dim).rev() {
            p[c] = axis[r % n];
            r /= n;
        }
        if keep(&p) {
            coords.extend_from_slice(&p);
        }
    }
    coords
}

/// Number of points `dense_grid(domain, resolution)` would produce (bodies: an upper bound).
pub fn grid_size(domain: Domain, resolution: usize) -> usize {
    let r = resolution as f64;
    let est = match domain {
        Domain::Interval | Domain::Circle => r,
        Domain::Sphere | Domain::Cube2 | Domain::Disk => r * r + 2.0 * r + 1.0,
        Domain::Cube3 | Domain::Ball3 => (r + 1.0).powi(3),
    };
    est.min(usize::MAX as f64 / 2.0) as usize
}

/// Deterministic quasi-uniform grid with covering radius at most
/// `domain.grid_covering_constant() / resolution`.
///
/// Interval and cubes use tensor grids, the circle equispaced angles, the
/// sphere a Fibonacci lattice with `resolution²` points, and the disk and ball
/// an odd-sized tensor grid (so the origin is included) intersected with the
/// body.
pub fn dense_grid(domain: Domain, resolution: usize) -> Result<PointSet> {
    if resolution < 2 {
        return Err(Error::Config(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    let coords = match domain {
        Domain::Interval => linspace(resolution),
        Domain::Circle => circle_points(resolution, 0.0),
        Domain::Sphere => fibonacci_sphere(resolution * resolution),
        Domain::Cube2 => tensor_grid(&linspace(resolution), 2, |_| true),
        Domain::Cube3 => tensor_grid(&linspace(resolution), 3, |_| true),
        Domain::Disk | Domain::Ball3 => {
            let res = resolution | 1;
            let mut axis = linspace(res);
            axis[res / 2] = 0.0;
            tensor_grid(&axis, domain.ambient_dim(), |p| norm(p) <= 1.0)
        }
    };
    Ok(PointSet::from_raw(domain, coords))
}

/// Orthogonal projection of `v` onto the tangent space at `x`.
///
/// For the circle and sphere the unit normal is `x` itself; full-dimensional
/// bodies have no normal and the projection is the identity.
pub fn tangent_project(domain: Domain, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    domain.check_on(x)?;
    if v.len() != x.len() {
        return Err(Error::contract("tangent vector dimension mismatch"));
    }
    if !domain.is_variety() {
        return Ok(v.to_vec());
    }
    let r = norm(x);
    let along = dot(v, x) / (r * r);
    Ok(v.iter().zip(x).map(|(vi, xi)| vi - along * xi).collect())
}

/// Distance from an interior point of a body to its boundary.
pub fn distance_to_boundary(domain: Domain, x: &[f64]) -> Result<f64> {
    if domain.is_variety() {
        return Err(Error::Unsupported {
            op: "distance_to_boundary",
            domain: domain.to_string(),
        });
    }
    domain.check_on(x)?;
    let d = match domain {
        Domain::Interval | Domain::Cube2 | Domain::Cube3 => {
            x.iter().map(|c| 1.0 - c.abs()).fold(f64::INFINITY, f64::min)
        }
        Domain::Disk | Domain::Ball3 => 1.0 - norm(x),
        Domain::Circle | Domain::Sphere => unreachable!(),
    };
    Ok(d.max(0.0))
}

/// Farthest-point sampling over a candidate set.
///
/// Starts from a seed-selected candidate and repeatedly adds the candidate
/// farthest from the current selection (lowest index on ties) until every
/// candidate lies within `radius` of the selection. Returns the selected
/// indices and the smallest insertion distance, which equals the minimum
/// pairwise distance of the selection.
pub fn farthest_point_sampling(
    candidates: &PointSet,
    radius: f64,
    seed: u64,
) -> (Vec<usize>, f64) {
    let n = candidates.len();
    if n == 0 {
        return (Vec::new(), f64::INFINITY);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..n);
    let r2 = radius * radius;
    let cells = CellIndex::new(candidates, radius.max(1e-9));
    let mut min_d2 = vec![f64::INFINITY; n];
    // max-heap on (distance, lowest index) with lazy deletion; distances are
    // nonnegative so their bit patterns order like the values
    let mut heap: BinaryHeap<(u64, Reverse<usize>)> = BinaryHeap::new();
    let mut chosen = vec![start];
    let mut sep2 = f64::INFINITY;
    let mut last = start;
    let mut reach2 = f64::INFINITY;
    loop {
        let p = candidates.point(last);
        let mut update = |i: usize| {
            let q = dist2(p, candidates.point(i));
            if q < min_d2[i] {
                min_d2[i] = q;
                heap.push((q.to_bits(), Reverse(i)));
            }
        };
        // only candidates closer to `p` than their current distance change,
        // and every current distance is at most `reach2`
        if reach2.is_finite() {
            cells.for_each_near(p, reach2.sqrt(), &mut update);
        } else {
            (0..n).for_each(&mut update);
        }
        let (best, best_d2) = loop {
            let &(bits, Reverse(i)) = heap.peek().expect("heap holds every candidate");
            if bits == min_d2[i].to_bits() {
                break (i, min_d2[i]);
            }
            heap.pop();
        };
        if best_d2 < r2 {
            break;
        }
        sep2 = sep2.min(best_d2);
        chosen.push(best);
        last = best;
        reach2 = best_d2;
    }
    (chosen, sep2.sqrt())
}

/// Candidates bucketed on an ambient grid of side `cell`.
struct CellIndex {
    cell: f64,
    dim: usize,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

impl CellIndex {
    fn new(pts: &PointSet, cell: f64) -> Self {
        let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, x) in pts.iter().enumerate() {
            buckets.entry(Self::key(x, cell)).or_default().push(i);
        }
        Self {
            cell,
            dim: pts.dim(),
            buckets,
        }
    }

    fn key(x: &[f64], cell: f64) -> Vec<i64> {
        x.iter().map(|c| ((c + 1.0) / cell).floor() as i64).collect()
    }

    /// Calls `f` on every candidate within `r` of `x` (and possibly others).
    fn for_each_near(&self, x: &[f64], r: f64, f: &mut impl FnMut(usize)) {
        let lo: Vec<i64> = x.iter().map(|c| ((c - r + 1.0) / self.cell).floor() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|c| ((c + r + 1.0) / self.cell).floor() as i64).collect();
        let span: u128 = lo.iter().zip(&hi).map(|(l, h)| (h - l + 1) as u128).product();
        if span > self.buckets.len() as u128 {
            for idx in self.buckets.values() {
                idx.iter().for_each(|&i| f(i));
            }
            return;
        }
        let mut key = lo.clone();
        loop {
            if let Some(idx) = self.buckets.get(&key) {
                idx.iter().for_each(|&i| f(i));
            }
            let mut c = 0;
            loop {
                if c == self.dim {
                    return;
                }
                key[c] += 1;
                if key[c] <= hi[c] {
                    break;
                }
                key[c] = lo[c];
                c += 1;
            }
        }
    }
}

/// ε-net from an explicit candidate set with known covering radius `grid_h`.
pub fn epsilon_net_from_candidates(
    candidates: &PointSet,
    grid_h: f64,
    k: usize,
    eps: f64,
    seed: u64,
) -> Result<PointFamilyLevel> {
    if k == 0 || !(eps > 0.0) {
        return Err(Error::contract(format!(
            "epsilon_net needs k ≥ 1 and eps > 0 (k = {k}, eps = {eps})"
        )));
    }
    let radius = eps / k as f64;
    if radius <= grid_h {
        let domain = candidates.domain();
        let res = (domain.grid_covering_constant() / radius).ceil() as usize + 1;
        return Err(Error::Resolution {
            reason: format!("eps/k = {radius:.3e} is not above the grid covering radius {grid_h:.3e}"),
            required: grid_size(domain, res),
        });
    }
    let (chosen, sep) = farthest_point_sampling(candidates, radius, seed);
    let points = candidates.subset(&chosen);
    Ok(PointFamilyLevel {
        k,
        points,
        separation: sep * k as f64,
    })
}

/// ε-net at scale `eps/k` by farthest-point sampling on a dense grid whose
/// covering radius is at most a quarter of `eps/k`.
///
/// Every point of the domain lies within `eps/k + eps/(4k)` of the net, and
/// the net has separation at least `eps`.
pub fn epsilon_net(domain: Domain, k: usize, eps: f64, seed: u64) -> Result<PointFamilyLevel> {
    if k == 0 || !(eps > 0.0) {
        return Err(Error::contract(format!(
            "epsilon_net needs k ≥ 1 and eps > 0 (k = {k}, eps = {eps})"
        )));
    }
    let radius = eps / k as f64;
    let res = ((4.0 * domain.grid_covering_constant() / radius).ceil() as usize).max(2);
    let size = grid_size(domain, res);
    if size > MAX_NET_CANDIDATES {
        return Err(Error::Resolution {
            reason: format!(
                "eps/k = {radius:.3e} needs resolution {res} on {domain}, above the candidate cap {MAX_NET_CANDIDATES}"
            ),
            required: size,
        });
    }
    let grid = dense_grid(domain, res)?;
    let h = domain.grid_covering_constant() / res as f64;
    epsilon_net_from_candidates(&grid, h, k, eps, seed)
}
