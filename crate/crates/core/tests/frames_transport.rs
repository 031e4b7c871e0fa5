//! Frame and Riesz bounds, dual systems, Carleson counts and the transport
//! solvers, each against an independent route.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use bergsample::diagnostics::{transport_plan, transport_solver, wasserstein1, DiscreteMeasure};
use bergsample::diagnostics::equilibrium::wasserstein_to_arcsine;
use bergsample::family::{random_point, FamilyRegistry};
use bergsample::framing::{biorthogonal_dual, carleson_count, dual_frame, frame_bounds, riesz_bounds};
use bergsample::geometry::{epsilon_net, euclidean_distance};
use bergsample::polyspace::orthonormal_basis;
use bergsample::quadrature::build_rule;
use bergsample::{Domain, KernelEvaluator, OrthonormalBasis, PointFamilyLevel, PointSet, WeightedMeasure};

fn random_set(d: Domain, n: usize, rng: &mut ChaCha8Rng) -> PointSet {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| random_point(d, rng)).collect();
    PointSet::new(d, &pts).unwrap()
}

fn basis(d: Domain, k: usize) -> OrthonormalBasis {
    orthonormal_basis(&WeightedMeasure::standard(d), k).unwrap()
}

/// Spectrum of the normalized kernel Gram matrix `K(λ,μ)/√(B(λ)B(μ))`,
/// whose nonzero part equals that of the frame operator.
fn normalized_gram_spectrum(b: &OrthonormalBasis, pts: &PointSet) -> Vec<f64> {
    let e = KernelEvaluator::new(b);
    let diag: Vec<f64> = pts.iter().map(|x| e.bergman(x)).collect();
    let n = pts.len();
    let g = DMatrix::from_fn(n, n, |i, j| e.kernel(pts.point(i), pts.point(j)) / (diag[i] * diag[j]).sqrt());
    let mut ev: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[test]
fn frame_bounds_match_the_kernel_gram_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (d, k) in [(Domain::Circle, 6), (Domain::Sphere, 3), (Domain::Disk, 3), (Domain::Interval, 7)] {
        let b = basis(d, k);
        let n_k = b.dim();
        let pts = random_set(d, 2 * n_k + 3, &mut rng);
        let ev = normalized_gram_spectrum(&b, &pts);
        let r = frame_bounds(&b, &PointFamilyLevel::new(k, pts.clone())).unwrap();
        assert!((r.upper - ev[0]).abs() < 1e-9 * ev[0], "{d}");
        assert!((r.lower - ev[n_k - 1]).abs() < 1e-9 * ev[0], "{d}");
        assert!(ev[n_k..].iter().all(|v| v.abs() < 1e-9 * ev[0]));

        let few = pts.subset(&(0..n_k / 2).collect::<Vec<_>>());
        let ev = normalized_gram_spectrum(&b, &few);
        let r = riesz_bounds(&b, &PointFamilyLevel::new(k, few)).unwrap();
        assert!((r.upper - ev[0]).abs() < 1e-9 * ev[0], "{d}");
        assert!((r.lower - ev[ev.len() - 1]).abs() < 1e-9 * ev[0], "{d}");
    }
}

#[test]
fn adding_points_never_shrinks_frame_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for d in [Domain::Circle, Domain::Sphere, Domain::Cube2] {
        let k = 4;
        let b = basis(d, k);
        let a = random_set(d, 2 * b.dim(), &mut rng);
        let extra = random_set(d, b.dim(), &mut rng);
        let both = a.union(&extra).unwrap();
        let (ra, re, rb) = (
            frame_bounds(&b, &PointFamilyLevel::new(k, a)).unwrap(),
            frame_bounds(&b, &PointFamilyLevel::new(k, extra)).unwrap(),
            frame_bounds(&b, &PointFamilyLevel::new(k, both)).unwrap(),
        );
        // S_{A∪E} = S_A + S_E, so Weyl's inequalities bracket the union
        assert!(rb.lower >= ra.lower - 1e-12 && rb.upper >= ra.upper - 1e-12, "{d}");
        assert!(rb.lower >= ra.lower + re.lower - 1e-10, "{d}");
        assert!(rb.upper <= ra.upper + re.upper + 1e-10, "{d}");
    }
}

#[test]
fn removing_points_tightens_riesz_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (d, k) = (Domain::Sphere, 6);
    let b = basis(d, k);
    let pts = random_set(d, b.dim() / 2, &mut rng);
    let full = riesz_bounds(&b, &PointFamilyLevel::new(k, pts.clone())).unwrap();
    let part = pts.subset(&(0..pts.len() - 5).collect::<Vec<_>>());
    let sub = riesz_bounds(&b, &PointFamilyLevel::new(k, part)).unwrap();
    assert!(sub.lower >= full.lower - 1e-12);
    assert!(sub.upper <= full.upper + 1e-12);
}

#[test]
fn dual_frame_reconstructs_and_riesz_dual_is_biorthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for (d, k) in [(Domain::Sphere, 4), (Domain::Disk, 5), (Domain::Ball3, 2)] {
        let b = basis(d, k);
        let level = PointFamilyLevel::new(k, random_set(d, 3 * b.dim(), &mut rng));
        let dual = dual_frame(&b, &level).unwrap();
        let f = DVector::from_fn(b.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        assert!((dual.reconstruct(&f) - &f).norm() < 1e-9 * f.norm(), "{d}");
        let sum: f64 = dual.coeffs.iter().sum();
        assert!((sum - b.dim() as f64).abs() < 1e-9, "{d}: {sum}");
        assert!(dual.coeffs.iter().all(|c| (-1e-12..=1.0 + 1e-12).contains(c)));

        let sparse = PointFamilyLevel::new(k, random_set(d, b.dim() / 2, &mut rng));
        let bi = biorthogonal_dual(&b, &sparse).unwrap();
        let g = bi.cross_gram();
        let dev = (g - DMatrix::<f64>::identity(sparse.len(), sparse.len())).abs().max();
        assert!(dev < 1e-9, "{d}: {dev:e}");
    }
}

#[test]
fn non_frames_are_rejected_by_the_dual() {
    let b = basis(Domain::Circle, 5);
    let pts = PointSet::new(Domain::Circle, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    assert!(dual_frame(&b, &PointFamilyLevel::new(5, pts)).is_err());
}

#[test]
fn carleson_counts_see_clusters() {
    let k = 8;
    let net = epsilon_net(Domain::Disk, k, 0.5, 3).unwrap();
    let r = carleson_count(&net, None).unwrap();
    assert!(r.bounded);
    // points at mutual distance ≥ 0.5/k inside a ball of radius 1/k: packing bound
    assert!(r.max_count <= 49, "{}", r.max_count);

    let cluster: Vec<Vec<f64>> = (0..30).map(|i| vec![0.1 + 1e-4 * i as f64, 0.2]).collect();
    let pts = PointSet::new(Domain::Disk, &cluster).unwrap();
    let r = carleson_count(&PointFamilyLevel::new(k, pts), Some(10.0)).unwrap();
    assert_eq!(r.max_count, 30);
    assert!(!r.bounded);
}

fn lp_oracle(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Vec<_>> = mu
        .atoms
        .iter()
        .map(|x| {
            nu.atoms
                .iter()
                .map(|y| lp.add_var(euclidean_distance(x, y), (0.0, f64::INFINITY)))
                .collect()
        })
        .collect();
    for (i, &a) in mu.masses.iter().enumerate() {
        let row: Vec<_> = vars[i].iter().map(|&v| (v, 1.0)).collect();
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, a);
    }
    for (j, &b) in nu.masses.iter().enumerate() {
        let col: Vec<_> = vars.iter().map(|r| (r[j], 1.0)).collect();
        lp.add_constraint(col.as_slice(), ComparisonOp::Eq, b);
    }
    lp.solve().unwrap().objective()
}

fn random_measure(d: Domain, n: usize, rng: &mut ChaCha8Rng) -> DiscreteMeasure {
    let atoms = random_set(d, n, rng);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DiscreteMeasure::new(atoms, raw.iter().map(|m| m / total).collect()).unwrap()
}

#[test]
fn fifty_atom_sphere_transport_matches_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let mu = random_measure(Domain::Sphere, 50, &mut rng);
    let nu = random_measure(Domain::Sphere, 50, &mut rng);
    let w = wasserstein1(&mu, &nu).unwrap().distance;
    assert!((w - lp_oracle(&mu, &nu)).abs() <= 1e-8);
}

#[test]
fn point_masses_move_by_their_distance() {
    let x = vec![0.0, 0.6, 0.8];
    let y = vec![1.0, 0.0, 0.0];
    let mu = DiscreteMeasure::uniform(PointSet::new(Domain::Sphere, std::slice::from_ref(&x)).unwrap());
    let nu = DiscreteMeasure::uniform(PointSet::new(Domain::Sphere, std::slice::from_ref(&y)).unwrap());
    let w = wasserstein1(&mu, &nu).unwrap().distance;
    assert!((w - euclidean_distance(&x, &y)).abs() < 1e-12, "{w} vs {}", euclidean_distance(&x, &y));
}

#[test]
fn arcsine_distance_matches_numerical_integration() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for n in [1, 3, 17] {
        let mu = random_measure(Domain::Interval, n, &mut rng);
        let mut atoms: Vec<(f64, f64)> = mu.atoms.iter().map(|x| x[0]).zip(mu.masses.iter().copied()).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        // midpoint rule in θ = asin t, where the integrand is smooth between atoms
        let m = 400_000;
        let mut acc = 0.0;
        for i in 0..m {
            let th = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
            let t = th.sin();
            let f_mu: f64 = atoms.iter().filter(|a| a.0 <= t).map(|a| a.1).sum();
            let f_eq = 0.5 + th / std::f64::consts::PI;
            acc += (f_mu - f_eq).abs() * th.cos() * std::f64::consts::PI / m as f64;
        }
        let exact = wasserstein_to_arcsine(&mu);
        assert!((exact - acc).abs() < 1e-6, "n={n}: {exact} vs {acc}");
    }
}

#[test]
fn transport_plan_marginals() {
    let registry = FamilyRegistry::default();
    for (d, k, spec) in [
        (Domain::Sphere, 5, "equispaced:n=2.0*N"),
        (Domain::Interval, 12, "equispaced:n=2N"),
        (Domain::Disk, 4, "epsilon_net:eps=0.6"),
    ] {
        let m = WeightedMeasure::standard(d);
        let b = orthonormal_basis(&m, k).unwrap();
        let level = registry.parse(spec).unwrap().build(&m, k, b.dim()).unwrap();
        let rule = build_rule(&m, 2 * k + 2).unwrap();
        let plan = transport_plan(&b, &level, &rule).unwrap();
        let (rows, cols) = plan.marginal_residuals();
        assert!(rows <= 1e-7 && cols <= 1e-7, "{d}: {rows:e} {cols:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transport_is_a_metric(seed in any::<u64>(), d in prop::sample::select(vec![Domain::Circle, Domain::Disk, Domain::Sphere])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = |rng: &mut ChaCha8Rng| rng.random_range(1..12);
        let (na, nb, nc) = (n(&mut rng), n(&mut rng), n(&mut rng));
        let a = random_measure(d, na, &mut rng);
        let b = random_measure(d, nb, &mut rng);
        let c = random_measure(d, nc, &mut rng);
        let w = |x: &DiscreteMeasure, y: &DiscreteMeasure| wasserstein1(x, y).unwrap().distance;
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() <= 1e-12);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-12);
        prop_assert!(w(&a, &a).abs() <= 1e-15);
        prop_assert!((w(&a, &b) - lp_oracle(&a, &b)).abs() <= 1e-8);
    }

    #[test]
    fn quantile_and_simplex_agree_on_the_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (na, nb) = (rng.random_range(1..30), rng.random_range(1..30));
        let a = random_measure(Domain::Interval, na, &mut rng);
        let b = random_measure(Domain::Interval, nb, &mut rng);
        let q = transport_solver("quantile").unwrap().solve(&a, &b).unwrap();
        let s = transport_solver("network-simplex").unwrap().solve(&a, &b).unwrap();
        prop_assert!((q - s).abs() <= 1e-10, "{} vs {}", q, s);
    }
}
