//! Diagnostics on configurations with known answers: Gauss nodes, the circle
//! off-diagonal mass and extremal Bernstein ratios.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bergsample::diagnostics::equilibrium::wasserstein_to_arcsine;
use bergsample::diagnostics::{
    bergman_measure, bernstein_constant, default_windows, landau_margin, offdiag_functional, DiscreteMeasure,
    LqNorm,
};
use bergsample::diagnostics::estimates::bernstein_constant_with;
use bergsample::family::FamilyRegistry;
use bergsample::polyspace::orthonormal_basis;
use bergsample::quadrature::build_rule;
use bergsample::{Domain, OrthonormalBasis, PointFamilyLevel, WeightedMeasure};

fn gauss(measure: &WeightedMeasure, k: usize) -> PointFamilyLevel {
    FamilyRegistry::default()
        .parse("gauss")
        .unwrap()
        .build(measure, k, k + 1)
        .unwrap()
}

#[test]
fn interval_bergman_mass_piles_up_at_the_ends() {
    let m = WeightedMeasure::standard(Domain::Interval);
    let k = 16;
    let b = orthonormal_basis(&m, k).unwrap();
    let beta = bergman_measure(&b, &build_rule(&m, 2 * k + 2).unwrap()).unwrap();
    assert!((beta.total_mass() - 1.0).abs() < 1e-12);
    let tail = |lo: f64| -> f64 {
        beta.atoms
            .iter()
            .zip(&beta.masses)
            .filter(|(x, _)| x[0].abs() >= lo)
            .map(|(_, w)| w)
            .sum()
    };
    let uniform = 0.1;
    let arcsine = 1.0 - 2.0 * f64::asin(0.9) / std::f64::consts::PI;
    let near_ends = tail(0.9);
    assert!(near_ends > uniform, "{near_ends}");
    assert!((near_ends - arcsine).abs() < (uniform - arcsine).abs());
}

#[test]
fn chebyshev_gauss_nodes_are_the_closed_form_and_equidistribute() {
    let m = WeightedMeasure::arcsine();
    let mut last = f64::INFINITY;
    for k in [8, 16, 24, 32, 48] {
        let level = gauss(&m, k);
        let n = k + 1;
        let mut got: Vec<f64> = level.points.iter().map(|x| x[0]).collect();
        got.sort_by(f64::total_cmp);
        let mut want: Vec<f64> = (1..=n)
            .map(|j| f64::cos((2 * j - 1) as f64 * std::f64::consts::PI / (2 * n) as f64))
            .collect();
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "k={k}: {g} vs {w}");
        }
        let w = wasserstein_to_arcsine(&DiscreteMeasure::uniform(level.points));
        assert!(w < last, "k={k}: {w} ≥ {last}");
        last = w;
    }
    assert!(last < 0.02, "{last}");
}

#[test]
fn gauss_node_margins_shrink() {
    let m = WeightedMeasure::standard(Domain::Interval);
    let windows = default_windows(Domain::Interval);
    let worst = |k: usize| -> f64 {
        let b = orthonormal_basis(&m, k).unwrap();
        let report = landau_margin(&[gauss(&m, k)], &[b], &windows).unwrap();
        report.levels[0].margins.iter().map(|v| v.abs()).fold(0.0, f64::max)
    };
    let (a, b, c) = (worst(8), worst(16), worst(32));
    assert!(b < a && c < b, "{a} {b} {c}");
    assert!(c < 0.5 * a, "{a} {c}");
}

#[test]
fn circle_offdiagonal_mass_is_two() {
    // K = D_k(θ−φ)/2π and |x−y|² = 2 − 2cos t give 2π·(2π(2k+1)·2 − 8πk)/(4π²) = 2
    let m = WeightedMeasure::standard(Domain::Circle);
    for k in [1, 4, 9, 20] {
        let b = orthonormal_basis(&m, k).unwrap();
        let rule = build_rule(&m, 2 * k + 2).unwrap();
        let r = offdiag_functional(&b, &rule).unwrap();
        assert!((r.direct - 2.0).abs() < 1e-9, "k={k}: {}", r.direct);
        assert!((r.via_traces - 2.0).abs() < 1e-9, "k={k}: {}", r.via_traces);
    }
}

fn tangential_gradient_gram(b: &OrthonormalBasis) -> DMatrix<f64> {
    let m = b.measure().clone();
    let rule = build_rule(&m, 2 * b.degree() + 2).unwrap();
    let n = b.dim();
    let mut g = DMatrix::zeros(n, n);
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let grad = b.eval_gradient(x);
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let radial = &grad * DVector::from_column_slice(x) / r2;
        let xt = DVector::from_column_slice(x).transpose();
        let tang = &grad - &radial * xt;
        g += *w * &tang * tang.transpose();
    }
    g
}

#[test]
fn l2_bernstein_constant_on_varieties() {
    for (d, k, lambda_max) in [(Domain::Circle, 7usize, 49.0), (Domain::Sphere, 5, 30.0)] {
        let b = orthonormal_basis(&WeightedMeasure::standard(d), k).unwrap();
        let eig = SymmetricEigen::new(tangential_gradient_gram(&b));
        let (imax, top) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        assert!((top - lambda_max).abs() < 1e-9 * lambda_max, "{d}: {top}");
        let exact = lambda_max.sqrt() / k as f64;
        let random = bernstein_constant(&b, LqNorm::L2, 64, 5).unwrap();
        assert!(random <= exact + 1e-9, "{d}: {random} > {exact}");
        let v = eig.eigenvectors.column(imax).into_owned();
        let hit = bernstein_constant_with(&b, LqNorm::L2, 0, 5, &[v]).unwrap();
        assert!((hit - exact).abs() < 1e-9, "{d}: {hit} vs {exact}");
    }
}

#[test]
fn bernstein_constant_sweep_stays_bounded() {
    let m = WeightedMeasure::standard(Domain::Circle);
    for q in [LqNorm::L1, LqNorm::L2, LqNorm::LInf] {
        for k in [2, 4, 8, 16] {
            let b = orthonormal_basis(&m, k).unwrap();
            let c = bernstein_constant(&b, q, 32, 1).unwrap();
            // trigonometric Bernstein inequality: ‖p'‖_q ≤ k‖p‖_q
            assert!(c > 0.0 && c <= 1.0 + 1e-9, "q={q} k={k}: {c}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trace_identity_for_real_polynomials(k in 1usize..=10, seed in any::<u64>()) {
        let m = WeightedMeasure::standard(Domain::Circle);
        let b = orthonormal_basis(&m, k).unwrap();
        let rule = build_rule(&m, 2 * k + 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |x: &[f64]| c[0] + c[1] * x[0] + c[2] * x[1] + c[3] * x[0] * x[1] + c[4] * x[0] * x[0];
        let v = b.eval_points(&rule.nodes);
        let kmat = &v * v.transpose();
        let fx: Vec<f64> = rule.nodes.iter().map(f).collect();
        let w = &rule.weights;
        let q = rule.len();
        let mut lhs = 0.0;
        for i in 0..q {
            for j in 0..q {
                lhs += w[i] * w[j] * (fx[i] - fx[j]).powi(2) * kmat[(i, j)].powi(2);
            }
        }
        let mut wf = v.clone();
        let mut wf2 = v.clone();
        for j in 0..q {
            wf.row_mut(j).scale_mut(w[j] * fx[j]);
            wf2.row_mut(j).scale_mut(w[j] * fx[j] * fx[j]);
        }
        let t_f = v.transpose() * wf;
        let t_f2 = v.transpose() * wf2;
        let rhs = 2.0 * t_f2.trace() - 2.0 * (&t_f * &t_f).trace();
        prop_assert!(lhs >= -1e-12);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()), "{} vs {}", lhs, rhs);
    }
}
