//! Equilibrium measures and the test windows they are compared on.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, Domain, ON_DOMAIN_TOL};
use crate::quadrature::QuadratureRule;

use super::transport::{wasserstein1, DiscreteMeasure};

/// Points this close to a window boundary count as inside and are reported.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// A test region `Ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Window {
    /// `[lo, hi]` on the interval.
    Segment { lo: f64, hi: f64 },
    /// Angles `θ ∈ [start, end]` on the circle, `0 < end − start ≤ 2π`.
    Arc { start: f64, end: f64 },
    /// Geodesic ball of angular radius `angle` around a unit vector.
    Cap { center: Vec<f64>, angle: f64 },
    /// Axis-parallel box on a cube.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `inner ≤ |x| ≤ outer` in the disk or ball.
    Shell { inner: f64, outer: f64 },
}

impl Window {
    pub fn validate(&self, domain: Domain) -> Result<()> {
        let m = domain.ambient_dim();
        let ok = match self {
            Window::Segment { lo, hi } => domain == Domain::Interval && lo < hi,
            Window::Arc { start, end } => {
                domain == Domain::Circle && end > start && end - start <= 2.0 * PI + 1e-15
            }
            Window::Cap { center, angle } => {
                domain == Domain::Sphere
                    && center.len() == 3
                    && (norm(center) - 1.0).abs() < 1e-9
                    && *angle > 0.0
                    && *angle <= PI
            }
            Window::Box { lo, hi } => {
                matches!(domain, Domain::Cube2 | Domain::Cube3)
                    && lo.len() == m
                    && hi.len() == m
                    && lo.iter().zip(hi).all(|(l, h)| l < h)
            }
            Window::Shell { inner, outer } => {
                matches!(domain, Domain::Disk | Domain::Ball3) && 0.0 <= *inner && inner < outer
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("window {self:?} is not valid on {domain}")))
        }
    }

    /// Signed slack of `x`: positive inside, negative outside.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match self {
            Window::Segment { lo, hi } => (x[0] - lo).min(hi - x[0]),
            Window::Arc { start, end } => {
                let theta = x[1].atan2(x[0]);
                let rel = (theta - start).rem_euclid(2.0 * PI);
                let width = end - start;
                if rel <= width {
                    rel.min(width - rel)
                } else {
                    -(rel - width).min(2.0 * PI - rel)
                }
            }
            Window::Cap { center, angle } => {
                let c = (dot(x, center) / norm(x)).clamp(-1.0, 1.0);
                angle - c.acos()
            }
            Window::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(c, (l, h))| (c - l).min(h - c))
                .fold(f64::INFINITY, f64::min),
            Window::Shell { inner, outer } => {
                let r = norm(x);
                if *inner == 0.0 {
                    outer - r
                } else {
                    (r - inner).min(outer - r)
                }
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.margin(x) >= -BOUNDARY_TOL
    }

    pub fn on_boundary(&self, x: &[f64]) -> bool {
        self.margin(x).abs() <= BOUNDARY_TOL
    }

    /// `μ_eq(Ω)` for the probability-normalized equilibrium measure.
    pub fn equilibrium_mass(&self, domain: Domain) -> Result<f64> {
        self.validate(domain)?;
        let arcsine = |lo: f64, hi: f64| {
            let (lo, hi) = (lo.clamp(-1.0, 1.0), hi.clamp(-1.0, 1.0));
            ((hi.asin() - lo.asin()) / PI).max(0.0)
        };
        Ok(match self {
            Window::Segment { lo, hi } => arcsine(*lo, *hi),
            Window::Arc { start, end } => (end - start) / (2.0 * PI),
            Window::Cap { angle, .. } => (1.0 - angle.cos()) / 2.0,
            Window::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| arcsine(*l, *h)).product(),
            Window::Shell { inner, outer } => {
                let (a, b) = (inner.min(1.0), outer.min(1.0));
                match domain {
                    Domain::Disk => (1.0 - a * a).sqrt() - (1.0 - b * b).sqrt(),
                    _ => {
                        let g = |r: f64| 0.5 * (r.asin() - r * (1.0 - r * r).sqrt());
                        (g(b) - g(a)) / (PI / 4.0)
                    }
                }
            }
        })
    }
}

/// Windows used when a configuration names none: quarters of the interval
/// and circle, six caps around the coordinate axes, orthant boxes, and three
/// radial shells.
pub fn default_windows(domain: Domain) -> Vec<Window> {
    match domain {
        Domain::Interval => [-1.0, -0.5, 0.0, 0.5]
            .iter()
            .map(|&lo| Window::Segment { lo, hi: lo + 0.5 })
            .collect(),
        Domain::Circle => (0..4)
            .map(|q| Window::Arc {
                start: q as f64 * PI / 2.0,
                end: (q + 1) as f64 * PI / 2.0,
            })
            .collect(),
        Domain::Sphere => (0..6)
            .map(|i| {
                let mut center = vec![0.0; 3];
                center[i / 2] = if i % 2 == 0 { 1.0 } else { -1.0 };
                Window::Cap {
                    center,
                    angle: PI / 4.0,
                }
            })
            .collect(),
        Domain::Cube2 | Domain::Cube3 => {
            let m = domain.ambient_dim();
            (0..1usize << m)
                .map(|mask| {
                    let lo: Vec<f64> = (0..m).map(|c| if mask >> c & 1 == 1 { 0.0 } else { -1.0 }).collect();
                    let hi = lo.iter().map(|l| l + 1.0).collect();
                    Window::Box { lo, hi }
                })
                .collect()
        }
        Domain::Disk | Domain::Ball3 => [(0.0, 0.5), (0.5, 0.8), (0.8, 1.0)]
            .iter()
            .map(|&(inner, outer)| Window::Shell { inner, outer })
            .collect(),
    }
}

/// Density of the probability-normalized equilibrium measure with respect
/// to arc length, surface area or Lebesgue measure.
pub fn equilibrium_density(domain: Domain, x: &[f64]) -> Result<f64> {
    if x.len() != domain.ambient_dim() || domain.constraint_residual(x) > ON_DOMAIN_TOL {
        return Err(Error::contract(format!("{x:?} is not a point of {domain}")));
    }
    let infinite = || {
        Error::contract(format!(
            "the equilibrium density of {domain} is infinite at the boundary point {x:?}; use window masses"
        ))
    };
    let arcsine = |t: f64| {
        let s = 1.0 - t * t;
        if s > 0.0 {
            Ok(1.0 / (PI * s.sqrt()))
        } else {
            Err(infinite())
        }
    };
    match domain {
        Domain::Circle => Ok(1.0 / (2.0 * PI)),
        Domain::Sphere => Ok(1.0 / (4.0 * PI)),
        Domain::Interval | Domain::Cube2 | Domain::Cube3 => {
            x.iter().map(|&t| arcsine(t)).product::<Result<f64>>()
        }
        Domain::Disk | Domain::Ball3 => {
            let s = 1.0 - dot(x, x);
            if !(s > 0.0) {
                return Err(infinite());
            }
            let c = if domain == Domain::Disk {
                1.0 / (2.0 * PI)
            } else {
                1.0 / (PI * PI)
            };
            Ok(c / s.sqrt())
        }
    }
}

/// The equilibrium measure discretized on the nodes of a rule for the
/// domain's reference measure.
pub fn equilibrium_on_rule(rule: &QuadratureRule) -> Result<DiscreteMeasure> {
    let domain = rule.domain();
    let masses: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(x, w)| equilibrium_density(domain, x).map(|d| w * d))
        .collect::<Result<_>>()?;
    let total: f64 = masses.iter().sum();
    DiscreteMeasure::new(rule.nodes.clone(), masses.iter().map(|m| m / total).collect())
}

/// `W₁` between a probability measure and the equilibrium measure.
///
/// On the interval the arcsine law is used exactly (quantile formula with its
/// closed-form distribution function); elsewhere the equilibrium measure is
/// discretized on `rule`.
pub fn wasserstein_to_equilibrium(mu: &DiscreteMeasure, rule: &QuadratureRule) -> Result<f64> {
    if mu.domain() == Domain::Interval {
        return Ok(wasserstein_to_arcsine(mu));
    }
    if rule.domain() != mu.domain() {
        return Err(Error::contract("rule and measure live on different domains"));
    }
    let eq = equilibrium_on_rule(rule)?;
    let mu = mu.scaled(1.0 / mu.total_mass());
    Ok(wasserstein1(&mu, &eq)?.distance)
}

/// `∫ |F_μ − F| dt` with `F(t) = 1/2 + asin(t)/π`, in closed form.
pub fn wasserstein_to_arcsine(mu: &DiscreteMeasure) -> f64 {
    let total = mu.total_mass();
    let mut atoms: Vec<(f64, f64)> = mu
        .atoms
        .iter()
        .zip(&mu.masses)
        .map(|(x, w)| (x[0], w / total))
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let cdf = |t: f64| 0.5 + t.asin() / PI;
    let anti = |t: f64| t / 2.0 + (t * t.asin() + (1.0 - t * t).max(0.0).sqrt()) / PI;
    // ∫_a^b |c − F|, split where F crosses c.
    let piece = |a: f64, b: f64, c: f64| {
        if b <= a {
            return 0.0;
        }
        let t = (PI * (c - 0.5)).sin().clamp(a, b);
        let below = c * (t - a) - (anti(t) - anti(a));
        let above = (anti(b) - anti(t)) - c * (b - t);
        debug_assert!(cdf(a) <= cdf(b));
        below.max(0.0) + above.max(0.0)
    };
    let mut acc = 0.0;
    let mut level = 0.0;
    let mut left = -1.0;
    for (x, w) in atoms {
        let x = x.clamp(-1.0, 1.0);
        acc += piece(left, x, level);
        level += w;
        left = x;
    }
    acc + piece(left, 1.0, level.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointSet;
    use crate::quadrature::{build_rule, WeightedMeasure};

    #[test]
    fn densities() {
        assert!((equilibrium_density(Domain::Circle, &[0.6, 0.8]).unwrap() - 0.5 / PI).abs() < 1e-16);
        assert!((equilibrium_density(Domain::Interval, &[0.0]).unwrap() - 1.0 / PI).abs() < 1e-16);
        assert!(equilibrium_density(Domain::Interval, &[1.0]).is_err());
        assert!(equilibrium_density(Domain::Disk, &[0.6, 0.8]).is_err());
    }

    #[test]
    fn densities_integrate_to_one() {
        for domain in [Domain::Circle, Domain::Sphere, Domain::Interval] {
            let m = if domain == Domain::Interval {
                WeightedMeasure::arcsine()
            } else {
                WeightedMeasure::standard(domain)
            };
            let rule = build_rule(&m, 10).unwrap();
            let total: f64 = if domain == Domain::Interval {
                rule.weights.iter().sum::<f64>() / PI
            } else {
                rule.nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * equilibrium_density(domain, x).unwrap())
                    .sum()
            };
            assert!((total - 1.0).abs() < 1e-10, "{domain}: {total}");
        }
    }

    #[test]
    fn window_masses() {
        let half = Window::Segment { lo: 0.0, hi: 1.0 };
        assert!((half.equilibrium_mass(Domain::Interval).unwrap() - 0.5).abs() < 1e-16);
        for domain in Domain::ALL {
            let total: f64 = default_windows(domain)
                .iter()
                .map(|w| w.equilibrium_mass(domain).unwrap())
                .sum();
            if domain == Domain::Sphere {
                assert!(total < 1.0);
            } else {
                assert!((total - 1.0).abs() < 1e-12, "{domain}: {total}");
            }
        }
    }

    #[test]
    fn arc_membership_wraps() {
        let w = Window::Arc {
            start: 1.5 * PI,
            end: 2.5 * PI,
        };
        assert!(w.contains(&[1.0, 0.0]));
        assert!(!w.contains(&[-1.0, 0.0]));
        let quarter = Window::Arc { start: 0.0, end: PI / 2.0 };
        assert!(quarter.on_boundary(&[(PI / 2.0).cos(), 1.0]));
        assert!(quarter.contains(&[(PI / 2.0).cos(), 1.0]));
    }

    #[test]
    fn mismatched_window_rejected() {
        let w = Window::Segment { lo: 0.0, hi: 1.0 };
        assert!(matches!(w.equilibrium_mass(Domain::Circle), Err(Error::Config(_))));
    }

    #[test]
    fn arcsine_distance_of_a_point_mass() {
        // W₁(δ_0, arcsine) = E|X| = 2/π.
        let mu = DiscreteMeasure::uniform(PointSet::new(Domain::Interval, &[vec![0.0]]).unwrap());
        assert!((wasserstein_to_arcsine(&mu) - 2.0 / PI).abs() < 1e-14);
    }
}
