//! Experiments behind the subcommands, kept in a name-keyed registry of
//! trait objects.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use bergsample::diagnostics::{
    bernstein_constant, convex_kernel_fit, interpolation_margin, landau_margin, offdiag_functional, DensityKind,
};
use bergsample::diagnostics::estimates::offdiag_exactness;
use bergsample::family::FamilyBuilder;
use bergsample::framing::{carleson_count, frame_bounds, riesz_bounds, sweep_trend, FrameReport};
use bergsample::geometry::{dense_grid, epsilon_net};
use bergsample::numeric::LineFit;
use bergsample::polyspace::{orthonormal_basis_with_rule, BasisOptions};
use bergsample::quadrature::build_rule;
use bergsample::{Error, KernelEvaluator, OrthonormalBasis, PointFamilyLevel, Result};

use crate::config::{Knob, ResolvedConfig};
use crate::file_family;
use crate::output::ArtifactWriter;

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn about(&self) -> &'static str;
    /// Settings beyond domain, measure, k range and seed that the experiment reads.
    fn knobs(&self) -> &'static [Knob];
    fn run(&self, cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<()>;
}

pub struct ExperimentRegistry {
    experiments: BTreeMap<&'static str, Box<dyn Experiment>>,
}

impl Default for ExperimentRegistry {
    fn default() -> Self {
        let mut r = Self {
            experiments: BTreeMap::new(),
        };
        r.register(Box::new(BasisExperiment));
        r.register(Box::new(KernelExperiment));
        r.register(Box::new(FrameExperiment));
        r.register(Box::new(InterpExperiment));
        r.register(Box::new(DensityExperiment));
        r.register(Box::new(OffdiagExperiment));
        r.register(Box::new(BernsteinExperiment));
        r.register(Box::new(ConvexFitExperiment));
        r.register(Box::new(NetExperiment));
        r
    }
}

impl ExperimentRegistry {
    pub fn register(&mut self, exp: Box<dyn Experiment>) {
        self.experiments.insert(exp.name(), exp);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Experiment> {
        self.experiments.get(name).map(|e| e.as_ref())
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Experiment> + '_ {
        self.experiments.values().map(|e| e.as_ref())
    }
}

/// Per-`k` stream of the run seed.
fn split_seed(seed: u64, k: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng.next_u64()
}

fn level_path(command: &str, k: usize, ext: &str) -> String {
    format!("{command}/k{k:03}.{ext}")
}

fn basis(cfg: &ResolvedConfig, k: usize, out: &mut ArtifactWriter) -> Result<OrthonormalBasis> {
    let measure = cfg.weighted_measure();
    let opts = BasisOptions {
        oversampling: cfg.oversampling.unwrap_or(1.0),
        ..BasisOptions::default()
    };
    let b = out.time(format!("basis k={k}"), || {
        let rule = build_rule(&measure, measure.gram_exactness(k, opts.oversampling))?;
        orthonormal_basis_with_rule(&measure, k, rule, opts)
    })?;
    out.certify(k, b.rule());
    Ok(b)
}

fn family_builder(cfg: &ResolvedConfig) -> Result<Box<dyn FamilyBuilder>> {
    let spec = cfg
        .family
        .as_ref()
        .ok_or_else(|| Error::Config(format!("`{}` needs a family", cfg.command)))?;
    file_family::registry().build(spec)
}

fn levels(cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<(Vec<OrthonormalBasis>, Vec<PointFamilyLevel>)> {
    let builder = family_builder(cfg)?;
    let measure = cfg.weighted_measure();
    let mut bases = Vec::new();
    let mut levels = Vec::new();
    for k in cfg.ks() {
        let b = basis(cfg, k, out)?;
        let level = out.time(format!("family k={k}"), || builder.build(&measure, k, b.dim()))?;
        bases.push(b);
        levels.push(level);
    }
    Ok((bases, levels))
}

fn write_frame_table(out: &mut ArtifactWriter, rel: &str, reports: &[FrameReport]) -> Result<()> {
    out.raw(rel, None, |f| {
        writeln!(f, "{}", FrameReport::CSV_HEADER)?;
        for r in reports {
            writeln!(f, "{}", r.csv_row())?;
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct FrameSummary<'a> {
    family: String,
    reports: &'a [FrameReport],
    /// Separation constant of each level.
    separations: Vec<f64>,
    /// Log-log slope of the lower bound against `k`.
    #[serde(skip_serializing_if = "Option::is_none")]
    lower_trend: Option<LineFit>,
}

struct BasisExperiment;

#[derive(Serialize)]
struct BasisRow {
    k: usize,
    #[serde(rename = "N_k")]
    n_k: usize,
    gram_condition: f64,
    rank_gap: f64,
    orthonormality_residual: f64,
}

impl Experiment for BasisExperiment {
    fn name(&self) -> &'static str {
        "basis"
    }

    fn about(&self) -> &'static str {
        "Build orthonormal bases and export their monomial coefficients"
    }

    fn knobs(&self) -> &'static [Knob] {
        &[Knob::Oversampling]
    }

    fn run(&self, cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<()> {
        let mut rows = Vec::new();
        for k in cfg.ks() {
            let b = basis(cfg, k, out)?;
            out.json(&level_path("basis", k, "json"), Some(k), &b.export())?;
            rows.push(BasisRow {
                k,
                n_k: b.dim(),
                gram_condition: b.gram_condition(),
                rank_gap: b.rank_gap(),
                orthonormality_residual: b.orthonormality_residual(),
            });
        }
        out.csv("basis.csv", None, &rows)
    }
}

struct KernelExperiment;

#[derive(Serialize)]
struct KernelRow {
    k: usize,
    #[serde(rename = "N_k")]
    n_k: usize,
    grid_points: usize,
    max_bergman: f64,
    min_bergman: f64,
    /// `max B_k / kⁿ` with `n` the intrinsic dimension.
    max_scaled: f64,
    min_scaled: f64,
}

impl Experiment for KernelExperiment {
    fn name(&self) -> &'static str {
        "kernel"
    }

    fn about(&self) -> &'static str {
        "Bergman function profiles on a dense grid"
    }

    fn knobs(&self) -> &'static [Knob] {
        &[Knob::Oversampling, Knob::Grid]
    }

    fn run(&self, cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<()> {
        let grid = dense_grid(cfg.domain, cfg.grid.expect("grid is materialized"))?;
        let n = cfg.domain.intrinsic_dim() as i32;
        let mut rows = Vec::new();
        for k in cfg.ks() {
            let b = basis(cfg, k, out)?;
            let eval = KernelEvaluator::new(&b);
            let values = out.time(format!("kernel k={k}"), || eval.bergman_many(&grid));
            out.raw(&level_path("kernel", k, "csv"), Some(k), |f| eval.write_profile(&grid, f))?;
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let scale = (k.max(1) as f64).powi(n);
            rows.push(KernelRow {
                k,
                n_k: b.dim(),
                grid_points: grid.len(),
                max_bergman: max,
                min_bergman: min,
                max_scaled: max / scale,
                min_scaled: min / scale,
            });
        }
        out.csv("kernel.csv", None, &rows)
    }
}

struct FrameExperiment;

impl Experiment for FrameExperiment {
    fn name(&self) -> &'static str {
        "frame"
    }

    fn about(&self) -> &'static str {
        "Frame bounds of normalized kernels at a point family"
    }

    fn knobs(&self) -> &'static [Knob] {
        &[Knob::Family, Knob::Oversampling]
    }

    fn run(&self, cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<()> {
        let (bases, levels) = levels(cfg, out)?;
        let mut reports = Vec::new();
        for (b, level) in bases.iter().zip(&levels) {
            reports.push(out.time(format!("frame k={}", level.k), || frame_bounds(b, level))?);
        }
        write_frame_table(out, "frame.csv", &reports)?;
        let summary = FrameSummary {
            family: cfg.family.as_ref().map(|f| f.to_string()).unwrap_or_default(),
            lower_trend: sweep_trend(&reports),
            reports: &reports,
            separations: levels.iter().map(|l| l.separation).collect(),
        };
        out.json("frame.json", None, &summary)
    }
}

struct InterpExperiment;

impl Experiment for InterpExperiment {
    fn name(&self) -> &'static str {
        "interp"
    }

    fn about(&self) -> &'static str {
        "Riesz bounds of normalized kernels at a point family"
    }

    fn knobs(&self) -> &'static [Knob] {
        &[Knob::Family, Knob::Oversampling]
    }

    fn run(&self, cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<()> {
        let (bases, levels) = levels(cfg, out)?;
        let mut reports = Vec::new();
        for (b, level) in bases.iter().zip(&levels) {
            reports.push(out.time(format!("riesz k={}", level.k), || riesz_bounds(b, level))?);
        }
        write_frame_table(out, "interp.csv", &reports)?;
        let summary = FrameSummary {
            family: cfg.family.as_ref().map(|f| f.to_string()).unwrap_or_default(),
            lower_trend: sweep_trend(&reports),
            reports: &reports,
            separations: levels.iter().map(|l| l.separation).collect(),
        };
        out.json("interp.json", None, &summary)
    }
}

struct DensityExperiment;

#[derive(Serialize)]
struct DensityRow {
    k: usize,
    window: usize,
    count: f64,
    equilibrium: f64,
    margin: f64,
    wasserstein: f64,
}

impl Experiment for DensityExperiment {
    fn name(&self) -> &'static str {
        "density"
    }

    fn about(&self) -> &'static str {
        "Window counts against the equilibrium measure and transport to the Bergman measure"
    }

    fn knobs(&self) -> &'static [Knob] {
        &[Knob::Family, Knob::Windows, Knob::DensityKind, Knob::Oversampling]
    }

    fn run(&self, cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<()> {
        let (bases, levels) = levels(cfg, out)?;
        let windows = cfg.windows.as_deref().expect("windows are materialized");
        let report = out.time("density", || match cfg.density_kind.expect("materialized") {
            DensityKind::Sampling => landau_margin(&levels, &bases, windows),
            DensityKind::Interpolation => interpolation_margin(&levels, &bases, windows),
        })?;
        let mut rows = Vec::new();
        for level in &report.levels {
            for (w, (count, margin)) in level.counts.iter().zip(&level.margins).enumerate() {
                rows.push(DensityRow {
                    k: level.k,
                    window: w,
                    count: *count,
                    equilibrium: report.eq_masses[w],
                    margin: *margin,
                    wasserstein: level.wasserstein,
                });
            }
        }
        out.csv("density.csv", None, &rows)?;
        out.json("density.json", None, &report)
    }
}

struct OffdiagExperiment;

#[derive(Serialize)]
struct OffdiagRow {
    k: usize,
    direct: f64,
    via_traces: f64,
    normalized: f64,
    relative_gap: f64,
}

impl Experiment for OffdiagExperiment {
    fn name(&self) -> &'static str {
        "offdiag"
    }

    fn about(&self) -> &'static str {
        "Off-diagonal kernel mass by double quadrature and by Toeplitz traces"
    }

    fn knobs(&self) -> &'static [Knob] {
        &[Knob::Oversampling]
    }

    fn run(&self, cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<()> {
        let measure = cfg.weighted_measure();
        let mut rows = Vec::new();
        for k in cfg.ks() {
            let b = basis(cfg, k, out)?;
            let r = out.time(format!("offdiag k={k}"), || {
                let rule = build_rule(&measure, offdiag_exactness(&b))?;
                offdiag_functional(&b, &rule)
            })?;
            rows.push(OffdiagRow {
                k,
                direct: r.direct,
                via_traces: r.via_traces,
                normalized: r.normalized,
                relative_gap: r.relative_gap(),
            });
        }
        out.csv("offdiag.csv", None, &rows)
    }
}

struct BernsteinExperiment;

#[derive(Serialize)]
struct BernsteinRow {
    k: usize,
    q: String,
    trials: usize,
    seed: u64,
    ratio: f64,
}

impl Experiment for BernsteinExperiment {
    fn name(&self) -> &'static str {
        "bernstein"
    }

    fn about(&self) -> &'static str {
        "Largest tangential Bernstein ratio over random polynomials"
    }

    fn knobs(&self) -> &'static [Knob] {
        &[Knob::Trials, Knob::Q, Knob::Oversampling]
    }

    fn run(&self, cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<()> {
        let q = cfg.q.expect("q is materialized");
        let trials = cfg.trials.expect("trials are materialized");
        let mut rows = Vec::new();
        for k in cfg.ks() {
            let b = basis(cfg, k, out)?;
            let seed = split_seed(cfg.seed, k);
            let ratio = out.time(format!("bernstein k={k}"), || bernstein_constant(&b, q, trials, seed))?;
            rows.push(BernsteinRow {
                k,
                q: q.to_string(),
                trials,
                seed,
                ratio,
            });
        }
        out.csv("bernstein.csv", None, &rows)
    }
}

struct ConvexFitExperiment;

#[derive(Serialize)]
struct ConvexRow {
    probe: usize,
    regime: String,
    k: usize,
    bergman: f64,
}

impl Experiment for ConvexFitExperiment {
    fn name(&self) -> &'static str {
        "convexfit"
    }

    fn about(&self) -> &'static str {
        "Log-log growth of the Bergman function at interior and boundary probes"
    }

    fn knobs(&self) -> &'static [Knob] {
        &[Knob::Probes]
    }

    fn run(&self, cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<()> {
        let probes = cfg.probes.as_deref().expect("probes are materialized");
        let ks = cfg.ks();
        let fit = out.time("convexfit", || convex_kernel_fit(&cfg.weighted_measure(), &ks, probes))?;
        for w in &fit.warnings {
            eprintln!("warning: {w}");
        }
        let mut rows = Vec::new();
        for (i, p) in fit.probes.iter().enumerate() {
            let regime = serde_json::to_value(p.regime)?
                .as_str()
                .map(str::to_string)
                .unwrap_or_default();
            for (k, v) in ks.iter().zip(&p.values) {
                rows.push(ConvexRow {
                    probe: i,
                    regime: regime.clone(),
                    k: *k,
                    bergman: *v,
                });
            }
        }
        out.csv("convexfit.csv", None, &rows)?;
        out.json("convexfit.json", None, &fit)
    }
}

struct NetExperiment;

#[derive(Serialize)]
struct NetRow {
    k: usize,
    eps: f64,
    seed: u64,
    n_points: usize,
    #[serde(rename = "N_k")]
    n_k: usize,
    separation: f64,
    carleson_max: usize,
}

impl Experiment for NetExperiment {
    fn name(&self) -> &'static str {
        "net"
    }

    fn about(&self) -> &'static str {
        "Farthest-point ε-nets at scale ε/k"
    }

    fn knobs(&self) -> &'static [Knob] {
        &[Knob::Eps]
    }

    fn run(&self, cfg: &ResolvedConfig, out: &mut ArtifactWriter) -> Result<()> {
        let eps = cfg.eps.expect("eps is materialized");
        let mut rows = Vec::new();
        for k in cfg.ks() {
            if k == 0 {
                return Err(Error::Config("ε-nets need k ≥ 1".into()));
            }
            let seed = split_seed(cfg.seed, k);
            let net = out.time(format!("net k={k}"), || epsilon_net(cfg.domain, k, eps, seed))?;
            let carleson = carleson_count(&net, None)?;
            out.raw(&level_path("net", k, "csv"), Some(k), |f| {
                let m = cfg.domain.ambient_dim();
                let header: Vec<String> = (1..=m).map(|c| format!("x{c}")).collect();
                writeln!(f, "{}", header.join(","))?;
                for x in net.points.iter() {
                    let coords: Vec<String> = x.iter().map(|c| format!("{c:.17e}")).collect();
                    writeln!(f, "{}", coords.join(","))?;
                }
                Ok(())
            })?;
            rows.push(NetRow {
                k,
                eps,
                seed,
                n_points: net.len(),
                n_k: cfg.domain.dimension(k),
                separation: net.separation,
                carleson_max: carleson.max_count,
            });
        }
        out.csv("net.csv", None, &rows)
    }
}
