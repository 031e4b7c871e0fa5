//! Experiment configuration: strict JSON ingestion, flag overrides and the
//! fully resolved form echoed into every manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use bergsample::diagnostics::{default_windows, ConvexProbe, DensityKind, LqNorm, Window};
use bergsample::family::FamilySpec;
use bergsample::{BaseMeasure, Domain, Error, Result, WeightFunction, WeightedMeasure};

use crate::args::RunArgs;

/// Default sweeps: one-dimensional domains, then everything else.
pub const DEFAULT_K_RANGE_1D: KRange = KRange { min: 8, max: 32, step: 1 };
pub const DEFAULT_K_RANGE: KRange = KRange { min: 4, max: 16, step: 1 };
pub const DEFAULT_TRIALS: usize = 32;
pub const DEFAULT_NET_EPS: f64 = 0.5;

/// Families whose builders draw random numbers and take a `seed` parameter.
const SEEDED_FAMILIES: [&str; 2] = ["epsilon_net", "random"];

/// Inclusive degree sweep `min, min + step, …, ≤ max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KRange {
    pub min: usize,
    pub max: usize,
    pub step: usize,
}

impl KRange {
    pub fn new(min: usize, max: usize, step: usize) -> Result<Self> {
        if step == 0 || min > max {
            return Err(Error::Config(format!(
                "k_range [{min}, {max}, {step}] is empty (need min ≤ max and step ≥ 1)"
            )));
        }
        Ok(Self { min, max, step })
    }

    pub fn values(&self) -> Vec<usize> {
        (self.min..=self.max).step_by(self.step).collect()
    }
}

/// `a..b` or `a..b:step`, both ends included, or a single degree `a`.
impl FromStr for KRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse k range `{s}` (expected a..b or a..b:step)"));
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let (span, step) = match s.split_once(':') {
            Some((span, step)) => (span, num(step)?),
            None => (s, 1),
        };
        match span.split_once("..") {
            Some((a, b)) => KRange::new(num(a)?, num(b.trim_start_matches('='))?, step),
            None => {
                let k = num(span)?;
                KRange::new(k, k, step)
            }
        }
    }
}

impl Serialize for KRange {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.min, self.max, self.step].serialize(s)
    }
}

impl<'de> Deserialize<'de> for KRange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        let (min, max, step) = match v[..] {
            [min, max] => (min, max, 1),
            [min, max, step] => (min, max, step),
            _ => {
                return Err(de::Error::custom(format!(
                    "k_range must be [k_min, k_max] or [k_min, k_max, step], got {} entries",
                    v.len()
                )))
            }
        };
        KRange::new(min, max, step).map_err(de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<BaseMeasure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<WeightFunction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize: Option<bool>,
}

/// String-valued parameter map that rejects repeated keys.
#[derive(Debug, Clone, Default, PartialEq)]
struct StrictParams(BTreeMap<String, String>);

impl<'de> Deserialize<'de> for StrictParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Scalar {
            Str(String),
            Int(u64),
            Float(f64),
        }

        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = StrictParams;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of family parameters")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<StrictParams, A::Error> {
                let mut out = BTreeMap::new();
                while let Some(key) = map.next_key::<String>()? {
                    let value = match map.next_value::<Scalar>()? {
                        Scalar::Str(s) => s,
                        Scalar::Int(i) => i.to_string(),
                        Scalar::Float(x) => x.to_string(),
                    };
                    if out.insert(key.clone(), value).is_some() {
                        return Err(de::Error::custom(format!("duplicate family parameter `{key}`")));
                    }
                }
                Ok(StrictParams(out))
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyObject {
    kind: String,
    #[serde(default)]
    params: StrictParams,
    seed: Option<u64>,
}

/// A family given either as `"name:key=value,..."` or as
/// `{"kind": ..., "params": {...}, "seed": ...}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyConfig(pub FamilySpec);

impl<'de> Deserialize<'de> for FamilyConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = FamilyConfig;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a family string `name:key=value,...` or an object with `kind` and `params`")
            }

            fn visit_str<E: de::Error>(self, s: &str) -> std::result::Result<FamilyConfig, E> {
                FamilySpec::parse(s).map(FamilyConfig).map_err(E::custom)
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> std::result::Result<FamilyConfig, A::Error> {
                let obj = FamilyObject::deserialize(de::value::MapAccessDeserializer::new(map))?;
                let mut params = obj.params.0;
                if let Some(seed) = obj.seed {
                    if params.insert("seed".into(), seed.to_string()).is_some() {
                        return Err(de::Error::custom("family seed given both as `seed` and in `params`"));
                    }
                }
                Ok(FamilyConfig(FamilySpec { kind: obj.kind, params }))
            }
        }
        d.deserialize_any(V)
    }
}

/// The configuration file as written by the user. Every field is optional
/// so that flags can supply or override it.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<String>,
    pub domain: Option<Domain>,
    pub measure: Option<MeasureConfig>,
    pub k_range: Option<KRange>,
    pub seed: Option<u64>,
    pub family: Option<FamilyConfig>,
    pub windows: Option<Vec<Window>>,
    pub trials: Option<usize>,
    pub q: Option<LqNorm>,
    pub probes: Option<Vec<ConvexProbe>>,
    pub oversampling: Option<f64>,
    pub eps: Option<f64>,
    pub density_kind: Option<DensityKind>,
    pub grid: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Experiment-specific settings; each experiment declares the ones it reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Knob {
    Family,
    Windows,
    Trials,
    Q,
    Probes,
    Oversampling,
    Eps,
    DensityKind,
    Grid,
}

impl Knob {
    pub fn key(self) -> &'static str {
        match self {
            Knob::Family => "family",
            Knob::Windows => "windows",
            Knob::Trials => "trials",
            Knob::Q => "q",
            Knob::Probes => "probes",
            Knob::Oversampling => "oversampling",
            Knob::Eps => "eps",
            Knob::DensityKind => "density_kind",
            Knob::Grid => "grid",
        }
    }
}

/// Everything an experiment needs, with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub command: String,
    pub domain: Domain,
    pub measure: MeasureConfig,
    pub k_range: KRange,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "family_string")]
    pub family: Option<FamilySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<Window>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<LqNorm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<ConvexProbe>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oversampling: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_kind: Option<DensityKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

fn family_string<S: Serializer>(f: &Option<FamilySpec>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match f {
        Some(spec) => s.serialize_str(&spec.to_string()),
        None => s.serialize_none(),
    }
}

impl ResolvedConfig {
    pub fn weighted_measure(&self) -> WeightedMeasure {
        WeightedMeasure {
            domain: self.domain,
            base: self.measure.base.unwrap_or(BaseMeasure::default_for(self.domain)),
            phi: self.measure.phi.clone().unwrap_or_default(),
            normalize: self.measure.normalize.unwrap_or(false),
        }
    }

    pub fn ks(&self) -> Vec<usize> {
        self.k_range.values()
    }

    /// SHA-256 of the canonical JSON form; the output directory is excluded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("resolved config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn default_family(command: &str, domain: Domain) -> FamilySpec {
    let body = matches!(domain, Domain::Disk | Domain::Ball3);
    let s = match (command, body) {
        ("interp", false) => "equispaced:n=floor(0.8*N)",
        ("interp", true) => "random:n=floor(N/2)",
        (_, false) => "equispaced:n=ceil(1.2*N)",
        (_, true) => "epsilon_net:eps=0.5",
    };
    FamilySpec::parse(s).expect("default family specs parse")
}

fn default_grid(domain: Domain) -> usize {
    match domain.intrinsic_dim() {
        1 => 512,
        2 => 64,
        _ => 20,
    }
}

/// Merges the file (if any) with flags, rejects settings the experiment
/// does not read, and materializes defaults.
pub fn resolve(command: &str, knobs: &[Knob], args: &RunArgs) -> Result<ResolvedConfig> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(c) = &file.command {
        if c != command {
            return Err(Error::Config(format!("config is for `{c}`, not `{command}`")));
        }
    }

    let set = [
        (Knob::Family, file.family.is_some() || args.family.is_some()),
        (Knob::Windows, file.windows.is_some()),
        (Knob::Trials, file.trials.is_some()),
        (Knob::Q, file.q.is_some()),
        (Knob::Probes, file.probes.is_some()),
        (Knob::Oversampling, file.oversampling.is_some()),
        (Knob::Eps, file.eps.is_some()),
        (Knob::DensityKind, file.density_kind.is_some()),
        (Knob::Grid, file.grid.is_some()),
    ];
    if let Some((knob, _)) = set.iter().find(|(k, on)| *on && !knobs.contains(k)) {
        let mut accepted = vec!["domain", "measure", "k_range", "seed", "output_dir"];
        accepted.extend(knobs.iter().map(|k| k.key()));
        return Err(Error::Config(format!(
            "`{}` is not used by `{command}` (accepted keys: {})",
            knob.key(),
            accepted.join(", ")
        )));
    }

    let domain = match &args.domain {
        Some(d) => parse_domain(d)?,
        None => file
            .domain
            .ok_or_else(|| Error::Config("`domain` is required (config key or --domain)".into()))?,
    };
    let given = file.measure.unwrap_or_default();
    let measure = MeasureConfig {
        base: Some(given.base.unwrap_or(BaseMeasure::default_for(domain))),
        phi: Some(given.phi.unwrap_or_default()),
        normalize: Some(given.normalize.unwrap_or(false)),
    };
    let k_range = match &args.k {
        Some(s) => s.parse()?,
        None => file.k_range.unwrap_or(if domain.intrinsic_dim() == 1 {
            DEFAULT_K_RANGE_1D
        } else {
            DEFAULT_K_RANGE
        }),
    };
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let output_dir = args
        .output_dir
        .clone()
        .or(file.output_dir)
        .unwrap_or_else(|| PathBuf::from("out"));

    let on = |k: Knob| knobs.contains(&k);
    let family = if on(Knob::Family) {
        let mut spec = match &args.family {
            Some(s) => FamilySpec::parse(s)?,
            None => file.family.map(|f| f.0).unwrap_or_else(|| default_family(command, domain)),
        };
        if SEEDED_FAMILIES.contains(&spec.kind.as_str()) {
            spec.params.entry("seed".into()).or_insert_with(|| seed.to_string());
        }
        Some(spec)
    } else {
        None
    };
    let windows = if on(Knob::Windows) {
        let w = file.windows.unwrap_or_else(|| default_windows(domain));
        for win in &w {
            win.validate(domain)?;
        }
        Some(w)
    } else {
        None
    };
    let oversampling = on(Knob::Oversampling).then(|| file.oversampling.unwrap_or(1.0));
    if let Some(o) = oversampling {
        if !(o.is_finite() && o > 0.0) {
            return Err(Error::Config(format!("oversampling = {o} must be positive")));
        }
    }
    let eps = on(Knob::Eps).then(|| file.eps.unwrap_or(DEFAULT_NET_EPS));
    if let Some(e) = eps {
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::Config(format!("eps = {e} must be positive")));
        }
    }
    let grid = on(Knob::Grid).then(|| file.grid.unwrap_or_else(|| default_grid(domain)));
    if grid.is_some_and(|g| g < 2) {
        return Err(Error::Config("grid resolution must be at least 2".into()));
    }
    let trials = on(Knob::Trials).then(|| file.trials.unwrap_or(DEFAULT_TRIALS));

    let cfg = ResolvedConfig {
        command: command.to_string(),
        domain,
        measure,
        k_range,
        seed,
        family,
        windows,
        trials,
        q: on(Knob::Q).then(|| file.q.unwrap_or(LqNorm::L2)),
        probes: on(Knob::Probes).then(|| {
            file.probes
                .unwrap_or_else(|| bergsample::diagnostics::estimates::default_probes(domain))
        }),
        oversampling,
        eps,
        density_kind: on(Knob::DensityKind).then(|| file.density_kind.unwrap_or(DensityKind::Sampling)),
        grid,
        output_dir,
    };
    cfg.weighted_measure().validate()?;
    Ok(cfg)
}

pub fn parse_domain(s: &str) -> Result<Domain> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|e| Error::Config(format!("--domain: {e}")))
}
