//! Point families read from CSV, one point per row in ambient coordinates.

use std::path::{Path, PathBuf};

use bergsample::family::{FamilyBuilder, FamilyRegistry, FamilySpec, Params};
use bergsample::{Error, PointFamilyLevel, PointSet, Result, WeightedMeasure};

/// Largest distance a file point may move when projected onto the domain.
pub const MAX_PROJECTION: f64 = 1e-6;

pub struct FileFamily {
    path: PathBuf,
    points: Vec<Vec<f64>>,
}

impl FileFamily {
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Config(format!("family file {}: {e}", path.display())))?;
        let mut points = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Config(format!("family file {}: {e}", path.display())))?;
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(p) => points.push(p),
                // a non-numeric first row is a header
                Err(_) if i == 0 => continue,
                Err(e) => {
                    return Err(Error::Config(format!(
                        "family file {} row {}: {e}",
                        path.display(),
                        i + 1
                    )))
                }
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            points,
        })
    }
}

impl FamilyBuilder for FileFamily {
    fn name(&self) -> &'static str {
        "file"
    }

    /// The same points at every level.
    fn build(&self, measure: &WeightedMeasure, k: usize, _n_k: usize) -> Result<PointFamilyLevel> {
        let domain = measure.domain;
        if let Some(bad) = self.points.iter().position(|p| p.len() != domain.ambient_dim()) {
            return Err(Error::Config(format!(
                "family file {} row {}: expected {} coordinates for {domain}",
                self.path.display(),
                bad + 1,
                domain.ambient_dim()
            )));
        }
        let (points, shift) = PointSet::project_from(domain, &self.points, MAX_PROJECTION)
            .map_err(|e| Error::Config(format!("family file {}: {e}", self.path.display())))?;
        eprintln!(
            "family file {}: {} points, largest projection distance {shift:.3e}",
            self.path.display(),
            points.len()
        );
        Ok(PointFamilyLevel::new(k, points))
    }
}

fn factory(spec: &FamilySpec) -> Result<Box<dyn FamilyBuilder>> {
    let mut p = Params::new(spec);
    let path = p
        .take("path")
        .ok_or_else(|| Error::Config("file family needs `path`".into()))?;
    p.finish(&["path"])?;
    Ok(Box::new(FileFamily::load(Path::new(&path))?))
}

/// The library families plus `file`.
pub fn registry() -> FamilyRegistry {
    let mut r = FamilyRegistry::default();
    r.register("file", factory);
    r
}
