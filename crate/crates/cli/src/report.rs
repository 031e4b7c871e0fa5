//! Merge of an output directory into a single `report.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use bergsample::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
const MANIFEST_SUFFIX: &str = ".manifest.json";

/// Collects every top-level JSON report and every manifest (without its
/// timings) keyed by file stem. The output depends only on the inputs, so a
/// second run reproduces the file byte for byte.
pub fn merge(dir: &Path) -> Result<PathBuf> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", dir.display())));
    }
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".json") && n != REPORT_FILE)
        .collect();
    names.sort();

    let mut reports = BTreeMap::new();
    let mut manifests = BTreeMap::new();
    for name in names {
        let text = fs::read_to_string(dir.join(&name))?;
        let mut value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{name}: {e}")))?;
        if let Some(stem) = name.strip_suffix(MANIFEST_SUFFIX) {
            if let Some(obj) = value.as_object_mut() {
                obj.remove("timings");
            }
            manifests.insert(stem.to_string(), value);
        } else {
            reports.insert(name.trim_end_matches(".json").to_string(), value);
        }
    }
    if reports.is_empty() && manifests.is_empty() {
        return Err(Error::Config(format!("no JSON reports in {}", dir.display())));
    }

    let merged = serde_json::json!({
        "manifests": manifests,
        "reports": reports,
    });
    let path = dir.join(REPORT_FILE);
    let mut text = serde_json::to_string_pretty(&merged)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}
