use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One patient's imaging inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub patient_id: String,
    pub ct_path: PathBuf,
    pub pet_path: PathBuf,
    pub probmap_paths: Vec<PathBuf>,
    pub truth_mask_path: Option<PathBuf>,
    pub center_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortManifest {
    pub entries: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
struct Row {
    patient_id: String,
    ct_path: String,
    pet_path: String,
    probmap_paths: String,
    #[serde(default)]
    truth_mask_path: String,
    center_id: String,
}

impl CohortManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut ids = HashSet::new();
        for e in &entries {
            if !ids.insert(e.patient_id.as_str()) {
                return Err(Error::Config(format!("duplicate patient id {}", e.patient_id)));
            }
        }
        let counts: BTreeSet<usize> = entries.iter().map(|e| e.probmap_paths.len()).collect();
        if counts.len() > 1 {
            return Err(Error::Config(format!(
                "patients list different numbers of probability maps: {counts:?}"
            )));
        }
        Ok(Self { entries })
    }

    /// CSV header: patient_id, ct_path, pet_path, probmap_paths (separated
    /// by `;`), truth_mask_path (may be empty), center_id. Relative paths
    /// are taken from the manifest's directory.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |s: &str| {
            let p = PathBuf::from(s.trim());
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        let mut rdr = csv::Reader::from_path(path)?;
        let mut entries = Vec::new();
        for row in rdr.deserialize() {
            let r: Row = row?;
            let probmap_paths: Vec<PathBuf> = r
                .probmap_paths
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(resolve)
                .collect();
            let truth = r.truth_mask_path.trim();
            entries.push(ManifestEntry {
                patient_id: r.patient_id.trim().to_owned(),
                ct_path: resolve(&r.ct_path),
                pet_path: resolve(&r.pet_path),
                probmap_paths,
                truth_mask_path: (!truth.is_empty()).then(|| resolve(truth)),
                center_id: r.center_id.trim().to_owned(),
            });
        }
        Self::new(entries).map_err(|e| e.context(format!("manifest {}", path.display())))
    }

    /// Writes paths relative to `base` where possible.
    pub fn write_csv(&self, path: &Path, base: &Path) -> Result<()> {
        let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "patient_id",
            "ct_path",
            "pet_path",
            "probmap_paths",
            "truth_mask_path",
            "center_id",
        ])?;
        for e in &self.entries {
            let maps: Vec<String> = e.probmap_paths.iter().map(|p| rel(p)).collect();
            w.write_record([
                e.patient_id.clone(),
                rel(&e.ct_path),
                rel(&e.pet_path),
                maps.join(";"),
                e.truth_mask_path.as_deref().map(rel).unwrap_or_default(),
                e.center_id.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Paths referenced by the manifest that do not exist.
    pub fn missing_files(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.entries {
            let mut paths = vec![&e.ct_path, &e.pet_path];
            paths.extend(&e.probmap_paths);
            paths.extend(&e.truth_mask_path);
            for p in paths {
                if !p.is_file() {
                    out.push(format!("patient {}: missing file {}", e.patient_id, p.display()));
                }
            }
            if e.probmap_paths.is_empty() {
                out.push(format!("patient {}: no probability maps", e.patient_id));
            }
        }
        out
    }
}

/// One `(train ids, test ids)` split per center, centers in sorted order.
pub fn leave_one_center_out_splits(manifest: &CohortManifest) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let mut by_center: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for e in &manifest.entries {
        by_center.entry(&e.center_id).or_default().push(e.patient_id.clone());
    }
    if by_center.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "leave-one-center-out needs at least 2 centers, found {}",
            by_center.len()
        )));
    }
    Ok(by_center
        .keys()
        .map(|c| {
            let (test, train): (Vec<&ManifestEntry>, Vec<&ManifestEntry>) =
                manifest.entries.iter().partition(|e| e.center_id == *c);
            (
                train.into_iter().map(|e| e.patient_id.clone()).collect(),
                test.into_iter().map(|e| e.patient_id.clone()).collect(),
            )
        })
        .collect())
}
