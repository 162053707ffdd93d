//! Manifest data model, CSV ingestion and scene-disjoint splitting.
//!
//! Quality scores live on per-scene scales: records from different scenes
//! are never compared, so every invariant here is about keeping scenes
//! intact (no singleton scenes, splits by whole scene).

mod synthetic;

pub use synthetic::{generate_synthetic, FeatureStore, SyntheticConfig, SyntheticDataset};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("unrecognized manifest header: {0}")]
    BadHeader(String),
    #[error("duplicate image_id {0:?}")]
    DuplicateImageId(String),
    #[error("ids must be non-empty and free of commas, quotes and newlines: {0}")]
    BadId(String),
    #[error("scene {scene_id:?} has {count} record(s); at least 2 are required")]
    SmallScene { scene_id: String, count: usize },
    #[error("non-finite JOD value for image {0:?}")]
    NonFiniteJod(String),
    #[error("manifest contains no records")]
    EmptyManifest,
    #[error("manifest has {found} scene(s); at least {need} are required")]
    TooFewScenes { found: usize, need: usize },
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("no feature vector for image {0:?}")]
    MissingFeature(String),
    #[error("feature row for {image_id:?} has {found} values, expected {expected}")]
    FeatureDimMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

/// One annotated image. `jod_overall` is the ground-truth quality in JOD
/// units on the owning scene's scale; the two optional attributes mirror
/// the detail and exposure annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub scene_id: String,
    pub source: String,
    pub jod_overall: f64,
    pub jod_detail: Option<f64>,
    pub jod_exposure: Option<f64>,
}

/// A validated collection of records grouped by scene.
#[derive(Debug, Clone)]
pub struct Manifest {
    records: Vec<ImageRecord>,
    scenes: BTreeMap<String, Vec<usize>>,
}

impl Manifest {
    /// Validate and index a record list: unique CSV-safe ids, finite
    /// JODs, every scene with at least two records.
    pub fn from_records(records: Vec<ImageRecord>) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::EmptyManifest);
        }
        let id_ok = |id: &str| {
            !id.is_empty() && !id.contains([',', '"', '\n', '\r'])
        };
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for rec in &records {
            if !id_ok(&rec.image_id) || !id_ok(&rec.scene_id) {
                return Err(DataError::BadId(format!(
                    "{:?}/{:?}",
                    rec.image_id, rec.scene_id
                )));
            }
            if !seen.insert(rec.image_id.as_str()) {
                return Err(DataError::DuplicateImageId(rec.image_id.clone()));
            }
            let finite = rec.jod_overall.is_finite()
                && rec.jod_detail.is_none_or(f64::is_finite)
                && rec.jod_exposure.is_none_or(f64::is_finite);
            if !finite {
                return Err(DataError::NonFiniteJod(rec.image_id.clone()));
            }
        }
        let mut scenes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            scenes.entry(rec.scene_id.clone()).or_default().push(i);
        }
        for (scene_id, members) in &scenes {
            if members.len() < 2 {
                return Err(DataError::SmallScene {
                    scene_id: scene_id.clone(),
                    count: members.len(),
                });
            }
        }
        Ok(Self { records, scenes })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Scene ids in sorted order.
    pub fn scene_ids(&self) -> Vec<&str> {
        self.scenes.keys().map(String::as_str).collect()
    }

    pub fn n_scenes(&self) -> usize {
        self.scenes.len()
    }

    /// Record indices belonging to a scene.
    pub fn scene_records(&self, scene_id: &str) -> Option<&[usize]> {
        self.scenes.get(scene_id).map(Vec::as_slice)
    }

    /// Iterate scenes in sorted order with their record indices.
    pub fn scenes(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.scenes.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Restrict to the given scenes, keeping record order.
    pub fn subset(&self, scenes: &BTreeSet<String>) -> Result<Manifest, DataError> {
        let records = self
            .records
            .iter()
            .filter(|r| scenes.contains(&r.scene_id))
            .cloned()
            .collect();
        Manifest::from_records(records)
    }
}

fn parse_jod(field: &str, line: usize, col: &str) -> Result<f64, DataError> {
    field.trim().parse::<f64>().map_err(|_| DataError::MalformedRow {
        line,
        reason: format!("cannot parse {col} value {field:?} as a real number"),
    })
}

fn parse_opt_jod(field: Option<&str>, line: usize, col: &str) -> Result<Option<f64>, DataError> {
    match field {
        None => Ok(None),
        Some(s) if s.trim().is_empty() => Ok(None),
        Some(s) => parse_jod(s, line, col).map(Some),
    }
}

const HEADER_SHORT: [&str; 4] = ["image_id", "scene_id", "source", "jod_overall"];
const HEADER_FULL: [&str; 6] = [
    "image_id",
    "scene_id",
    "source",
    "jod_overall",
    "jod_detail",
    "jod_exposure",
];

/// Read a manifest CSV (`image_id,scene_id,source,jod_overall[,jod_detail,jod_exposure]`).
pub fn load_manifest(path: &Path) -> Result<Manifest, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_manifest_from(file)
}

/// Read a manifest CSV from any reader.
pub fn load_manifest_from<R: std::io::Read>(reader: R) -> Result<Manifest, DataError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = csv_reader.records();

    let header = match rows.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(DataError::MalformedRow {
                line: 1,
                reason: e.to_string(),
            })
        }
        None => return Err(DataError::EmptyManifest),
    };
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let has_attrs = if cols == HEADER_FULL {
        true
    } else if cols == HEADER_SHORT {
        false
    } else {
        return Err(DataError::BadHeader(cols.join(",")));
    };

    let mut records = Vec::new();
    for (i, row) in rows.enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| DataError::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let expected = if has_attrs { 6 } else { 4 };
        if row.len() != expected {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected {expected} fields, found {}", row.len()),
            });
        }
        let image_id = row[0].trim().to_string();
        let scene_id = row[1].trim().to_string();
        if image_id.is_empty() || scene_id.is_empty() {
            return Err(DataError::MalformedRow {
                line,
                reason: "image_id and scene_id must be non-empty".to_string(),
            });
        }
        records.push(ImageRecord {
            image_id,
            scene_id,
            source: row[2].trim().to_string(),
            jod_overall: parse_jod(&row[3], line, "jod_overall")?,
            jod_detail: parse_opt_jod(row.get(4), line, "jod_detail")?,
            jod_exposure: parse_opt_jod(row.get(5), line, "jod_exposure")?,
        });
    }
    Manifest::from_records(records)
}

// Quote a field only when the CSV grammar requires it; ids are already
// validated separator-free, so this only ever fires for `source`.
fn csv_field(field: &str) -> std::borrow::Cow<'_, str> {
    if field.contains([',', '"', '\n', '\r']) {
        std::borrow::Cow::Owned(format!("\"{}\"", field.replace('"', "\"\"")))
    } else {
        std::borrow::Cow::Borrowed(field)
    }
}

/// Render a manifest back to its CSV form. The attribute columns are
/// emitted only when some record carries them.
pub fn manifest_to_csv(manifest: &Manifest) -> String {
    let has_attrs = manifest
        .records
        .iter()
        .any(|r| r.jod_detail.is_some() || r.jod_exposure.is_some());
    let mut out = String::new();
    if has_attrs {
        out.push_str(&HEADER_FULL.join(","));
    } else {
        out.push_str(&HEADER_SHORT.join(","));
    }
    out.push('\n');
    for rec in &manifest.records {
        let _ = write!(
            out,
            "{},{},{},{}",
            rec.image_id,
            rec.scene_id,
            csv_field(&rec.source),
            rec.jod_overall
        );
        if has_attrs {
            match rec.jod_detail {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
            match rec.jod_exposure {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Write a manifest CSV to disk.
pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, manifest_to_csv(manifest)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A scene-disjoint train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_scenes: BTreeSet<String>,
    pub test_scenes: BTreeSet<String>,
    pub seed: u64,
}

/// Partition the manifest's scenes into train and test sides with no
/// scene overlap. The same seed always produces the same split.
pub fn scene_split(
    manifest: &Manifest,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitSpec, DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::BadFraction(test_fraction));
    }
    let n = manifest.n_scenes();
    if n < 2 {
        return Err(DataError::TooFewScenes { found: n, need: 2 });
    }
    let mut scenes: Vec<String> = manifest.scenes.keys().cloned().collect();
    let mut rng = rng::stream(seed, "scene-split");
    scenes.shuffle(&mut rng);
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let test_scenes: BTreeSet<String> = scenes[..n_test].iter().cloned().collect();
    let train_scenes: BTreeSet<String> = scenes[n_test..].iter().cloned().collect();
    Ok(SplitSpec {
        train_scenes,
        test_scenes,
        seed,
    })
}
