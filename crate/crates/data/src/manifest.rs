//! On-disk dataset layout.
//!
//! A dataset is a directory described by a JSON manifest:
//!
//! ```json
//! {
//!   "name": "synthetic-0",
//!   "features": { "path": "features.f32", "encoding": "f32le", "n_samples": 310, "dim": 32 },
//!   "ids": "ids.txt",
//!   "ground_truth": "ground_truth.json",
//!   "probes": ["c000_probe", "c001_probe"],
//!   "timestamps": "timestamps.txt",
//!   "thumbnails": "thumbnails.txt"
//! }
//! ```
//!
//! * `features`: raw little-endian `f32`, row-major, `n_samples × dim`, no header.
//! * `ids`: one id per line, in feature-row order.
//! * `ground_truth`: JSON object mapping probe id to a list of relevant gallery ids.
//! * `probes`: ids of the query samples. They are split out of the gallery.
//! * `timestamps` (optional): one number per line, in feature-row order.
//! * `thumbnails` (optional): one path per line, relative to the manifest.
//!
//! Relative paths are resolved against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::features::{Dataset, FeatureSet, GroundTruth};

pub const ENCODING_F32LE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFile {
    pub path: PathBuf,
    pub encoding: String,
    pub n_samples: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub features: FeatureFile,
    pub ids: PathBuf,
    pub ground_truth: PathBuf,
    pub probes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnails: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(DataError::io(path))?;
        serde_json::from_str(&text).map_err(DataError::json(path))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(DataError::io(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

/// Decodes raw little-endian `f32` values.
pub fn decode_f32le(bytes: &[u8]) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(DataError::Shape(format!(
            "feature file length {} is not a multiple of 4",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn encode_f32le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Loads and cross-validates the dataset described by the manifest at `path`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));

    if manifest.features.encoding != ENCODING_F32LE {
        return Err(DataError::Encoding(manifest.features.encoding.clone()));
    }
    let feature_path = resolve(base, &manifest.features.path);
    let bytes = fs::read(&feature_path).map_err(DataError::io(&feature_path))?;
    let vectors = decode_f32le(&bytes)?;
    let (n, dim) = (manifest.features.n_samples, manifest.features.dim);
    if vectors.len() != n * dim {
        return Err(DataError::Shape(format!(
            "manifest declares {n} × {dim} but {} holds {} values",
            feature_path.display(),
            vectors.len()
        )));
    }
    let ids = read_lines(&resolve(base, &manifest.ids))?;
    if ids.len() != n {
        return Err(DataError::Shape(format!(
            "manifest declares {n} samples but ids file has {}",
            ids.len()
        )));
    }
    let mut all = FeatureSet::new(ids, dim, vectors)?;
    if let Some(ts) = &manifest.timestamps {
        let ts_path = resolve(base, ts);
        let values = read_lines(&ts_path)?
            .iter()
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| DataError::Shape(format!("{}: bad timestamp `{l}`: {e}", ts_path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        all = all.with_timestamps(values)?;
    }
    if let Some(th) = &manifest.thumbnails {
        let paths = read_lines(&resolve(base, th))?
            .into_iter()
            .map(|p| resolve(base, Path::new(&p)).to_string_lossy().into_owned())
            .collect();
        all = all.with_thumbnails(paths)?;
    }

    let mut probe_rows = Vec::with_capacity(manifest.probes.len());
    for id in &manifest.probes {
        let row = all.index_of(id).ok_or_else(|| DataError::UnknownId(id.clone()))?;
        probe_rows.push(row);
    }
    let gallery_rows: Vec<usize> = (0..all.len()).filter(|i| !probe_rows.contains(i)).collect();
    let gallery = all.select(&gallery_rows);
    let probes = all.select(&probe_rows);

    let gt_path = resolve(base, &manifest.ground_truth);
    let gt_text = fs::read_to_string(&gt_path).map_err(DataError::io(&gt_path))?;
    let ground_truth: GroundTruth = serde_json::from_str(&gt_text).map_err(DataError::json(&gt_path))?;
    ground_truth.validate(&probes, &gallery)?;

    log::debug!(
        "loaded `{}`: {} gallery samples, {} probes, dim {}",
        manifest.name,
        gallery.len(),
        probes.len(),
        dim
    );
    Ok(Dataset {
        name: manifest.name,
        gallery,
        probes,
        ground_truth,
    })
}

/// Writes `dataset` into `dir` (which must exist) and returns the manifest path.
/// Gallery rows come first, then probes.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    if !dir.is_dir() {
        return Err(DataError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        });
    }
    let (g, p) = (&dataset.gallery, &dataset.probes);
    if g.dim() != p.dim() {
        return Err(DataError::Shape("gallery and probe dimensions differ".into()));
    }
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(DataError::io(path))
    };

    let mut raw = encode_f32le(g.raw());
    raw.extend(encode_f32le(p.raw()));
    write("features.f32", &raw)?;

    let ids: Vec<&str> = g.ids().iter().chain(p.ids()).map(String::as_str).collect();
    write("ids.txt", (ids.join("\n") + "\n").as_bytes())?;

    let gt =
        serde_json::to_string_pretty(&dataset.ground_truth).map_err(DataError::json(dir.join("ground_truth.json")))?;
    write("ground_truth.json", gt.as_bytes())?;

    let timestamps = match (g.timestamps(), p.timestamps()) {
        (Some(gt), Some(pt)) => {
            let lines: Vec<String> = gt.iter().chain(pt).map(|t| format!("{t:?}")).collect();
            write("timestamps.txt", (lines.join("\n") + "\n").as_bytes())?;
            Some(PathBuf::from("timestamps.txt"))
        }
        _ => None,
    };
    let thumbnails = match (g.thumbnails(), p.thumbnails()) {
        (Some(gt), Some(pt)) => {
            let lines: Vec<&str> = gt.iter().chain(pt).map(String::as_str).collect();
            write("thumbnails.txt", (lines.join("\n") + "\n").as_bytes())?;
            Some(PathBuf::from("thumbnails.txt"))
        }
        _ => None,
    };

    let manifest = DatasetManifest {
        name: dataset.name.clone(),
        features: FeatureFile {
            path: "features.f32".into(),
            encoding: ENCODING_F32LE.into(),
            n_samples: g.len() + p.len(),
            dim: g.dim(),
        },
        ids: "ids.txt".into(),
        ground_truth: "ground_truth.json".into(),
        probes: p.ids().to_vec(),
        timestamps,
        thumbnails,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(DataError::json(&path))?;
    fs::write(&path, text + "\n").map_err(DataError::io(&path))?;
    Ok(path)
}
