//! On-disk model and template directories.
//!
//! A model directory holds the training templates as `<label>_<index>.pbm`
//! and a `manifest.json`:
//!
//! ```json
//! {"geometry": {"width": 60, "height": 80}, "k": 9, "tau": 4.2, "labels": {"0": "fist"}}
//! ```
//!
//! `tau` is `null` for an unbounded radius. The eigen decomposition is
//! recomputed on load; the templates are the source of truth.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigengesture::{EigenError, EigenModel, Geometry, GestureTemplate};
use crate::raster::{decode_pbm, encode_pbm, RasterError};
use crate::scalar::Scalar;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: RasterError },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("no templates found in {0}")]
    NoTemplates(PathBuf),
    #[error(transparent)]
    Model(#[from] EigenError),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub geometry: Geometry,
    pub k: usize,
    pub tau: Option<f64>,
    pub labels: BTreeMap<String, String>,
}

/// The part of a manifest a bare template directory needs.
#[derive(Debug, Deserialize)]
struct LabelNames {
    #[serde(default)]
    labels: BTreeMap<String, String>,
}

/// Parses `<label>_<index>.pbm`.
pub fn parse_template_name(name: &str) -> Option<(u8, u64)> {
    let stem = name.strip_suffix(".pbm")?;
    let (label, index) = stem.split_once('_')?;
    Some((label.parse().ok()?, index.parse().ok()?))
}

/// Reads every `<label>_<index>.pbm` in `dir`, ordered by index then label.
/// Names come from a `manifest.json` in the same directory when present.
pub fn load_template_dir(dir: &Path) -> Result<Vec<GestureTemplate>, StoreError> {
    let names = match fs::read_to_string(dir.join(MANIFEST)) {
        Ok(text) => {
            let m: LabelNames = serde_json::from_str(&text).map_err(|e| StoreError::Manifest(e.to_string()))?;
            m.labels
        }
        Err(_) => BTreeMap::new(),
    };
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        let Some((label, index)) = path.file_name().and_then(|n| n.to_str()).and_then(parse_template_name) else {
            continue;
        };
        found.push((index, label, path));
    }
    if found.is_empty() {
        return Err(StoreError::NoTemplates(dir.to_path_buf()));
    }
    found.sort();
    found
        .into_iter()
        .map(|(_, label, path)| {
            let bytes = fs::read(&path).map_err(io(&path))?;
            let image = decode_pbm(&bytes).map_err(|source| StoreError::Image { path: path.clone(), source })?;
            let name = names.get(&label.to_string()).cloned().unwrap_or_else(|| format!("gesture-{label}"));
            Ok(GestureTemplate::new(label, image, name)?)
        })
        .collect()
}

/// Writes templates as `<label>_<index>.pbm` plus a manifest holding only
/// their names.
pub fn write_template_dir(dir: &Path, templates: &[GestureTemplate]) -> Result<(), StoreError> {
    write_images(dir, templates)?;
    let labels: BTreeMap<String, String> = templates.iter().map(|t| (t.label.to_string(), t.name.clone())).collect();
    write_json(&dir.join(MANIFEST), &serde_json::json!({ "labels": labels }))
}

fn write_images(dir: &Path, templates: &[GestureTemplate]) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (i, t) in templates.iter().enumerate() {
        let path = dir.join(format!("{}_{}.pbm", t.label, i));
        fs::write(&path, encode_pbm(&t.image)).map_err(io(&path))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), StoreError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| StoreError::Manifest(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io(path))
}

pub fn save_model<T: Scalar>(model: &EigenModel<T>, dir: &Path) -> Result<(), StoreError> {
    let tau = model.tau().as_f64();
    let templates = model.templates();
    write_images(dir, templates)?;
    let manifest = Manifest {
        geometry: model.geometry(),
        k: model.k(),
        tau: tau.is_finite().then_some(tau),
        labels: templates.iter().map(|t| (t.label.to_string(), t.name.clone())).collect(),
    };
    write_json(&dir.join(MANIFEST), &manifest)
}

pub fn load_model<T: Scalar>(dir: &Path) -> Result<EigenModel<T>, StoreError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| StoreError::Manifest(e.to_string()))?;
    let templates = load_template_dir(dir)?;
    let model =
        EigenModel::train_with_tau(&templates, manifest.k, Some(manifest.tau.map(T::of).unwrap_or_else(T::infinity)))?;
    if model.geometry() != manifest.geometry {
        return Err(StoreError::Manifest("geometry does not match the templates".into()));
    }
    if model.k() != manifest.k {
        return Err(StoreError::Manifest(format!("manifest k = {}, templates give {}", manifest.k, model.k())));
    }
    Ok(model)
}
