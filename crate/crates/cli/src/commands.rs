//! Offline subcommands: training, classification, datasets and scoring.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use gesturebot_core::dataset::{gen_dataset as generate, render_sequence, SequenceSpec, SyntheticSpec};
use gesturebot_core::model_store::{
    load_model, load_template_dir, parse_template_name, save_model, write_template_dir,
};
use gesturebot_core::pipeline::write_frames;
use gesturebot_core::raster::{decode_pbm, decode_pgm, encode_pbm, BinFrame};
use gesturebot_core::segmenter::segment;
use gesturebot_core::{EigenModel, Geometry, PipelineConfig, Recognizer};
use serde_json::json;

use crate::emit;

pub fn train(
    template_dir: &Path,
    model_dir: &Path,
    k_max: usize,
    tau: Option<f64>,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let templates = load_template_dir(template_dir)?;
    let model = EigenModel::<f64>::train_with_tau(&templates, k_max, tau)?;
    save_model(&model, model_dir)?;
    let tau = model.tau();
    emit(
        out,
        &json!({
            "model": model_dir.display().to_string(),
            "templates": templates.len(),
            "k": model.k(),
            "tau": tau.is_finite().then_some(tau),
        }),
    )
}

/// Reads an image and turns it into a template-sized silhouette. PBM files
/// already at template size are used as they are; anything else goes
/// through binarization (PGM only) and segmentation.
pub fn silhouette(cfg: &PipelineConfig, path: &Path, geometry: Geometry) -> anyhow::Result<BinFrame> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let bin = match bytes.get(..2) {
        Some(b"P1") | Some(b"P4") => decode_pbm(&bytes)?,
        _ => Recognizer::binarize(cfg, &decode_pgm(&bytes)?),
    };
    if Geometry::of(&bin) == geometry {
        return Ok(bin);
    }
    Ok(segment(&bin, cfg.orientation, geometry.width, geometry.height)?)
}

fn model_for(cfg: &PipelineConfig, model_dir: &Path) -> anyhow::Result<EigenModel<f64>> {
    let model = load_model::<f64>(model_dir)?;
    Ok(match cfg.tau_override {
        Some(t) => model.with_tau(t),
        None => model,
    })
}

pub fn classify(cfg: &PipelineConfig, model_dir: &Path, image: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let model = model_for(cfg, model_dir)?;
    let bin = silhouette(cfg, image, model.geometry())?;
    let c = model.classify(&bin, 0)?;
    let name = c.label.and_then(|l| model.name_of(l));
    emit(out, &json!({ "label": c.label, "name": name, "distance": c.distance }))
}

/// Scores every `<label>_<index>.pbm` probe. Probes that fail segmentation
/// count as wrong.
pub fn eval(cfg: &PipelineConfig, model_dir: &Path, probe_dir: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let model = model_for(cfg, model_dir)?;
    let mut probes = Vec::new();
    for entry in fs::read_dir(probe_dir).with_context(|| format!("reading {}", probe_dir.display()))? {
        let path = entry?.path();
        if let Some((label, index)) = path.file_name().and_then(|n| n.to_str()).and_then(parse_template_name) {
            probes.push((index, label, path));
        }
    }
    anyhow::ensure!(!probes.is_empty(), "no probes in {}", probe_dir.display());
    probes.sort();
    let (mut correct, mut unknown, mut failed) = (0usize, 0usize, 0usize);
    for (_, label, path) in &probes {
        let bin = match silhouette(cfg, path, model.geometry()) {
            Ok(b) => b,
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                failed += 1;
                continue;
            }
        };
        match model.classify(&bin, 0)?.label {
            Some(l) if l == *label => correct += 1,
            Some(_) => {}
            None => unknown += 1,
        }
    }
    if failed > 0 {
        log::warn!("{failed} probes could not be segmented");
    }
    let n = probes.len();
    emit(out, &json!({ "accuracy": correct as f64 / n as f64, "n": n, "unknown": unknown }))
}

/// Writes `templates/`, `probes/` and optionally a `frames/` clip.
pub fn gen_dataset(
    spec: &SyntheticSpec,
    dir: &Path,
    sequence: Option<(usize, (usize, usize))>,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let ds = generate(spec)?;
    write_template_dir(&dir.join("templates"), &ds.templates)?;
    let probe_dir = dir.join("probes");
    fs::create_dir_all(&probe_dir)?;
    for (i, p) in ds.probes.iter().enumerate() {
        fs::write(probe_dir.join(format!("{}_{}.pbm", p.label, i)), encode_pbm(&p.frame))?;
    }
    let mut summary = json!({
        "dir": dir.display().to_string(),
        "seed": spec.seed,
        "templates": ds.templates.len(),
        "probes": ds.probes.len(),
    });
    if let Some((label, (w, h))) = sequence {
        let mut seq = SequenceSpec::new(label, w, h);
        seq.seed = spec.seed;
        let frames = render_sequence(&seq)?;
        write_frames(&dir.join("frames"), &frames)?;
        summary["frames"] = json!(frames.len());
    }
    emit(out, &summary)
}
