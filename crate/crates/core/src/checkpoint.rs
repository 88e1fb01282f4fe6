//! Named-parameter checkpoints.
//!
//! Parameters go to a flat text file: per tensor a `name<TAB>shape` header
//! (shape as `d1xd2…`) followed by one line of row-major values with 17
//! significant digits. Vocabulary and model configuration go to a JSON
//! sidecar with the same stem.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{AttitudeModel, ModelConfig};
use crate::tensorgrad::{ParamStore, Tensor};

pub fn write_params(store: &ParamStore) -> String {
    let mut out = String::new();
    for (_, p) in store.iter() {
        let shape: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
        writeln!(out, "{}\t{}", p.name, shape.join("x")).expect("writing to a String");
        let values: Vec<String> = p.value.data().iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", values.join(" ")).expect("writing to a String");
    }
    out
}

pub fn parse_params(text: &str, origin: &str) -> Result<Vec<(String, Tensor)>> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    while let Some((i, header)) = lines.next() {
        let (name, shape) = header
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected name<TAB>shape"))?;
        let shape: Vec<usize> = shape
            .split('x')
            .map(|d| d.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(origin, i + 1, format!("bad shape: {e}")))?;
        let expected: usize = shape.iter().product();
        let data: Vec<f64> = if expected == 0 {
            Vec::new()
        } else {
            let (j, body) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, i + 1, format!("missing values for {name}")))?;
            body.split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(origin, j + 1, format!("bad value: {e}")))?
        };
        if data.len() != expected {
            return Err(Error::parse(
                origin,
                i + 1,
                format!("{name}: expected {expected} values, found {}", data.len()),
            ));
        }
        let tensor = Tensor::new(shape, data).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        out.push((name.to_string(), tensor));
    }
    Ok(out)
}

/// Overwrites parameters by name; every store parameter must be present
/// with an identical shape.
pub fn load_params_into(store: &mut ParamStore, params: Vec<(String, Tensor)>) -> Result<()> {
    if params.len() != store.len() {
        return Err(Error::shape(
            "checkpoint",
            format!("checkpoint holds {} tensors, model has {}", params.len(), store.len()),
        ));
    }
    for (name, tensor) in params {
        let id = store
            .id(&name)
            .ok_or_else(|| Error::shape("checkpoint", format!("model has no parameter {name}")))?;
        let p = store.get_mut(id);
        if p.value.shape() != tensor.shape() {
            return Err(Error::shape(
                "checkpoint",
                format!("{name}: checkpoint shape {:?}, model shape {:?}", tensor.shape(), p.value.shape()),
            ));
        }
        p.value = tensor;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    vocab: Vocabulary,
}

fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` (parameters) and its `.json` sidecar.
pub fn save_model(model: &AttitudeModel, path: &Path) -> Result<()> {
    fs::write(path, write_params(&model.store)).map_err(|e| Error::io(path, e))?;
    let meta = Meta {
        config: model.cfg.clone(),
        vocab: model.vocab.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Data(format!("checkpoint meta: {e}")))?;
    let mp = meta_path(path);
    fs::write(&mp, json + "\n").map_err(|e| Error::io(&mp, e))
}

pub fn read_meta(path: &Path) -> Result<(ModelConfig, Vocabulary)> {
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let mut meta: Meta = serde_json::from_str(&text).map_err(|e| Error::parse(mp.display(), e.line(), e.to_string()))?;
    meta.vocab.reindex();
    Ok((meta.config, meta.vocab))
}

/// Rebuilds a model from `cfg` (or the stored configuration) and loads the
/// checkpointed parameters; shape disagreements are errors.
pub fn load_model(path: &Path, cfg: Option<&ModelConfig>) -> Result<AttitudeModel> {
    let (stored, vocab) = read_meta(path)?;
    let cfg = cfg.cloned().unwrap_or(stored);
    let mut model = AttitudeModel::new(&cfg, vocab, 0)?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let params = parse_params(&text, &path.display().to_string())?;
    load_params_into(&mut model.store, params)?;
    Ok(model)
}
