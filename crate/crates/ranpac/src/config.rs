//! JSON run configurations with `a.b.c=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use ranpac_core::protocols::ExperimentConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{AppError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadPrecision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputOptions {
    /// Write the final ridge head as `head.bin` + `head.json`.
    pub export_head: bool,
    pub head_precision: HeadPrecision,
    /// Write the projection matrix `W` as `projection.bin` (debugging only).
    pub dump_projection: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Store directory; relative paths resolve against the config file.
    pub dataset: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub outputs: OutputOptions,
}

/// Splits `key=value`; the value is parsed as JSON when possible and kept
/// as a string otherwise.
pub fn parse_override(spec: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| AppError::Config(format!("override {spec:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(AppError::Config(format!("override key {key:?} has an empty segment")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    Ok((path, value))
}

/// Sets `path` inside `doc`, creating intermediate objects as needed.
pub fn apply_override(doc: &mut Value, path: &[String], value: Value) -> Result<()> {
    let mut cur = doc;
    for (i, seg) in path.iter().enumerate() {
        if cur.is_null() {
            *cur = Value::Object(Map::new());
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| AppError::Config(format!("cannot set {:?}: {} is not an object", path.join("."), path[..i].join("."))))?;
        if i + 1 == path.len() {
            obj.insert(seg.clone(), value);
            return Ok(());
        }
        cur = obj.entry(seg.clone()).or_insert(Value::Null);
    }
    Ok(())
}

/// Reads a JSON document, applies overrides and deserializes it.
pub fn load_with_overrides<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    for o in overrides {
        let (key, value) = parse_override(o)?;
        apply_override(&mut doc, &key, value)?;
    }
    serde_json::from_value(doc).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
}

pub fn load_run_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg: RunConfig = load_with_overrides(path, overrides)?;
    cfg.dataset = resolve_relative(path, &cfg.dataset);
    cfg.experiment.validate().map_err(|e| AppError::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn resolve_relative(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        return p.to_path_buf();
    }
    match config_path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(p),
        _ => p.to_path_buf(),
    }
}
