//! Flat `key = value` run configuration.
//!
//! Keys mirror the field names of the model, trainer and augmentation
//! configs, joined with dots:
//!
//! ```text
//! preset = desk                      # desk | full | default
//! model.variant = unet_baseline
//! model.stem_strides = 1,2,4
//! train.batch_size = 8
//! adam.lr = 0.001                    # alias of train.adam.lr
//! augment.affine.probability = 0.5   # alias of train.augment.affine.probability
//! val_ratio = 0.8
//! ```
//!
//! Tuples and lists are comma separated. Blank lines and `#` comments are
//! ignored.

use std::path::Path;

use csegnet::model::default_supervision_weights;
use csegnet::train::TrainConfig;
use csegnet::ModelConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Fraction of patients used for training.
    pub val_ratio: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::preset("desk").expect("known preset")
    }
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self, CliError> {
        let model = match name {
            "desk" => ModelConfig::desk(),
            "full" => ModelConfig::full(),
            "default" => ModelConfig::default(),
            other => return Err(CliError::usage(format!("unknown preset `{other}` (expected desk, full or default)"))),
        };
        Ok(Self { model, train: TrainConfig::default(), val_ratio: 0.8 })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| CliError::usage(format!("line {}: expected key = value", i + 1)))?;
            pairs.push((i + 1, key.trim().to_string(), value.trim().to_string()));
        }
        let preset = pairs.iter().rfind(|p| p.1 == "preset").map_or("desk", |p| p.2.as_str());
        let mut tree = serde_json::to_value(Self::preset(preset)?).expect("config serializes");
        let mut weights_set = false;
        for (line, key, value) in pairs.iter().filter(|p| p.1 != "preset") {
            let full = canonical_key(key);
            weights_set |= full == "model.deep_supervision_weights";
            let path: Vec<&str> = full.split('.').collect();
            set_path(&mut tree, &path, value).map_err(|m| CliError::usage(format!("line {line}: {key}: {m}")))?;
        }
        let mut cfg: Self = serde_json::from_value(tree).map_err(|e| CliError::usage(e.to_string()))?;
        if !weights_set {
            cfg.model.deep_supervision_weights = default_supervision_weights(cfg.model.stages);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.augment.validate()?;
        if !(self.val_ratio > 0.0 && self.val_ratio < 1.0) {
            return Err(CliError::usage(format!("val_ratio {} must lie in (0, 1)", self.val_ratio)));
        }
        if self.train.batch_size == 0 {
            return Err(CliError::usage("train.batch_size must be positive"));
        }
        let a = self.train.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(CliError::usage("adam settings out of range"));
        }
        Ok(())
    }

    /// Every key with its current value, one `key = value` line each.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        flatten(&serde_json::to_value(self).expect("config serializes"), "", &mut out);
        out
    }
}

fn canonical_key(key: &str) -> String {
    for alias in ["augment.", "adam."] {
        if key.starts_with(alias) {
            return format!("train.{key}");
        }
    }
    key.to_string()
}

fn set_path(node: &mut Value, path: &[&str], raw: &str) -> Result<(), String> {
    let (head, rest) = path.split_first().ok_or("empty key")?;
    let child = node.as_object_mut().and_then(|m| m.get_mut(*head)).ok_or("unknown key")?;
    if rest.is_empty() {
        *child = parse_like(child, raw)?;
        Ok(())
    } else {
        set_path(child, rest, raw)
    }
}

/// Parses `raw` into the JSON type of `template`.
fn parse_like(template: &Value, raw: &str) -> Result<Value, String> {
    match template {
        Value::Bool(_) => raw.parse().map(Value::Bool).map_err(|_| format!("`{raw}` is not true or false")),
        Value::String(_) => Ok(Value::String(raw.to_string())),
        Value::Number(n) if n.is_u64() => {
            raw.parse::<u64>().map(Value::from).map_err(|_| format!("`{raw}` is not a non-negative integer"))
        }
        Value::Number(_) => {
            let v: f64 = raw.parse().map_err(|_| format!("`{raw}` is not a number"))?;
            Number::from_f64(v).map(Value::Number).ok_or_else(|| format!("`{raw}` is not finite"))
        }
        Value::Array(items) => {
            let element = items.first().cloned().unwrap_or(Value::from(0.0));
            let parts: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            if parts.is_empty() {
                return Err("empty list".into());
            }
            parts.iter().map(|p| parse_like(&element, p)).collect::<Result<_, _>>().map(Value::Array)
        }
        Value::Object(_) => Err("key names a group; set one of its fields".into()),
        Value::Null => Err("field cannot be set".into()),
    }
}

fn flatten(v: &Value, prefix: &str, out: &mut String) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(child, &key, out);
            }
        }
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(scalar_text).collect();
            out.push_str(&format!("{prefix} = {}\n", parts.join(",")));
        }
        other => out.push_str(&format!("{prefix} = {}\n", scalar_text(other))),
    }
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
