//! Run configuration: one TOML or JSON file plus `--set` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lacuna_core::lacunary::SequenceKind;
use lacuna_core::stochastics::{LimitLaw, Normalization, PointMode};
use lacuna_core::NormKind;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Filled in from the subcommand when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionSpec>,
    #[serde(default)]
    pub params: Params,
}

/// The test function `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// `cos(2 pi x)`.
    Cosine {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fejer: Option<u64>,
    },
    /// `cos(2 pi x) + cos(4 pi x)`.
    CosinePair {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fejer: Option<u64>,
    },
    /// `1_[0,beta) - prod beta`; `gamma` is the degree used wherever a
    /// trigonometric polynomial is needed.
    BoxIndicator {
        beta: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<Vec<u64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fejer: Option<u64>,
    },
    /// A polynomial stored in the JSON coefficient format.
    File {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fejer: Option<u64>,
    },
}

/// Scalar parameters. Each command accepts only the subset it reads.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_max: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laws: Option<Vec<LimitLaw>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<PointMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_samples: Option<usize>,
}

impl Params {
    /// Rejects any parameter outside `allowed`.
    pub fn restrict(&self, command: &str, allowed: &[&str]) -> Result<()> {
        let Value::Object(map) = serde_json::to_value(self)? else {
            unreachable!("params serialize to an object")
        };
        let extra: Vec<&String> = map.keys().filter(|k| !allowed.contains(&k.as_str())).collect();
        if !extra.is_empty() {
            bail!("{command} does not take params {extra:?}; accepted: {allowed:?}");
        }
        Ok(())
    }
}

fn parse_text(path: &Path, text: &str) -> Result<Value> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "toml" => toml::from_str(text).context("reading TOML config"),
        "json" => serde_json::from_str(text).context("reading JSON config"),
        _ => serde_json::from_str(text).or_else(|_| toml::from_str(text)).context("config is neither JSON nor TOML"),
    }
}

/// `a.b.c=value`; the value is read as JSON when it parses, else as a string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').with_context(|| format!("--set expects key=value, got {spec:?}"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("bad key {key:?} in --set");
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for p in &parts[..parts.len() - 1] {
        let obj = node.as_object_mut().with_context(|| format!("{key:?}: {p:?} is not a table"))?;
        node = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    let obj = node.as_object_mut().with_context(|| format!("{key:?} does not point into a table"))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn load(path: &Path, overrides: &[String], command: &str) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut root = parse_text(path, &text)?;
    if !root.is_object() {
        bail!("config must be a table");
    }
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let mut cfg: RunConfig = serde_json::from_value(root).context("invalid config")?;
    if cfg.schema_version != SCHEMA_VERSION {
        bail!("unsupported schema_version {} (expected {SCHEMA_VERSION})", cfg.schema_version);
    }
    match &cfg.command {
        Some(c) if c != command => bail!("config is for command {c:?}, not {command:?}"),
        Some(_) => {}
        None => cfg.command = Some(command.to_string()),
    }
    if cfg.threads == Some(0) {
        bail!("threads must be positive");
    }
    Ok(cfg)
}
