use std::fmt::Write;
use std::path::{Path, PathBuf};

use battdiag::datagen::DatasetConfig;
use battdiag::evaluation::EvalConfig;
use battdiag::piml::MethodConfig;
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "BATTDIAG_SEED";

/// Everything a run reads, one TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Dataset CSVs are written here by `generate` and read by the other commands.
    pub data_dir: PathBuf,
    /// Report directory written by `evaluate`.
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub methods: MethodConfig,
    pub evaluation: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            output_dir: "report".into(),
            dataset: DatasetConfig::default(),
            methods: MethodConfig::default(),
            evaluation: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads, applies the seed override, and validates.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self, String> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                Self::parse(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.dataset.aging.seed = s;
            cfg.evaluation.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.dataset.validate().map_err(|e| format!("dataset: {e}"))?;
        self.methods.validate().map_err(|e| format!("methods: {e}"))?;
        self.evaluation.validate().map_err(|e| format!("evaluation: {e}"))?;
        let (cells, k) = (self.dataset.aging.cells_per_group, self.evaluation.folds);
        if cells != k {
            return Err(format!(
                "dataset.aging.cells_per_group = {cells} but evaluation.folds = {k}: each fold tests one cell per group, so the two must be equal"
            ));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        battdiag::evaluation::fingerprint(self)
    }
}

/// Dotted key paths of the default config, filtered by prefix.
pub fn config_keys(prefixes: &[&str]) -> String {
    let value = toml::Value::try_from(RunConfig::default()).expect("default config serializes");
    let mut keys = Vec::new();
    flatten("", &value, &mut keys);
    let mut out = String::from("Config keys read:\n");
    for (k, v) in keys.iter().filter(|(k, _)| prefixes.iter().any(|p| k == p || k.starts_with(&format!("{p}.")))) {
        let _ = writeln!(out, "  {k} = {v}");
    }
    let _ = write!(out, "\n{SEED_ENV} overrides dataset.aging.seed and evaluation.seed.");
    out
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<(String, String)>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        toml::Value::Array(a) if a.iter().any(|x| x.is_table()) => {
            out.push((prefix.to_string(), format!("[{} tables]", a.len())))
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}
