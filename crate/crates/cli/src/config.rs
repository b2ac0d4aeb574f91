//! Settings resolution: command-line flags, then `QA_CATALOG`, then `qa.yaml`,
//! then built-in defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use deployqa::catalog::{load_catalog, Catalog, RuleConfig};
use deployqa::finding::Severity;
use deployqa::yaml;
use serde::Deserialize;
use serde_json::Value as Json;
use thiserror::Error;

pub const CONFIG_FILE: &str = "qa.yaml";
pub const CATALOG_ENV: &str = "QA_CATALOG";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Catalog path, relative to the config file.
    pub catalog: Option<PathBuf>,
    pub severity_threshold: Option<Severity>,
    #[serde(default)]
    pub disabled: BTreeSet<String>,
    /// Detector parameter overrides keyed by rule id.
    #[serde(default)]
    pub rules: BTreeMap<String, BTreeMap<String, Json>>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Catalog(#[from] deployqa::catalog::LoadCatalogError),
    #[error("rule configuration: {0}")]
    Rules(String),
}

pub fn read_config(path: &Path) -> Result<ConfigFile, ConfigError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: shown.clone(), source })?;
    let root = yaml::parse(&text).map_err(|e| ConfigError::Invalid { path: shown.clone(), message: e.to_string() })?;
    if root.is_null() {
        return Ok(ConfigFile::default());
    }
    let mut config: ConfigFile = serde_json::from_value(root.to_json())
        .map_err(|e| ConfigError::Invalid { path: shown, message: e.to_string() })?;
    if let (Some(catalog), Some(dir)) = (&config.catalog, path.parent()) {
        config.catalog = Some(dir.join(catalog));
    }
    Ok(config)
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub catalog: Catalog,
    pub rules: RuleConfig,
    pub threshold: Severity,
}

/// Flags that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub threshold: Option<Severity>,
}

pub fn resolve(flags: &Overrides, cwd: &Path, env_catalog: Option<PathBuf>) -> Result<Settings, ConfigError> {
    let file = match &flags.config {
        Some(p) => read_config(p)?,
        None => {
            let default = cwd.join(CONFIG_FILE);
            if default.is_file() {
                read_config(&default)?
            } else {
                ConfigFile::default()
            }
        }
    };
    let catalog_path = flags.catalog.clone().or(env_catalog).or(file.catalog);
    let catalog = load_catalog(catalog_path.as_deref())?;
    let rules = RuleConfig { disabled: file.disabled, overrides: file.rules };
    let problems = rules.validate(&catalog);
    if !problems.is_empty() {
        return Err(ConfigError::Rules(problems.join("; ")));
    }
    let threshold = flags.threshold.or(file.severity_threshold).unwrap_or(Severity::Medium);
    Ok(Settings { catalog, rules, threshold })
}
