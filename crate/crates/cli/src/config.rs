//! Configuration file and environment overrides.
//!
//! The file is TOML. Every key is optional; absent keys keep the defaults
//! shown here.
//!
//! ```toml
//! version = 1          # required when a file is given
//! seed = 0
//!
//! [train]
//! epochs = 200         # upper bound; early stopping usually ends sooner
//! batch_size = 64
//! learning_rate = 0.001
//! patience = 20
//! final_lr_fraction = 1.0 # < 1 anneals the rate along a half cosine
//!
//! [classifier]
//! epochs = 50
//!
//! [ar]
//! order = 30
//! neighbours = 3
//! refresh = 100
//!
//! [eval]
//! runs = 10
//! condition = "gla"    # gla | frames | stitch
//! gla_iterations = 100
//!
//! [serve]
//! host = "127.0.0.1"
//! port = 8080
//! static_dir = ""      # empty serves the built-in page
//! audio_queue = 32     # audio blocks buffered per session before dropping the oldest
//! spectrum_queue = 256 # spectrum messages buffered per session before the session waits
//! ```
//!
//! Any key can be overridden by an environment variable named `TEXSYNTH_`
//! followed by the upper-cased section and key, e.g. `TEXSYNTH_SEED` or
//! `TEXSYNTH_TRAIN_EPOCHS`. Values are parsed as TOML scalars, falling back
//! to plain strings. Command-line flags take precedence over both.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_VERSION: i64 = 1;
pub const ENV_PREFIX: &str = "TEXSYNTH_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub version: i64,
    pub seed: u64,
    pub train: TrainSection,
    pub classifier: ClassifierSection,
    pub ar: ArSection,
    pub eval: EvalSection,
    pub serve: ServeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub final_lr_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArSection {
    pub order: usize,
    pub neighbours: usize,
    pub refresh: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub runs: usize,
    pub condition: String,
    pub gla_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub host: String,
    pub port: u16,
    pub static_dir: String,
    pub audio_queue: usize,
    pub spectrum_queue: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            train: TrainSection::default(),
            classifier: ClassifierSection::default(),
            ar: ArSection::default(),
            eval: EvalSection::default(),
            serve: ServeSection::default(),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = texsynth::neural::TrainConfig::default();
        Self {
            epochs: t.max_epochs,
            batch_size: t.batch_size,
            learning_rate: t.adam.learning_rate,
            patience: t.patience,
            final_lr_fraction: t.final_lr_fraction,
        }
    }
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            epochs: texsynth::neural::Stage1Config::default().epochs,
        }
    }
}

impl Default for ArSection {
    fn default() -> Self {
        let s = texsynth::ar_baseline::SynthConfig::default();
        Self {
            order: texsynth::ar_baseline::DEFAULT_ORDER,
            neighbours: s.neighbours,
            refresh: s.refresh,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            runs: 10,
            condition: "gla".into(),
            gla_iterations: 100,
        }
    }
}

impl Default for ServeSection {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            static_dir: String::new(),
            audio_queue: 32,
            spectrum_queue: 256,
        }
    }
}

impl Config {
    /// Defaults, then the file (if any), then environment overrides.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                let table: toml::Table = text
                    .parse()
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?;
                match table.get("version").and_then(|v| v.as_integer()) {
                    Some(CONFIG_VERSION) => {}
                    Some(v) => {
                        return Err(CliError::Usage(format!(
                            "config {}: version {v} is not supported (expected {CONFIG_VERSION})",
                            p.display()
                        )))
                    }
                    None => {
                        return Err(CliError::Usage(format!(
                            "config {}: missing `version = {CONFIG_VERSION}`",
                            p.display()
                        )))
                    }
                }
                table
            }
            None => toml::Table::new(),
        };
        apply_env(&mut table, env);
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        Ok(config)
    }
}

/// Writes `TEXSYNTH_*` variables naming a known key into `table`.
fn apply_env(table: &mut toml::Table, env: impl IntoIterator<Item = (String, String)>) {
    let defaults = toml::Table::try_from(Config::default()).expect("defaults serialize");
    for (name, raw) in env {
        let Some(key) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let key = key.to_ascii_lowercase();
        let value = parse_scalar(&raw);
        if defaults.get(&key).is_some_and(|v| !v.is_table()) {
            table.insert(key, value);
            continue;
        }
        let section = defaults.iter().find_map(|(s, v)| {
            let inner = v.as_table()?;
            let field = key.strip_prefix(s.as_str())?.strip_prefix('_')?;
            inner.contains_key(field).then(|| (s.clone(), field.to_string()))
        });
        match section {
            Some((s, field)) => {
                let entry = table
                    .entry(s)
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                if let Some(t) = entry.as_table_mut() {
                    t.insert(field, value);
                }
            }
            None => tracing::debug!("ignoring environment variable {name}"),
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .filter(|v| !v.is_table() && !v.is_array())
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
