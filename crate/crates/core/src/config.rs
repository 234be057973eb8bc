//! Project configuration: TOML loading, environment overrides and hashing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actuator::ActuatorParams;
use crate::decoupler::{DecouplerConfig, SweepConfig};
use crate::firmness::{second_actuator_params, FirmnessParams, IndividualConfig, ProgressiveConfig};
use crate::sigproc::FilterSpec;
use crate::tactile::{GridProtocol, TactileConfig};

/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "SOFTMAG_";
/// Separator between nested keys in an override name.
pub const ENV_SEPARATOR: &str = "__";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad override {key}: {reason}")]
    Override { key: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Firmness probing settings and experiment layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirmnessSection {
    pub params: FirmnessParams,
    /// Modulation cycles per probe.
    pub cycles: usize,
    /// Seeded repetitions of the three-object comparison.
    pub object_runs: usize,
    pub progressive: ProgressiveConfig,
    pub individual: IndividualConfig,
}

impl Default for FirmnessSection {
    fn default() -> Self {
        Self {
            params: FirmnessParams::default(),
            cycles: 3,
            object_runs: 5,
            progressive: ProgressiveConfig::default(),
            individual: IndividualConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// First gripper actuator; also the one the tactile model is trained on.
    pub actuator: ActuatorParams,
    pub second_actuator: ActuatorParams,
    pub filter: FilterSpec,
    pub sweep: SweepConfig,
    pub decoupler: DecouplerConfig,
    pub grid: GridProtocol,
    pub tactile: TactileConfig,
    pub firmness: FirmnessSection,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        let actuator = ActuatorParams::default();
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            second_actuator: second_actuator_params(&actuator),
            actuator,
            filter: FilterSpec::default(),
            sweep: SweepConfig::default(),
            decoupler: DecouplerConfig::default(),
            grid: GridProtocol::default(),
            tactile: TactileConfig::default(),
            firmness: FirmnessSection::default(),
        }
    }
}

impl ProjectConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Self::from_value(toml::from_str(text)?)
    }

    /// Overlays `value` on the serialised defaults, so omitted nested keys keep their project-level defaults.
    fn from_value(value: toml::Table) -> Result<Self, ConfigError> {
        let mut merged = toml::Table::try_from(Self::default()).expect("defaults serialise to TOML");
        merge(&mut merged, value);
        let config: Self = merged.try_into()?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` (or the defaults when `None`) and applies `overrides`.
    pub fn load<I>(path: Option<&Path>, overrides: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
                toml::from_str(&text)?
            }
            None => toml::Table::new(),
        };
        for (key, value) in overrides {
            apply_override(&mut table, &key, &value)?;
        }
        Self::from_value(table)
    }

    /// Like [`ProjectConfig::load`], taking overrides from `SOFTMAG_*` variables.
    pub fn load_with_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, env_overrides(std::env::vars()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.actuator.validate().map_err(|e| invalid(&e))?;
        self.second_actuator.validate().map_err(|e| invalid(&e))?;
        self.filter.validate().map_err(|e| invalid(&e))?;
        self.sweep.validate().map_err(|e| invalid(&e))?;
        if self.decoupler.hidden.is_empty() || self.decoupler.hidden.contains(&0) {
            return Err(ConfigError::Invalid("decoupler hidden widths must be non-empty and positive".into()));
        }
        self.decoupler.train.validate(1).map_err(|e| invalid(&e))?;
        self.grid.validate().map_err(|e| invalid(&e))?;
        self.tactile.validate().map_err(|e| invalid(&e))?;
        self.firmness.params.validate().map_err(|e| invalid(&e))?;
        let f = &self.firmness;
        if f.cycles == 0 || f.object_runs == 0 {
            return Err(ConfigError::Invalid("firmness cycles and object runs must be >= 1".into()));
        }
        let p = &f.progressive;
        if p.fruits.is_empty() || p.day_factors.len() < 3 || p.probe_trials == 0 || p.cycles == 0 {
            return Err(ConfigError::Invalid(
                "progressive experiment needs fruits, >= 3 days and at least one trial and cycle".into(),
            ));
        }
        if p.day_factors.iter().any(|d| !(*d > 0.0)) || p.fruits.iter().any(|fr| !(fr.stiffness > 0.0)) {
            return Err(ConfigError::Invalid("fruit stiffness and day factors must be > 0".into()));
        }
        let i = &f.individual;
        if i.count < 3 || i.probe_trials == 0 || i.cycles == 0 || !(i.stiffness_range[0] > 0.0) {
            return Err(ConfigError::Invalid("individual experiment needs >= 3 fruits with positive stiffness".into()));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(ConfigError::Invalid("output_dir must not be empty".into()));
        }
        Ok(())
    }

    /// Sorted-key JSON rendering used for hashing.
    pub fn canonical_json(&self) -> String {
        // serde_json maps are ordered by key, so a round trip through Value sorts every level.
        let value = serde_json::to_value(self).expect("config serialises");
        serde_json::to_string(&value).expect("value serialises")
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        hex_digest(self.canonical_json().as_bytes())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Picks `SOFTMAG_*` pairs and turns them into dotted keys: `SOFTMAG_TACTILE__TRAIN__MAX_EPOCHS` → `tactile.train.max_epochs`.
pub fn env_overrides<I>(vars: I) -> Vec<(String, String)>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            Some((rest.to_ascii_lowercase().split(ENV_SEPARATOR).collect::<Vec<_>>().join("."), v))
        })
        .collect();
    out.sort();
    out
}

/// Sets the dotted `key` in `table`, parsing `raw` as a TOML value and falling back to a string.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let err = |reason: &str| ConfigError::Override { key: key.to_string(), reason: reason.to_string() };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(err("empty key segment"));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| err(&format!("`{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ProjectConfig::default();
        c.validate().unwrap();
        let back = ProjectConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_tables_fill_from_defaults() {
        let c = ProjectConfig::from_toml_str("seed = 9\n[tactile.train]\nmax_epochs = 3\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.tactile.train.max_epochs, 3);
        assert_eq!(c.tactile.window, TactileConfig::default().window);
        assert_eq!(c.actuator, ActuatorParams::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(matches!(ProjectConfig::from_toml_str("sede = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(
            ProjectConfig::from_toml_str("[firmness.params]\nb = -1.0\n"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn env_names_map_to_nested_keys() {
        let vars = vec![
            ("SOFTMAG_TACTILE__TRAIN__MAX_EPOCHS".to_string(), "4".to_string()),
            ("SOFTMAG_SEED".to_string(), "12".to_string()),
            ("HOME".to_string(), "/root".to_string()),
        ];
        let o = env_overrides(vars);
        assert_eq!(o, vec![("seed".into(), "12".into()), ("tactile.train.max_epochs".into(), "4".into())]);
        let c = ProjectConfig::load(None, o).unwrap();
        assert_eq!((c.seed, c.tactile.train.max_epochs), (12, 4));
        let c = ProjectConfig::load(None, vec![("output_dir".into(), "runs/a b".into())]).unwrap();
        assert_eq!(c.output_dir, PathBuf::from("runs/a b"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ProjectConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.firmness.params.amplitude_kpa = 4.5;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn hex_digest_matches_known_vector() {
        assert_eq!(hex_digest(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
