//! Experiment configuration: one TOML document, optionally overridden with
//! `--set table.key=value`.

use std::path::{Path, PathBuf};

use chirp_mix::propagate::SpinSystem;
use chirp_mix::waveform::{ChirpParams, CompositeTable};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chirp: ChirpSection,
    pub spins: SpinSection,
    pub schedule: ScheduleSection,
    pub scan: ScanSection,
    pub sequence: SequenceSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChirpSection {
    #[serde(rename = "A_khz")]
    pub a_khz: f64,
    pub omega1_khz: f64,
    /// Sweep rate is `omega1^2 / omega1_sq_over`.
    pub omega1_sq_over: f64,
    pub dwell_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinSection {
    #[serde(rename = "nu_I_khz")]
    pub nu_i_khz: f64,
    #[serde(rename = "nu_S_khz")]
    pub nu_s_khz: f64,
    #[serde(rename = "J_hz")]
    pub j_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub n_supercycles: usize,
    pub pairs_khz: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub grid: usize,
    pub range_khz: f64,
    #[serde(rename = "budget_over_J")]
    pub budget_over_j: f64,
    pub threshold: f64,
    pub separation_cap_khz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mixing {
    Chirp,
    Composite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub mixing: Mixing,
    pub composite: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

/// A configuration problem; always reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// A parsed configuration together with the text it came from, for error
/// locations.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    source_name: String,
    source: String,
    overridden: Vec<String>,
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Loaded, ConfigError> {
    let (source_name, source) = match path {
        Some(p) => (
            p.display().to_string(),
            std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?,
        ),
        None => ("<default config>".to_string(), DEFAULT_CONFIG.to_string()),
    };
    let config = if overrides.is_empty() {
        toml::from_str(&source).map_err(|e| ConfigError(format!("{source_name}: {e}")))?
    } else {
        let mut table: toml::Table =
            toml::from_str(&source).map_err(|e| ConfigError(format!("{source_name}: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        ExperimentConfig::deserialize(toml::Value::Table(table)).map_err(|e| {
            ConfigError(format!(
                "{source_name} (with --set overrides): {}",
                e.message()
            ))
        })?
    };
    let overridden = overrides
        .iter()
        .filter_map(|o| o.split_once('=').map(|(k, _)| k.trim().to_string()))
        .collect();
    Ok(Loaded {
        config,
        source_name,
        source,
        overridden,
    })
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let bad = |why: &str| ConfigError(format!("--set {assignment}: {why}"));
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| bad("expected KEY=VALUE"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(bad("empty key segment"));
    }
    // TOML literal if it parses as one, bare string otherwise
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut node = table;
    for p in parents {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| bad(&format!("`{p}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

impl Loaded {
    /// `<source>:<line>: <key>: <why>`, with the line of `key` when it is
    /// present in the source text and not overridden.
    pub fn invalid(&self, key: &str, why: impl std::fmt::Display) -> ConfigError {
        if self.overridden.iter().any(|k| k == key) {
            return ConfigError(format!("--set {key}: {why}"));
        }
        match locate(&self.source, key) {
            Some(line) => ConfigError(format!("{}:{line}: {key}: {why}", self.source_name)),
            None => ConfigError(format!("{}: {key}: {why}", self.source_name)),
        }
    }

    pub fn chirp_params(&self) -> Result<ChirpParams, ConfigError> {
        let c = &self.config.chirp;
        positive(self, "chirp.A_khz", c.a_khz)?;
        positive(self, "chirp.omega1_khz", c.omega1_khz)?;
        positive(self, "chirp.omega1_sq_over", c.omega1_sq_over)?;
        ChirpParams::from_khz(c.a_khz, c.omega1_khz, c.omega1_sq_over)
            .map_err(|e| self.invalid("chirp", e))
    }

    pub fn dwell(&self) -> Result<f64, ConfigError> {
        positive(self, "chirp.dwell_us", self.config.chirp.dwell_us)?;
        Ok(self.config.chirp.dwell_us * 1e-6)
    }

    pub fn spin_system(&self) -> Result<SpinSystem, ConfigError> {
        let s = &self.config.spins;
        self.pair(s.nu_i_khz, s.nu_s_khz, "spins")
    }

    pub fn pair(&self, nu_i_khz: f64, nu_s_khz: f64, key: &str) -> Result<SpinSystem, ConfigError> {
        let j = self.config.spins.j_hz;
        if !(j >= 0.0 && j.is_finite()) {
            return Err(self.invalid("spins.J_hz", format!("must be non-negative, got {j}")));
        }
        SpinSystem::from_hz(nu_i_khz * 1e3, nu_s_khz * 1e3, j).map_err(|e| self.invalid(key, e))
    }

    /// Offset pairs for mixing curves.
    pub fn buildup_pairs(&self) -> Vec<(f64, f64)> {
        let pairs = &self.config.schedule.pairs_khz;
        if pairs.is_empty() {
            vec![(self.config.spins.nu_i_khz, self.config.spins.nu_s_khz)]
        } else {
            pairs.iter().map(|p| (p[0], p[1])).collect()
        }
    }

    pub fn composite_table(&self) -> Result<CompositeTable, ConfigError> {
        let name = &self.config.sequence.composite;
        if name == "dipsi2" {
            return Ok(CompositeTable::dipsi2());
        }
        CompositeTable::load(Path::new(name)).map_err(|e| self.invalid("sequence.composite", e))
    }

    /// Hex SHA-256 of the canonical configuration, excluding the output
    /// directory so that identical experiments written to different places
    /// carry the same hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.config.clone();
        canonical.output.dir = PathBuf::new();
        let text = toml::to_string(&canonical).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.config).expect("config serializes")
    }
}

fn positive(cfg: &Loaded, key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg.invalid(key, format!("must be positive, got {v}")))
    }
}

/// 1-based line of `table.key` in a TOML document with plain `[table]`
/// headers.
fn locate(source: &str, dotted: &str) -> Option<usize> {
    let (table, key) = dotted.split_once('.')?;
    let mut current = "";
    for (n, line) in source.lines().enumerate() {
        let line = line.trim();
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = header.trim();
        } else if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}
