//! Flat `key = value` run configuration and seed/model list parsing.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;
use trustsim_core::simulation::RecomputeMode;
use trustsim_core::{SimConfig, ThreatModel};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown config key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value {value:?} for {key}: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
}

/// Settings read from a config file or flags, before merging onto defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub models: Option<Vec<ThreatModel>>,
    pub seeds: Option<Vec<u64>>,
    pub fields: Vec<(String, String)>,
}

/// Keys accepted in a config file besides `model`, `seed` and `seeds`.
const FIELDS: &[&str] = &[
    "nodes",
    "k",
    "alpha",
    "pretrust_count",
    "attacker_ratio",
    "spy_ratio",
    "c",
    "e",
    "f",
    "incubation_period",
    "total_ticks",
    "transactions_per_tick",
    "recompute",
    "damping",
    "eps",
    "max_iter",
    "ally_bias",
];

impl Overrides {
    pub fn parse_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut out = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::Syntax { line: idx + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "model" => out.models = Some(parse_models(value)?),
                "seed" | "seeds" => out.seeds = Some(parse_seeds(value)?),
                k if FIELDS.contains(&k) => out.set(k, value),
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line: idx + 1,
                        key: key.to_string(),
                    })
                }
            }
        }
        Ok(out)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    /// Applies `other` on top of `self`.
    pub fn merge(mut self, other: Overrides) -> Self {
        if other.models.is_some() {
            self.models = other.models;
        }
        if other.seeds.is_some() {
            self.seeds = other.seeds;
        }
        self.fields.extend(other.fields);
        self
    }

    /// Writes the field overrides into `config`, later entries winning.
    pub fn apply(&self, config: &mut SimConfig) -> Result<(), ConfigError> {
        for (key, value) in &self.fields {
            apply_field(config, key, value)?;
        }
        Ok(())
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn apply_field(config: &mut SimConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    match key {
        "nodes" => config.nodes = parse(key, value)?,
        "k" => config.k = parse(key, value)?,
        "alpha" => config.alpha = parse(key, value)?,
        "pretrust_count" => config.pretrust_count = parse(key, value)?,
        "attacker_ratio" => config.attacker_ratio = parse(key, value)?,
        "spy_ratio" => config.spy_ratio = parse(key, value)?,
        "c" => config.c = parse(key, value)?,
        "e" => config.e = parse(key, value)?,
        "f" => config.f = parse(key, value)?,
        "incubation_period" => config.incubation_period = parse(key, value)?,
        "total_ticks" => config.total_ticks = parse(key, value)?,
        "transactions_per_tick" => {
            config.transactions_per_tick = match value {
                "all" | "" => None,
                v => Some(parse(key, v)?),
            }
        }
        "recompute" => {
            config.recompute = match value {
                "per-tick" => RecomputeMode::PerTick,
                "per-transaction" => RecomputeMode::PerTransaction,
                _ => {
                    return Err(ConfigError::Value {
                        key: key.to_string(),
                        value: value.to_string(),
                        reason: "expected per-tick or per-transaction".to_string(),
                    })
                }
            }
        }
        "damping" => config.damping = parse(key, value)?,
        "eps" => config.eps = parse(key, value)?,
        "max_iter" => config.max_iter = parse(key, value)?,
        "ally_bias" => config.ally_bias = parse(key, value)?,
        _ => unreachable!("unchecked config key {key}"),
    }
    Ok(())
}

/// `A`, `A,C,E` or `all`.
pub fn parse_models(value: &str) -> Result<Vec<ThreatModel>, ConfigError> {
    if value.trim().eq_ignore_ascii_case("all") {
        return Ok(ThreatModel::ALL.to_vec());
    }
    let mut seen = BTreeSet::new();
    value
        .split(',')
        .map(|m| parse::<ThreatModel>("model", m))
        .filter(|m| m.as_ref().map_or(true, |m| seen.insert(*m)))
        .collect()
}

/// `7`, `1..20` (inclusive) or `1,5,9`. Duplicates are dropped.
pub fn parse_seeds(value: &str) -> Result<Vec<u64>, ConfigError> {
    let bad = |reason: &str| ConfigError::Value {
        key: "seeds".to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    };
    let mut seeds = BTreeSet::new();
    for part in value.split(',').map(str::trim) {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 = parse("seeds", lo.trim())?;
            let hi: u64 = parse("seeds", hi.trim().trim_start_matches('='))?;
            if lo > hi {
                return Err(bad("empty range"));
            }
            seeds.extend(lo..=hi);
        } else {
            seeds.insert(parse("seeds", part)?);
        }
    }
    if seeds.is_empty() {
        return Err(bad("no seeds"));
    }
    Ok(seeds.into_iter().collect())
}
