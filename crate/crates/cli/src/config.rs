//! TOML configuration with command-line overrides.
//!
//! Overrides are merged into the parsed table before deserialization, so a
//! flag goes through exactly the same key and range checks as a file entry.

use std::path::Path;

use irsa_lab::SystemConfig;
use toml::{Table, Value};

use crate::{CliError, Result};

/// Environment variable consulted when neither a flag nor the file sets the
/// seed.
pub const SEED_ENV: &str = "IRSA_LAB_SEED";

/// Parse `key=value`; the value is read as a TOML literal and falls back to
/// a bare string (so `pilot_type=bpsk` works without quotes).
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{s}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("override `{s}` has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

/// Build a validated configuration from file text and overrides, applied in
/// order. `seed_fallback` is used only when no source sets `seed`.
pub fn parse_config(text: &str, overrides: &[(String, Value)], seed_fallback: Option<u64>) -> Result<SystemConfig> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    for (key, value) in overrides {
        // M and L are alternatives; setting one on the command line replaces
        // the other from the file.
        match key.as_str() {
            "M" => {
                table.remove("L");
            }
            "L" => {
                table.remove("M");
            }
            _ => {}
        }
        table.insert(key.clone(), value.clone());
    }
    if let Some(seed) = seed_fallback {
        if !table.contains_key("seed") {
            table.insert("seed".into(), Value::Integer(seed as i64));
        }
    }
    let config: SystemConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Read the file (if any) and apply overrides.
pub fn load_config(path: Option<&Path>, overrides: &[(String, Value)], seed_fallback: Option<u64>) -> Result<SystemConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        })?,
        None => String::new(),
    };
    parse_config(&text, overrides, seed_fallback)
}

/// Seed from the environment, if set and well formed.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{s}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}
