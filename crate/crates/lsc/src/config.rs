//! Run configs as TOML: a scenario preset, overlaid by a file, overlaid by
//! dotted `key=value` overrides.

use std::fs;
use std::path::Path;

use lsc_core::env::{BattleConfig, Scenario, SpreadConfig};
use lsc_core::harness::RunConfig;
use toml::{Table, Value};

use crate::error::CliError;

pub const SCENARIOS: [&str; 2] = ["spread", "battle"];

pub fn preset(scenario: &str) -> Result<RunConfig, CliError> {
    match scenario {
        "spread" => Ok(RunConfig::preset(Scenario::Spread(SpreadConfig::default()))),
        "battle" => Ok(RunConfig::preset(Scenario::Battle(BattleConfig::default()))),
        other => Err(CliError::Schema(format!("unknown scenario kind {other:?}, expected spread or battle"))),
    }
}

/// Splits `a.b.c=value`. The value is read as a TOML literal, falling back
/// to a bare string (`topology=star`).
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {s:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Usage(format!("override {s:?} has an empty key segment")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed table has key v"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

fn set_dotted(root: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut table = root;
    for (depth, part) in parts.iter().enumerate() {
        let entry = table.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(CliError::Schema(format!(
                    "override {key}: {} is not a table",
                    parts[..=depth].join(".")
                )))
            }
        };
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn scenario_kind(file: &Table, overrides: &[(String, Value)]) -> Result<String, CliError> {
    let mut kind = match file.get("scenario").and_then(|s| s.get("kind")) {
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(CliError::Schema(format!("scenario.kind must be a string, got {other}"))),
        None => "spread".into(),
    };
    for (k, v) in overrides {
        if k == "scenario.kind" {
            kind = v.as_str().map(str::to_string).ok_or_else(|| CliError::Schema("scenario.kind must be a string".into()))?;
        }
    }
    Ok(kind)
}

/// Builds a run config from config text (possibly empty) and overrides.
pub fn from_text(text: &str, overrides: &[String]) -> Result<RunConfig, CliError> {
    let file: Table = toml::from_str(text).map_err(|e| CliError::Schema(format!("config: {}", e.message())))?;
    let overrides = overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    let base = preset(&scenario_kind(&file, &overrides)?)?;
    let mut table = to_table(&base);
    merge(&mut table, file);
    for (k, v) in overrides {
        set_dotted(&mut table, &k, v)?;
    }
    let cfg: RunConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Schema(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `path` (or nothing) and applies `overrides`.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::ConfigPath(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    from_text(&text, overrides)
}

fn to_table(cfg: &RunConfig) -> Table {
    match Value::try_from(cfg).expect("run configs serialize") {
        Value::Table(t) => t,
        _ => unreachable!("a struct serializes to a table"),
    }
}

/// Canonical TOML text of a config; loading it back gives the same config.
pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("run configs serialize")
}
