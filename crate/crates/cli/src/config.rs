//! TOML configuration merged beneath command-line flags.
//!
//! ```toml
//! out_dir = "runs"
//!
//! [simulate]
//! hurst = 0.25
//! days = 3206
//!
//! [experiment.filter-study]
//! seeds = 40
//! ```
//!
//! Each key of the section named after the subcommand becomes `--key value`
//! unless the flag already appears on the command line. Underscores in keys
//! map to dashes, arrays join with commas, `true` becomes a bare switch and
//! `false` is ignored.

use std::path::Path;

use anyhow::{Context, Result};
use toml::{Table, Value};

use crate::UsageError;

pub const GLOBAL_VALUE_FLAGS: [&str; 2] = ["--config", "--out-dir"];

fn flag_present(argv: &[String], flag: &str) -> bool {
    let prefix = format!("{flag}=");
    argv.iter().any(|a| a == flag || a.starts_with(&prefix))
}

/// Index of the first subcommand token, skipping global options.
pub fn subcommand_index(argv: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if GLOBAL_VALUE_FLAGS.contains(&a.as_str()) {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            return Some(i);
        }
    }
    None
}

/// Value of `--config` in raw arguments.
pub fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

fn render(key: &str, value: &Value) -> Result<Option<String>> {
    Ok(Some(match value {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(_) => return Ok(None),
        Value::Array(items) => items
            .iter()
            .map(|v| match render(key, v)? {
                Some(s) => Ok(s),
                None => Err(UsageError(format!(
                    "config key '{key}': arrays of booleans are not flags"
                ))
                .into()),
            })
            .collect::<Result<Vec<_>>>()?
            .join(","),
        Value::Datetime(d) => d.to_string(),
        Value::Table(_) => {
            return Err(
                UsageError(format!("config key '{key}' is a table, expected a value")).into(),
            )
        }
    }))
}

/// Inserts config values as flags after the subcommand (and nested
/// subcommand) tokens of `argv`.
pub fn merge(argv: &[String], config: &Table) -> Result<Vec<String>> {
    let mut out = argv.to_vec();
    for key in config.keys() {
        match (key.as_str(), &config[key]) {
            ("out_dir", Value::String(dir)) => {
                if !flag_present(argv, "--out-dir") {
                    out.insert(1, dir.clone());
                    out.insert(1, "--out-dir".into());
                }
            }
            (_, Value::Table(_)) => {}
            _ => return Err(UsageError(format!("unknown top-level config key '{key}'")).into()),
        }
    }
    let Some(mut pos) = subcommand_index(&out) else {
        return Ok(out);
    };
    let names = [out[pos].clone(), out[pos].replace('-', "_")];
    let Some(mut section) = names
        .iter()
        .find_map(|n| config.get(n).and_then(Value::as_table))
    else {
        return Ok(out);
    };
    pos += 1;
    if let Some(nested) = out
        .get(pos)
        .and_then(|n| section.get(n))
        .and_then(Value::as_table)
    {
        section = nested;
        pos += 1;
    }
    let mut inserted = Vec::new();
    for (key, value) in section {
        if value.is_table() {
            continue;
        }
        let flag = format!("--{}", key.replace('_', "-"));
        if flag_present(argv, &flag) {
            continue;
        }
        match value {
            Value::Boolean(true) => inserted.push(flag),
            Value::Boolean(false) => {}
            v => {
                if let Some(rendered) = render(key, v)? {
                    inserted.push(flag);
                    inserted.push(rendered);
                }
            }
        }
    }
    out.splice(pos..pos, inserted);
    Ok(out)
}

pub fn load(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    text.parse::<Table>()
        .map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
}

/// Removes global options, leaving the subcommand and its arguments.
pub fn strip_globals(argv: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 1;
    while i < argv.len() {
        let a = &argv[i];
        if GLOBAL_VALUE_FLAGS.contains(&a.as_str()) {
            i += 2;
            continue;
        }
        if GLOBAL_VALUE_FLAGS
            .iter()
            .any(|f| a.starts_with(&format!("{f}=")))
        {
            i += 1;
            continue;
        }
        out.push(a.clone());
        i += 1;
    }
    out
}
