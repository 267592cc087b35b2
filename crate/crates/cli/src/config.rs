//! `--config` files: `key = value` lines, or a `manifest.json` from an
//! earlier run whose `config` object is replayed. Values only fill flags that
//! were not given on the command line.

use std::path::Path;

use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::new("E_CONFIG", format!("config line {}: expected `key = value`", i + 1))
        })?;
        let key = k.trim();
        if key.is_empty() {
            return Err(CliError::new("E_CONFIG", format!("config line {}: empty key", i + 1)));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn json_entries(text: &str) -> CliResult<Vec<(String, String)>> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| CliError::new("E_CONFIG", format!("manifest: {e}")))?;
    let config = root
        .get("config")
        .and_then(Value::as_object)
        .ok_or_else(|| CliError::new("E_CONFIG", "manifest has no `config` object"))?;
    let mut out = Vec::new();
    for (k, v) in config {
        let s = match v {
            Value::Null => continue,
            Value::String(s) => s.clone(),
            Value::Array(items) => items
                .iter()
                .map(|x| match x {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            other => other.to_string(),
        };
        out.push((k.clone(), s));
    }
    Ok(out)
}

pub fn load_entries(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    if text.trim_start().starts_with('{') {
        json_entries(&text)
    } else {
        parse_key_values(&text)
    }
}

fn flag_present(args: &[String], flag: &str) -> bool {
    args.iter()
        .any(|a| a == flag || a.strip_prefix(flag).is_some_and(|rest| rest.starts_with('=')))
}

/// Returns `args` with `--config` entries appended for flags not already set.
/// `true`/`false` values toggle switch flags.
pub fn merge(args: Vec<String>, switches: &[&str]) -> CliResult<Vec<String>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = Some(
                args.get(i + 1)
                    .cloned()
                    .ok_or_else(|| CliError::usage("--config needs a path"))?,
            );
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let mut out = args;
    for (key, value) in load_entries(Path::new(&path))? {
        let name = key.replace('_', "-");
        if name == "config" {
            continue;
        }
        let flag = format!("--{name}");
        if flag_present(&out, &flag) {
            continue;
        }
        if switches.contains(&name.as_str()) {
            match value.as_str() {
                "true" => out.push(flag),
                "false" => {}
                _ => {
                    return Err(CliError::new(
                        "E_CONFIG",
                        format!("config key `{key}` expects true or false"),
                    ))
                }
            }
        } else {
            out.push(flag);
            out.push(value);
        }
    }
    Ok(out)
}
