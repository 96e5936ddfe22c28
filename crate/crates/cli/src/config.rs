//! `--config file.json` support: each key becomes a flag unless the user
//! already passed that flag, so explicit flags always win.

use std::path::Path;

use anyhow::Context;
use clap::CommandFactory;
use serde_json::Value;

use crate::args::Cli;
use crate::UsageError;

/// Returns `argv` with the config file (if any) expanded in place.
pub fn expand(argv: &[String]) -> anyhow::Result<Vec<String>> {
    let root = Cli::command();
    let Some(sub_pos) = argv
        .iter()
        .skip(1)
        .position(|a| root.find_subcommand(a).is_some())
        .map(|p| p + 1)
    else {
        return Ok(argv.to_vec());
    };
    let Some(path) = config_path(&argv[sub_pos + 1..])? else {
        return Ok(argv.to_vec());
    };
    let sub = root.find_subcommand(&argv[sub_pos]).expect("found above");
    let known: Vec<String> = sub
        .get_arguments()
        .map(|a| a.get_id().as_str().to_string())
        .filter(|id| id != "config" && id != "help")
        .collect();
    let given: Vec<&str> = argv[sub_pos + 1..]
        .iter()
        .take_while(|a| *a != "--")
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split_once('=').map_or(a, |(name, _)| name))
        .collect();
    let flags = flags_from_file(&path, &known, &given)?;
    let mut out = argv[..=sub_pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&argv[sub_pos + 1..]);
    Ok(out)
}

fn config_path(rest: &[String]) -> anyhow::Result<Option<String>> {
    let mut found = None;
    let mut it = rest.iter();
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            found = Some(v.to_string());
        } else if a == "--config" {
            let v = it
                .next()
                .ok_or_else(|| UsageError("--config needs a file path".into()))?;
            found = Some(v.clone());
        }
    }
    Ok(found)
}

fn flags_from_file(path: &str, known: &[String], given: &[&str]) -> anyhow::Result<Vec<String>> {
    let text = std::fs::read_to_string(Path::new(path)).with_context(|| format!("reading config {path}"))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("config {path} is not valid JSON: {e}")))?;
    let Value::Object(map) = value else {
        return Err(UsageError(format!("config {path} must hold a JSON object")).into());
    };
    let mut flags = Vec::new();
    for (key, v) in map {
        if !known.contains(&key) {
            return Err(UsageError(format!("unknown config key {key:?}")).into());
        }
        let name = key.replace('_', "-");
        if given.contains(&name.as_str()) {
            continue;
        }
        let flag = format!("--{name}");
        match v {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => flags.push(flag),
            Value::Array(items) => {
                let parts = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?;
                flags.push(format!("{flag}={}", parts.join(",")));
            }
            other => flags.push(format!("{flag}={}", scalar(&other)?)),
        }
    }
    Ok(flags)
}

fn scalar(v: &Value) -> Result<String, UsageError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        other => Err(UsageError(format!("config value {other} is not a scalar"))),
    }
}
