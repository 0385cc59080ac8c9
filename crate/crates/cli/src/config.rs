// SPDX-License-Identifier: MIT OR Apache-2.0

//! `--config FILE` support: values from a JSON object are appended to argv
//! as flags of the selected subcommand, unless given explicitly.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgAction, CommandFactory};
use serde_json::Value;

use crate::args::Cli;

#[derive(Debug)]
pub enum ConfigError {
    /// Unknown key or unusable value; reported as a usage error.
    Usage(String),
    Runtime(saelang::Error),
}

const GLOBAL: [&str; 1] = ["threads"];

fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn given(argv: &[OsString], long: &str) -> bool {
    let flag = format!("--{long}");
    let eq = format!("--{long}=");
    argv.iter().skip(1).any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.starts_with(&eq)
    })
}

fn scalar(key: &str, v: &Value) -> Result<String, ConfigError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(ConfigError::Usage(format!(
            "config key {key:?}: expected a string or number"
        ))),
    }
}

pub fn merge(argv: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| ConfigError::Runtime(saelang::Error::from(e).at(&path)))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| ConfigError::Runtime(saelang::Error::from(e).at(&path)))?;
    let Value::Object(map) = value else {
        return Err(ConfigError::Usage(
            "config file must hold a JSON object".into(),
        ));
    };

    // descend to the subcommand named on the command line
    let mut cmd = Cli::command();
    for a in argv.iter().skip(1) {
        let s = a.to_string_lossy();
        if s.starts_with('-') {
            continue;
        }
        if let Some(sub) = cmd.find_subcommand(s.as_ref()) {
            cmd = sub.clone();
        }
    }

    let mut out = argv.clone();
    for (key, v) in &map {
        let long = key.replace('_', "-");
        if long == "config" {
            return Err(ConfigError::Usage("config files cannot nest".into()));
        }
        let arg = cmd
            .get_arguments()
            .find(|a| a.get_long() == Some(long.as_str()));
        let action = match arg {
            Some(a) => a.get_action().clone(),
            None if GLOBAL.contains(&long.as_str()) => ArgAction::Set,
            None => {
                return Err(ConfigError::Usage(format!(
                    "config key {key:?} is not a flag of `{}`",
                    cmd.get_name()
                )))
            }
        };
        if given(&argv, &long) {
            continue;
        }
        let flag = OsString::from(format!("--{long}"));
        match (action, v) {
            (ArgAction::SetTrue, Value::Bool(b)) => {
                if *b {
                    out.push(flag);
                }
            }
            (ArgAction::SetTrue, _) => {
                return Err(ConfigError::Usage(format!(
                    "config key {key:?}: expected a boolean"
                )))
            }
            (_, Value::Array(items)) => {
                for item in items {
                    out.push(flag.clone());
                    out.push(scalar(key, item)?.into());
                }
            }
            (_, Value::Null) => {}
            (_, v) => {
                out.push(flag);
                out.push(scalar(key, v)?.into());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    fn with_config(json: &str, argv: &[&str]) -> Result<Vec<String>, ConfigError> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, json).unwrap();
        let mut a = os(argv);
        a.push("--config".into());
        a.push(p.clone().into());
        merge(a).map(|v| {
            v.into_iter()
                .skip(argv.len() + 2)
                .map(|s| s.to_string_lossy().into_owned())
                .collect()
        })
    }

    #[test]
    fn explicit_flags_win() {
        let added = with_config(
            r#"{"n_min": 90, "t-threshold": 40, "decouple_filters": true}"#,
            &[
                "saelang", "lape", "find", "--tables", "t.json", "--n-min", "95",
            ],
        )
        .unwrap();
        assert_eq!(added, ["--decouple-filters", "--t-threshold", "40"]);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let r = with_config(r#"{"bogus": 1}"#, &["saelang", "lape", "find"]);
        assert!(matches!(r, Err(ConfigError::Usage(_))));
    }

    #[test]
    fn no_config_is_identity() {
        let a = os(&["saelang", "lape", "find"]);
        assert_eq!(merge(a.clone()).unwrap(), a);
    }
}
