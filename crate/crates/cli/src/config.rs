//! Config files: a JSON object carrying any of a subcommand's flags by
//! their snake_case names, plus a mandatory `"schema"` tag. Explicit
//! command-line flags override config values.

use std::path::Path;

use dbsloc_core::{Error, Result};
use serde::de::DeserializeOwned;

pub const CONFIG_SCHEMA: u32 = 1;

/// Parse a config file into a subcommand's argument struct. Unknown keys
/// are errors: a typo must not silently fall back to a default.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let Some(obj) = value.as_object_mut() else {
        return Err(Error::format(path, "config must be a JSON object".to_string()));
    };
    match obj.remove("schema") {
        Some(serde_json::Value::Number(n)) if n.as_u64() == Some(u64::from(CONFIG_SCHEMA)) => {}
        Some(other) => {
            return Err(Error::format(
                path,
                format!("unsupported config schema {other} (expected {CONFIG_SCHEMA})"),
            ))
        }
        None => {
            return Err(Error::format(
                path,
                format!("missing \"schema\" key (expected {CONFIG_SCHEMA})"),
            ))
        }
    }
    serde_json::from_value(value).map_err(|e| Error::format(path, e.to_string()))
}

/// `cli.or(file)`: a flag given on the command line wins over the config.
pub fn prefer<T>(cli: Option<T>, file: Option<T>) -> Option<T> {
    cli.or(file)
}

/// List-valued flags merge the same way: a non-empty command line wins.
pub fn prefer_list<T>(cli: Vec<T>, file: Vec<T>) -> Vec<T> {
    if cli.is_empty() {
        file
    } else {
        cli
    }
}

/// A required setting that neither the command line nor the config gave.
pub fn missing(flag: &str) -> Error {
    Error::InvalidParameter(format!("--{flag} is required (flag or config file)"))
}
