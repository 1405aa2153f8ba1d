//! Layering of JSON config files under command-line flags.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches};
use serde_json::{Map, Value};

use crate::args::Cli;
use crate::CliError;

/// Parses `argv`, folding keys of the `--config` file in as flags the user did
/// not give. Keys that are not flags of the command are returned for the
/// command's own settings object.
pub fn parse(argv: Vec<OsString>) -> Result<(Cli, Map<String, Value>), CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok((try_parse(&argv)?, Map::new()));
    };
    let mut cmd = Cli::command();
    cmd.build();
    let names: Vec<String> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
    let Some(at) = argv.iter().position(|a| a.to_str().is_some_and(|a| names.iter().any(|n| n == a))) else {
        return Err(try_parse(&argv).err().unwrap_or_else(|| CliError::invalid("missing command (see --help)")));
    };
    let name = argv[at].to_str().expect("matched a command name");
    let sub = cmd.find_subcommand(name).expect("subcommand exists");
    let file = read_object(Path::new(&path))?;
    let mut injected = Vec::new();
    let mut extra = Map::new();
    for (key, value) in file {
        let flag = key.replace('_', "-");
        if flag == "config" {
            return Err(CliError::invalid(format!("{}: a config file cannot name another config file", path.display())));
        }
        let arg = sub.get_arguments().find(|a| a.get_long() == Some(flag.as_str()));
        let Some(arg) = arg.filter(|_| !value.is_null()) else {
            extra.insert(key, value);
            continue;
        };
        if arg.get_action().takes_values() {
            let text = match &value {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                _ => {
                    return Err(CliError::invalid(format!(
                        "{}: key '{key}' must be a string, number or boolean",
                        path.display()
                    )))
                }
            };
            injected.push(OsString::from(format!("--{flag}={text}")));
        } else {
            match value {
                Value::Bool(true) => injected.push(OsString::from(format!("--{flag}"))),
                Value::Bool(false) => {}
                _ => return Err(CliError::invalid(format!("{}: key '{key}' must be true or false", path.display()))),
            }
        }
    }
    let mut layered = argv[..=at].to_vec();
    layered.extend(injected);
    layered.extend_from_slice(&argv[at + 1..]);
    Ok((try_parse(&layered)?, extra))
}

/// The value of the last `--config` flag, read without validating the rest.
fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut found = None;
    let mut args = argv.iter().skip(1);
    while let Some(a) = args.next() {
        let Some(a) = a.to_str() else { continue };
        if a == "--" {
            break;
        } else if a == "--config" {
            found = args.next().map(PathBuf::from);
        } else if let Some(v) = a.strip_prefix("--config=") {
            found = Some(PathBuf::from(v));
        }
    }
    found
}

fn try_parse(argv: &[OsString]) -> Result<Cli, CliError> {
    let matches = Cli::command().try_get_matches_from(argv).map_err(CliError::from_clap)?;
    Cli::from_arg_matches(&matches).map_err(CliError::from_clap)
}

pub fn read_object(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::invalid(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::invalid(format!("{}: config must be a JSON object", path.display()))),
        Err(e) => Err(CliError::invalid(format!("{}: invalid JSON: {e}", path.display()))),
    }
}

/// Overlays `top` onto the object `base`, key by key (nested objects merge).
pub fn overlay(base: &mut Value, top: &Map<String, Value>) {
    let Value::Object(b) = base else { return };
    for (k, v) in top {
        match (b.get_mut(k), v) {
            (Some(slot @ Value::Object(_)), Value::Object(inner)) => overlay(slot, inner),
            _ => {
                b.insert(k.clone(), v.clone());
            }
        }
    }
}
