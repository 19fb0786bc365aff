//! Flat `key = value` configuration files, spliced into the argument list
//! ahead of the command-line flags so that flags take precedence.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Keys that are switches rather than valued options.
const SWITCHES: [&str; 2] = ["svg", "conditioned"];

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key = value, got '{}'", n + 1, raw.trim());
        };
        let key = key.trim().replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn to_flags(pairs: &[(String, String)]) -> Result<Vec<OsString>> {
    let mut flags = Vec::new();
    for (key, value) in pairs {
        if key == "config" {
            bail!("config files cannot include other config files");
        }
        if SWITCHES.contains(&key.as_str()) {
            match value.as_str() {
                "true" | "yes" | "1" => flags.push(format!("--{key}").into()),
                "false" | "no" | "0" => {}
                other => bail!("'{key}' expects true or false, got '{other}'"),
            }
        } else {
            flags.push(format!("--{key}={value}").into());
        }
    }
    Ok(flags)
}

/// Removes `--config FILE` from `args` and inserts the file's settings right
/// after the subcommand name.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(a) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            let path = iter.next().context("--config needs a file")?;
            config = Some(path);
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(OsString::from(path));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let text = fs::read_to_string(Path::new(&path))
        .with_context(|| format!("reading config file {}", path.to_string_lossy()))?;
    let flags = to_flags(&parse(&text)?)?;
    // the first argument that is not a flag (after the program name) is the subcommand
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map(|i| i + 2)
        .unwrap_or(rest.len());
    let tail = rest.split_off(at.min(rest.len()));
    rest.extend(flags);
    rest.extend(tail);
    Ok(rest)
}
