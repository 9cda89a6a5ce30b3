//! `key=value` configuration files.
//!
//! Every long flag of a subcommand can be given in a file instead, one per
//! line, without the leading dashes (`delta = 0.4`, `mesh = uniform`). Blank
//! lines and `#` comments are ignored; a bare `key` or `key = true` sets a
//! switch. Flags on the command line win over the file.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected key=value, got '{text}'")]
    Syntax {
        path: String,
        line: usize,
        text: String,
    },
    #[error("--config needs a file name")]
    MissingPath,
}

/// Parse the text of a config file into command-line style arguments.
pub fn parse(text: &str, origin: &str) -> Result<Vec<String>, ConfigError> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), Some(v.trim())),
            None => (line, None),
        };
        let valid = !key.is_empty()
            && key
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !valid {
            return Err(ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
                text: raw.to_string(),
            });
        }
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            None | Some("true") => args.push(flag),
            Some("false") => {}
            Some(v) => {
                args.push(flag);
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

/// Expand `--config FILE` (or `--config=FILE`) in an argument list.
///
/// The file's flags are inserted right after the subcommand name, before the
/// remaining command-line flags, so that explicit flags override them.
pub fn expand(args: Vec<String>) -> Result<Vec<String>, ConfigError> {
    let mut rest = Vec::with_capacity(args.len());
    let mut files = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            files.push(iter.next().ok_or(ConfigError::MissingPath)?);
        } else if let Some(path) = arg.strip_prefix("--config=") {
            files.push(path.to_string());
        } else {
            rest.push(arg);
        }
    }
    if files.is_empty() {
        return Ok(rest);
    }
    let mut from_files = Vec::new();
    for file in files {
        let text =
            std::fs::read_to_string(Path::new(&file)).map_err(|source| ConfigError::Read {
                path: file.clone(),
                source,
            })?;
        from_files.extend(parse(&text, &file)?);
    }
    // program name, then the subcommand if there is one
    let split = rest
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map_or(rest.len().min(1), |p| p + 2);
    let tail = rest.split_off(split);
    rest.extend(from_files);
    rest.extend(tail);
    Ok(rest)
}
