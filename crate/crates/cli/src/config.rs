//! `key=value` config files merged into the command line. Flags given on the
//! command line take precedence.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got {raw:?}", lineno + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() || key.starts_with('-') {
            bail!("config line {}: invalid key {k:?}", lineno + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Flag tokens for config entries. Boolean entries become bare flags.
fn to_flags(entries: &[(String, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in entries {
        match v.as_str() {
            "true" => out.push(format!("--{k}")),
            "false" => {}
            _ => out.push(format!("--{k}={v}")),
        }
    }
    out
}

/// Removes `--config FILE` from `args` and splices the file's flags in
/// directly after the subcommand, ahead of the explicit flags.
pub fn merge(mut args: Vec<String>, subcommands: &[&str]) -> Result<Vec<String>> {
    let mut path = None;
    let mut i = 1;
    while i < args.len() {
        if args[i] == "--config" {
            if i + 1 >= args.len() {
                bail!("--config needs a file path");
            }
            path = Some(args.remove(i + 1));
            args.remove(i);
        } else if let Some(p) = args[i].strip_prefix("--config=") {
            path = Some(p.to_string());
            args.remove(i);
        } else {
            i += 1;
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = fs::read_to_string(Path::new(&path)).with_context(|| format!("reading config file {path}"))?;
    let flags = to_flags(&parse(&text)?);
    let at = match args.iter().position(|a| subcommands.contains(&a.as_str())) {
        Some(p) => p + 1,
        None => args.len(),
    };
    args.splice(at..at, flags);
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parses_comments_and_booleans() {
        let e = parse("# comment\nn = 3\nharvest=true\nparity = false\nmemory_cap=100 # inline\n").unwrap();
        assert_eq!(to_flags(&e), v(&["--n=3", "--harvest", "--memory-cap=100"]));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse("just words").is_err());
        assert!(parse("=3").is_err());
    }

    #[test]
    fn config_goes_before_explicit_flags() {
        let dir = std::env::temp_dir().join(format!("vu-config-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let f = dir.join("c.conf");
        fs::write(&f, "n=4\n").unwrap();
        let args = v(&["bin", "herald", "--config", f.to_str().unwrap(), "--n", "3"]);
        let merged = merge(args, &["herald"]).unwrap();
        assert_eq!(merged, v(&["bin", "herald", "--n=4", "--n", "3"]));
    }
}
