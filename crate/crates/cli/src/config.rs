//! Seed lists and TOML configuration files.

use std::ffi::OsString;
use std::fs;

use sidco::{Error, Result};

/// Seeds requested on the command line, in order, without duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

/// Parses `7`, `1..10` (inclusive) or `1,4,9`.
pub fn parse_seeds(s: &str) -> std::result::Result<Seeds, String> {
    let s = s.trim();
    let bad = |e: std::num::ParseIntError| format!("bad seed in `{s}`: {e}");
    let mut seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (a.trim().parse::<u64>().map_err(bad)?, b.trim().parse::<u64>().map_err(bad)?);
        if a > b {
            return Err(format!("empty seed range `{s}`"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(|t| t.trim().parse::<u64>().map_err(bad)).collect::<std::result::Result<_, _>>()?
    };
    let mut seen = std::collections::HashSet::new();
    seeds.retain(|v| seen.insert(*v));
    Ok(Seeds(seeds))
}

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn flag_given(argv: &[OsString], flag: &str) -> bool {
    argv.iter().any(|a| {
        let s = a.to_string_lossy();
        s == flag || s.strip_prefix(flag).is_some_and(|r| r.starts_with('='))
    })
}

/// Appends `--key value` for every config entry whose flag is not already
/// present in `argv`.
pub fn merged_args(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path)?;
    let table: toml::Table = text.parse().map_err(|e| Error::Format(format!("{}: {e}", path.to_string_lossy())))?;
    for (key, value) in table {
        let flag = format!("--{key}");
        if flag_given(&argv, &flag) {
            continue;
        }
        let rendered = match value {
            toml::Value::Boolean(true) => {
                argv.push(flag.into());
                continue;
            }
            toml::Value::Boolean(false) => continue,
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    toml::Value::Integer(i) => Ok(i.to_string()),
                    toml::Value::Float(f) => Ok(f.to_string()),
                    other => Err(Error::Format(format!("unsupported list item for `{key}`: {other}"))),
                })
                .collect::<Result<Vec<_>>>()?
                .join(","),
            other => return Err(Error::Format(format!("unsupported value for `{key}`: {other}"))),
        };
        argv.push(flag.into());
        argv.push(rendered.into());
    }
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seeds("3").unwrap(), Seeds(vec![3]));
        assert_eq!(parse_seeds("1..4").unwrap(), Seeds(vec![1, 2, 3, 4]));
        assert_eq!(parse_seeds("5, 2,5").unwrap(), Seeds(vec![5, 2]));
        assert!(parse_seeds("4..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn config_fills_missing_flags_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(&p, "m = 15\nN = 30\nnonneg = true\nno_escape = false\nseeds = \"1..3\"\n").unwrap();
        let argv: Vec<OsString> =
            ["sidco", "design", "--m", "20", "--config", p.to_str().unwrap()].iter().map(OsString::from).collect();
        let out: Vec<String> = merged_args(argv).unwrap().into_iter().map(|a| a.into_string().unwrap()).collect();
        assert_eq!(out.iter().filter(|a| *a == "--m").count(), 1);
        assert!(out.windows(2).any(|w| w[0] == "--N" && w[1] == "30"));
        assert!(out.contains(&"--nonneg".to_string()));
        assert!(!out.iter().any(|a| a.contains("no_escape")));
        assert!(out.windows(2).any(|w| w[0] == "--seeds" && w[1] == "1..3"));
    }

    #[test]
    fn missing_config_is_io_error() {
        let argv = vec!["sidco".into(), "--config".into(), "/nonexistent/x.toml".into()];
        assert!(matches!(merged_args(argv), Err(Error::Io(_))));
    }
}
