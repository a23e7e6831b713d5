use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};

/// `key=value` settings from an optional file; command-line flags win.
#[derive(Debug, Default, Clone)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("line {}: expected key=value", n + 1);
            };
            values.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(Self { values })
    }

    /// Flag value, else the file's value for `key`, else `default`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow::anyhow!("config key {key}={raw}: {e}")),
            None => Ok(default),
        }
    }

    pub fn pick_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.values
            .get(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|e| anyhow::anyhow!("config key {key}={raw}: {e}"))
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let s = Settings::parse("# comment\nseed = 7\nepochs=3\nbatch_size=4\n").unwrap();
        assert_eq!(s.pick(None, "seed", 0u64).unwrap(), 7);
        assert_eq!(s.pick(Some(9), "seed", 0u64).unwrap(), 9);
        assert_eq!(s.pick(None, "batch-size", 16usize).unwrap(), 4);
        assert_eq!(s.pick(None, "lr", 0.5f64).unwrap(), 0.5);
        assert!(s.pick(None, "epochs", 0u8).is_ok());
    }

    #[test]
    fn malformed_lines_are_rejected() {
        assert!(Settings::parse("seed 7").is_err());
        let s = Settings::parse("seed=abc").unwrap();
        assert!(s.pick(None, "seed", 0u64).is_err());
    }
}
