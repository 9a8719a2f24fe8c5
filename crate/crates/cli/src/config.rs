//! Run settings: an optional `key = value` file whose entries are overridden
//! by command-line flags. Keys are the long flag names without dashes.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Every key accepted in a settings file, across all commands.
pub const KNOWN_KEYS: &[&str] = &[
    "masses",
    "inputs",
    "mass",
    "stiffness",
    "damping",
    "system",
    "out",
    "r",
    "gamma-max",
    "tau-b",
    "max-bisect",
    "lo",
    "hi",
    "n-grid",
    "fixed-samples",
    "sample-cap",
    "level-margin",
    "max-iter",
    "response-points",
    "verify-points",
    "repeats",
    "points",
    "seed",
    "threads",
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
    source: Option<PathBuf>,
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, and a repeated key is an error.
    pub fn parse(text: &str, source: Option<&Path>) -> Result<Self, CliError> {
        let origin = source.map_or_else(|| "settings".to_string(), |p| p.display().to_string());
        let mut values = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected `key = value`", k + 1)))?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("{origin}:{}: unknown key `{key}`", k + 1)));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("{origin}:{}: `{key}` given twice", k + 1)));
            }
        }
        Ok(Self {
            values,
            source: source.map(Path::to_path_buf),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read settings file {}: {e}", path.display())))?;
        Self::parse(&text, Some(path))
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| {
                let origin = self.source.as_ref().map_or("settings".into(), |p| p.display().to_string());
                CliError::Usage(format!("{origin}: bad value for `{key}`: `{v}` ({e})"))
            }),
        }
    }

    /// Flag, then file, then `None`.
    pub fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.from_file(key),
        }
    }

    /// Flag, then file, then `default`.
    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    /// Flag, then file; missing is a usage error.
    pub fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        self.opt(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("missing required setting `--{key}`")))
    }
}

/// Reduced orders as `a:b:step`, a comma list, or a single value. Every
/// order must be even and positive.
pub fn parse_orders(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("bad order list `{text}`: {why}"));
    let num = |s: &str| s.trim().parse::<usize>().map_err(|_| bad("not an integer"));
    let orders: Vec<usize> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let (a, b, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 2),
            [a, b, s] => (num(a)?, num(b)?, num(s)?),
            _ => return Err(bad("expected start:end[:step]")),
        };
        if step == 0 || b < a {
            return Err(bad("need start <= end and a positive step"));
        }
        (a..=b).step_by(step).collect()
    } else {
        text.split(',').map(num).collect::<Result<_, _>>()?
    };
    if orders.is_empty() {
        return Err(bad("empty"));
    }
    if let Some(r) = orders.iter().find(|&&r| r == 0 || r % 2 != 0) {
        return Err(bad(&format!("{r} is not a positive even order")));
    }
    Ok(orders)
}

pub fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be positive, got {v}")))
    }
}

pub fn at_least(name: &str, v: usize, min: usize) -> Result<usize, CliError> {
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("--{name} must be at least {min}, got {v}")))
    }
}
