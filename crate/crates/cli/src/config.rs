// Copyright 2026 The m2cs-emu Authors
// SPDX-License-Identifier: Apache-2.0

//! Flat `key = value` configuration with per-benchmark schemas.
//!
//! Files hold one assignment per line; `#` starts a comment. Keys may be
//! written with `-` or `_`. Command-line `--key value` pairs override the
//! file, and every key must be declared by the benchmark's schema.

use std::collections::BTreeMap;

use serde_json::Value;
use thiserror::Error;

/// Keys handled by the harness itself rather than a benchmark.
pub const RESERVED: [&str; 6] = ["seed", "out", "config", "remote", "plot", "chassis"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{0}` is set twice")]
    Duplicate(String),
    #[error("`{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("override `{0}` has no value")]
    MissingValue(String),
    #[error("`{0}` is a harness option; pass it as --{0}")]
    Reserved(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    /// Closed range; `exclusive_min` rejects the lower bound itself.
    Float {
        min: f64,
        max: f64,
        exclusive_min: bool,
    },
    Int {
        min: i64,
        max: i64,
    },
    Bool,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub kind: Kind,
    pub doc: &'static str,
}

impl Key {
    pub const fn float(name: &'static str, default: &'static str, min: f64, max: f64, doc: &'static str) -> Key {
        Key {
            name,
            default,
            kind: Kind::Float {
                min,
                max,
                exclusive_min: false,
            },
            doc,
        }
    }

    /// Strictly positive float bounded by `max`.
    pub const fn positive(name: &'static str, default: &'static str, max: f64, doc: &'static str) -> Key {
        Key {
            name,
            default,
            kind: Kind::Float {
                min: 0.0,
                max,
                exclusive_min: true,
            },
            doc,
        }
    }

    pub const fn int(name: &'static str, default: &'static str, min: i64, max: i64, doc: &'static str) -> Key {
        Key {
            name,
            default,
            kind: Kind::Int { min, max },
            doc,
        }
    }

    pub const fn flag(name: &'static str, default: &'static str, doc: &'static str) -> Key {
        Key {
            name,
            default,
            kind: Kind::Bool,
            doc,
        }
    }

    pub const fn choice(
        name: &'static str,
        default: &'static str,
        of: &'static [&'static str],
        doc: &'static str,
    ) -> Key {
        Key {
            name,
            default,
            kind: Kind::Choice(of),
            doc,
        }
    }

    fn parse(&self, raw: &str) -> Result<Value, ConfigError> {
        let bad = |reason: String| ConfigError::BadValue {
            key: self.name.to_string(),
            reason,
        };
        match self.kind {
            Kind::Float {
                min,
                max,
                exclusive_min,
            } => {
                let x: f64 = raw.parse().map_err(|_| bad(format!("{raw:?} is not a number")))?;
                let low_ok = if exclusive_min { x > min } else { x >= min };
                if !x.is_finite() || !low_ok || x > max {
                    let lo = if exclusive_min { "(" } else { "[" };
                    return Err(bad(format!("{x} outside {lo}{min}, {max}]")));
                }
                Ok(Value::from(x))
            }
            Kind::Int { min, max } => {
                let x: i64 = raw.parse().map_err(|_| bad(format!("{raw:?} is not an integer")))?;
                if x < min || x > max {
                    return Err(bad(format!("{x} outside [{min}, {max}]")));
                }
                Ok(Value::from(x))
            }
            Kind::Bool => match raw {
                "true" | "yes" | "1" | "on" => Ok(Value::Bool(true)),
                "false" | "no" | "0" | "off" => Ok(Value::Bool(false)),
                _ => Err(bad(format!("{raw:?} is not a boolean"))),
            },
            Kind::Choice(of) => {
                if of.contains(&raw) {
                    Ok(Value::from(raw))
                } else {
                    Err(bad(format!("{raw:?} is not one of {}", of.join(", "))))
                }
            }
        }
    }
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

/// Assignments from a config file, in file order.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
        let k = normalize(k);
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: n + 1 });
        }
        if out.iter().any(|(seen, _): &(String, String)| *seen == k) {
            return Err(ConfigError::Duplicate(k));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

/// `--key value` and `--key=value` pairs. A bare `--key` followed by
/// another option or nothing is a boolean `true`.
pub fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut it = args.iter().peekable();
    while let Some(a) = it.next() {
        let Some(body) = a.strip_prefix("--") else {
            return Err(ConfigError::Syntax { line: 0 });
        };
        if let Some((k, v)) = body.split_once('=') {
            out.push((normalize(k), v.to_string()));
            continue;
        }
        match it.peek() {
            Some(v) if !v.starts_with("--") => out.push((normalize(body), it.next().cloned().unwrap_or_default())),
            _ => out.push((normalize(body), "true".to_string())),
        }
    }
    Ok(out)
}

/// Resolved, typed values for one benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<String, Value>,
}

impl Config {
    /// Defaults, then file assignments, then overrides.
    pub fn resolve(
        schema: &[Key],
        file: &[(String, String)],
        overrides: &[(String, String)],
    ) -> Result<Config, ConfigError> {
        let mut raw: BTreeMap<String, String> = schema
            .iter()
            .map(|k| (k.name.to_string(), k.default.to_string()))
            .collect();
        for (k, v) in file.iter().chain(overrides) {
            if RESERVED.contains(&k.as_str()) {
                return Err(ConfigError::Reserved(k.clone()));
            }
            let slot = raw.get_mut(k).ok_or_else(|| ConfigError::UnknownKey(k.clone()))?;
            *slot = v.clone();
        }
        let values = schema
            .iter()
            .map(|k| Ok((k.name.to_string(), k.parse(&raw[k.name])?)))
            .collect::<Result<_, ConfigError>>()?;
        Ok(Config { values })
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    fn get(&self, key: &str) -> &Value {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not in the schema"))
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).as_f64().expect("schema type")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.get(key).as_i64().expect("schema type") as usize
    }

    pub fn u32(&self, key: &str) -> u32 {
        self.get(key).as_i64().expect("schema type") as u32
    }

    pub fn bool(&self, key: &str) -> bool {
        self.get(key).as_bool().expect("schema type")
    }

    pub fn str(&self, key: &str) -> &str {
        self.get(key).as_str().expect("schema type")
    }

    /// Rejects a combination of values the per-key ranges cannot express.
    pub fn check(&self, ok: bool, key: &str, reason: impl Into<String>) -> Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            Err(ConfigError::BadValue {
                key: key.to_string(),
                reason: reason.into(),
            })
        }
    }
}
