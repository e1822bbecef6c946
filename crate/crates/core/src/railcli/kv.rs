use crate::{Error, Result};

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(Error::Config {
                line,
                reason: format!("expected `key = value`, got `{content}`"),
            });
        };
        let (key, value) = (k.trim(), v.trim());
        if key.is_empty() {
            return Err(Error::Config {
                line,
                reason: "empty key".into(),
            });
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
    }
    Ok(out)
}

impl Entry {
    pub fn number(&self) -> Result<f64> {
        let v: f64 = self.value.parse().map_err(|_| Error::Config {
            line: self.line,
            reason: format!("{}: `{}` is not a number", self.key, self.value),
        })?;
        if !v.is_finite() {
            return Err(self.invalid("must be finite"));
        }
        Ok(v)
    }

    pub fn integer(&self) -> Result<u64> {
        self.value.parse().map_err(|_| Error::Config {
            line: self.line,
            reason: format!(
                "{}: `{}` is not a non-negative integer",
                self.key, self.value
            ),
        })
    }

    pub fn numbers(&self, n: usize) -> Result<Vec<f64>> {
        let vals: Vec<f64> = self
            .value
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| self.invalid("expects numbers"))?;
        if vals.len() != n {
            return Err(self.invalid(&format!("expects {n} numbers")));
        }
        Ok(vals)
    }

    pub fn invalid(&self, why: &str) -> Error {
        Error::Config {
            line: self.line,
            reason: format!("{}: {why}", self.key),
        }
    }

    pub fn unknown(&self) -> Error {
        Error::Config {
            line: self.line,
            reason: format!("unknown key `{}`", self.key),
        }
    }
}

/// Checks that a value is strictly positive.
pub fn positive(e: &Entry, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(e.invalid("must be positive"))
    }
}

pub fn non_negative(e: &Entry, v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(e.invalid("must not be negative"))
    }
}
