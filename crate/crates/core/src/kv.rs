//! Line-oriented `key = value` text with optional `[section]` headers and `#` comments.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub section: String,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| Error::Config {
                line,
                msg: format!("unterminated section header `{content}`"),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config {
                line,
                msg: "empty key".into(),
            });
        }
        out.push(Entry {
            line,
            section: section.clone(),
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

impl Entry {
    pub fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::Config {
            line: self.line,
            msg: format!("{}: {msg}", self.qualified()),
        }
    }

    pub fn qualified(&self) -> String {
        if self.section.is_empty() {
            self.key.clone()
        } else {
            format!("{}.{}", self.section, self.key)
        }
    }

    pub fn parse<T: std::str::FromStr>(&self) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| self.err(format!("cannot parse `{}`", self.value)))
    }

    pub fn f64(&self) -> Result<f64> {
        let v: f64 = self.parse()?;
        if v.is_nan() {
            return Err(self.err("NaN is not allowed"));
        }
        Ok(v)
    }

    pub fn usize_list(&self) -> Result<Vec<usize>> {
        if self.value.trim().is_empty() || self.value.trim() == "none" {
            return Ok(Vec::new());
        }
        self.value
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| self.err(format!("cannot parse list item `{}`", p.trim())))
            })
            .collect()
    }

    pub fn f64_list(&self) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(|p| match p.trim().parse::<f64>() {
                Ok(v) if !v.is_nan() => Ok(v),
                _ => Err(self.err(format!("cannot parse list item `{}`", p.trim()))),
            })
            .collect()
    }

    /// Rows separated by `;`, entries by whitespace.
    pub fn matrix(&self) -> Result<Vec<Vec<f64>>> {
        self.value
            .split(';')
            .map(|row| {
                row.split_whitespace()
                    .map(|v| v.parse().map_err(|_| self.err(format!("bad matrix entry `{v}`"))))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_comments_and_lines() {
        let e = parse("# top\nseed = 3\n\n[trpo]\ndelta = 0.01 # nats\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(e[0].key, "seed");
        assert_eq!(e[1].section, "trpo");
        assert_eq!(e[1].line, 5);
        assert_eq!(e[1].f64().unwrap(), 0.01);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse("a = 1\nbogus\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse("[x\n").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn matrices() {
        let e = &parse("a = 1 0.1; 0.1 1").unwrap()[0];
        assert_eq!(e.matrix().unwrap(), vec![vec![1.0, 0.1], vec![0.1, 1.0]]);
    }
}
