//! Flat `key = value` text files with `#` comments.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Result, WpalError};

#[derive(Clone, Debug)]
struct Entry {
    key: String,
    value: String,
    line: usize,
}

#[derive(Clone, Debug)]
pub struct KeyValues {
    source: PathBuf,
    entries: Vec<Entry>,
}

impl KeyValues {
    pub fn parse(text: &str, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let mut entries: Vec<Entry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(WpalError::Parse {
                    path: source,
                    line,
                    detail: format!("expected `key = value`, got `{content}`"),
                });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(WpalError::Parse {
                    path: source,
                    line,
                    detail: "empty key".into(),
                });
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(WpalError::Parse {
                    path: source,
                    line,
                    detail: format!("duplicate key `{key}`"),
                });
            }
            entries.push(Entry {
                key,
                value: v.trim().to_string(),
                line,
            });
        }
        Ok(KeyValues { source, entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| WpalError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.key.as_str())
    }

    pub fn parsed<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(e) = self.entries.iter().find(|e| e.key == key) else {
            return Ok(None);
        };
        e.value.parse::<T>().map(Some).map_err(|err| WpalError::Parse {
            path: self.source.clone(),
            line: e.line,
            detail: format!("bad value for `{key}`: {err}"),
        })
    }

    pub fn parsed_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.parsed(key)?.ok_or_else(|| WpalError::Parse {
            path: self.source.clone(),
            line: 0,
            detail: format!("missing key `{key}`"),
        })
    }

    /// Comma-separated list value.
    pub fn list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(e) = self.entries.iter().find(|e| e.key == key) else {
            return Ok(None);
        };
        e.value
            .split(',')
            .map(|s| s.trim().parse::<T>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|err| WpalError::Parse {
                path: self.source.clone(),
                line: e.line,
                detail: format!("bad list for `{key}`: {err}"),
            })
    }

    /// Rejects keys not accepted by `known`.
    pub fn check_known(&self, known: impl Fn(&str) -> bool) -> Result<()> {
        match self.entries.iter().find(|e| !known(&e.key)) {
            Some(e) => Err(WpalError::Parse {
                path: self.source.clone(),
                line: e.line,
                detail: format!("unknown key `{}`", e.key),
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let kv = KeyValues::parse("# header\na = 1\n b=2,3 # trailing\n\n", "x").unwrap();
        assert_eq!(kv.require::<u32>("a").unwrap(), 1);
        assert_eq!(kv.list::<u32>("b").unwrap().unwrap(), vec![2, 3]);
        assert!(kv.parsed::<u32>("c").unwrap().is_none());
    }

    #[test]
    fn reports_line_numbers() {
        match KeyValues::parse("a = 1\nnot a pair\n", "cfg.txt") {
            Err(WpalError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let kv = KeyValues::parse("a = 1\nb = x\n", "cfg.txt").unwrap();
        match kv.require::<f64>("b") {
            Err(WpalError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(KeyValues::parse("a = 1\na = 2\n", "cfg.txt").is_err());
    }
}
