use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use wpal::{Result, WpalError};

/// Self-description of one run, written to its output directory before any
/// work starts. Contains no timestamps so identical runs produce identical
/// files.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    pub subcommand: String,
    entries: Vec<(String, String)>,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        let mut m = RunManifest {
            subcommand: subcommand.to_string(),
            entries: Vec::new(),
        };
        m.set("tool.version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn path(&mut self, key: &str, path: &Path) -> &mut Self {
        self.set(key, path.display())
    }

    /// Adds every `key = value` line of a config text under `prefix.`.
    pub fn config(&mut self, prefix: &str, text: &str) -> &mut Self {
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.set(&format!("{prefix}.{}", k.trim()), v.trim());
            }
        }
        self
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("subcommand = {}\n", self.subcommand);
        for (k, v) in &self.entries {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    /// Creates `dir` if needed and writes the manifest into it.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| WpalError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| WpalError::Io { path, source: e })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_is_ordered_and_prefixed() {
        let mut m = RunManifest::new("train");
        m.set("seed", 3).config("train", "epochs = 2\nloss = plain\n");
        let t = m.to_text();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "subcommand = train");
        assert!(lines[1].starts_with("tool.version = "));
        assert_eq!(&lines[2..], ["seed = 3", "train.epochs = 2", "train.loss = plain"]);
    }
}
