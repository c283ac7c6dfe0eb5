//! Plain-text `key = value` block files.
//!
//! Shared by calibration files and pipeline configs:
//!
//! ```text
//! # comments start with '#', anywhere on a line
//! name = left
//! fx = 696.0
//!
//! name = right      # a blank line starts the next block
//! ```
//!
//! Keys are unique within a block. Values are the trimmed remainder of the
//! line after the first `=`. Multi-number values are whitespace or comma
//! separated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    source: PathBuf,
    pub line: usize,
    pub entries: Vec<Entry>,
}

pub fn parse_str(text: &str, source: &Path) -> Result<Vec<Block>> {
    let mut blocks = Vec::new();
    let mut current: Option<Block> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            // comment-only lines do not terminate a block
            if raw.trim().is_empty() {
                blocks.extend(current.take());
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: source.to_path_buf(),
            line: line_no,
            reason: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                line: line_no,
                reason: "empty key".into(),
            });
        }
        let block = current.get_or_insert_with(|| Block {
            source: source.to_path_buf(),
            line: line_no,
            entries: Vec::new(),
        });
        if block.entries.iter().any(|e| e.key == key) {
            return Err(Error::Parse {
                path: source.to_path_buf(),
                line: line_no,
                reason: format!("duplicate key `{key}`"),
            });
        }
        block.entries.push(Entry {
            key: key.to_string(),
            value: value.trim().to_string(),
            line: line_no,
        });
    }
    blocks.extend(current);
    Ok(blocks)
}

/// Joins blocks into one, for files where blank lines only group keys.
/// A key may still appear only once.
pub fn merge(blocks: Vec<Block>, source: &Path) -> Result<Block> {
    let mut merged = Block::new(source);
    merged.line = blocks.first().map_or(0, |b| b.line);
    for e in blocks.into_iter().flat_map(|b| b.entries) {
        if merged.get(&e.key).is_some() {
            return Err(merged.error(e.line, format!("duplicate key `{}`", e.key)));
        }
        merged.entries.push(e);
    }
    Ok(merged)
}

pub fn parse_file(path: &Path) -> Result<Vec<Block>> {
    let text = std::fs::read_to_string(path)?;
    parse_str(&text, path)
}

impl Block {
    pub fn new(source: impl Into<PathBuf>) -> Self {
        Block {
            source: source.into(),
            line: 0,
            entries: Vec::new(),
        }
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entry(key).map(|e| e.value.as_str())
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn error(&self, line: usize, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line,
            reason: reason.into(),
        }
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| self.error(self.line, format!("missing key `{key}`")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| self.error(e.line, format!("cannot parse `{key}` from `{}`", e.value))),
        }
    }

    pub fn parse_required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| self.error(self.line, format!("missing key `{key}`")))
    }

    pub fn parse_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(e) = self.entry(key) else {
            return Ok(None);
        };
        e.value
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| self.error(e.line, format!("cannot parse `{s}` in `{key}`")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Parses a list that must have exactly `n` items.
    pub fn parse_array<T: FromStr>(&self, key: &str, n: usize) -> Result<Option<Vec<T>>> {
        let Some(values) = self.parse_list(key)? else {
            return Ok(None);
        };
        if values.len() != n {
            let line = self.entry(key).map_or(self.line, |e| e.line);
            return Err(self.error(
                line,
                format!("`{key}` needs {n} values, found {}", values.len()),
            ));
        }
        Ok(Some(values))
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push(Entry {
            key: key.into(),
            value: value.to_string(),
            line: 0,
        });
    }

    /// Rejects keys not in `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !allowed.contains(&e.key.as_str())) {
            Some(e) => Err(self.error(e.line, format!("unknown key `{}`", e.key))),
            None => Ok(()),
        }
    }
}

pub fn render(blocks: &[Block]) -> String {
    let mut out = String::new();
    for (i, block) in blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for e in &block.entries {
            let _ = writeln!(out, "{} = {}", e.key, e.value);
        }
    }
    out
}
