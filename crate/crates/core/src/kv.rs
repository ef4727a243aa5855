//! Flat `key = value` text files with `#` comments.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    source: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl KvFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{source}:{}: expected `key = value`",
                    i + 1
                )));
            };
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (v.trim().to_string(), i + 1)).is_some() {
                return Err(Error::Config(format!("{source}:{}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(KvFile {
            source: source.to_string(),
            entries,
        })
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (value.to_string(), 0));
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                Error::Config(format!("{}:{line}: bad value `{v}` for `{key}`", self.source))
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("{}: missing key `{key}`", self.source)))
    }

    /// Comma-separated list; absent key gives an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let Some((v, line)) = self.entries.get(key) else {
            return Ok(Vec::new());
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|_| {
                    Error::Config(format!("{}:{line}: bad list item `{s}` for `{key}`", self.source))
                })
            })
            .collect()
    }

    /// Fail on keys outside `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for (k, (_, line)) in &self.entries {
            if !known.contains(&k.as_str()) {
                return Err(Error::Config(format!("{}:{line}: unknown key `{k}`", self.source)));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, (v, _))| (k.as_str(), v.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_types() {
        let kv = KvFile::parse("# c\n a = 3\nb=x, y ,z # trailing\n\nflag = true\n", "t").unwrap();
        assert_eq!(kv.require::<u32>("a").unwrap(), 3);
        assert_eq!(kv.list::<String>("b").unwrap(), vec!["x", "y", "z"]);
        assert!(kv.require::<bool>("flag").unwrap());
        assert_eq!(kv.get_or("missing", 1.5).unwrap(), 1.5);
        assert!(kv.require::<u32>("b").is_err());
        assert!(kv.reject_unknown(&["a", "b"]).is_err());
    }

    #[test]
    fn errors_carry_lines() {
        let e = KvFile::parse("a = 1\nnot a pair\n", "f.cfg").unwrap_err().to_string();
        assert!(e.contains("f.cfg:2"), "{e}");
        assert!(KvFile::parse("a=1\na=2", "f").is_err());
    }
}
