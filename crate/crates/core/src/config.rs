//! `key = value` configuration text with `#` comments and dotted keys.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parsed key/value pairs. Typed getters consume keys; [`KeyValues::finish`]
/// rejects anything left over, so unknown keys never pass silently.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", n + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        Ok(KeyValues { map })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        KeyValues::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Display) {
        self.map.insert(key.into(), value.to_string());
    }

    pub fn contains(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    pub fn take<V: FromStr>(&mut self, key: &str) -> Result<Option<V>>
    where
        V::Err: Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{v}`: {e}"))),
        }
    }

    pub fn take_or<V: FromStr>(&mut self, key: &str, default: V) -> Result<V>
    where
        V::Err: Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn take_list<V: FromStr>(&mut self, key: &str) -> Result<Option<Vec<V>>>
    where
        V::Err: Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{s}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Splits off every key under `prefix.` (prefix removed).
    pub fn section(&mut self, prefix: &str) -> KeyValues {
        let dotted = format!("{prefix}.");
        let keys: Vec<String> = self.map.keys().filter(|k| k.starts_with(&dotted)).cloned().collect();
        let mut out = BTreeMap::new();
        for k in keys {
            let v = self.map.remove(&k).unwrap();
            out.insert(k[dotted.len()..].to_string(), v);
        }
        KeyValues { map: out }
    }

    pub fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            None => Ok(()),
            Some(_) => Err(Error::Config(format!(
                "unrecognized key(s): {}",
                self.map.keys().cloned().collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn to_text(&self) -> String {
        self.map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn with_prefix(&self, prefix: &str) -> KeyValues {
        KeyValues {
            map: self.map.iter().map(|(k, v)| (format!("{prefix}.{k}"), v.clone())).collect(),
        }
    }

    pub fn extend(&mut self, other: KeyValues) {
        self.map.extend(other.map);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_consume() {
        let mut kv = KeyValues::parse("# header\na.x = 3\na.list = 1, 2,3 # trailing\n\nb = hello\n").unwrap();
        let mut a = kv.section("a");
        assert_eq!(a.take::<u32>("x").unwrap(), Some(3));
        assert_eq!(a.take_list::<u32>("list").unwrap(), Some(vec![1, 2, 3]));
        a.finish().unwrap();
        assert_eq!(kv.take::<String>("b").unwrap().as_deref(), Some("hello"));
        kv.finish().unwrap();
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let kv = KeyValues::parse("mystery = 1").unwrap();
        assert!(matches!(kv.finish(), Err(Error::Config(_))));
        assert!(KeyValues::parse("a = 1\na = 2").is_err());
        assert!(KeyValues::parse("no equals sign").is_err());
        let mut kv = KeyValues::parse("n = abc").unwrap();
        assert!(kv.take::<u32>("n").is_err());
    }
}
