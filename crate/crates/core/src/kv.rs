//! `key=value` text files used for generator and benchmark configuration.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KvError {
    #[error("line {line}: expected `key=value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("key `{key}`: cannot parse {value:?}")]
    Value { key: String, value: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
}

/// Parsed key=value pairs. Blank lines and `#` comments are skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    entries: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, KvError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(KvError::Syntax { line: i + 1, text: raw.to_string() });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(KvError::Syntax { line: i + 1, text: raw.to_string() });
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(KvError::Duplicate { line: i + 1, key });
            }
        }
        Ok(Self { entries })
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, KvError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| KvError::Value { key: key.to_string(), value: v.clone() }),
        }
    }

    /// Fails on the first key not listed in `known`.
    pub fn check_keys(&self, known: &[&str]) -> Result<(), KvError> {
        match self.entries.keys().find(|k| !known.contains(&k.as_str())) {
            Some(k) => Err(KvError::UnknownKey(k.clone())),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_types_values() {
        let kv = KvFile::parse("# crowd\npedestrians = 40\n\nspeed_px_mean=37.5\n").unwrap();
        assert_eq!(kv.get::<u32>("pedestrians").unwrap(), Some(40));
        assert_eq!(kv.get::<f64>("speed_px_mean").unwrap(), Some(37.5));
        assert_eq!(kv.get::<f64>("missing").unwrap(), None);
        assert!(kv.get::<u32>("speed_px_mean").is_err());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(KvFile::parse("a=1\nnonsense"), Err(KvError::Syntax { line: 2, .. })));
        assert!(matches!(KvFile::parse("a=1\na=2"), Err(KvError::Duplicate { line: 2, .. })));
        let kv = KvFile::parse("a=1\nb=2").unwrap();
        assert_eq!(kv.check_keys(&["a"]), Err(KvError::UnknownKey("b".into())));
    }
}
