//! Key-value configuration text: one `key = value` per line, `#` comments.
//!
//! VM assignments use `vm.<hostname>.<disk> = <vm_id>`; `force_ro` takes a
//! comma-separated list of VM ids.

use std::collections::BTreeMap;

use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected key = value, got {line:?}"),
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: "empty key".into(),
                });
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(KeyValues { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
            })
            .transpose()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.insert(key.into(), value.to_string());
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KeyValues::parse("# run\nblock_size_bytes = 4096\n\n vm.hm.1=3 # hm\n").unwrap();
        assert_eq!(kv.get("block_size_bytes"), Some("4096"));
        assert_eq!(kv.get("vm.hm.1"), Some("3"));
        assert_eq!(
            kv.get_parsed::<u32>("block_size_bytes").unwrap(),
            Some(4096)
        );
        assert_eq!(KeyValues::parse(&kv.render()).unwrap(), kv);
    }

    #[test]
    fn rejects_lines_without_equals() {
        assert!(matches!(
            KeyValues::parse("a = 1\noops\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        let kv = KeyValues::parse("n = x").unwrap();
        assert!(kv.get_parsed::<u64>("n").is_err());
    }
}
