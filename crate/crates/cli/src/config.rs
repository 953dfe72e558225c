//! `key = value` config files. Any long flag can be given here (dashes or
//! underscores); a flag on the command line wins over the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", no + 1)))?;
            values.insert(normalize(k), v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(&normalize(key)).map(String::as_str)
    }

    /// Entries under `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> Vec<(&str, &str)> {
        let p = format!("{prefix}.");
        self.values
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s, v.as_str())))
            .collect()
    }

    /// Flag value, else file value, else nothing.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key '{key}': cannot parse '{v}'"))),
        }
    }

    pub fn pick_or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    /// Comma-separated list.
    pub fn pick_list<T: FromStr + Clone>(
        &self,
        flag: Option<&str>,
        key: &str,
        default: &[T],
    ) -> Result<Vec<T>, CliError> {
        let text = match flag.or_else(|| self.raw(key)) {
            None => return Ok(default.to_vec()),
            Some(t) => t,
        };
        let items: Vec<T> = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Usage(format!("{key}: cannot parse '{s}'")))
            })
            .collect::<Result<_, _>>()?;
        if items.is_empty() {
            return Err(CliError::Usage(format!("{key}: list is empty")));
        }
        Ok(items)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_file() {
        let c = ConfigFile::parse("seq-len = 30\nthreshold=0.5 # comment\nsynth.n_flocks = 3\n").unwrap();
        assert_eq!(c.pick_or(None, "seq_len", 100usize).unwrap(), 30);
        assert_eq!(c.pick_or(Some(60usize), "seq_len", 100).unwrap(), 60);
        assert_eq!(c.pick_or(None::<f64>, "threshold", 0.9).unwrap(), 0.5);
        assert_eq!(c.pick_or(None::<u64>, "seed", 7).unwrap(), 7);
        assert_eq!(c.section("synth"), vec![("n_flocks", "3")]);
        assert!(ConfigFile::parse("nonsense").is_err());
        assert!(c.pick::<usize>(None, "threshold").is_err());
    }

    #[test]
    fn lists() {
        let c = ConfigFile::parse("archs = rnn, lstm").unwrap();
        let v: Vec<String> = c.pick_list(None, "archs", &[]).unwrap();
        assert_eq!(v, vec!["rnn", "lstm"]);
        let v: Vec<usize> = c.pick_list(Some("1,2"), "hidden_sizes", &[5]).unwrap();
        assert_eq!(v, vec![1, 2]);
        let v: Vec<usize> = c.pick_list(None, "hidden_sizes", &[5]).unwrap();
        assert_eq!(v, vec![5]);
    }
}
