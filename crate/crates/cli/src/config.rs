//! Flat `key = value` configuration with `[section]` headers.
//!
//! Keys are addressed as `section.key`. Lines starting with `#` or `;` are
//! comments. Overrides given on the command line use the same dotted form
//! and replace file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            values.insert(key, v.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn set_override(&mut self, kv: &str) -> Result<(), CliError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override '{kv}' is not key=value")))?;
        let k = k.trim();
        if !k.contains('.') {
            return Err(CliError::Usage(format!(
                "override key '{k}' must be section.key"
            )));
        }
        self.values.insert(k.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| CliError::Config(format!("{key} = '{v}' is not valid"))),
        }
    }

    /// Comma-separated list; `default` when absent.
    pub fn list<T: FromStr>(&self, key: &str, default: &str) -> Result<Vec<T>, CliError> {
        let v = self.values.get(key).map(String::as_str).unwrap_or(default);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Config(format!("{key}: '{s}' is not valid")))
            })
            .collect()
    }

    /// SNR grid written as `a,b,c` or as a range `start:step:stop`.
    pub fn snr_grid(&self, key: &str, default: &str) -> Result<Vec<f64>, CliError> {
        let v = self.values.get(key).map(String::as_str).unwrap_or(default);
        let bad = || CliError::Config(format!("{key} = '{v}' is not a list or start:step:stop"));
        if v.contains(':') {
            let parts: Vec<f64> = v
                .split(':')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad())?;
            let [start, step, stop] = parts[..] else {
                return Err(bad());
            };
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|k| start + k as f64 * step).collect())
        } else {
            self.list(key, default)
        }
    }

    /// Renders the configuration back into the file format, grouped by
    /// section, keys sorted.
    pub fn render(&self) -> String {
        let mut sections: BTreeMap<&str, Vec<(&str, &str)>> = BTreeMap::new();
        for (k, v) in &self.values {
            let (s, key) = k.split_once('.').unwrap_or(("", k));
            sections.entry(s).or_default().push((key, v));
        }
        let mut out = String::new();
        for (s, entries) in sections {
            if !s.is_empty() {
                let _ = writeln!(out, "[{s}]");
            }
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let mut c =
            Config::parse("# comment\n[train]\nlr = 0.01\nn = 8, 16\n\n[run]\nseed=3\n").unwrap();
        assert_eq!(c.get("train.lr", 0.0).unwrap(), 0.01);
        assert_eq!(c.list::<usize>("train.n", "").unwrap(), vec![8, 16]);
        c.set_override("train.lr=0.5").unwrap();
        assert_eq!(c.get("train.lr", 0.0).unwrap(), 0.5);
        assert_eq!(c.get("run.seed", 0u64).unwrap(), 3);
        assert!(c.set_override("novalue").is_err());
        assert!(Config::parse("[x]\njunk\n").is_err());
    }

    #[test]
    fn render_round_trips() {
        let c = Config::parse("[a]\nx = 1\n[b]\ny = two, three\n").unwrap();
        assert_eq!(Config::parse(&c.render()).unwrap(), c);
    }

    #[test]
    fn snr_ranges() {
        let c = Config::parse("[s]\nr = 0:5:30\nl = 20, 10\n").unwrap();
        assert_eq!(
            c.snr_grid("s.r", "").unwrap(),
            vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]
        );
        assert_eq!(c.snr_grid("s.l", "").unwrap(), vec![20.0, 10.0]);
        assert!(Config::parse("[s]\nr = 0:0:3\n")
            .unwrap()
            .snr_grid("s.r", "")
            .is_err());
    }
}
