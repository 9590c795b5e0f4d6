//! Resolved run settings: defaults, then `key = value` lines from a config
//! file, then command-line flags. The resolved map is echoed into the output
//! directory and can be replayed as-is.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::Failure;

pub const ECHO_FILE: &str = "config-echo.txt";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub command: String,
    values: BTreeMap<String, String>,
}

/// Keys accepted by each command, with their defaults (`None`: no default).
pub fn schema(command: &str) -> Option<&'static [(&'static str, Option<&'static str>)]> {
    Some(match command {
        "synth" => &[("out", None), ("count", Some("1563")), ("seed", Some("0")), ("threads", Some("0"))],
        "train" => &[
            ("data", None),
            ("out", None),
            ("epochs", Some("200")),
            ("seed", Some("0")),
            ("lr", Some("0.0001")),
            ("batch-size", Some("64")),
            ("noise-sigma", Some("0")),
            ("engine-drop", Some("0")),
            ("resolution", Some("32")),
            ("resume", None),
            ("threads", Some("0")),
        ],
        "infer" => &[
            ("checkpoint", None),
            ("keypoints", None),
            ("data", None),
            ("split", Some("all")),
            ("out", None),
            ("refine", Some("false")),
            ("report", None),
            ("noise-sigma", Some("0")),
            ("engine-drop", Some("0")),
            ("seed", Some("0")),
            ("threads", Some("0")),
        ],
        "eval" => &[
            ("pred", None),
            ("gt", None),
            ("split", Some("all")),
            ("out", None),
            ("resolution", Some("64")),
            ("threads", Some("0")),
        ],
        "export-obj" => &[("tree", None), ("out", None)],
        _ => return None,
    })
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
        let key = normalize_key(k);
        if key.is_empty() {
            return Err(format!("line {}: empty key", n + 1));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    /// Merges defaults, the optional config file and the flags.
    pub fn resolve(
        command: &str,
        config: Option<&Path>,
        flags: BTreeMap<String, String>,
    ) -> Result<Self, Failure> {
        let schema = schema(command).ok_or_else(|| Failure::validation(format!("unknown command {command}")))?;
        let mut values: BTreeMap<String, String> = schema
            .iter()
            .filter_map(|(k, d)| d.map(|d| (k.to_string(), d.to_string())))
            .collect();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            let mut file = parse_config(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
            if let Some(c) = file.remove("command") {
                if c != command {
                    return Err(Failure::validation(format!(
                        "{} was written for `{c}`, not `{command}`",
                        path.display()
                    )));
                }
            }
            values.extend(file);
        }
        values.extend(flags);
        for key in values.keys() {
            if !schema.iter().any(|(k, _)| k == key) {
                return Err(Failure::validation(format!("`{key}` is not an option of `{command}`")));
            }
        }
        Ok(Self { command: command.to_string(), values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, Failure>
    where
        T::Err: fmt::Display,
    {
        let raw = self.require(key)?;
        raw.parse().map_err(|e| Failure::validation(format!("{key} = {raw}: {e}")))
    }

    pub fn require(&self, key: &str) -> Result<&str, Failure> {
        self.get(key).ok_or_else(|| Failure::validation(format!("`{}` needs --{key}", self.command)))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, Failure> {
        self.require(key).map(PathBuf::from)
    }

    pub fn optional_path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn flag(&self, key: &str) -> Result<bool, Failure> {
        self.parse(key)
    }

    /// The echo file contents: the command, then every resolved key.
    pub fn echo(&self) -> String {
        let mut s = format!("command = {}\n", self.command);
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn write_echo(&self, dir: &Path) -> Result<(), Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
        let path = dir.join(ECHO_FILE);
        std::fs::write(&path, self.echo()).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
    }
}

/// Reads the command recorded in an echo file.
pub fn recorded_command(path: &Path) -> Result<String, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let map = parse_config(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    map.get("command")
        .cloned()
        .ok_or_else(|| Failure::validation(format!("{} has no `command` entry", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "# synth run\ncount = 5\nseed=9\nout = a\n").unwrap();
        let flags = BTreeMap::from([("seed".to_string(), "3".to_string())]);
        let s = Settings::resolve("synth", Some(&cfg), flags).unwrap();
        assert_eq!(s.get("count"), Some("5"));
        assert_eq!(s.get("seed"), Some("3"));
        assert_eq!(s.get("threads"), Some("0"));
    }

    #[test]
    fn echo_round_trips() {
        let flags = BTreeMap::from([("out".to_string(), "x".to_string()), ("count".to_string(), "7".to_string())]);
        let s = Settings::resolve("synth", None, flags).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.write_echo(dir.path()).unwrap();
        let again = Settings::resolve("synth", Some(&dir.path().join(ECHO_FILE)), BTreeMap::new()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejects_foreign_keys() {
        let flags = BTreeMap::from([("epochs".to_string(), "3".to_string())]);
        assert!(Settings::resolve("synth", None, flags).is_err());
        assert!(parse_config("no equals sign").is_err());
        assert_eq!(parse_config("noise_sigma = 0.1").unwrap()["noise-sigma"], "0.1");
    }
}
