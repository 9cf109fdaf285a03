//! Key=value run settings: values from an optional config file, overridden by
//! command-line flags, with every resolved value recorded so the run can be
//! replayed from the emitted file alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;

/// Bad flags, bad flag combinations, or a malformed config file. Maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub trait Setting: Sized {
    fn parse_setting(raw: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! display_setting {
    ($($t:ty),*) => {$(
        impl Setting for $t {
            fn parse_setting(raw: &str) -> Result<Self, String> {
                raw.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_setting!(usize, u64, f64, bool, String);

impl Setting for PathBuf {
    fn parse_setting(raw: &str) -> Result<Self, String> {
        Ok(PathBuf::from(raw))
    }
    fn render(&self) -> String {
        self.display().to_string()
    }
}

/// Implements [`Setting`] through the clap value names of a `ValueEnum`.
#[macro_export]
macro_rules! enum_setting {
    ($($t:ty),*) => {$(
        impl $crate::settings::Setting for $t {
            fn parse_setting(raw: &str) -> Result<Self, String> {
                <$t as clap::ValueEnum>::from_str(raw, false)
            }
            fn render(&self) -> String {
                $crate::settings::value_name(self)
            }
        }
    )*};
}

pub fn value_name<T: ValueEnum>(v: &T) -> String {
    v.to_possible_value()
        .map(|p| p.get_name().to_string())
        .unwrap_or_default()
}

pub struct Settings {
    command: &'static str,
    file: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
    seen: BTreeSet<String>,
}

impl Settings {
    pub fn new(command: &'static str, config: Option<&Path>) -> anyhow::Result<Self> {
        let file = match config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        if let Some(cmd) = file.get("command") {
            if cmd != command {
                return Err(usage(format!(
                    "config file was written for `{cmd}`, not `{command}`"
                )));
            }
        }
        Ok(Self {
            command,
            file,
            resolved: Vec::new(),
            seen: BTreeSet::new(),
        })
    }

    /// Flag value, else config-file value, else `None`. Present values are recorded.
    pub fn get<T: Setting>(&mut self, key: &str, flag: Option<T>) -> anyhow::Result<Option<T>> {
        self.seen.insert(key.to_string());
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(raw) => Some(T::parse_setting(raw).map_err(|e| {
                    usage(format!("config value for {key} is invalid ({raw:?}): {e}"))
                })?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.record(key, v);
        }
        Ok(value)
    }

    pub fn or<T: Setting>(&mut self, key: &str, flag: Option<T>, default: T) -> anyhow::Result<T> {
        match self.get(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, &default);
                Ok(default)
            }
        }
    }

    pub fn require<T: Setting>(&mut self, key: &str, flag: Option<T>) -> anyhow::Result<T> {
        self.get(key, flag)?
            .ok_or_else(|| usage(format!("missing required setting --{key}")))
    }

    /// A flag that is only `true` when passed; the config file may also set it.
    pub fn switch(&mut self, key: &str, flag: bool) -> anyhow::Result<bool> {
        self.or(key, flag.then_some(true), false)
    }

    pub fn record<T: Setting>(&mut self, key: &str, value: &T) {
        let rendered = value.render();
        match self.resolved.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = rendered,
            None => self.resolved.push((key.to_string(), rendered)),
        }
    }

    pub fn warn_unused(&self) {
        for key in self.file.keys() {
            if key != "command" && !self.seen.contains(key) {
                log::warn!("config key {key:?} is not used by `{}`", self.command);
            }
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!("command={}\n", self.command);
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn write_to(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(format!("{}.config", self.command));
        fs::write(&path, self.render())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `key=value` lines; `#` starts a comment line; keys may carry leading dashes.
pub fn parse_config(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key=value", i + 1)))?;
        let k = k.trim().trim_start_matches('-').to_string();
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(usage(format!("config line {}: duplicate key {k:?}", i + 1)));
        }
    }
    Ok(map)
}
