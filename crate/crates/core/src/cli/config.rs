//! Run settings. Built-in defaults are overlaid by the config file (global
//! keys, then the command's section) and finally by flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::bench::Span;

use super::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    section: String,
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn new(section: &str, defaults: Vec<(&str, String)>) -> Self {
        Settings {
            section: section.to_string(),
            values: defaults.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn section(&self) -> &str {
        &self.section
    }

    /// Global keys apply when this command knows them; keys in the command's
    /// own section must all be known. Other sections are ignored so one file
    /// can serve every command.
    pub fn merge_file(&mut self, path: &Path) -> Result<(), CliError> {
        if !path.is_file() {
            return Err(CliError::Usage(format!("config not found: {}", path.display())));
        }
        let ini = Ini::load_from_file(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if let Some(global) = ini.section(None::<String>) {
            for (k, v) in global.iter() {
                if self.values.contains_key(k) {
                    self.values.insert(k.to_string(), v.to_string());
                }
            }
        }
        if let Some(own) = ini.section(Some(self.section.as_str())) {
            for (k, v) in own.iter() {
                self.set(k, v)?;
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(CliError::Usage(format!("unknown key {key:?} for {}", self.section))),
        }
    }

    /// Applies `KEY=VALUE` overrides.
    pub fn set_pairs(&mut self, pairs: &[String]) -> Result<(), CliError> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got {p:?}")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("no default for {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Usage(format!("{key} = {raw:?} is not a valid value")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Usage(format!("{key} = {other:?} is not a boolean"))),
        }
    }

    /// Comma-separated list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        let raw = self.raw(key);
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| CliError::Usage(format!("{key} = {raw:?} is not a valid list"))))
            .collect()
    }

    /// `min,max` pair; a single value means a one-point range.
    pub fn span<T: FromStr + Copy>(&self, key: &str) -> Result<Span<T>, CliError> {
        match self.list::<T>(key)?.as_slice() {
            [v] => Ok((*v, *v)),
            [a, b] => Ok((*a, *b)),
            _ => Err(CliError::Usage(format!("{key} = {:?} must be min,max", self.raw(key)))),
        }
    }

    /// Sorted `key = value` lines under the command's section header.
    pub fn to_ini(&self) -> String {
        let mut s = format!("[{}]\n", self.section);
        for (k, v) in &self.values {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_ini().as_bytes()))
    }
}
