//! Run manifests: what a command was asked to do and what it wrote.
//!
//! Plain `key = value` lines. Repeated `arg` lines keep the command's
//! arguments in order; `config.*` and `artifact.*` lines keep the resolved
//! configuration and every output path.

use std::path::{Path, PathBuf};

use crate::corpus::text::{read_lines, write_string};
use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub version: String,
    pub args: Vec<String>,
    pub config: Vec<(String, String)>,
    pub artifacts: Vec<(String, PathBuf)>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            seed,
            version: TOOL_VERSION.to_string(),
            args: Vec::new(),
            config: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn artifact(&self, name: &str) -> Option<&Path> {
        self.artifacts.iter().find(|(n, _)| n == name).map(|(_, p)| p.as_path())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("command = {}\nversion = {}\nseed = {}\n", self.command, self.version, self.seed);
        for a in &self.args {
            s.push_str(&format!("arg = {a}\n"));
        }
        for (k, v) in &self.config {
            s.push_str(&format!("config.{k} = {v}\n"));
        }
        for (k, p) in &self.artifacts {
            s.push_str(&format!("artifact.{k} = {}\n", p.display()));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |n: usize, why: &str| Error::format("run manifest", format!("line {n}: {why}"));
        let mut m = RunManifest::new("", 0);
        let (mut command, mut seed) = (None, None);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once(" = ").ok_or_else(|| bad(i + 1, "expected `key = value`"))?;
            match k {
                "command" => command = Some(v.to_string()),
                "version" => m.version = v.to_string(),
                "seed" => seed = Some(v.parse().map_err(|_| bad(i + 1, "seed is not an integer"))?),
                "arg" => m.args.push(v.to_string()),
                _ => {
                    if let Some(key) = k.strip_prefix("config.") {
                        m.config.push((key.to_string(), v.to_string()));
                    } else if let Some(key) = k.strip_prefix("artifact.") {
                        m.artifacts.push((key.to_string(), PathBuf::from(v)));
                    } else {
                        return Err(bad(i + 1, &format!("unknown key {k:?}")));
                    }
                }
            }
        }
        m.command = command.ok_or_else(|| bad(0, "missing command"))?;
        m.seed = seed.ok_or_else(|| bad(0, "missing seed"))?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_text())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&read_lines(path)?.join("\n"))
    }
}
