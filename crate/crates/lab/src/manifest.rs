//! Plain-text key/value run manifest.

use std::fmt::Write as _;

use crate::error::{LabError, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_VERSION: u32 = 1;

/// Host and build description recorded with each run.
#[derive(Clone, Debug, PartialEq)]
pub struct Fingerprint {
    pub library: String,
    pub os: String,
    pub arch: String,
    pub profile: String,
}

impl Fingerprint {
    pub fn current() -> Self {
        Fingerprint {
            library: format!("magdirac {}", env!("CARGO_PKG_VERSION")),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            profile: if cfg!(debug_assertions) { "debug" } else { "release" }.into(),
        }
    }
}

/// One persisted file and its SHA-256.
#[derive(Clone, Debug, PartialEq)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub name: String,
    pub seed: u64,
    /// Resolved config as written to [`CONFIG_FILE`].
    pub config: String,
    /// `(key, value)` pairs for the field constants and verdict.
    pub constants: Vec<(String, String)>,
    pub fingerprint: Fingerprint,
    pub wall_clock_s: f64,
    /// `(key, value)` summary statistics per analysis.
    pub summary: Vec<(String, String)>,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn constant(&self, key: &str) -> Option<&str> {
        lookup(&self.constants, key)
    }

    pub fn stat(&self, key: &str) -> Option<&str> {
        lookup(&self.summary, key)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# magdirac run manifest");
        let _ = writeln!(s, "manifest_version = {MANIFEST_VERSION}");
        let _ = writeln!(s, "name = {}", self.name);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "config = {CONFIG_FILE}");
        let _ = writeln!(s, "library = {}", self.fingerprint.library);
        let _ = writeln!(s, "env.os = {}", self.fingerprint.os);
        let _ = writeln!(s, "env.arch = {}", self.fingerprint.arch);
        let _ = writeln!(s, "env.profile = {}", self.fingerprint.profile);
        let _ = writeln!(s, "wall_clock_s = {:.3}", self.wall_clock_s);
        for (k, v) in &self.constants {
            let _ = writeln!(s, "constants.{k} = {v}");
        }
        for (k, v) in &self.summary {
            let _ = writeln!(s, "summary.{k} = {v}");
        }
        for f in &self.files {
            let _ = writeln!(s, "file.{} = {}", f.name, f.sha256);
        }
        s
    }

    /// Parses [`RunManifest::to_text`] output; `config` is left empty.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |reason: String| LabError::validation("manifest", reason);
        let mut m = RunManifest {
            name: String::new(),
            seed: 0,
            config: String::new(),
            constants: vec![],
            fingerprint: Fingerprint {
                library: String::new(),
                os: String::new(),
                arch: String::new(),
                profile: String::new(),
            },
            wall_clock_s: 0.0,
            summary: vec![],
            files: vec![],
        };
        let mut version = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| bad(format!("line {} is not `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim().to_string());
            match k {
                "manifest_version" => version = v.parse::<u32>().ok(),
                "name" => m.name = v,
                "seed" => m.seed = v.parse().map_err(|_| bad(format!("bad seed `{v}`")))?,
                "config" => {}
                "library" => m.fingerprint.library = v,
                "env.os" => m.fingerprint.os = v,
                "env.arch" => m.fingerprint.arch = v,
                "env.profile" => m.fingerprint.profile = v,
                "wall_clock_s" => m.wall_clock_s = v.parse().unwrap_or(f64::NAN),
                _ => {
                    if let Some(c) = k.strip_prefix("constants.") {
                        m.constants.push((c.into(), v));
                    } else if let Some(c) = k.strip_prefix("summary.") {
                        m.summary.push((c.into(), v));
                    } else if let Some(c) = k.strip_prefix("file.") {
                        m.files.push(FileEntry {
                            name: c.into(),
                            sha256: v,
                        });
                    } else {
                        return Err(bad(format!("unknown key `{k}`")));
                    }
                }
            }
        }
        if version != Some(MANIFEST_VERSION) {
            return Err(bad(format!("unsupported manifest version (expected {MANIFEST_VERSION})")));
        }
        Ok(m)
    }
}

fn lookup<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
