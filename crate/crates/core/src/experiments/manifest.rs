//! Run manifest: flat text with a stable key order.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    pub scenario: String,
    pub code_version: String,
    pub wall_time_s: f64,
    pub config: Vec<(String, String)>,
    pub summary: Vec<(String, String)>,
    pub assertions: Vec<Assertion>,
    pub files: Vec<FileEntry>,
    pub notes: Vec<String>,
    pub error: Option<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(scenario: impl Into<String>, config: Vec<(String, String)>) -> Self {
        RunManifest { scenario: scenario.into(), code_version: env!("CARGO_PKG_VERSION").into(), config, ..Default::default() }
    }

    pub fn scalar(&mut self, key: &str, value: f64, digits: usize) {
        self.summary.push((key.into(), format!("{value:.p$e}", p = digits.max(1) - 1)));
    }

    pub fn text(&mut self, key: &str, value: impl Into<String>) {
        self.summary.push((key.into(), value.into()));
    }

    pub fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) -> bool {
        self.assertions.push(Assertion { name: name.into(), pass, detail: detail.into() });
        pass
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn all_passed(&self) -> bool {
        self.error.is_none() && self.assertions.iter().all(|a| a.pass)
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Write `bytes` to `dir/name` and record its size and digest.
    pub fn write_file(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(dir.join(name), bytes)?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry { name: name.into(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "code_version = {}", self.code_version);
        let _ = writeln!(s, "wall_time_s = {:.3}", self.wall_time_s);
        let _ = writeln!(s, "all_passed = {}", self.all_passed());
        if let Some(e) = &self.error {
            let _ = writeln!(s, "error = {e}");
        }
        let _ = writeln!(s, "\n[config]");
        for (k, v) in &self.config {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[summary]");
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[assertions]");
        for a in &self.assertions {
            let _ = writeln!(s, "{} = {} ({})", a.name, if a.pass { "PASS" } else { "FAIL" }, a.detail);
        }
        let _ = writeln!(s, "\n[files]");
        for f in &self.files {
            let _ = writeln!(s, "{} = {} bytes sha256:{}", f.name, f.bytes, f.sha256);
        }
        if !self.notes.is_empty() {
            let _ = writeln!(s, "\n[notes]");
            for n in &self.notes {
                let _ = writeln!(s, "{n}");
            }
        }
        s
    }

    /// Files listed in a manifest text, as `(name, bytes, sha256)`.
    pub fn parse_files(text: &str) -> Vec<(String, u64, String)> {
        let mut out = Vec::new();
        let mut in_files = false;
        for line in text.lines() {
            let line = line.trim();
            if line.starts_with('[') {
                in_files = line == "[files]";
                continue;
            }
            if !in_files || line.is_empty() {
                continue;
            }
            if let Some((name, rest)) = line.split_once(" = ") {
                let mut it = rest.split_whitespace();
                let bytes = it.next().and_then(|b| b.parse().ok()).unwrap_or(0);
                let digest = rest.rsplit("sha256:").next().unwrap_or("").to_string();
                out.push((name.to_string(), bytes, digest));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
