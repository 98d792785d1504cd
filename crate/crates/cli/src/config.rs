//! Resolved run configuration: plain key=value settings merged from an
//! optional config file and command-line flags (flags win), echoed into the
//! manifest so a run can be reproduced byte-for-byte from its output
//! directory.

use multifrac_core::{Error, Result};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct Cfg {
    map: BTreeMap<String, String>,
}

impl Cfg {
    pub fn new() -> Self {
        Cfg::default()
    }

    /// Parse `key=value` lines; `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let Some((k, v)) = t.split_once('=') else {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected key=value, got {t:?}"),
                });
            };
            self.map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(())
    }

    /// CLI flags override file values.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.map.insert(key.to_string(), value.to_string());
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: &Option<T>) {
        if let Some(v) = value {
            self.set(key, v.to_string());
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::argument(format!("{key}: bad number {v:?}"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::argument(format!("{key}: bad integer {v:?}"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::argument(format!("{key}: bad integer {v:?}"))),
        }
    }

    /// Comma-separated reals, with `a..b` expanding to the integer range
    /// [a, b] inclusive.
    pub fn f64_list_or(&self, key: &str, default: &str) -> Result<Vec<f64>> {
        parse_f64_list(self.get(key).unwrap_or(default))
            .map_err(|e| Error::argument(format!("{key}: {e}")))
    }

    /// Canonical echo: sorted key=value lines.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    /// FNV-1a hash of the canonical echo, as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.echo().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

pub fn parse_f64_list(text: &str) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for piece in text.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        if let Some((a, b)) = piece.split_once("..") {
            let a: i64 = a
                .trim()
                .parse()
                .map_err(|_| format!("bad range start {a:?}"))?;
            let b: i64 = b
                .trim()
                .parse()
                .map_err(|_| format!("bad range end {b:?}"))?;
            if b < a {
                return Err(format!("empty range {piece:?}"));
            }
            out.extend((a..=b).map(|v| v as f64));
        } else {
            out.push(piece.parse().map_err(|_| format!("bad number {piece:?}"))?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

/// Output directory handle enforcing the write discipline: results land via
/// temp-file + rename, and a directory holding a completed manifest is never
/// reused.
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        if root.join("manifest.txt").exists() {
            return Err(Error::argument(format!(
                "{} already holds completed results (manifest.txt present); use a fresh directory",
                root.display()
            )));
        }
        fs::create_dir_all(root)?;
        Ok(OutDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Write one result file atomically, prefixed with its config hash.
    pub fn write_result(&mut self, name: &str, hash: &str, body: &[u8]) -> Result<()> {
        let tmp = self.root.join(format!(".{name}.tmp"));
        let final_path = self.root.join(name);
        {
            let mut f = fs::File::create(&tmp)?;
            writeln!(f, "# config={hash}")?;
            f.write_all(body)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &final_path)?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Seal the run: the manifest is written last, so its presence marks a
    /// completed output directory.
    pub fn finish(
        self,
        cfg: &Cfg,
        seed_ledger: &[(String, u64, u64)],
        wall: std::time::Duration,
    ) -> Result<()> {
        let tmp = self.root.join(".manifest.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            writeln!(f, "multifrac {}", env!("CARGO_PKG_VERSION"))?;
            writeln!(f, "config_hash={}", cfg.hash())?;
            writeln!(f, "wall_seconds={:.3}", wall.as_secs_f64())?;
            writeln!(f, "[config]")?;
            f.write_all(cfg.echo().as_bytes())?;
            writeln!(f, "[seeds]")?;
            for (purpose, seed, stream) in seed_ledger {
                writeln!(f, "{purpose}: seed={seed} stream={stream}")?;
            }
            writeln!(f, "[files]")?;
            for name in &self.files {
                writeln!(f, "{name}")?;
            }
            f.sync_all()?;
        }
        fs::rename(&tmp, self.root.join("manifest.txt"))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_f64_list("2..5").unwrap(), vec![2.0, 3.0, 4.0, 5.0]);
        assert_eq!(parse_f64_list("-1,0.5, 2").unwrap(), vec![-1.0, 0.5, 2.0]);
        assert!(parse_f64_list("a").is_err());
        assert!(parse_f64_list("").is_err());
    }

    #[test]
    fn hash_is_stable_and_order_independent() {
        let mut a = Cfg::new();
        a.set("x", 1);
        a.set("y", "z");
        let mut b = Cfg::new();
        b.set("y", "z");
        b.set("x", 1);
        assert_eq!(a.hash(), b.hash());
        b.set("x", 2);
        assert_ne!(a.hash(), b.hash());
    }
}
