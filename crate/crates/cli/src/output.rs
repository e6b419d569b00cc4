//! CSV and report emission with a provenance comment line.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// What every emitted file records about its origin.
#[derive(Debug, Clone)]
pub struct Stamp {
    pub scenario_sha256: String,
    pub seed: u64,
}

impl Stamp {
    pub fn new(scenario_text: &str, seed: u64) -> Self {
        Self { scenario_sha256: hex::encode(Sha256::digest(scenario_text.as_bytes())), seed }
    }

    pub fn line(&self) -> String {
        format!("# scenario-sha256={}, seed={}, version={}", self.scenario_sha256, self.seed, VERSION)
    }
}

/// Shortest round-trip representation; NaN for undefined values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| num(f64::NAN), num)
}

/// Destination directory plus the stamp shared by one command run.
#[derive(Debug)]
pub struct Sink {
    pub dir: PathBuf,
    pub stamp: Stamp,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, stamp: Stamp) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), stamp, written: Vec::new() })
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<PathBuf>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut buf = self.stamp.line().into_bytes();
        buf.push(b'\n');
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for row in rows {
                debug_assert_eq!(row.len(), header.len());
                w.write_record(&row)?;
            }
            w.flush()?;
        }
        self.put(name, &buf)
    }

    /// A `key = value` report under `[section]` headings.
    pub fn report(&mut self, name: &str, sections: &[(&str, Vec<(String, String)>)]) -> Result<PathBuf> {
        let mut text = self.stamp.line();
        text.push('\n');
        for (title, entries) in sections {
            text.push_str(&format!("\n[{title}]\n"));
            for (k, v) in entries {
                text.push_str(&format!("{k} = {v}\n"));
            }
        }
        self.put(name, text.as_bytes())
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(path.clone());
        Ok(path)
    }
}

/// Quoted string value for reports.
pub fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert!(num(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn stamp_is_stable() {
        let a = Stamp::new("x = 1", 7).line();
        assert_eq!(a, Stamp::new("x = 1", 7).line());
        assert_ne!(a, Stamp::new("x = 2", 7).line());
        assert!(a.starts_with("# scenario-sha256="));
    }
}
