//! Deterministic result files. Every file starts with the config hash and
//! tool version, `-∞` is written as `-inf`, and each file is written to a
//! temporary sibling and renamed into place.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

pub const TOOL: &str = concat!("ifs-ldp ", env!("CARGO_PKG_VERSION"));

/// JSON number, or the strings `"-inf"`, `"inf"`, `"nan"`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(x)
    } else if x.is_nan() {
        Value::from("nan")
    } else if x > 0.0 {
        Value::from("inf")
    } else {
        Value::from("-inf")
    }
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// CSV cell for a float; Rust's shortest round-trip form already prints
/// infinities as `inf` and `-inf`.
pub fn cell(x: f64) -> String {
    x.to_string()
}

pub struct Writer {
    dir: PathBuf,
    sha256: String,
    written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, sha256: &str) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), sha256: sha256.to_string(), written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn atomic(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        let path = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        let mut buf = format!("# config_sha256={}; tool={}\n", self.sha256, TOOL).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header).map_err(io::Error::other)?;
            for r in rows {
                w.write_record(r).map_err(io::Error::other)?;
            }
            w.flush()?;
        }
        self.atomic(name, &buf)
    }

    /// Writes `body` (an object) with `config_sha256` and `tool_version`
    /// added in front.
    pub fn json(&mut self, name: &str, body: Value) -> io::Result<()> {
        let mut obj = serde_json::Map::new();
        obj.insert("config_sha256".into(), Value::from(self.sha256.clone()));
        obj.insert("tool_version".into(), Value::from(TOOL));
        match body {
            Value::Object(m) => obj.extend(m),
            other => {
                obj.insert("data".into(), other);
            }
        }
        let mut bytes = serde_json::to_vec_pretty(&Value::Object(obj)).map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.atomic(name, &bytes)
    }
}
