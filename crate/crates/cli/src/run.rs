//! Output directories: exclusive lock, run manifest and small CSV helpers.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

pub const LOCK_FILE: &str = ".ddr.lock";
pub const MANIFEST_FILE: &str = "manifest.json";

/// An output directory held exclusively for the lifetime of the value.
pub struct RunDir {
    root: PathBuf,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "{} is locked by another run ({}); remove the lock file if that run is gone",
                root.display(),
                lock.display()
            ),
            Err(e) => return Err(e).with_context(|| format!("creating {}", lock.display())),
        }
        Ok(Self {
            root: root.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    /// Path for an output file, recorded in the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
        self.root.join(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.file(name);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn csv(&mut self, name: &str, header: &[&str]) -> Result<CsvOut> {
        let path = self.file(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut out = CsvOut {
            w: BufWriter::new(f),
            path,
        };
        out.row_str(header)?;
        Ok(out)
    }

    /// Writes `manifest.json` echoing the command and its resolved config.
    pub fn finish<T: Serialize>(mut self, command: &str, config: &T) -> Result<()> {
        let manifest = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "outputs": self.outputs,
        });
        let path = self.root.join(MANIFEST_FILE);
        self.outputs.clear();
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(self.root.join(LOCK_FILE));
    }
}

pub struct CsvOut {
    w: BufWriter<File>,
    path: PathBuf,
}

impl CsvOut {
    pub fn row_str(&mut self, cells: &[&str]) -> Result<()> {
        writeln!(self.w, "{}", cells.join(","))
            .with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn row(&mut self, cells: &[f64]) -> Result<()> {
        let text: Vec<String> = cells.iter().map(|v| v.to_string()).collect();
        writeln!(self.w, "{}", text.join(","))
            .with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w
            .flush()
            .with_context(|| format!("writing {}", self.path.display()))
    }
}

/// Overlays the JSON object in `path` onto `base`, field by field.
pub fn overlay_config<T: Serialize + DeserializeOwned>(base: T, path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(base);
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let patch: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut merged = serde_json::to_value(base)?;
    merge(&mut merged, patch);
    serde_json::from_value(merged).with_context(|| format!("invalid config in {}", path.display()))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    // a learner of another kind replaces the whole object
                    Some(slot) if !same_kind(slot, &v) => *slot = v,
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn same_kind(a: &Value, b: &Value) -> bool {
    match (a.get("kind"), b.get("kind")) {
        (Some(x), Some(y)) => x == y,
        _ => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_is_field_wise() {
        let mut base =
            serde_json::json!({"a": 1, "b": {"c": 2, "d": 3}, "l": {"kind": "ka", "mu": 0.1}});
        merge(
            &mut base,
            serde_json::json!({"b": {"d": 4}, "l": {"mu": 0.5}}),
        );
        assert_eq!(
            base,
            serde_json::json!({"a": 1, "b": {"c": 2, "d": 4}, "l": {"kind": "ka", "mu": 0.5}})
        );
        merge(&mut base, serde_json::json!({"l": {"kind": "linear"}}));
        assert_eq!(base["l"], serde_json::json!({"kind": "linear"}));
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunDir::open(dir.path()).unwrap();
        assert!(RunDir::open(dir.path()).is_err());
        drop(a);
        assert!(RunDir::open(dir.path()).is_ok());
    }
}
