use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use serde_json::Value;

/// Output directory that records every file written into it.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn with_file<F>(&mut self, name: &str, body: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.root.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        body(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.with_file(name, |w| writeln!(w, "{text}"))
    }

    /// Writes `manifest.json` listing everything written so far.
    pub fn manifest(&mut self, m: Manifest) -> anyhow::Result<()> {
        let mut m = m;
        m.outputs = self.written.clone();
        self.json("manifest.json", &m)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    /// Property of the gradient flow the run exercises.
    pub exercises: &'static str,
    pub field: String,
    pub seed: u64,
    pub parameters: Value,
    pub summary: Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, exercises: &'static str, field: &str, seed: u64) -> Self {
        Manifest {
            command,
            exercises,
            field: field.to_string(),
            seed,
            parameters: Value::Null,
            summary: Value::Null,
            outputs: Vec::new(),
        }
    }
}

pub fn fmt(x: f64) -> String {
    format!("{x:.17e}")
}

pub fn row(x: &[f64]) -> String {
    x.iter().map(|&v| fmt(v)).collect::<Vec<_>>().join(",")
}

pub fn axis_names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}
