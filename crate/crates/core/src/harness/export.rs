//! CSV/JSON writers and the manifest report.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunManifest;
use crate::error::{Error, Result};
use crate::evolve::FrameSeries;
use crate::trajectories::EnsembleSnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format `{s}` (csv or json)"))),
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| fmt_f64(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn render(&self, format: Format) -> Result<String> {
        Ok(match format {
            Format::Csv => self.to_csv(),
            Format::Json => serde_json::to_string(self)? + "\n",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files under one directory and keeps the inventory.
pub struct OutputWriter {
    root: PathBuf,
    pub files: Vec<OutputFile>,
}

impl OutputWriter {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, content: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&path, content)?;
        self.files.push(OutputFile {
            path: rel.to_string(),
            sha256: sha256_hex(content.as_bytes()),
            bytes: content.len() as u64,
        });
        Ok(())
    }

    pub fn table(&mut self, stem: &str, t: &Table, format: Format) -> Result<()> {
        self.write(&format!("{stem}.{}", format.extension()), &t.render(format)?)
    }
}

/// One frame as columns `x, re_psi, im_psi, rho, S, v, Q`.
pub fn frame_table(frames: &FrameSeries, k: usize) -> Table {
    let w = &frames.waves[k];
    let f = &frames.fields[k];
    let mut t = Table::new(&["x", "re_psi", "im_psi", "rho", "S", "v", "Q"]);
    for (i, z) in w.psi().iter().enumerate() {
        t.push(vec![
            f.grid.x(i),
            z.re,
            z.im,
            f.rho[i],
            f.action[i],
            f.velocity[i],
            f.quantum_potential[i],
        ]);
    }
    t
}

/// Frame indices exported at stride `every`, the last frame always included.
pub fn exported_frames(len: usize, every: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (0..len).step_by(every.max(1)).collect();
    if ks.last() != Some(&(len - 1)) {
        ks.push(len - 1);
    }
    ks
}

/// Rows `id, t, x, S_acc` for alive trajectories of each snapshot.
pub fn trajectory_table(snaps: &[EnsembleSnapshot]) -> Table {
    let mut t = Table::new(&["id", "t", "x", "S_acc"]);
    for s in snaps {
        for i in 0..s.positions.len() {
            if s.alive[i] {
                t.push(vec![i as f64, s.t, s.positions[i], s.actions[i]]);
            }
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub scenario: String,
    pub status: super::RunStatus,
    pub exit_code: i32,
    pub passed: usize,
    pub failed: usize,
    pub checks: Vec<super::CheckResult>,
    /// Files whose content no longer matches the recorded hash, or that are missing.
    pub mismatched_outputs: Vec<String>,
    pub outputs: usize,
    pub error: Option<String>,
}

/// Reads a manifest, re-hashes its outputs and summarizes the checks.
pub fn report(manifest_path: &Path) -> Result<ReportSummary> {
    let text = fs::read_to_string(manifest_path)?;
    let m: RunManifest = serde_json::from_str(&text)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mismatched_outputs = m
        .outputs
        .iter()
        .filter(|o| match fs::read(root.join(&o.path)) {
            Ok(b) => sha256_hex(&b) != o.sha256,
            Err(_) => true,
        })
        .map(|o| o.path.clone())
        .collect();
    let passed = m.checks.iter().filter(|c| c.passed).count();
    Ok(ReportSummary {
        scenario: m.scenario.name.clone(),
        status: m.status,
        exit_code: m.status.exit_code(),
        passed,
        failed: m.checks.len() - passed,
        checks: m.checks,
        mismatched_outputs,
        outputs: m.outputs.len(),
        error: m.error,
    })
}

pub fn render_report(r: &ReportSummary, format: Format) -> Result<String> {
    if format == Format::Json {
        return Ok(serde_json::to_string_pretty(r)? + "\n");
    }
    let mut s = String::from("check,value,threshold,passed,frame,error\n");
    for c in &r.checks {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            c.name,
            c.value.map(fmt_f64).unwrap_or_default(),
            fmt_f64(c.threshold),
            c.passed,
            c.frame.map(|f| f.to_string()).unwrap_or_default(),
            c.error.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    Ok(s)
}
