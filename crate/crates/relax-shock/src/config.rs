//! Experiment configuration (JSON) and artifact plumbing: CSV/JSON writers
//! and a checksummed artifact index, so every reported number is traceable
//! to a file in the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evans::ContourSettings;
use crate::model::{Poly, RelaxationModel, ShockData};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Model family; currently `jin-xin`.
    pub kind: String,
    /// Frozen speed a > 0.
    pub a: f64,
    /// Equilibrium flux h(u) as polynomial coefficients, constant first.
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ShockConfig {
    pub u_minus: Vec<f64>,
    pub u_plus: Vec<f64>,
    #[serde(default)]
    pub s: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Half-width X of the profile window [-X, X].
    pub x_half: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContourConfig {
    pub r_outer: f64,
    pub eta1: f64,
    pub r0: f64,
    pub max_samples: usize,
}

impl Default for ContourConfig {
    fn default() -> Self {
        ContourConfig { r_outer: 30.0, eta1: 0.05, r0: 0.05, max_samples: 60_000 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Final time for the linear decay run.
    pub t_final: f64,
    /// Snapshot times; defaults to a geometric ladder through [1, t_final].
    pub snapshot_times: Option<Vec<f64>>,
    /// Gaussian amplitude for the nonlinear experiment.
    pub amplitude: f64,
    /// Source location for the Green's function comparison.
    pub y0: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { t_final: 100.0, snapshot_times: None, amplitude: 0.01, y0: -10.0 }
    }
}

/// Top-level experiment configuration; unknown keys are rejected.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub shock: ShockConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub contour: ContourConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.kind != "jin-xin" {
            return Err(Error::Config(format!("model.kind: unknown kind {:?}", self.model.kind)));
        }
        if !(self.model.a > 0.0) {
            return Err(Error::Config("model.a: must be positive".into()));
        }
        if self.model.h.is_empty() {
            return Err(Error::Config("model.h: needs at least one coefficient".into()));
        }
        if self.shock.u_minus.len() != 1 || self.shock.u_plus.len() != 1 {
            return Err(Error::Config("shock.u_minus/u_plus: jin-xin is scalar (length 1)".into()));
        }
        if !(self.grid.dx > 0.0 && self.grid.x_half > self.grid.dx) {
            return Err(Error::Config("grid: need dx > 0 and x_half > dx".into()));
        }
        Ok(())
    }

    pub fn build_model(&self) -> RelaxationModel {
        RelaxationModel::jin_xin(self.model.a, Poly::new(self.model.h.clone()))
    }

    pub fn build_shock(&self, model: &RelaxationModel) -> Result<ShockData> {
        ShockData::new(
            model,
            Array1::from_vec(self.shock.u_minus.clone()),
            Array1::from_vec(self.shock.u_plus.clone()),
            self.shock.s,
        )
    }

    pub fn contour_settings(&self) -> ContourSettings {
        ContourSettings {
            r_outer: self.contour.r_outer,
            eta1: self.contour.eta1,
            r0: self.contour.r0,
            max_samples: self.contour.max_samples,
        }
    }

    /// Snapshot ladder for decay fits: integers through 10, then geometric.
    pub fn snapshot_times(&self) -> Vec<f64> {
        if let Some(ts) = &self.simulation.snapshot_times {
            return ts.clone();
        }
        let mut ts: Vec<f64> = vec![0.0, 1.0, 2.0, 5.0];
        let mut t = 10.0;
        while t < self.simulation.t_final - 1e-9 {
            ts.push(t);
            t *= 1.25;
            // Keep times grid-aligned for the exact-transport step.
            t = (t / 0.5).round() * 0.5;
        }
        ts.push(self.simulation.t_final);
        ts
    }
}

/// One named check with a PASS/FAIL verdict and a short numeric detail.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Check { name: name.to_string(), pass, detail }
    }

    pub fn print(&self) {
        println!("{}: {} ({})", self.name, if self.pass { "PASS" } else { "FAIL" }, self.detail);
    }
}

/// Collects artifacts written during a run and emits `index.json` with
/// SHA-256 checksums. Content is deterministic; the timestamp is isolated
/// in its own field.
pub struct ArtifactSink {
    dir: PathBuf,
    written: Vec<String>,
}

#[derive(Serialize)]
struct IndexEntry {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct IndexFile {
    timestamp_unix: u64,
    artifacts: Vec<IndexEntry>,
}

impl ArtifactSink {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactSink { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Write a CSV file with a fixed header; numbers in full precision.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut text = String::new();
        text.push_str(&header.join(","));
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.write_raw(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Config(format!("serializing {name}: {e}")))?;
        self.write_raw(name, text.as_bytes())
    }

    fn write_raw(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Emit index.json over everything written so far (deterministic order).
    pub fn emit_index(&mut self) -> Result<()> {
        if self.written.is_empty() {
            return Err(Error::Precondition("no artifacts to index".into()));
        }
        let mut names = self.written.clone();
        names.sort();
        names.dedup();
        let mut artifacts = Vec::new();
        for name in names {
            let bytes = fs::read(self.dir.join(&name))?;
            let mut h = Sha256::new();
            h.update(&bytes);
            artifacts.push(IndexEntry { name, sha256: format!("{:x}", h.finalize()) });
        }
        let timestamp_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let index = IndexFile { timestamp_unix, artifacts };
        let text = serde_json::to_string_pretty(&index)
            .map_err(|e| Error::Config(format!("serializing index: {e}")))?;
        fs::write(self.dir.join("index.json"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "model": { "kind": "jin-xin", "a": 2.0, "h": [0.0, 0.0, 0.5] },
            "shock": { "u_minus": [1.0], "u_plus": [-1.0], "s": 0.0 },
            "grid": { "x_half": 60.0, "dx": 0.05 }
        })
    }

    #[test]
    fn parses_and_validates() {
        let cfg: ExperimentConfig = serde_json::from_value(base_json()).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.contour.r_outer, 30.0);
        let model = cfg.build_model();
        assert!(cfg.build_shock(&model).is_ok());
    }

    #[test]
    fn missing_required_key_names_the_field() {
        let mut v = base_json();
        v["model"].as_object_mut().unwrap().remove("a");
        let err = serde_json::from_value::<ExperimentConfig>(v).unwrap_err();
        assert!(err.to_string().contains("a"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let mut v = base_json();
        v["grid"]["extra"] = serde_json::json!(1.0);
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
    }

    #[test]
    fn index_is_deterministic_modulo_timestamp() {
        let dir = std::env::temp_dir().join(format!("relax-shock-idx-{}", std::process::id()));
        let run = |d: &Path| {
            let mut sink = ArtifactSink::new(d).unwrap();
            sink.write_csv("a.csv", &["x", "y"], &[vec![1.0, 2.0]]).unwrap();
            sink.emit_index().unwrap();
            let text = fs::read_to_string(d.join("index.json")).unwrap();
            let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
            v.as_object_mut().unwrap().remove("timestamp_unix");
            v
        };
        let v1 = run(&dir.join("one"));
        let v2 = run(&dir.join("two"));
        assert_eq!(v1, v2);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn empty_results_are_an_error() {
        let dir = std::env::temp_dir().join(format!("relax-shock-empty-{}", std::process::id()));
        let mut sink = ArtifactSink::new(&dir).unwrap();
        assert!(sink.emit_index().is_err());
        fs::remove_dir_all(&dir).ok();
    }
}
