//! Scenario execution and run directories.
//!
//! A run directory holds:
//!
//! ```text
//! config.json          effective scenario (after overrides)
//! ensemble.json        per-path summaries (ensemble runs with paths ≥ 1)
//! terminal.csv         path, x_k_a..., floor_activations, max_simplex_error
//! trajectory.csv       single-path runs
//! trajectories/path-<i>.csv
//! reports/<nn>-<analysis>.json
//! manifest.json        hashes of everything above
//! ```

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shockrep_core::engine::{BoundaryLog, Diagnostics, EnsembleOptions};
use shockrep_core::{integrate, simulate_ensemble, EnsembleResult, Layout, NoiseStream};

use crate::analyses::{evaluate, Report};
use crate::config::{AnalysisRequest, ScenarioConfig};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the effective configuration as written to `config.json`.
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        let p = run_dir.join(MANIFEST);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub terminal: Vec<f64>,
    pub boundary: BoundaryLog,
    pub diagnostics: Diagnostics,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files into a run directory and keeps the inventory.
struct RunDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

impl RunDir {
    fn create(root: PathBuf) -> Result<Self> {
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(rel, &bytes)
    }

    fn finish(mut self, config_hash: String, seed: u64, started_at: String) -> Result<RunManifest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            config_hash,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at,
            finished_at: now(),
            files: self.files,
        };
        let p = self.root.join(MANIFEST);
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        Ok(manifest)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn config_bytes(config: &ScenarioConfig) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(config)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Output root: `--out`, then the scenario's `output`, then the environment
/// variable `SHOCKREP_OUT`, then `./runs`.
pub fn output_root(flag: Option<&Path>, config: &ScenarioConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output.clone())
        .or_else(|| std::env::var_os("SHOCKREP_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// `<root>/<name>-<first 12 hex digits of the config hash>`.
pub fn run_dir_for(root: &Path, config: &ScenarioConfig, suffix: &str) -> Result<PathBuf> {
    let hash = sha256_hex(&config_bytes(config)?);
    let name = config.name.as_deref().unwrap_or("scenario");
    Ok(root.join(format!("{name}{suffix}-{}", &hash[..12])))
}

fn csv_header(layout: &Layout) -> Vec<String> {
    let mut h = Vec::with_capacity(layout.total());
    for (k, r) in layout.blocks().enumerate() {
        for a in 0..r.len() {
            h.push(format!("x_{k}_{a}"));
        }
    }
    h
}

fn terminal_csv(ens: &EnsembleResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["path".to_string()];
    header.extend(csv_header(&ens.layout));
    header.extend(["floor_activations".into(), "max_simplex_error".into()]);
    w.write_record(&header)?;
    for p in &ens.paths {
        let mut row = vec![p.path.to_string()];
        row.extend(p.terminal.iter().map(f64::to_string));
        row.push(p.floor_activations.to_string());
        row.push(p.max_simplex_error.to_string());
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

fn trajectory_csv(t: &shockrep_core::Trajectory) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    t.write_csv(BufWriter::new(&mut out))
        .map_err(|e| Error::io(Path::new("<trajectory>"), e))?;
    Ok(out)
}

fn report_name(i: usize, req: &AnalysisRequest) -> String {
    format!("reports/{i:02}-{}.json", req.name())
}

/// Ensemble run: validates, simulates, analyses, and writes the run
/// directory under `root`.
pub fn run_scenario(config: &ScenarioConfig, root: &Path) -> Result<(PathBuf, RunManifest)> {
    let scenario = config.validate()?;
    let started_at = now();
    let cfg_bytes = config_bytes(config)?;
    let hash = sha256_hex(&cfg_bytes);
    let dir_path = run_dir_for(root, config, "")?;
    let mut dir = RunDir::create(dir_path.clone())?;
    dir.write("config.json", &cfg_bytes)?;

    let (ensemble, trajectories) = if config.paths > 0 {
        let opts = EnsembleOptions {
            observe_times: config.effective_observe_times(),
            reference: config.effective_reference(),
            keep_trajectories: config.keeps_trajectories(),
            extinction_threshold: config.extinction_threshold,
            noise_bias: 0.0,
        };
        log::info!("simulating {} paths of {}", config.paths, config.dynamics);
        let mut ens = simulate_ensemble(
            &scenario.dynamics,
            &scenario.x0,
            &config.integrator,
            config.seed,
            config.paths,
            &opts,
        )?;
        let trajectories = ens.trajectories.take();
        dir.write_json("ensemble.json", &ens)?;
        dir.write("terminal.csv", &terminal_csv(&ens)?)?;
        if let Some(ts) = &trajectories {
            for t in ts.iter().take(config.trajectories as usize) {
                let i = t.path.unwrap_or_default();
                dir.write(&format!("trajectories/path-{i}.csv"), &trajectory_csv(t)?)?;
            }
        }
        (Some(ens), trajectories)
    } else {
        (None, None)
    };

    for (i, req) in config.analyses.iter().enumerate() {
        log::info!("analysis {}", req.name());
        let report = evaluate(req, config, &scenario, ensemble.as_ref(), trajectories.as_deref())?;
        dir.write_json(&report_name(i, req), &report)?;
    }
    let manifest = dir.finish(hash, config.seed, started_at)?;
    Ok((dir_path, manifest))
}

/// Single path (index 0): writes the full trajectory and a summary.
pub fn simulate(config: &ScenarioConfig, root: &Path) -> Result<(PathBuf, RunManifest)> {
    let scenario = config.validate()?;
    let started_at = now();
    let cfg_bytes = config_bytes(config)?;
    let hash = sha256_hex(&cfg_bytes);
    let dir_path = run_dir_for(root, config, "-path")?;
    let mut dir = RunDir::create(dir_path.clone())?;
    dir.write("config.json", &cfg_bytes)?;
    let t = integrate(
        &scenario.dynamics,
        &scenario.x0,
        &config.integrator,
        &mut NoiseStream::new(config.seed, 0),
    )?;
    dir.write("trajectory.csv", &trajectory_csv(&t)?)?;
    dir.write_json(
        "summary.json",
        &PathReport {
            terminal: t.terminal().to_vec(),
            boundary: t.boundary.clone(),
            diagnostics: t.diagnostics.clone(),
        },
    )?;
    let single = std::slice::from_ref(&t);
    for (i, req) in config.analyses.iter().enumerate() {
        if req.needs_ensemble() && !matches!(req, AnalysisRequest::QuadraticDecay { .. }) {
            continue;
        }
        let report = evaluate(req, config, &scenario, None, Some(single))?;
        dir.write_json(&report_name(i, req), &report)?;
    }
    let manifest = dir.finish(hash, config.seed, started_at)?;
    Ok((dir_path, manifest))
}

/// Runs `analysis` on a finished ensemble run and adds the report to its
/// manifest. Parameters come from the scenario's own request of that name,
/// else from the defaults.
pub fn analyze(run_dir: &Path, analysis: &str) -> Result<Report> {
    let cfg_path = run_dir.join("config.json");
    let config = ScenarioConfig::load(&cfg_path)?;
    let scenario = config.validate()?;
    let req = config
        .analyses
        .iter()
        .find(|a| a.name() == analysis)
        .cloned()
        .or_else(|| AnalysisRequest::default_for(analysis))
        .ok_or_else(|| {
            Error::Validation(format!(
                "analysis: `{analysis}` is not requested by the scenario and has no defaults (known: {})",
                AnalysisRequest::NAMES.join(", ")
            ))
        })?;
    let ensemble: Option<EnsembleResult> = if req.needs_ensemble() {
        let p = run_dir.join("ensemble.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };
    if matches!(req, AnalysisRequest::QuadraticDecay { .. }) {
        return Err(Error::Validation(
            "analysis: quadratic-decay needs trajectories, which are not stored; run the scenario".into(),
        ));
    }
    let report = evaluate(&req, &config, &scenario, ensemble.as_ref(), None)?;

    let manifest = RunManifest::load(run_dir)?;
    let mut dir = RunDir {
        root: run_dir.to_path_buf(),
        files: manifest.files,
    };
    dir.write_json(&format!("reports/analyze-{analysis}.json"), &report)?;
    dir.finish(manifest.config_hash, manifest.seed, manifest.started_at)?;
    Ok(report)
}

/// Recomputes every hash listed in a run's manifest.
pub fn check_manifest(run_dir: &Path) -> Result<Vec<String>> {
    let manifest = RunManifest::load(run_dir)?;
    let mut bad = Vec::new();
    for f in &manifest.files {
        let p = run_dir.join(&f.path);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        if sha256_hex(&bytes) != f.sha256 {
            bad.push(f.path.clone());
        }
    }
    Ok(bad)
}
