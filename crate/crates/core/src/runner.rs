//! Run orchestration: a run directory with diagnostics, snapshots,
//! checkpoints and a manifest that is enough to re-execute or resume the run.
//!
//! ```text
//! <out>/manifest.json
//! <out>/config.toml            resolved configuration
//! <out>/diagnostics.csv
//! <out>/snapshots/phi_00000000.{raw,raw.meta,vti}
//! <out>/final.{raw,raw.meta,vti}
//! <out>/checkpoint/phi.raw(.meta) + checkpoint.json
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{Provenance, RunConfig};
use crate::energy::{EnergyBreakdown, EnergyModel, ModelParams};
use crate::error::{Error, Result};
use crate::field::ScalarField3D;
use crate::integrators::{
    check_semi_implicit_admissible, run_to_steady_state, DiagnosticsRow, RunObserver, RunPlan, Scheme,
};
use crate::io::{self, DiagnosticsWriter, SnapshotMeta};
use crate::scenarios::{derive_constraints, tanh_ellipsoid, DerivedConstraints};
use crate::spectral::Spectral;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

/// File locations inside a run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn config(&self) -> PathBuf {
        self.root.join(CONFIG_FILE)
    }

    pub fn diagnostics(&self) -> PathBuf {
        self.root.join(DIAGNOSTICS_FILE)
    }

    pub fn snapshots(&self) -> PathBuf {
        self.root.join("snapshots")
    }

    pub fn snapshot_stem(step: usize) -> String {
        format!("phi_{step:08}")
    }

    pub fn final_raw(&self) -> PathBuf {
        self.root.join("final.raw")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.root.join(CHECKPOINT_DIR)
    }

    pub fn checkpoint_field(&self) -> PathBuf {
        self.checkpoint_dir().join("phi.raw")
    }

    pub fn checkpoint_manifest(&self) -> PathBuf {
        self.checkpoint_dir().join("checkpoint.json")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Converged,
    MaxSteps,
    Failed,
}

/// Everything needed to re-execute a run, plus how it ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub created_unix: u64,
    pub config: RunConfig,
    pub provenance: Provenance,
    /// Model constants actually used, after defaults and derived targets are applied.
    pub model_params: ModelParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<DerivedConstraints>,
    pub threads: usize,
    pub status: RunStatus,
    pub converged: bool,
    pub steps: usize,
    pub final_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_energy: Option<EnergyBreakdown>,
    pub wall_clock_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resumed_at: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
}

/// Sidecar of a checkpoint field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub step: usize,
    pub time: f64,
    pub scheme: Scheme,
    pub dt: f64,
}

/// Model, initial field and derived constraints for a configuration.
pub struct Prepared {
    pub model: EnergyModel,
    pub initial: ScalarField3D,
    pub derived: Option<DerivedConstraints>,
}

/// Build the energy model and initial field, replacing any targets listed in
/// `derive_targets` by the measured value of the initial field.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let initial = tanh_ellipsoid(&cfg.initial_spec(), &cfg.domain)?;
    let mut params = cfg.model_params();
    let spectral = Spectral::new(cfg.domain)?.with_dealiasing(cfg.dealias);
    let mut model = EnergyModel::with_spectral(spectral, params)?;
    let mut derived = None;
    if !cfg.derive_targets.is_empty() {
        let d = derive_constraints(&model, &initial);
        for t in &cfg.derive_targets {
            match t.as_str() {
                "alpha" => params.alpha = d.alpha,
                "beta" => {
                    params.beta = d.beta;
                    if cfg.params.a0.is_none() {
                        params.a0 = d.beta;
                    }
                }
                "dA0" => params.da0 = d.da0,
                _ => unreachable!("validated"),
            }
        }
        model = model.with_params(params)?;
        derived = Some(d);
    }
    Ok(Prepared { model, initial, derived })
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_checkpoint(layout: &RunLayout, phi: &ScalarField3D, info: &CheckpointInfo) -> Result<()> {
    // Write into a sibling directory and swap it in, so a crash never leaves a half-written checkpoint.
    let dir = layout.checkpoint_dir();
    let tmp = layout.root.join("checkpoint.tmp");
    let old = layout.root.join("checkpoint.old");
    let _ = fs::remove_dir_all(&tmp);
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    io::write_raw(&tmp.join("phi.raw"), phi, &SnapshotMeta::new(*phi.grid(), info.step, info.time))?;
    io::write_json(&tmp.join("checkpoint.json"), info)?;
    let _ = fs::remove_dir_all(&old);
    if dir.exists() {
        fs::rename(&dir, &old).map_err(|e| Error::io(&dir, e))?;
    }
    fs::rename(&tmp, &dir).map_err(|e| Error::io(&dir, e))?;
    let _ = fs::remove_dir_all(&old);
    Ok(())
}

/// Read the checkpoint of a run directory.
pub fn read_checkpoint(layout: &RunLayout) -> Result<(ScalarField3D, CheckpointInfo)> {
    let info: CheckpointInfo = io::read_json(&layout.checkpoint_manifest())?;
    let (phi, meta) = io::read_raw(&layout.checkpoint_field())?;
    if meta.step != info.step {
        return Err(Error::Format {
            path: layout.checkpoint_field(),
            reason: format!("field is at step {} but checkpoint says {}", meta.step, info.step),
        });
    }
    Ok((phi, info))
}

struct Recorder<'a> {
    layout: &'a RunLayout,
    cfg: &'a RunConfig,
    writer: DiagnosticsWriter,
    progress: &'a mut dyn FnMut(&DiagnosticsRow),
}

impl Recorder<'_> {
    fn meta(&self, step: usize, phi: &ScalarField3D) -> SnapshotMeta {
        SnapshotMeta::new(*phi.grid(), step, step as f64 * self.cfg.integrator.dt)
    }

    fn snapshot(&self, step: usize, phi: &ScalarField3D) -> Result<()> {
        let meta = self.meta(step, phi);
        io::write_snapshot(
            &self.layout.snapshots(),
            &RunLayout::snapshot_stem(step),
            phi,
            &meta,
            &self.cfg.output.formats,
        )?;
        Ok(())
    }
}

impl RunObserver for Recorder<'_> {
    fn on_diagnostics(&mut self, row: &DiagnosticsRow, _phi: &ScalarField3D) -> Result<()> {
        self.writer.append(row)?;
        (self.progress)(row);
        Ok(())
    }

    fn on_step(&mut self, step: usize, phi: &ScalarField3D) -> Result<()> {
        if step.is_multiple_of(self.cfg.output.snapshot_every) {
            self.snapshot(step, phi)?;
        }
        if step.is_multiple_of(self.cfg.output.checkpoint_every) {
            let info = CheckpointInfo {
                step,
                time: step as f64 * self.cfg.integrator.dt,
                scheme: self.cfg.integrator.scheme,
                dt: self.cfg.integrator.dt,
            };
            write_checkpoint(self.layout, phi, &info)?;
        }
        Ok(())
    }
}

struct Session<'a> {
    layout: RunLayout,
    manifest: RunManifest,
    model: EnergyModel,
    phi: ScalarField3D,
    start_step: usize,
    fresh: bool,
    progress: &'a mut dyn FnMut(&DiagnosticsRow),
}

fn run_session(mut s: Session<'_>) -> Result<RunManifest> {
    let started = Instant::now();
    let cfg = s.manifest.config.clone();
    let layout = s.layout.clone();
    io::write_json(&layout.manifest(), &s.manifest)?;

    let outcome = (|| -> Result<_> {
        if cfg.integrator.scheme == Scheme::SemiImplicit {
            check_semi_implicit_admissible(s.model.params(), cfg.integrator.dt)?;
        }
        fs::create_dir_all(layout.snapshots()).map_err(|e| Error::io(layout.snapshots(), e))?;
        let writer = if s.fresh {
            DiagnosticsWriter::create(&layout.diagnostics())?
        } else {
            resume_diagnostics(&layout.diagnostics(), s.start_step, cfg.output.diag_every)?
        };
        let mut rec = Recorder { layout: &layout, cfg: &cfg, writer, progress: &mut *s.progress };
        if s.fresh {
            rec.snapshot(0, &s.phi)?;
        }
        let plan = RunPlan {
            integrator: cfg.integrator,
            stopping: cfg.stopping,
            diag_every: cfg.output.diag_every,
            start_step: s.start_step,
            record_initial: s.fresh,
        };
        let out = run_to_steady_state(&s.model, &s.phi, &plan, &mut rec)?;
        let meta = rec.meta(out.steps, &out.field);
        io::write_snapshot(&layout.root, "final", &out.field, &meta, &cfg.output.formats)?;
        if out.steps % cfg.output.checkpoint_every != 0 {
            let info = CheckpointInfo {
                step: out.steps,
                time: meta.time,
                scheme: cfg.integrator.scheme,
                dt: cfg.integrator.dt,
            };
            write_checkpoint(&layout, &out.field, &info)?;
        }
        Ok(out)
    })();

    let m = &mut s.manifest;
    m.wall_clock_seconds += started.elapsed().as_secs_f64();
    match outcome {
        Ok(out) => {
            m.status = if out.converged { RunStatus::Converged } else { RunStatus::MaxSteps };
            m.converged = out.converged;
            m.steps = out.steps;
            m.final_time = out.steps as f64 * cfg.integrator.dt;
            m.final_energy = Some(s.model.total_energy(&out.field));
            m.error = None;
            m.exit_code = None;
            io::write_json(&layout.manifest(), m)?;
            Ok(s.manifest)
        }
        Err(e) => {
            m.status = RunStatus::Failed;
            m.converged = false;
            m.error = Some(e.to_string());
            m.exit_code = Some(e.exit_code());
            // Keep the original error even if the manifest cannot be written.
            let _ = io::write_json(&layout.manifest(), m);
            Err(e)
        }
    }
}

/// Drop rows that an uninterrupted run would not contain: anything after the
/// checkpoint, and an off-cadence closing row at the checkpoint itself.
fn resume_diagnostics(path: &Path, step: usize, diag_every: usize) -> Result<DiagnosticsWriter> {
    let keep = if step.is_multiple_of(diag_every) { step } else { step.saturating_sub(1) };
    DiagnosticsWriter::truncate_after(path, keep)
}

/// Execute a configuration into `out`, creating the directory.
///
/// On failure the manifest records the error and partial artifacts are kept.
pub fn execute(
    cfg: &RunConfig,
    provenance: &Provenance,
    out: &Path,
    progress: &mut dyn FnMut(&DiagnosticsRow),
) -> Result<RunManifest> {
    let prepared = prepare(cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let layout = RunLayout::new(out);
    fs::write(layout.config(), cfg.to_toml()).map_err(|e| Error::io(layout.config(), e))?;
    let manifest = RunManifest {
        code_version: env!("CARGO_PKG_VERSION").to_owned(),
        created_unix: now_unix(),
        config: cfg.clone(),
        provenance: provenance.clone(),
        model_params: *prepared.model.params(),
        derived: prepared.derived,
        threads: rayon::current_num_threads(),
        status: RunStatus::Running,
        converged: false,
        steps: 0,
        final_time: 0.0,
        final_energy: None,
        wall_clock_seconds: 0.0,
        resumed_at: Vec::new(),
        error: None,
        exit_code: None,
    };
    run_session(Session {
        layout,
        manifest,
        model: prepared.model,
        phi: prepared.initial,
        start_step: 0,
        fresh: true,
        progress,
    })
}

/// Continue a run from its checkpoint. `max_steps` optionally raises the step budget.
pub fn resume(
    run_dir: &Path,
    max_steps: Option<usize>,
    progress: &mut dyn FnMut(&DiagnosticsRow),
) -> Result<RunManifest> {
    let layout = RunLayout::new(run_dir);
    let mut manifest: RunManifest = io::read_json(&layout.manifest())?;
    let (phi, info) = read_checkpoint(&layout)?;
    if info.scheme != manifest.config.integrator.scheme || info.dt != manifest.config.integrator.dt {
        return Err(Error::Format {
            path: layout.checkpoint_manifest(),
            reason: "checkpoint integrator does not match the run manifest".into(),
        });
    }
    if let Some(n) = max_steps {
        manifest.config.stopping.max_steps = n;
        manifest.config.validate()?;
    }
    if info.step >= manifest.config.stopping.max_steps || manifest.converged {
        return Err(Error::config(
            "stopping.max_steps",
            format!("run already ended at step {}; raise max_steps to continue", info.step),
        ));
    }
    let spectral = Spectral::new(manifest.config.domain)?.with_dealiasing(manifest.config.dealias);
    let model = EnergyModel::with_spectral(spectral, manifest.model_params)?;
    manifest.resumed_at.push(info.step);
    manifest.status = RunStatus::Running;
    manifest.threads = rayon::current_num_threads();
    fs::write(layout.config(), manifest.config.to_toml()).map_err(|e| Error::io(layout.config(), e))?;
    run_session(Session { layout, manifest, model, phi, start_step: info.step, fresh: false, progress })
}
