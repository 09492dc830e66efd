use std::fs;

use vesicle_core::config::ConfigLoader;
use vesicle_core::io::{read_diagnostics, read_raw, read_vti_values};
use vesicle_core::runner::{execute, resume, RunLayout, RunManifest, RunStatus};
use vesicle_core::Error;

fn small(max_steps: usize) -> ConfigLoader {
    ConfigLoader::new()
        .preset("discocyte")
        .grid(16)
        .set("params.epsilon=0.08")
        .unwrap()
        .set("integrator.dt=1e-7")
        .unwrap()
        .set(&format!("stopping.max_steps={max_steps}"))
        .unwrap()
        .set("output.diag_every=4")
        .unwrap()
        .set("output.snapshot_every=10")
        .unwrap()
        .set("output.checkpoint_every=10")
        .unwrap()
}

fn quiet() -> impl FnMut(&vesicle_core::integrators::DiagnosticsRow) {
    |_| {}
}

#[test]
fn run_directory_has_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, prov) = small(22).load().unwrap();
    let m = execute(&cfg, &prov, dir.path(), &mut quiet()).unwrap();
    assert_eq!(m.steps, 22);
    assert_eq!(m.status, RunStatus::MaxSteps);
    assert!(!m.converged);
    assert!(m.wall_clock_seconds > 0.0);
    assert_eq!(prov.overrides.len(), 9);

    let layout = RunLayout::new(dir.path());
    let rows = read_diagnostics(&layout.diagnostics()).unwrap();
    let steps: Vec<usize> = rows.iter().map(|r| r.step).collect();
    assert_eq!(steps, vec![0, 4, 8, 12, 16, 20, 22]);
    for r in &rows {
        let e = &r.energy;
        assert_eq!(e.e_m, e.w + e.g + e.t1 + e.t2);
        assert_eq!(r.time, r.step as f64 * 1e-7);
    }
    for stem in ["phi_00000000", "phi_00000010", "phi_00000020"] {
        assert!(layout.snapshots().join(format!("{stem}.raw")).exists(), "{stem}");
        assert!(layout.snapshots().join(format!("{stem}.raw.meta")).exists(), "{stem}");
        assert!(layout.snapshots().join(format!("{stem}.vti")).exists(), "{stem}");
    }
    let (fin, meta) = read_raw(&layout.final_raw()).unwrap();
    assert_eq!(meta.step, 22);
    assert_eq!(fs::metadata(layout.final_raw()).unwrap().len(), 16 * 16 * 16 * 8);
    let vti = read_vti_values(&dir.path().join("final.vti")).unwrap();
    assert_eq!(vti, fin.values());

    let saved: RunManifest = serde_json::from_str(&fs::read_to_string(layout.manifest()).unwrap()).unwrap();
    assert_eq!(saved, m);
    let (again, _) = ConfigLoader::new().file(&layout.config()).unwrap().load().unwrap();
    assert_eq!(again, cfg);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let (cfg, prov) = small(12).load().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    execute(&cfg, &prov, a.path(), &mut quiet()).unwrap();
    execute(&cfg, &prov, b.path(), &mut quiet()).unwrap();
    for f in ["diagnostics.csv", "final.raw", "final.vti", "snapshots/phi_00000010.raw"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_matches_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    let (cfg, prov) = small(26).load().unwrap();
    execute(&cfg, &prov, full.path(), &mut quiet()).unwrap();

    // Stop at an off-cadence step, then continue to the same end point.
    let part = tempfile::tempdir().unwrap();
    let (short, prov) = small(13).load().unwrap();
    execute(&short, &prov, part.path(), &mut quiet()).unwrap();
    let m = resume(part.path(), Some(26), &mut quiet()).unwrap();
    assert_eq!(m.steps, 26);
    assert_eq!(m.resumed_at, vec![13]);

    assert_eq!(fs::read(full.path().join("final.raw")).unwrap(), fs::read(part.path().join("final.raw")).unwrap());
    assert_eq!(
        fs::read(full.path().join("diagnostics.csv")).unwrap(),
        fs::read(part.path().join("diagnostics.csv")).unwrap()
    );
}

#[test]
fn resume_refuses_finished_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, prov) = small(5).load().unwrap();
    execute(&cfg, &prov, dir.path(), &mut quiet()).unwrap();
    assert!(matches!(resume(dir.path(), None, &mut quiet()), Err(Error::Config { .. })));
}

#[test]
fn inadmissible_step_fails_before_stepping() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, prov) =
        ConfigLoader::new().preset("discocyte").grid(16).set("integrator.dt=1e-4").unwrap().load().unwrap();
    let err = execute(&cfg, &prov, dir.path(), &mut quiet()).unwrap_err();
    assert!(matches!(err, Error::NonPositiveSymbol { .. }));
    assert_eq!(err.exit_code(), 3);
    let layout = RunLayout::new(dir.path());
    assert!(!layout.diagnostics().exists());
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(layout.manifest()).unwrap()).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert_eq!(m.exit_code, Some(3));
}

#[test]
fn derived_targets_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, prov) = small(2).set("derive_targets=[\"alpha\",\"beta\"]").unwrap().load().unwrap();
    let m = execute(&cfg, &prov, dir.path(), &mut quiet()).unwrap();
    let d = m.derived.unwrap();
    assert_eq!(m.model_params.alpha, d.alpha);
    assert_eq!(m.model_params.beta, d.beta);
    assert_eq!(m.model_params.a0, d.beta);
    assert_eq!(m.model_params.da0, cfg.params.da0);
}
