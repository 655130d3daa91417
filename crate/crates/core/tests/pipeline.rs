use phaseless::config::ExperimentConfig;
use phaseless::geometry::{Bump, Vec3};
use phaseless::pipeline::{self, RunDirs};
use phaseless::report::RunReport;
use phaseless::Error;
use std::path::Path;
use std::process::Command;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.tomography.n_slices = 2;
    cfg.tomography.z_range = (-0.2, 0.2);
    cfg.tomography.n_theta = 16;
    cfg.tomography.n_s = 10;
    cfg.tomography.slice_n = 24;
    cfg.tomography.volume_n = 17;
    cfg.uniqueness.n_sources = 2;
    cfg.uniqueness.n_receivers = 1;
    cfg
}

fn bytes(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn same_seed_gives_identical_reports_and_files() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline::full_pipeline(&cfg, a.path()).unwrap();
    let rb = pipeline::full_pipeline(&cfg, b.path()).unwrap();
    assert_eq!(ra.without_wall_times(), rb.without_wall_times());
    let (da, db) = (RunDirs::new(a.path()), RunDirs::new(b.path()));
    for s in 0..cfg.tomography.n_slices {
        assert_eq!(bytes(&da.modulus(s)), bytes(&db.modulus(s)));
        assert_eq!(bytes(&da.lines(s)), bytes(&db.lines(s)));
    }
    assert_eq!(bytes(&da.volume()), bytes(&db.volume()));
    let stored =
        RunReport::from_json(&std::fs::read_to_string(a.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(stored, ra);
    assert!(ra.lines.iter().all(|l| l.status == "ok"));
}

#[test]
fn reconstruction_never_reads_sealed_data() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let dirs = RunDirs::new(dir.path());
    pipeline::run_forward(&cfg, dir.path()).unwrap();
    let away = dir.path().join("sealed_away");
    std::fs::rename(&dirs.sealed, &away).unwrap();
    let r = pipeline::run_reconstruct_ip1(&cfg, dir.path()).unwrap();
    assert!(!dirs.sealed.exists());
    assert_eq!(r.stages.len(), 3);
    let mut report = RunReport::new("evaluate", 1, cfg.seed);
    assert!(matches!(
        pipeline::evaluate(&cfg, dir.path(), &mut report),
        Err(Error::Io(_))
    ));
    std::fs::rename(&away, &dirs.sealed).unwrap();
    pipeline::evaluate(&cfg, dir.path(), &mut report).unwrap();
    assert!(report.errors.contains_key("volume_rel_l2"));
}

#[test]
fn stages_rerun_from_their_inputs() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let dirs = RunDirs::new(dir.path());
    pipeline::full_pipeline(&cfg, dir.path()).unwrap();
    let volume = bytes(&dirs.volume());
    let lines = bytes(&dirs.lines(1));
    std::fs::remove_file(dirs.lines(0)).unwrap();
    std::fs::remove_file(dirs.lines(1)).unwrap();
    std::fs::remove_file(dirs.volume()).unwrap();
    assert!(pipeline::invert_stage(&cfg, dir.path()).is_err());
    pipeline::extract_lines_stage(&cfg, dir.path()).unwrap();
    pipeline::invert_stage(&cfg, dir.path()).unwrap();
    assert_eq!(bytes(&dirs.lines(1)), lines);
    assert_eq!(bytes(&dirs.volume()), volume);
}

#[test]
fn missing_stage_input_names_the_stage() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    match pipeline::retrieve_phase_stage(&cfg, dir.path()) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "retrieve_phase"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn uniqueness_requires_equal_backgrounds() {
    let cfg = small();
    let q1 = cfg.phantom();
    let mut q2 = q1.clone();
    q2.background
        .push(Bump::new(Vec3::new(0.0, 0.0, 1.8), 0.3, 0.1));
    assert!(matches!(
        pipeline::verify_uniqueness(&cfg, &q1, &q2),
        Err(Error::PreconditionViolated(_))
    ));
    let (same, report) = pipeline::verify_uniqueness(&cfg, &q1, &q1).unwrap();
    assert_eq!(same.data_gap, 0.0);
    assert!(same.identical);
    assert!(report.find_flag("lambda_identically_zero").unwrap().passed);
}

#[test]
fn cli_runs_stages_and_reports_errors() {
    let exe = env!("CARGO_BIN_EXE_phaseless");
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.tomography.n_slices = 1;
    cfg.tomography.z_range = (0.0, 0.0);
    let path = dir.path().join("c.toml");
    cfg.save(&path).unwrap();
    let out = dir.path().join("run");
    let st = Command::new(exe)
        .args(["simulate", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "3", "--fit-window", "90,170"])
        .status()
        .unwrap();
    assert!(st.success());
    let stored = ExperimentConfig::load(&out.join("data/config.toml")).unwrap();
    assert_eq!(stored.seed, 3);
    assert_eq!(stored.spectral.fit_window, (90.0, 170.0));
    for stage in ["retrieve-phase", "extract-lines", "invert"] {
        let st = Command::new(exe)
            .arg(stage)
            .arg("--config")
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(st.success(), "{stage}");
    }
    assert!(out.join("stages/volume.bin").exists());

    std::fs::write(
        dir.path().join("bad.toml"),
        "problem = 1\nunknown_key = 2\n",
    )
    .unwrap();
    let o = Command::new(exe)
        .args(["simulate", "--config"])
        .arg(dir.path().join("bad.toml"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn example_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 2);
}
