use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use clap::Parser;
use dynalloc::benchmark::Example;
use dynalloc::cli::{self, Cli};
use dynalloc::config::Config;
use dynalloc::error::Error;
use dynalloc::io;
use dynalloc::result::SynthesisResult;
use tempfile::TempDir;

fn repo(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(path)
}

fn config(example: Example) -> PathBuf {
    repo(&format!("configs/{}.json", example.name()))
}

fn fixture(example: Example) -> PathBuf {
    repo(&format!("fixtures/paper-gains-{}.json", example.name()))
}

fn run(args: &[&str]) -> dynalloc::error::Result<bool> {
    cli::run(&Cli::try_parse_from(std::iter::once("dynalloc").chain(args.iter().copied())).unwrap())
}

fn root_cause(e: &Error) -> &Error {
    match e {
        Error::Stage { source, .. } => root_cause(source),
        other => other,
    }
}

/// Nominal design of the disturbed satellite, synthesized once per test binary.
fn nominal_gains() -> &'static (TempDir, PathBuf) {
    static GAINS: OnceLock<(TempDir, PathBuf)> = OnceLock::new();
    GAINS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nominal.json");
        let cfg = config(Example::Disturbed);
        assert!(run(&[
            "synth",
            cfg.to_str().unwrap(),
            "--mode",
            "nominal",
            "-o",
            out.to_str().unwrap()
        ])
        .unwrap());
        (dir, out)
    })
}

#[test]
fn shipped_configs_match_benchmark() {
    for example in [Example::Disturbed, Example::Robust] {
        let shipped = Config::load(&config(example)).unwrap();
        assert_eq!(shipped, Config::satellite(example).unwrap(), "{}", example.name());
    }
}

#[test]
fn malformed_row_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config(Example::Disturbed)).unwrap()).unwrap();
    value["plant"]["a_p"][1] = serde_json::json!([0.0]);
    let path = dir.path().join("bad.json");
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    let err = run(&["synth", path.to_str().unwrap()]).unwrap_err();
    assert!(err.to_string().contains("plant.a_p"), "{err}");
}

#[test]
fn global_mode_rejects_satellite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let cfg = config(Example::Disturbed);
    let err = run(&[
        "synth",
        cfg.to_str().unwrap(),
        "--mode",
        "global",
        "-o",
        out.to_str().unwrap(),
    ])
    .unwrap_err();
    assert!(matches!(root_cause(&err), Error::PlantNotHurwitz(_)), "{err}");
    assert!(!out.exists());
}

#[test]
fn zero_horizon_writes_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let (cfg, gains) = (config(Example::Disturbed), fixture(Example::Disturbed));
    let args = [
        "simulate",
        cfg.to_str().unwrap(),
        "--gains",
        gains.to_str().unwrap(),
        "--t-final",
        "0",
        "-o",
        out.to_str().unwrap(),
    ];
    assert!(run(&args).unwrap());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("0e0,-1.8e-1,"));
    assert!(dir.path().join("traj.metrics.json").exists());
}

#[test]
fn static_baseline_has_plant_and_controller_states() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("static.csv");
    let (cfg, gains) = (config(Example::Disturbed), fixture(Example::Disturbed));
    let args = [
        "simulate",
        cfg.to_str().unwrap(),
        "--gains",
        gains.to_str().unwrap(),
        "--baseline",
        "static",
        "--t-final",
        "1",
        "-o",
        out.to_str().unwrap(),
    ];
    assert!(run(&args).unwrap());
    let text = fs::read_to_string(&out).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').filter(|c| c.starts_with("x")).count(), 4, "{header}");
    assert_eq!(text.lines().count(), 102);
}

#[test]
fn printed_gains_pass_vertex_stability() {
    for example in [Example::Disturbed, Example::Robust] {
        let (cfg, gains) = (config(example), fixture(example));
        let args = [
            "dynalloc",
            "verify",
            cfg.to_str().unwrap(),
            "--gains",
            gains.to_str().unwrap(),
        ];
        assert_eq!(cli::main_with_args(args), 0, "{}", example.name());
    }
}

#[test]
fn missing_input_exits_with_error_code() {
    assert_eq!(
        cli::main_with_args(["dynalloc", "synth", "/nonexistent/config.json"]),
        2
    );
}

#[test]
fn certificate_only_report_without_trajectory() {
    let (dir, gains) = nominal_gains();
    let json = dir.path().join("report.json");
    let cfg = config(Example::Disturbed);
    assert!(run(&[
        "verify",
        cfg.to_str().unwrap(),
        "--gains",
        gains.to_str().unwrap(),
        "--json",
        json.to_str().unwrap()
    ])
    .unwrap());
    let report: dynalloc::verify::Report = io::read_json(&json).unwrap();
    assert!(report.checks.iter().any(|c| c.name.starts_with("certificate: Psi")));
    assert!(report.checks.iter().all(|c| !c.name.starts_with("trajectory")));
}

#[test]
fn negated_p_is_rejected() {
    let (dir, gains) = nominal_gains();
    let mut result: SynthesisResult = io::read_json(gains).unwrap();
    for p in &mut result.certificate.as_mut().unwrap().p {
        *p = -p.clone();
    }
    let tampered = dir.path().join("tampered.json");
    io::write_json(&tampered, &result).unwrap();
    let cfg = config(Example::Disturbed);
    let err = run(&["verify", cfg.to_str().unwrap(), "--gains", tampered.to_str().unwrap()]).unwrap_err();
    assert!(matches!(root_cause(&err), Error::NotPositiveDefinite(_)), "{err}");
}

#[test]
fn halved_gamma_fails_with_exit_code_one() {
    let (dir, gains) = nominal_gains();
    let mut result: SynthesisResult = io::read_json(gains).unwrap();
    result.certificate.as_mut().unwrap().gamma *= 0.5;
    let tampered = dir.path().join("half-gamma.json");
    io::write_json(&tampered, &result).unwrap();
    let cfg = config(Example::Disturbed);
    let args = [
        "dynalloc",
        "verify",
        cfg.to_str().unwrap(),
        "--gains",
        tampered.to_str().unwrap(),
    ];
    assert_eq!(cli::main_with_args(args), 1);
}

#[test]
fn simulated_trajectory_verifies() {
    let (dir, gains) = nominal_gains();
    let traj = dir.path().join("nominal.csv");
    let cfg = config(Example::Disturbed);
    let (cfg, gains) = (cfg.to_str().unwrap(), gains.to_str().unwrap());
    assert!(run(&[
        "simulate",
        cfg,
        "--gains",
        gains,
        "--no-disturbance",
        "--t-final",
        "30",
        "-o",
        traj.to_str().unwrap()
    ])
    .unwrap());
    assert!(run(&["verify", cfg, "--gains", gains, "--trajectory", traj.to_str().unwrap()]).unwrap());
}
