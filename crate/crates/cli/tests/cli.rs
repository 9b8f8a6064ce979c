use std::fs;
use std::path::Path;
use std::process::Command;

use ddpmlab_cli::plotdata::{convert, plotdata};
use ddpmlab_cli::{run, ExperimentConfig, RunError};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ddpmlab"))
}

fn cfg(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text, Path::new(".")).unwrap()
}

#[test]
fn unknown_and_bad_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in [
        "experiment = identity\npaths_typo = 5\n",
        "experiment = identity\npaths = many\n",
        "experiment = nonsense\n",
        "experiment = identity\nseed = 1\nseed = 2\n",
        "paths = 10\n",
    ]
    .iter()
    .enumerate()
    {
        let path = dir.path().join(format!("bad{i}.cfg"));
        fs::write(&path, text).unwrap();
        assert!(matches!(ExperimentConfig::load(&path), Err(RunError::Config(_))), "{text:?}");
        let status = bin().arg("run").arg(&path).output().unwrap().status;
        assert_eq!(status.code(), Some(2), "{text:?}");
    }
}

#[test]
fn missing_config_file_exits_with_io_code() {
    let status = bin().args(["run", "/nonexistent/ddpmlab.cfg"]).output().unwrap().status;
    assert_eq!(status.code(), Some(3));
}

#[test]
fn schedule_audit_passes_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.cfg");
    let out = dir.path().join("out");
    fs::write(&path, "experiment = schedule-audit\nschedule.kind = ho\naudit.growth_times = 2\ngrid = 201\n").unwrap();
    let o = bin().arg("run").arg(&path).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("PASS band_passes"), "{summary}");
    assert!(summary.trim_end().ends_with("status = PASS (3/3 assertions passed)"), "{summary}");
    assert!(out.join("band.csv").exists());
}

#[test]
fn failing_assertion_exits_one() {
    // gamma1 well above the schedule's admissible value
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.cfg");
    fs::write(&path, "experiment = schedule-audit\nschedule.kind = ho\naudit.gamma1 = 0.5\naudit.growth_times = 0\n")
        .unwrap();
    let o = bin().arg("run").arg(&path).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_override_and_repeat_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("id.cfg");
    fs::write(
        &path,
        "experiment = identity\nschedule.kind = constant_total\nschedule.n = 10\npaths = 2000\nseed = 1\n",
    )
    .unwrap();
    let outs: Vec<_> = ["a", "b", "c"].iter().map(|d| dir.path().join(d)).collect();
    for (o, seed) in outs.iter().zip(["3", "3", "4"]) {
        bin().arg("run").arg(&path).args(["--seed", seed, "--threads", "2", "--out"]).arg(o).output().unwrap();
    }
    let read = |d: &Path| fs::read(d.join("identity.csv")).unwrap();
    assert_eq!(read(&outs[0]), read(&outs[1]));
    assert_ne!(read(&outs[0]), read(&outs[2]));
    let echo = fs::read_to_string(outs[0].join("config.txt")).unwrap();
    assert!(echo.lines().any(|l| l == "seed = 3"), "{echo}");
}

#[test]
fn plotdata_of_empty_file_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let (inp, out) = (dir.path().join("empty.csv"), dir.path().join("empty.dat"));
    fs::write(&inp, "").unwrap();
    assert_eq!(plotdata(&inp, &out).unwrap(), 0);
    assert_eq!(fs::read_to_string(&out).unwrap(), "");
}

#[test]
fn plotdata_residual_uses_log_step_size() {
    let dir = tempfile::tempdir().unwrap();
    let c =
        cfg("experiment = sign-adjudication\ntarget.kind = shifted\nschedule.kind = constant_total\nschedule.n = 5\n\
         paths = 200\nfbsde.substeps = 8, 16\npde.times = 0.37\ngrid = 201\n");
    let res = run(&c, dir.path()).unwrap();
    let text = fs::read_to_string(res.dir.join("residual.csv")).unwrap();
    let (dat, points) = convert(&text).unwrap();
    assert_eq!(points, 4);
    let xs: Vec<f64> = dat
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    let want = [(1.0f64 / 8.0).log10(), (1.0f64 / 16.0).log10()];
    assert_eq!(xs.len(), 4);
    for (x, w) in xs.iter().zip(want.iter().cycle()) {
        assert!((x - w).abs() < 1e-12, "{x} vs {w}");
    }
}

#[test]
fn plotdata_of_tv_sweep_has_one_point_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("experiment = bounds-sweep\nschedule.kind = ho_scaled\nschedule.n = 40\npaths = 2000\n\
         bounds.schrodinger = false\nbounds.biases =\nbounds.sweep_ns = 10, 20, 40, 80\n");
    let res = run(&c, dir.path()).unwrap();
    let out = dir.path().join("tv.dat");
    assert_eq!(plotdata(&res.dir.join("tv_vs_n.csv"), &out).unwrap(), 4);
    let ns: Vec<f64> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ns, vec![10.0, 20.0, 40.0, 80.0]);
}

#[test]
fn plotdata_rejects_unknown_report() {
    let dir = tempfile::tempdir().unwrap();
    let inp = dir.path().join("odd.csv");
    fs::write(&inp, "x,y\n1,2\n").unwrap();
    let status = bin().arg("plotdata").arg(&inp).arg("--out").arg(dir.path().join("o.dat")).output().unwrap().status;
    assert_eq!(status.code(), Some(2));
}
