use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rcfgan"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, body).unwrap();
    p
}

const SUBCOMMANDS: [&str; 6] = ["train", "validate-metric", "swap", "alpha-sweep", "two-sample", "grad-check"];

#[test]
fn help_documents_common_flags() {
    for sub in SUBCOMMANDS {
        let o = run(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        let text = String::from_utf8_lossy(&o.stdout);
        for flag in ["--config", "--seed", "--out", "--quiet"] {
            assert!(text.contains(flag), "{sub} help lacks {flag}");
        }
    }
}

#[test]
fn unknown_flag_is_usage_error() {
    for sub in SUBCOMMANDS {
        assert_eq!(code(&run(&[sub, "--no-such-flag"])), 2, "{sub}");
    }
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "# comment\nlr = 0.001\nlearnig_rate = 3\n");
    let o = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("learnig_rate"), "{err}");

    let cfg = write_config(dir.path(), "alpha = 1.5\n");
    assert_eq!(code(&run(&["train", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn missing_dataset_path_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dataset = idx\nidx_images = /nonexistent/images\nidx_labels = /nonexistent/labels\n",
    );
    let out = dir.path().join("o");
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&run(&["swap", "--mnist", "/nonexistent/dir"])), 2);
}

fn short_train(dir: &Path, name: &str, seed: &str) -> PathBuf {
    let cfg = write_config(dir, "iterations = 30\ncheckpoint_interval = 10\nhidden = 16,16\neval_samples = 200\n");
    let out = dir.join(name);
    let o = run(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        seed,
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn train_writes_outputs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = short_train(dir.path(), "a", "7");
    let b = short_train(dir.path(), "b", "7");
    for f in [
        "telemetry.csv",
        "checkpoint.bin",
        "final.bin",
        "modes.csv",
        "samples.csv",
        "scatter.png",
        "config.txt",
        "README.md",
    ] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    let read = |p: PathBuf| std::fs::read(p).unwrap();
    assert_eq!(read(a.join("telemetry.csv")), read(b.join("telemetry.csv")));
    assert_eq!(read(a.join("samples.csv")), read(b.join("samples.csv")));
    let telemetry = String::from_utf8(read(a.join("telemetry.csv"))).unwrap();
    assert_eq!(telemetry.lines().count(), 31);

    let c = short_train(dir.path(), "c", "8");
    assert_ne!(read(a.join("telemetry.csv")), read(c.join("telemetry.csv")));

    // the resolved config reproduces the run on its own
    let d = dir.path().join("d");
    let o = run(&[
        "train",
        "--config",
        a.join("config.txt").to_str().unwrap(),
        "--out",
        d.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(read(a.join("telemetry.csv")), read(d.join("telemetry.csv")));
    let resolved = String::from_utf8(read(a.join("config.txt"))).unwrap();
    assert!(resolved.contains("seed = 7") && resolved.contains("lr = 0.0002"));
}

#[test]
fn non_finite_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "iterations = 5\nz_variance = 1e308\nhidden = 4\n");
    let out = dir.path().join("o");
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("abort_window.csv").is_file());
}

fn quick_suite_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        "suite_trials = 30\nsuite_samples = 64\nsuite_freqs = 16\nanalytic_samples = 100000\n",
    )
}

#[test]
fn validate_metric_passes_and_catches_fault() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_suite_config(dir.path());
    let out = dir.path().join("ok");
    let o = run(&["validate-metric", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.contains("max observed distance"));
    assert!(!stdout.contains("FAIL"));
    assert!(out.join("suites.csv").is_file());

    let out = dir.path().join("bad");
    let o = run(&[
        "validate-metric",
        "--config",
        cfg.to_str().unwrap(),
        "--fault",
        "flip-sign",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("axioms") && l.contains("FAIL")), "{stdout}");
    assert!(stdout.contains("counterexample"));
}

#[test]
fn grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = run(&["grad-check", "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("grad_check.csv").is_file());
}

#[test]
fn swap_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = run(&[
        "swap",
        "--digits",
        "1,2",
        "--mnist",
        fixture_dir().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["a.csv", "b.csv", "phase_a_amp_b.csv", "phase_b_amp_a.csv", "classification.csv", "swap.png"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = std::fs::read_to_string(out.join("classification.csv")).unwrap();
    let row = report.lines().find(|l| l.starts_with("phase_a_amp_b,")).unwrap();
    let frac: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(frac >= 0.95, "{row}");
    assert_eq!(code(&run(&["swap", "--digits", "1,1", "--mnist", fixture_dir().to_str().unwrap()])), 2);
}

#[test]
fn alpha_sweep_writes_one_row_per_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let o = run(&[
        "alpha-sweep",
        "--alphas",
        "0.001,0.5,0.999",
        "--iterations",
        "20",
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("spread.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(code(&run(&["alpha-sweep", "--alphas", "0.5,2"])), 2);
}

#[test]
fn two_sample_null_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let go = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&[
            "two-sample",
            "--null",
            "--n",
            "64",
            "--trials",
            "20",
            "--seed",
            "3",
            "--out",
            out.to_str().unwrap(),
            "--quiet",
        ]);
        assert_eq!(code(&o), 0);
        (
            std::fs::read(out.join("trials.csv")).unwrap(),
            std::fs::read_to_string(out.join("summary.csv")).unwrap(),
        )
    };
    let (a, summary) = go("x");
    let (b, _) = go("y");
    assert_eq!(a, b);
    assert!(summary.lines().nth(1).unwrap().starts_with("null,64,0,20,"));
}
