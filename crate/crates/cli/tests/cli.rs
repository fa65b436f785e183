use std::fs;
use std::path::Path;
use std::process::Command;

use ipsplice_cli::config::Format;
use ipsplice_cli::{emit_plot_data, exit_code, run_text, Experiment};

fn ipsplice() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ipsplice"));
    c.env_remove("IPSPLICE_OUT_DIR");
    c
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

const SPLICE: &str = "seed = 1\nn = [16]\nepsilon = [0.25, 0.125]\nsamples = 60\nmodes = [\"threshold\", \"invasion\"]\nlambda = 2.0\n";

#[test]
fn missing_field_exits_1_and_names_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "seed = 1\nepsilon = [0.25]\nsamples = 10\n").unwrap();
    let out = ipsplice()
        .args(["splice", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`n`"), "{err}");
}

#[test]
fn bad_value_exits_1() {
    let r = run_text(Experiment::Splice, "seed = 1\nn = [16]\nepsilon = [0]\nsamples = 5\n", Format::Toml, None);
    assert_eq!(exit_code(&r), 1);
}

#[test]
fn verify_defaults_exit_0() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ipsplice()
        .args(["--workers", "2", "verify", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_lines(&tmp.path().join("checks.csv"));
    assert!(rows.len() > 1);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(1) == Some("1")), "{rows:?}");
}

#[test]
fn splice_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_text(Experiment::Splice, SPLICE, Format::Toml, Some(tmp.path())).unwrap();
    assert_eq!(o.exit_code(), 0);
    let rows = data_lines(&tmp.path().join("cells.csv"));
    assert!(rows[0].starts_with("n,epsilon,mode,estimate,stderr"));
    assert_eq!(rows.len(), 1 + 4);
    for mode in ["threshold", "invasion"] {
        let eps: Vec<&str> = rows[1..]
            .iter()
            .filter(|r| r.split(',').nth(2) == Some(mode))
            .map(|r| r.split(',').nth(1).unwrap())
            .collect();
        assert_eq!(eps, ["0.125", "0.25"]);
    }
    assert_eq!(fs::read_to_string(tmp.path().join("config.toml")).unwrap(), SPLICE);
}

#[test]
fn outputs_are_stamped() {
    let tmp = tempfile::tempdir().unwrap();
    run_text(Experiment::Splice, SPLICE, Format::Toml, Some(tmp.path())).unwrap();
    let text = fs::read_to_string(tmp.path().join("cells.csv")).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# ipsplice "), "{first}");
    assert!(first.ends_with(" schema=1"), "{first}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn json_config_matches_toml() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let json = r#"{"seed": 1, "n": [16], "epsilon": [0.25, 0.125], "samples": 60, "modes": ["threshold", "invasion"], "lambda": 2.0}"#;
    run_text(Experiment::Splice, SPLICE, Format::Toml, Some(a.path())).unwrap();
    run_text(Experiment::Splice, json, Format::Json, Some(b.path())).unwrap();
    let strip = |p: &Path| data_lines(p);
    assert_eq!(strip(&a.path().join("cells.csv")), strip(&b.path().join("cells.csv")));
}

#[test]
fn env_var_sets_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "seed = 2\nruns = 3\nsteps = 200\noutput_dir = \"ignored\"\n").unwrap();
    let target = tmp.path().join("from-env");
    let out = ipsplice()
        .current_dir(tmp.path())
        .env("IPSPLICE_OUT_DIR", &target)
        .args(["invade", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("runs.csv").exists());
    assert!(!tmp.path().join("ignored").exists());
}

#[test]
fn plot_tables_from_splice_run() {
    let tmp = tempfile::tempdir().unwrap();
    run_text(Experiment::Splice, SPLICE, Format::Toml, Some(tmp.path())).unwrap();
    emit_plot_data(tmp.path()).unwrap();
    let lines = data_lines(&tmp.path().join("plot/mismatch.dat"));
    assert_eq!(lines.len(), 4);
    let first: Vec<&str> = lines[0].split(' ').collect();
    assert_eq!(&first[..3], ["16", "0.125", "invasion"]);
    assert_eq!(first.len(), 5);
    let header = fs::read_to_string(tmp.path().join("plot/mismatch.dat")).unwrap();
    assert!(header.starts_with("# n epsilon mode estimate stderr\n"));
}

#[test]
fn plot_tables_header_only_when_inputs_missing() {
    let tmp = tempfile::tempdir().unwrap();
    let files = emit_plot_data(tmp.path()).unwrap();
    assert_eq!(files.len(), 3);
    for f in files {
        let text = fs::read_to_string(&f).unwrap();
        assert_eq!(text.lines().count(), 1, "{}", f.display());
        assert!(text.starts_with("# "));
    }
}

#[test]
fn plot_single_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "seed = 1\nn = [16]\nepsilon = [0.5]\nsamples = 20\n";
    run_text(Experiment::Splice, cfg, Format::Toml, Some(tmp.path())).unwrap();
    emit_plot_data(tmp.path()).unwrap();
    assert_eq!(data_lines(&tmp.path().join("plot/mismatch.dat")).len(), 1);
}

#[test]
fn plot_arms_loglog() {
    let tmp = tempfile::tempdir().unwrap();
    run_text(Experiment::Arms, "seed = 5\nn = 16\ns = [2, 4]\nsamples = 200\n", Format::Toml, Some(tmp.path())).unwrap();
    emit_plot_data(tmp.path()).unwrap();
    let lines = data_lines(&tmp.path().join("plot/arms_loglog.dat"));
    assert!(lines.len() <= 2);
    for l in lines {
        let x: f64 = l.split(' ').next().unwrap().parse().unwrap();
        assert!(x < 0.0);
    }
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        run_text(Experiment::Crossings, "seed = 3\nn = [16]\nsamples = 100\n", Format::Toml, Some(d)).unwrap();
    }
    for f in ["histogram.csv", "tails.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
