use std::path::Path;
use std::process::{Command, Output};

use irsa_lab_cli::config::{parse_config, parse_override};
use irsa_lab_cli::output::{parse_real, RECORD_COLUMNS, SUMMARY_COLUMNS};
use irsa_lab_cli::preset::find;

const TINY: &[&str] = &[
    "--M", "40", "--T", "5", "--N", "4", "--tau", "6", "--set", "k_s=5", "--set", "p_a=0.2", "--set", "j_max=20",
];

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_irsa-lab"));
    c.env_remove("IRSA_LAB_SEED");
    c
}

fn run_tiny(out: &Path, extra: &[&str]) -> Output {
    bin()
        .args(["run", "--out"])
        .arg(out)
        .args(TINY)
        .args(extra)
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn fixed_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = run_tiny(d.path(), &["--runs", "2", "--seed", "5"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["run.csv", "run_summary.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
    assert!(a.path().join("run_timings.csv").exists());
}

#[test]
fn stdout_lists_only_written_files() {
    let d = tempfile::tempdir().unwrap();
    let o = run_tiny(d.path(), &["--runs", "1", "--progress"]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines.iter().all(|l| Path::new(l).exists()));
    assert!(!String::from_utf8(o.stderr).unwrap().is_empty());
}

#[test]
fn csv_round_trip() {
    let d = tempfile::tempdir().unwrap();
    assert!(run_tiny(d.path(), &["--runs", "3"]).status.success());
    let (header, rows) = read_csv(&d.path().join("run.csv"));
    assert_eq!(header, RECORD_COLUMNS);
    assert_eq!(rows.len(), 3);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[col("run_id")], i.to_string());
        assert_eq!(row[col("M")], "40");
        let fnr = parse_real(&row[col("fnr")]).unwrap();
        assert!((0.0..=1.0).contains(&fnr));
        let t = parse_real(&row[col("throughput")]).unwrap();
        assert!(t >= 0.0);
    }
    let (header, rows) = read_csv(&d.path().join("run_summary.csv"));
    assert_eq!(header, SUMMARY_COLUMNS);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "3");
}

#[test]
fn flag_beats_file_beats_env() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "seed = 3\nruns = 1\nM = 40\nT = 5\nN = 4\ntau = 6\nk_s = 5\np_a = 0.2\nj_max = 20\n").unwrap();
    let seed_of = |args: &[&str], env: Option<&str>| {
        let out = tempfile::tempdir().unwrap();
        let mut c = bin();
        c.args(["run", "--config"]).arg(&cfg).arg("--out").arg(out.path()).args(args);
        if let Some(e) = env {
            c.env("IRSA_LAB_SEED", e);
        }
        assert!(c.output().unwrap().status.success());
        std::fs::read(out.path().join("run.csv")).unwrap()
    };
    let file = seed_of(&[], Some("8"));
    let flag = seed_of(&["--seed", "3"], Some("8"));
    assert_eq!(file, flag);
    let other = seed_of(&["--seed", "4"], None);
    assert_ne!(file, other);
}

#[test]
fn env_seed_used_when_nothing_else_sets_it() {
    let base: Vec<_> = ["M=40", "T=5", "N=4", "tau=6", "k_s=5"].iter().map(|s| parse_override(s).unwrap()).collect();
    assert_eq!(parse_config("", &base, Some(12)).unwrap().seed, 12);
}

#[test]
fn load_flag_sets_user_count() {
    let base = [parse_override("L=3").unwrap()];
    let c = parse_config("M = 200", &base, None).unwrap();
    assert_eq!(c.num_users(), 1500);
}

#[test]
fn unknown_preset_fails_with_names() {
    let o = bin().args(["preset", "bogus", "--runs", "1"]).output().unwrap();
    assert!(!o.status.success());
    assert!(o.stdout.is_empty());
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("bogus") && err.contains("thpt_vs_L") && err.contains("pilots_roc"), "{err}");
}

#[test]
fn invalid_config_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = run_tiny(d.path(), &["--set", "p_a=2"]);
    assert!(!o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().contains("p_a"));
}

#[test]
fn err_vs_tau_grid_shape() {
    let points = find("err_vs_tau").unwrap().expand(1, 1, &[]).unwrap();
    let mut seen: Vec<(String, String)> = points
        .iter()
        .map(|p| (p.coords[0].1.clone(), p.coords[1].1.clone()))
        .collect();
    seen.dedup();
    assert_eq!(seen.len(), 8 * 3);
    assert_eq!(points[0].coords[0].0, "tau");
    assert_eq!(points[0].coords[1].0, "L");
}

#[test]
fn preset_writes_roc_table() {
    let d = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["preset", "pilots_roc", "--runs", "1", "--seed", "2", "--out"])
        .arg(d.path())
        .args(["--set", "M=30", "--set", "T=4", "--set", "k_s=4", "--set", "j_max=10"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, records) = read_csv(&d.path().join("pilots_roc.csv"));
    assert_eq!(records.len(), 6);
    let (header, rows) = read_csv(&d.path().join("pilots_roc_roc.csv"));
    assert_eq!(&header[..3], ["pilot_type", "tau", "detector"]);
    assert_eq!(rows.len(), 6 * 103);
    let (_, summary) = read_csv(&d.path().join("pilots_roc_summary.csv"));
    assert_eq!(summary.len(), 6);
}
