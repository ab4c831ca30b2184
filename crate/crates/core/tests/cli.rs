//! End-to-end runs of the `funbuffer` binary and its output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use funbuffer::cli::{read_fit_summary, RegionsFile, NO_REGION};
use funbuffer::inference::CurvePoint;

const SMALL_GRID: [&str; 4] = ["--grid-l1", "8:1e-4:10", "--grid-l2", "4:1e-2:1e4"];

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_funbuffer"))
        .args(args)
        .env_remove("FUNBUFFER_SEED")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn emit(dir: &Path, name: &str, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let o = bin(&[
        "simulate",
        "--emit-data",
        path.to_str().unwrap(),
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

fn fit(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["fit", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bin(&args)
}

#[test]
fn artifacts_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit(tmp.path(), "d.csv", 600, 21);
    let out = tmp.path().join("fit");
    let o = fit(&data, &out, &SMALL_GRID);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["config.toml", "tuning.csv", "beta_curve.csv", "regions.json", "cumulative.json", "run.log"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let s = read_fit_summary(&out).unwrap();
    // JSON keeps every digit
    let again: RegionsFile = serde_json::from_str(&fs::read_to_string(out.join("regions.json")).unwrap()).unwrap();
    assert_eq!(again, s.regions);
    // curve values are printed with ten significant digits
    let reread: Vec<CurvePoint> = funbuffer::inference::read_curve_csv(fs::File::open(out.join("beta_curve.csv")).unwrap()).unwrap();
    assert_eq!(reread, s.curve);
    if s.regions.segments.is_empty() {
        assert_eq!(s.cumulative.status, NO_REGION);
    } else {
        let (lo, hi) = s.regions.segments[0];
        assert!(s.curve.iter().all(|p| p.s >= lo && p.s <= s.regions.buffer_distance && p.lo <= p.beta && p.beta <= p.hi));
        assert!(hi <= s.regions.buffer_distance);
    }
    // the echoed config reproduces the run
    let out2 = tmp.path().join("fit2");
    let o = bin(&["fit", "--config", out.join("config.toml").to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["regions.json", "cumulative.json", "beta_curve.csv", "tuning.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(out2.join(f)).unwrap(), "{f}");
    }
}

/// One Scenario II file does not pin the buffer (its spread across draws is
/// about 0.3), so the median over several files is held to the recovery band.
#[test]
fn scenario_two_buffers_center_on_one_half() {
    let tmp = tempfile::tempdir().unwrap();
    let mut buffers: Vec<f64> = (31..38)
        .map(|seed| {
            let data = emit(tmp.path(), &format!("d{seed}.csv"), 1000, seed);
            let out = tmp.path().join(format!("fit{seed}"));
            let o = fit(&data, &out, &[]);
            assert!(o.status.success(), "seed {seed}: {}", stderr(&o));
            let s = read_fit_summary(&out).unwrap();
            if s.regions.segments.is_empty() {
                assert_eq!(s.cumulative.status, NO_REGION);
            } else {
                assert_eq!(s.cumulative.status, "ok");
            }
            s.regions.buffer_distance
        })
        .collect();
    buffers.sort_by(|a, b| a.total_cmp(b));
    let median = buffers[buffers.len() / 2];
    assert!((0.40..=0.72).contains(&median), "buffers {buffers:?}");
}

#[test]
fn empty_region_is_reported_not_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit(tmp.path(), "d.csv", 300, 5);
    let out = tmp.path().join("fit");
    // every lambda1 on the grid is far beyond the null-model gradient
    let o = fit(&data, &out, &["--grid-l1", "3:1e3:1e4", "--grid-l2", "2:1:10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = read_fit_summary(&out).unwrap();
    assert_eq!(s.cumulative.status, NO_REGION);
    assert_eq!(s.regions.buffer_distance, 0.0);
    assert!(s.curve.is_empty());
    assert_eq!(s.regions.theta.len(), 2);
}

#[test]
fn malformed_csv_exits_3_with_the_row() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.csv");
    fs::write(&path, "time,event,z1,x@0,x@1\n1.0,1,0.2,0.1,0.3\n2.0,maybe,0.1,0.2,0.2\n").unwrap();
    let o = fit(&path, &tmp.path().join("fit"), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit(tmp.path(), "d.csv", 50, 1);
    let d = data.to_str().unwrap();
    for extra in [
        vec!["--grid-l1", "ten:1:2"],
        vec!["--variant", "ridge"],
        vec!["--domain", "1:0"],
        vec!["--degree", "0"],
    ] {
        let o = fit(&data, &tmp.path().join("fit"), &extra);
        assert_eq!(o.status.code(), Some(2), "{extra:?}: {}", stderr(&o));
    }
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "data = \"x.csv\"\nlambda = 3\n").unwrap();
    let o = bin(&["fit", "--config", cfg.to_str().unwrap(), "--data", d]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    // clap usage errors share the code
    assert_eq!(bin(&["fit", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn missing_file_is_a_data_error() {
    let o = bin(&["fit", "--data", "/nonexistent/file.csv", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str| {
        let out = tmp.path().join(dir);
        let o = bin(&[
            "simulate", "--scenario", "II", "--n", "200", "--reps", "2", "--seed", "7", "--variants",
            "Spline-Gbridge,Lasso", "--grid-l1", "5:1e-3:10", "--grid-l2", "3:1e-2:1e4", "--coverage",
            "--coverage-reps", "3", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["reps.csv", "aggregate.json", "coverage.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let agg: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("aggregate.json")).unwrap()).unwrap();
    let rows = agg.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r["imse_mean"].is_number() && r["supremum_mean"].is_number());
    }
    let cov = fs::read_to_string(a.join("coverage.csv")).unwrap();
    for line in cov.lines().skip(1) {
        let c: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&c));
    }
}

#[test]
fn tune_spline_is_one_dimensional_and_matches_selection() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit(tmp.path(), "d.csv", 300, 8);
    let out = tmp.path().join("tune");
    let o = bin(&[
        "tune", "--data", data.to_str().unwrap(), "--variant", "Spline", "--grid-l2", "6:1e-2:1e4", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("tuning.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[0] == 0.0));
    let min = rows.iter().map(|r| r[2]).fold(f64::INFINITY, f64::min);
    let sel: Vec<_> = rows.iter().filter(|r| r[8] == 1.0).collect();
    assert_eq!(sel.len(), 1);
    assert_eq!(sel[0][2], min);
    let chosen: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("selected.json")).unwrap()).unwrap();
    assert!(chosen.is_object());
}

#[test]
fn warm_and_cold_starts_select_the_same_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit(tmp.path(), "d.csv", 400, 7);
    let selected = |cold: bool, dir: &str| {
        let out = tmp.path().join(dir);
        let mut args = vec!["tune", "--data", data.to_str().unwrap(), "--variant", "Spline-Lasso", "--out", out.to_str().unwrap()];
        args.extend_from_slice(&SMALL_GRID);
        if cold {
            args.push("--cold");
        }
        let o = bin(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let csv = fs::read_to_string(out.join("tuning.csv")).unwrap();
        csv.lines().find(|l| l.ends_with(",1")).unwrap().split(',').take(2).map(String::from).collect::<Vec<_>>()
    };
    assert_eq!(selected(false, "warm"), selected(true, "cold"));
}

#[test]
fn inspect_reads_data_and_fit_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit(tmp.path(), "d.csv", 300, 4);
    let o = bin(&["inspect", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["data"]["n"], 300);
    assert_eq!(v["basis"]["n_basis"], 30);

    let out = tmp.path().join("fit");
    assert!(fit(&data, &out, &SMALL_GRID).status.success());
    let o = bin(&["inspect", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["buffer_distance"].is_number());
}

#[test]
fn env_overrides_config_and_flags_override_env() {
    let tmp = tempfile::tempdir().unwrap();
    let data = emit(tmp.path(), "d.csv", 200, 2);
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, format!("data = {:?}\nseed = 1\nmn = 10\n", data.to_str().unwrap())).unwrap();
    let out = tmp.path().join("fit");
    let o = Command::new(env!("CARGO_BIN_EXE_funbuffer"))
        .args(["tune", "--config", cfg.to_str().unwrap(), "--Mn", "8", "--out", out.to_str().unwrap()])
        .args(SMALL_GRID)
        .env("FUNBUFFER_SEED", "5")
        .env("FUNBUFFER_MN", "12")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let echoed = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echoed.contains("seed = 5"), "{echoed}");
    assert!(echoed.contains("mn = 8"), "{echoed}");
}
