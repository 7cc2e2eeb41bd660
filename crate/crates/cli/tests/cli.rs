use std::process::{Command, Output};

fn plume(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plume"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = plume(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_flag_value_is_a_usage_error() {
    assert_eq!(plume(&["simulate", "--steps", "many"]).status.code(), Some(1));
    assert_eq!(plume(&["oracle", "--kernel", "p9"]).status.code(), Some(1));
}

#[test]
fn bench_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = plume(&["bench", "--m", "1", "--seed", "7", "--out-dir", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["sweep.csv", "detection.svg", "measurements.svg"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn degenerate_kernel_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("deg.toml");
    std::fs::write(&cfg, "p1 = 0.3\np2 = 0.2\np3 = 0.3\np4 = 0.2\nseed = 1\n").unwrap();
    let out = plume(&["detect", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DegenerateKernel"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "alpha = 3\n").unwrap();
    assert_eq!(plume(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn seed_flag_beats_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    std::fs::write(&cfg, "seed = 1\n").unwrap();
    let c = cfg.to_str().unwrap();
    let from_flag = plume(&["simulate", "--steps", "20", "--config", c, "--seed", "5"]).stdout;
    let direct = plume(&["simulate", "--steps", "20", "--seed", "5"]).stdout;
    let from_file = plume(&["simulate", "--steps", "20", "--config", c]).stdout;
    assert_eq!(from_flag, direct);
    assert_ne!(from_flag, from_file);
}

#[test]
fn detect_trace_is_ndjson() {
    let out = plume(&["detect", "--alg", "alg1", "--r", "8", "--seed", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("{\"j\":0,\"n\":30,"), "{first}");
    assert!(first.ends_with("\"L\":null}"));
}

#[test]
fn oracle_reports_source_argmax() {
    let out = plume(&["oracle", "--kernel", "p2"]);
    assert_eq!(out.status.code(), Some(0));
    let row: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(row["source_is_argmax"], true);
    assert!(row["margin"].as_f64().unwrap() > 0.0);
}

#[test]
fn hydro_writes_csv_with_slope_footer() {
    let out = plume(&["hydro", "--kmax", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("h,error"));
    assert!(text.lines().last().unwrap().starts_with("slope,"));
}
