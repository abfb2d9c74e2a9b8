//! End-to-end checks of the command-line surface: determinism, exit codes,
//! config validation, and file round trips.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_orientkern")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("orientkern-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(bin()).args(args).output().expect("spawn orientkern")
}

#[test]
fn mc_same_seed_bit_identical() {
    let a = tmp("mc-a.orkf");
    let b = tmp("mc-b.orkf");
    for out in [&a, &b] {
        let st = run(&[
            "mc",
            "--out",
            out.to_str().unwrap(),
            "--paths",
            "20000",
            "--steps",
            "10",
            "--seed",
            "123",
            "--grid",
            "0.5:2:2:3",
            "--icosphere-n",
            "2",
        ]);
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn mc_threads_do_not_change_counts() {
    let a = tmp("mc-t1.orkf");
    let b = tmp("mc-t7.orkf");
    for (out, threads) in [(&a, "1"), (&b, "7")] {
        let st = run(&[
            "--threads",
            threads,
            "mc",
            "--out",
            out.to_str().unwrap(),
            "--paths",
            "30000",
            "--steps",
            "12",
            "--seed",
            "9",
            "--grid",
            "0.5:2:2:3",
            "--icosphere-n",
            "2",
        ]);
        assert!(st.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn invalid_config_rejected_with_named_constraint() {
    let out = tmp("bad.orkf");
    let st = run(&[
        "exact",
        "--out",
        out.to_str().unwrap(),
        "--d33",
        "0.5",
        "--d11",
        "0.9",
        "--grid",
        "0.5:1:1:1",
        "--lmax",
        "2",
    ]);
    assert_eq!(st.status.code(), Some(2));
    let err = String::from_utf8_lossy(&st.stderr);
    assert!(err.contains("D33 > D11"), "constraint not named: {err}");
}

#[test]
fn bad_grid_spec_is_config_error() {
    let st = run(&["mc", "--out", tmp("x.orkf").to_str().unwrap(), "--grid", "nope"]);
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn compare_field_with_itself_is_zero() {
    let field = tmp("self.orkf");
    let st = run(&[
        "mc",
        "--out",
        field.to_str().unwrap(),
        "--paths",
        "50000",
        "--steps",
        "10",
        "--seed",
        "5",
        "--grid",
        "0.5:2:2:3",
        "--icosphere-n",
        "2",
    ]);
    assert!(st.status.success());
    let st = run(&[
        "compare",
        field.to_str().unwrap(),
        field.to_str().unwrap(),
        "--fail-above",
        "1e-12",
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stdout));
    let out = String::from_utf8_lossy(&st.stdout);
    assert!(out.contains("masked rel L1   = 0.000000"), "{out}");
}

#[test]
fn compare_grid_mismatch_is_config_error() {
    let a = tmp("gm-a.orkf");
    let b = tmp("gm-b.orkf");
    for (out, grid) in [(&a, "0.5:2:2:3"), (&b, "0.5:2:2:4")] {
        let st = run(&[
            "mc",
            "--out",
            out.to_str().unwrap(),
            "--paths",
            "1000",
            "--steps",
            "5",
            "--grid",
            grid,
            "--icosphere-n",
            "1",
        ]);
        assert!(st.status.success());
    }
    let st = run(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn compare_threshold_failure_exits_one() {
    let a = tmp("th-a.orkf");
    let b = tmp("th-b.orkf");
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let st = run(&[
            "mc",
            "--out",
            out.to_str().unwrap(),
            "--paths",
            "20000",
            "--steps",
            "10",
            "--seed",
            seed,
            "--grid",
            "0.5:2:2:3",
            "--icosphere-n",
            "2",
        ]);
        assert!(st.status.success());
    }
    let st = run(&[
        "compare",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--fail-above",
        "1e-9",
    ]);
    assert_eq!(st.status.code(), Some(1));
}

#[test]
fn spectrum_rows_match_diagonal_limit() {
    let st = run(&["spectrum", "--lmax", "4", "--r", "0:0:1", "--d44", "0.2"]);
    assert!(st.status.success());
    let out = String::from_utf8_lossy(&st.stdout);
    assert!(out.starts_with("m,l,r,lambda"));
    // r = 0 rows carry -D44 l (l+1); spot check l = 3 and the m-evenness
    let mut seen = 0;
    for line in out.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (m, l, r, lambda): (i32, u32, f64, f64) = (
            f[0].parse().unwrap(),
            f[1].parse().unwrap(),
            f[2].parse().unwrap(),
            f[3].parse().unwrap(),
        );
        assert_eq!(r, 0.0);
        let want = -0.2 * (l * (l + 1)) as f64;
        assert!((lambda - want).abs() < 1e-12, "m={m} l={l}: {lambda} vs {want}");
        seen += 1;
    }
    assert!(seen > 0);
}

#[test]
fn spectrum_monotone_in_r() {
    let csv = tmp("spec.csv");
    let st = run(&[
        "spectrum",
        "--lmax",
        "3",
        "--r",
        "0:6:7",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(st.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    use std::collections::HashMap;
    let mut series: HashMap<(i32, u32), Vec<(f64, f64)>> = HashMap::new();
    let mut by_mlr: HashMap<(i32, u32, u64), f64> = HashMap::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let m: i32 = f[0].parse().unwrap();
        let l: u32 = f[1].parse().unwrap();
        let r: f64 = f[2].parse().unwrap();
        let lambda: f64 = f[3].parse().unwrap();
        series.entry((m, l)).or_default().push((r, lambda));
        by_mlr.insert((m, l, r.to_bits()), lambda);
    }
    for ((m, l), mut pts) in series {
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pts.windows(2) {
            assert!(
                w[1].1 <= w[0].1 + 1e-12,
                "lambda must not increase with r (m={m}, l={l})"
            );
        }
    }
    // lambda^{l,m} = lambda^{l,-m}
    for ((m, l, r), lambda) in &by_mlr {
        let twin = by_mlr[&(-m, *l, *r)];
        assert_eq!(*lambda, twin);
    }
}

#[test]
fn selftest_passes_and_is_deterministic() {
    let a = run(&["selftest"]);
    assert!(a.status.success());
    let b = run(&["selftest"]);
    let strip = |s: &[u8]| {
        String::from_utf8_lossy(s)
            .lines()
            .filter(|l| !l.contains("passed in"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&a.stdout), strip(&b.stdout));
}

#[test]
fn exact_smoke_and_roundtrip() {
    let out = tmp("exact-small.orkf");
    let st = run(&[
        "exact",
        "--out",
        out.to_str().unwrap(),
        "--grid",
        "1.0:2:2:3",
        "--lmax",
        "4",
        "--icosphere-n",
        "2",
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let loaded = orientkern_core::io::read_orkf(Path::new(out.to_str().unwrap())).unwrap();
    assert_eq!(loaded.n_orientations, 42);
    assert!(loaded.values.iter().all(|v| *v >= 0.0));
}

#[test]
fn config_file_flags_override() {
    let cfg = tmp("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"paths": 1000, "steps": 5, "seed": 7, "grid": "0.5:1:1:2", "icosphere_n": 1}"#,
    )
    .unwrap();
    let a = tmp("cfg-a.orkf");
    let st = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "mc",
        "--out",
        a.to_str().unwrap(),
        "--seed",
        "8",
    ]);
    assert!(st.status.success());
    let loaded = orientkern_core::io::read_orkf(&a).unwrap();
    let meta = loaded.sidecar.empirical.unwrap();
    assert_eq!(meta.seed, 8, "flag must win over config");
    assert_eq!(meta.paths, 1000, "config field must apply");
}

#[test]
fn unknown_config_key_rejected() {
    let cfg = tmp("cfg-bad.json");
    std::fs::write(&cfg, r#"{"pathz": 1000}"#).unwrap();
    let st = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "mc",
        "--out",
        tmp("never.orkf").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));
}
