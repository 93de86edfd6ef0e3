use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ivbounds::estimators::{quantile_interval, PosteriorHistogram};
use serde_json::Value;

fn ivb(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivb"))
        .current_dir(dir)
        .env_remove("IVB_OUT_DIR")
        .args(args)
        .output()
        .expect("spawn ivb")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = ivb(dir, args);
    assert!(
        out.status.success(),
        "ivb {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn interval(v: &Value) -> (f64, f64) {
    (
        v["interval"]["lower"].as_f64().unwrap(),
        v["interval"]["upper"].as_f64().unwrap(),
    )
}

#[test]
fn reruns_are_byte_identical() {
    let runs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for r in &runs {
        let d = r.path();
        ok(
            d,
            &[
                "--seed", "5", "--out", "o", "gen", "prior", "--count", "3", "--n", "150",
            ],
        );
        ok(
            d,
            &[
                "--seed",
                "5",
                "estimate",
                "--in",
                "o/prior_0001.csv",
                "--method",
                "bayes",
                "--samples",
                "300",
                "--burn-in",
                "100",
                "--report",
                "o/est.json",
            ],
        );
    }
    let (a, b) = (runs[0].path().join("o"), runs[1].path().join("o"));
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 3 * 2 + 2);
    for name in names {
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn prior_draws_get_distinct_streams() {
    let dir = tempfile::tempdir().unwrap();
    let m = ok(
        dir.path(),
        &[
            "--seed", "1", "--out", "o", "gen", "prior", "--count", "12", "--n", "32",
        ],
    );
    let mut seeds: Vec<u64> = m
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["seed"].as_u64().unwrap())
        .collect();
    seeds.sort();
    seeds.dedup();
    assert_eq!(seeds.len(), 12);
}

#[test]
fn binary_sidecar_carries_labels() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["--seed", "7", "--out", "o", "gen", "binary", "--n", "300"],
    );
    let side: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("o/binary_0000.json")).unwrap()).unwrap();
    let l = &side["labels"];
    let (lo, s, hi) = (
        l["lower"].as_f64().unwrap(),
        l["sate"].as_f64().unwrap(),
        l["upper"].as_f64().unwrap(),
    );
    assert!(lo <= s && s <= hi);
}

#[test]
fn lp_and_closed_form_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "3", "--out", "o", "gen", "binary", "--n", "400"]);
    let closed = ok(d, &["bounds", "--in", "o/binary_0000.csv", "--method", "closed"]);
    let lp = ok(d, &["bounds", "--in", "o/binary_0000.csv", "--method", "lp"]);
    assert_eq!(closed["source"], "strata");
    let ((a, b), (c, e)) = (interval(&closed), interval(&lp));
    assert!((a - c).abs() <= 1e-8 && (b - e).abs() <= 1e-8, "{a},{b} vs {c},{e}");

    // Estimated probabilities on a continuous outcome take the same path.
    ok(
        d,
        &["--seed", "3", "--out", "o", "gen", "calib", "--n", "400", "--d", "2"],
    );
    let closed = ok(
        d,
        &[
            "bounds",
            "--in",
            "o/calib_0000.csv",
            "--method",
            "closed",
            "--thresholds",
            "8",
        ],
    );
    let lp = ok(
        d,
        &[
            "bounds",
            "--in",
            "o/calib_0000.csv",
            "--method",
            "lp",
            "--thresholds",
            "8",
        ],
    );
    assert_eq!(closed["source"], "estimated");
    let ((a, b), (c, e)) = (interval(&closed), interval(&lp));
    assert!((a - c).abs() <= 1e-8 && (b - e).abs() <= 1e-8, "{a},{b} vs {c},{e}");
}

#[test]
fn estimate_interval_matches_its_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "9", "--out", "o", "gen", "binary", "--n", "300"]);
    let r = ok(
        d,
        &[
            "--seed",
            "2",
            "estimate",
            "--in",
            "o/binary_0000.csv",
            "--method",
            "bayes",
            "--alpha",
            "0.01",
            "--samples",
            "800",
            "--burn-in",
            "200",
        ],
    );
    let h: PosteriorHistogram = serde_json::from_value(r["histogram"].clone()).unwrap();
    let q = quantile_interval(&h, 0.01).unwrap();
    assert_eq!(interval(&r), (q.lower(), q.upper()));
}

#[test]
fn missing_column_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("t.csv"),
        "treat,age,education,black,hispanic,married,re74,re75,re78\n1,20,10,0,0,0,0,0,100\n",
    )
    .unwrap();
    let out = ivb(d, &["convert", "rct", "--in", "t.csv", "--preset", "jobs"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nodegree"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "seed = 1\n[gen.binary]\nsize = 10\n").unwrap();
    let out = ivb(dir.path(), &["--config", "c.toml", "gen", "binary"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("size"));
}

#[test]
fn config_values_apply_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("c.toml"),
        "seed = 4\nout_dir = \"cfg\"\n[gen.binary]\nn = 50\ncount = 2\n",
    )
    .unwrap();
    let m = ok(d, &["--config", "c.toml", "gen", "binary"]);
    assert_eq!(m.as_array().unwrap().len(), 2);
    assert_eq!(m[0]["n"], 50);
    assert!(d.join("cfg/binary_0001.csv").exists());
    let m = ok(
        d,
        &["--config", "c.toml", "--out", "flag", "gen", "binary", "--n", "60"],
    );
    assert_eq!(m[0]["n"], 60);
    assert!(d.join("flag/binary_0000.csv").exists());
}

#[test]
fn out_dir_defaults_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ivb"))
        .current_dir(dir.path())
        .env("IVB_OUT_DIR", "from-env")
        .args(["gen", "binary", "--n", "40"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from-env/binary_0000.csv").exists());
}

#[test]
fn conversion_sweep_and_method_compatibility() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "2", "--out", "o", "gen", "nsw-analog", "--n", "1500"]);
    let outs = ok(
        d,
        &[
            "--seed",
            "2",
            "--out",
            "o",
            "convert",
            "rct",
            "--in",
            "o/nsw_analog.csv",
            "--preset",
            "jobs",
            "--beta-sweep",
            "0.5,4",
        ],
    );
    let outs = outs.as_array().unwrap();
    assert_eq!(outs.len(), 2);
    assert!(outs[1]["rho_zt"].as_f64().unwrap() > outs[0]["rho_zt"].as_f64().unwrap());
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("o/jobs_beta4_report.json")).unwrap()).unwrap();
    assert!(report["rho_zt"].is_number());

    // Continuous outcome without a threshold grid or binarization.
    let out = ivb(d, &["estimate", "--in", "o/jobs_beta4.csv", "--method", "bayes"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--thresholds"));
    ok(
        d,
        &[
            "estimate",
            "--in",
            "o/jobs_beta4.csv",
            "--method",
            "bayes",
            "--binarize",
            "0.5",
            "--samples",
            "200",
            "--burn-in",
            "50",
            "--no-histogram",
        ],
    );
}

#[test]
fn eval_reports_mean_and_ste() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ivb(
        d,
        &[
            "--seed",
            "1",
            "--out",
            "o",
            "eval",
            "--seeds",
            "3",
            "--n",
            "200",
            "--methods",
            "plugin,bayes",
            "--samples",
            "300",
            "--burn-in",
            "100",
            "--format",
            "csv",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("method,n_seeds,validity_mean,validity_ste"));
    assert_eq!(csv.lines().count(), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains('±'));
    let report: Value = serde_json::from_str(&fs::read_to_string(d.join("o/eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["records"].as_array().unwrap().len(), 6);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = |w: &'static str| {
        vec![
            "--seed",
            "8",
            "--workers",
            w,
            "sweep",
            "calibration",
            "--seeds",
            "4",
            "--n",
            "200",
            "--samples",
            "200",
            "--burn-in",
            "50",
            "--levels",
            "0.5,0.9",
        ]
    };
    assert_eq!(ok(d, &args("1")), ok(d, &args("3")));
}
