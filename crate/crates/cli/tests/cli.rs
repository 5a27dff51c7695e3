use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_varipro"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &str, config: &Path, out: &Path, seed: u64) -> Output {
    bin()
        .args(["run", cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--seed", &seed.to_string()])
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn metrics(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap()
}

#[test]
fn denoise_without_regularization_returns_the_data() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "d.json",
        r#"{"problem": {"phantom": "disk", "size": 16},
            "regularizer": {"kind": "tv_iso", "weight": 0.0},
            "noise": {"kind": "gaussian", "level": 0.2},
            "output": {"save_data": true}}"#,
    );
    let out = tmp.path().join("o");
    let res = run("denoise", &cfg, &out, 3);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let recon = fs::read(out.join("recon.csv")).unwrap();
    assert_eq!(recon, fs::read(out.join("observed.csv")).unwrap());
    for f in ["recon.pgm", "trace.csv", "metrics.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let m = metrics(&out);
    for key in ["psnr", "rel_err", "iters", "wall_ms"] {
        assert!(m.get(key).is_some(), "{key}");
    }
}

#[test]
fn full_mask_mri_is_exact() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let res = run("mri", &configs().join("mri_full.json"), &out, 0);
    assert_eq!(res.status.code(), Some(0));
    assert!(metrics(&out)["psnr"].as_f64().unwrap() >= 80.0);
}

#[test]
fn tv_beats_zero_fill_in_sparse_view_ct() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let res = run("ct", &configs().join("ct_sparse.json"), &out, 0);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let m = metrics(&out);
    assert!(m["psnr"].as_f64().unwrap() > m["baseline_psnr"].as_f64().unwrap());
}

#[test]
fn shipped_sweep_is_monotone_and_broken_rule_is_not() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let res = run("pnp-sweep", &configs().join("pnp_deblur16.json"), &out, 0);
    assert_eq!(res.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&res.stdout).contains("monotone=true"));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);

    let text = fs::read_to_string(configs().join("pnp_deblur16.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let mut broken = v.clone();
    broken["regularizer"]["tau_rule"] = serde_json::json!({"linear": 1e6});
    let cfg = write_config(tmp.path(), "b.json", &broken.to_string());
    let res = run("pnp-sweep", &cfg, &tmp.path().join("b"), 0);
    assert!(String::from_utf8_lossy(&res.stdout).contains("monotone=false"));

    let mut single = v;
    single["noise"]["levels"] = serde_json::json!([0.1]);
    let cfg = write_config(tmp.path(), "s.json", &single.to_string());
    let res = run("pnp-sweep", &cfg, &tmp.path().join("s"), 0);
    assert!(String::from_utf8_lossy(&res.stdout).contains("monotone=true"));
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn segmentation_cases() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("disk");
    let res = run("segment", &configs().join("segment_disk.json"), &out, 0);
    assert_eq!(res.status.code(), Some(0));
    let m = metrics(&out);
    assert!(m["dice"].as_f64().unwrap() >= 0.99);
    let mask = fs::read_to_string(out.join("mask.pgm")).unwrap();
    assert!(mask.starts_with("P2\n64 64\n255\n"));
    assert!(mask.split_whitespace().skip(4).all(|t| t == "0" || t == "255"));

    // two-phase image without ground truth
    let rows: Vec<String> = (0..16)
        .map(|_| (0..16).map(|j| if j < 8 { "0.8" } else { "0.2" }).collect::<Vec<_>>().join(","))
        .collect();
    fs::write(tmp.path().join("halves.csv"), rows.join("\n") + "\n").unwrap();
    let cfg = write_config(tmp.path(), "h.json", r#"{"problem": {"image": "halves.csv"}}"#);
    let res = run("segment", &cfg, &tmp.path().join("h"), 0);
    assert_eq!(res.status.code(), Some(0));
    let m = metrics(&tmp.path().join("h"));
    assert!(m.get("dice").is_none());
    assert_eq!(m["degenerate_region"], Value::Bool(false));

    // with the matching ground truth the split is exact
    let truth: Vec<String> = (0..16)
        .map(|_| (0..16).map(|j| if j < 8 { "1" } else { "0" }).collect::<Vec<_>>().join(","))
        .collect();
    fs::write(tmp.path().join("truth.csv"), truth.join("\n") + "\n").unwrap();
    let cfg = write_config(
        tmp.path(),
        "t.json",
        r#"{"problem": {"image": "halves.csv", "ground_truth": "truth.csv"}}"#,
    );
    run("segment", &cfg, &tmp.path().join("t"), 0);
    assert_eq!(metrics(&tmp.path().join("t"))["dice"].as_f64(), Some(1.0));

    let flat: Vec<String> = (0..8).map(|_| vec!["0.4"; 8].join(",")).collect();
    fs::write(tmp.path().join("flat.csv"), flat.join("\n") + "\n").unwrap();
    let cfg = write_config(tmp.path(), "f.json", r#"{"problem": {"image": "flat.csv"}}"#);
    let res = run("segment", &cfg, &tmp.path().join("f"), 0);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(metrics(&tmp.path().join("f"))["degenerate_region"], Value::Bool(true));
}

#[test]
fn repeated_runs_write_identical_csvs() {
    let tmp = TempDir::new().unwrap();
    for (cmd, cfg, files) in [
        ("deblur", "deblur_tv.json", &["trace.csv", "recon.csv"][..]),
        ("pnp-sweep", "pnp_deblur16.json", &["sweep.csv"][..]),
        ("segment", "segment_disk.json", &["energy.csv"][..]),
    ] {
        let a = tmp.path().join(format!("{cmd}-a"));
        let b = tmp.path().join(format!("{cmd}-b"));
        run(cmd, &configs().join(cfg), &a, 42);
        run(cmd, &configs().join(cfg), &b, 42);
        for f in files {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{cmd} {f}");
        }
    }
}

#[test]
fn seed_changes_the_noise() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("denoise_rof.json")).unwrap().replace("20000", "5");
    let cfg = write_config(tmp.path(), "d.json", &text);
    run("denoise", &cfg, &tmp.path().join("a"), 1);
    run("denoise", &cfg, &tmp.path().join("b"), 2);
    assert_ne!(
        fs::read(tmp.path().join("a/recon.csv")).unwrap(),
        fs::read(tmp.path().join("b/recon.csv")).unwrap()
    );
}

#[test]
fn iteration_cap_exits_with_two() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("denoise_rof.json")).unwrap().replace("20000", "5");
    let cfg = write_config(tmp.path(), "d.json", &text);
    let res = run("denoise", &cfg, &tmp.path().join("o"), 0);
    assert_eq!(res.status.code(), Some(2));
    let trace = fs::read_to_string(tmp.path().join("o/trace.csv")).unwrap();
    assert!(trace.starts_with("iter,energy,gap,primal_res,dual_res\n"));
    assert_eq!(trace.lines().count(), 6);
}

#[test]
fn config_errors_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        "{\n  \"problem\": {\"phantom\": \"disk\"},\n  \"solver\": {\"max_iter\": 3}\n}\n",
    );
    let res = run("denoise", &cfg, &tmp.path().join("o"), 0);
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("max_iter") && err.contains("line 3"), "{err}");

    let cfg = write_config(tmp.path(), "tau.json", r#"{"problem": {"phantom": "disk"}, "solver": {"tau": -1}}"#);
    let err = String::from_utf8_lossy(&run("denoise", &cfg, &tmp.path().join("o"), 0).stderr).to_string();
    assert!(err.contains("solver") && err.contains("tau"), "{err}");

    let cfg = write_config(tmp.path(), "img.json", r#"{"problem": {"image": "missing.pgm"}}"#);
    let res = run("deblur", &cfg, &tmp.path().join("o"), 0);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("problem.image"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn dry_run_validates_without_writing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    for (cmd, cfg) in [
        ("denoise", "denoise_rof.json"),
        ("deblur", "deblur_tv.json"),
        ("mri", "mri_tv.json"),
        ("ct", "ct_sparse.json"),
        ("pnp-sweep", "pnp_deblur16.json"),
        ("segment", "segment_disk.json"),
    ] {
        let res = bin()
            .args(["run", cmd, "--dry-run", "--config"])
            .arg(configs().join(cfg))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(res.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&res.stderr));
    }
    assert!(!out.exists());
    let cfg = write_config(tmp.path(), "n.json", r#"{"problem": {"phantom": "disk"}, "noise": {"kind": "pink"}}"#);
    let res = bin().args(["run", "denoise", "--dry-run", "--config"]).arg(cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn thread_cap_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("pnp_deblur16.json");
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let out = tmp.path().join(threads);
        let res = bin()
            .env("VARIPRO_THREADS", threads)
            .args(["run", "pnp-sweep", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(res.status.code(), Some(0));
        outs.push(fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outs[0], outs[1]);
    let res = bin()
        .env("VARIPRO_THREADS", "zero")
        .args(["run", "pnp-sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
}
