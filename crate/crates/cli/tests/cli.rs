use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dipolelets"))
}

fn default_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line on stderr");
    serde_json::from_str(line).expect("machine-readable error")
}

fn files_under(root: &Path) -> BTreeSet<String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeSet<String>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap();
                out.insert(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(root, root, &mut out);
    out
}

fn small_config(dir: &Path, solver: &str) -> PathBuf {
    let path = dir.join("small.json");
    let doc = format!(
        r#"{{"grid": {{"shape": [16, 16, 16]}}, "solver": {{"kind": "{solver}", "tv": {{"max_iters": 10}}}}}}"#
    );
    fs::write(&path, doc).unwrap();
    path
}

#[test]
fn unknown_key_is_named_in_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"solver": {"tv": {"lambda": 0.1, "lamda": 0.2}}}"#).unwrap();
    let out = run(&["pipeline", "--quiet", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = error_json(&out);
    assert_eq!(err["stage"], "config");
    assert_eq!(err["code"], "config");
    assert!(err["message"].as_str().unwrap().contains("lamda"), "{err}");
}

#[test]
fn invalid_thread_count_is_rejected() {
    let out = bin()
        .args(["phantom", "--quiet"])
        .env("DIPOLELETS_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert_eq!(error_json(&out)["stage"], "config");
}

#[test]
fn shipped_pipeline_is_complete_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let cfg = default_config();
    for out in [&a, &b] {
        let res = bin()
            .args(["pipeline", "--quiet", "--config"])
            .arg(&cfg)
            .arg("--output")
            .arg(out)
            .env("DIPOLELETS_THREADS", "1")
            .output()
            .unwrap();
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }

    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let listed: BTreeSet<String> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x["path"].as_str().unwrap().to_string())
        .collect();
    assert!(listed.len() >= 10, "{} artifacts", listed.len());
    let mut on_disk = files_under(&a);
    assert!(on_disk.remove("manifest.json"));
    assert_eq!(listed, on_disk);
    assert_eq!(manifest["library"], "dipolelets");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    assert_eq!(
        fs::read(a.join("metrics.json")).unwrap(),
        fs::read(b.join("metrics.json")).unwrap()
    );
    for f in &listed {
        if f.ends_with(".dlv") || f.ends_with(".png") {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn standalone_stages_chain_on_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "tkd");
    let out = dir.path().join("out");
    let common = |stage: &str| {
        let mut c = bin();
        c.arg(stage).arg("--quiet").arg("--config").arg(&cfg).arg("--output").arg(&out);
        c
    };
    let ok = |mut c: Command| {
        let res = c.output().unwrap();
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        serde_json::from_slice::<Value>(&res.stdout).unwrap()
    };

    ok(common("phantom"));
    let mut fwd = common("forward");
    fwd.arg("--chi").arg(out.join("phantom_chi33.dlv"));
    ok(fwd);
    let mut cor = common("corrupt");
    cor.arg("--phase").arg(out.join("phase_clean.dlv"));
    ok(cor);
    let mut dec = common("decompose");
    dec.arg("--phase").arg(out.join("phase_corrupted.dlv"));
    let summary = ok(dec);
    assert_eq!(summary["artifacts"].as_array().unwrap().len(), 10);
    let mut wts = common("weights");
    wts.arg("--phase").arg(out.join("phase_corrupted.dlv"));
    ok(wts);
    let mut rec = common("recon");
    rec.arg("--phase").arg(out.join("phase_corrupted.dlv")).arg("--weight").arg(out.join("weight.dlv"));
    ok(rec);
    let mut met = common("metrics");
    met.arg("--estimate")
        .arg(out.join("chi_recon.dlv"))
        .arg("--truth")
        .arg(out.join("phantom_chi33.dlv"))
        .arg("--roi")
        .arg(out.join("roi.dlv"));
    let report = ok(met);
    assert!(report["details"]["rmse_percent"].as_f64().unwrap() > 0.0);
    assert!(out.join("solver_report.json").exists());
}

#[test]
fn stage_failure_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = dir.path().join("bogus.dlv");
    fs::write(&bogus, [1u8, 0, 0]).unwrap();
    let out = run(&["corrupt", "--quiet", "--phase", bogus.to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = error_json(&out);
    assert_eq!(err["stage"], "corrupt");
    assert_eq!(err["code"], "malformed_header");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "tkd");
    let phase = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let res = bin()
            .args(["phantom", "--quiet", "--config"])
            .arg(&cfg)
            .arg("--output")
            .arg(&out)
            .output()
            .unwrap();
        assert!(res.status.success());
        for stage in [("forward", "phantom_chi33.dlv", "--chi"), ("corrupt", "phase_clean.dlv", "--phase")] {
            let res = bin()
                .args([stage.0, "--quiet", "--seed", seed, "--config"])
                .arg(&cfg)
                .arg("--output")
                .arg(&out)
                .arg(stage.2)
                .arg(out.join(stage.1))
                .output()
                .unwrap();
            assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
        }
        fs::read(out.join("phase_corrupted.dlv")).unwrap()
    };
    assert_eq!(phase("3", "a"), phase("3", "b"));
    assert_ne!(phase("3", "c"), phase("4", "d"));
}
