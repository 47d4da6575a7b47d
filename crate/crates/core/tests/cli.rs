use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn slreset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slreset"))
        .args(args)
        .output()
        .unwrap()
}

fn small<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "run",
        "--out",
        out,
        "--n",
        "16",
        "--copies",
        "3",
        "--dt",
        "0.02",
        "--t-final",
        "0.2",
    ];
    v.extend_from_slice(extra);
    v
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn run_writes_outputs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let o = slreset(&small(out.to_str().unwrap(), &[]));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "manifest.json",
        "diagnostics.csv",
        "resets.csv",
        "snapshots/final_r0.tsf",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m: serde_json::Value = serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(m["seed"], 0);
    assert_eq!(m["complete"], true);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert!(m["wall_seconds"].as_f64().unwrap() >= 0.0);
    let diag = String::from_utf8(read(&out.join("diagnostics.csv"))).unwrap();
    assert_eq!(diag.lines().count(), 1 + 11);
    assert!(diag.starts_with("replica,step,t,m,energy,S,rate_residual,gronwall_margin,enstrophy_0"));
}

#[test]
fn config_errors_are_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let o = slreset(&small(out.to_str().unwrap(), &["--epsilon", "1.2"]));
    assert_eq!(o.status.code(), Some(1));
    let e: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(e["error"], "config");
    assert!(e["message"]
        .as_str()
        .unwrap()
        .contains("epsilon must lie in (0,1)"));

    let o = slreset(&["run", "--out", out.to_str().unwrap(), "--n", "48"]);
    let e: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(e["message"]
        .as_str()
        .unwrap()
        .contains("n must be a power of two"));
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        "seed = 9\n[grid]\nn = 16\n[ensemble]\ncopies = 2\nepsilon = 0.3\n[time]\ndt = 0.05\nt_final = 0.1\n\
         [initial]\nkind = \"random\"\nk_max = 3.0\nenergy = 2.0\n",
    )
    .unwrap();
    let out = tmp.path().join("d");
    let o = slreset(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--copies",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(m["config"]["copies"], 4);
    assert_eq!(m["config"]["epsilon"], 0.3);
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["initial"]["kind"], "random");
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(
        slreset(&small(a.to_str().unwrap(), &["--nu", "0.3", "--seed", "4"]))
            .status
            .success()
    );
    let manifest = a.join("manifest.json");
    let o = slreset(&[
        "run",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_eq!(
        read(&a.join("diagnostics.csv")),
        read(&b.join("diagnostics.csv"))
    );
    assert_eq!(read(&a.join("resets.csv")), read(&b.join("resets.csv")));
}

#[test]
fn check_writes_summary_without_touching_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    assert!(slreset(&small(d.to_str().unwrap(), &["--replicas", "2"]))
        .status
        .success());
    let before = read(&d.join("diagnostics.csv"));
    let o = slreset(&["check", d.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0 | 2)));
    let s: serde_json::Value = serde_json::from_slice(&read(&d.join("summary.json"))).unwrap();
    let names: Vec<&str> = s["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    for n in [
        "records_finite",
        "reset_contraction",
        "reset_identity",
        "gronwall_bound",
        "energy_rate",
    ] {
        assert!(names.contains(&n), "{n}");
    }
    assert_eq!(s["all_pass"].as_bool().unwrap(), o.status.code() == Some(0));
    assert_eq!(read(&d.join("diagnostics.csv")), before);
}

#[test]
fn reference_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let r = tmp.path().join("ref");
    let o = slreset(&[
        "reference",
        "--out",
        r.to_str().unwrap(),
        "--n",
        "16",
        "--dt",
        "0.01",
        "--t-final",
        "0.1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(read(&r.join("reference.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 12);

    let s = tmp.path().join("sweep");
    let mut args = small(
        s.to_str().unwrap(),
        &["--vary", "copies=1,2", "--vary", "nu=0.1", "--jobs", "2"],
    );
    args[0] = "sweep";
    let o = slreset(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(s.join("copies-1_nu-0.1/diagnostics.csv").exists());
    assert!(s.join("copies-2_nu-0.1/diagnostics.csv").exists());
    assert!(s.join("sweep.json").exists());
}

#[test]
fn resume_continues_interrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        "[grid]\nn = 16\n[ensemble]\ncopies = 3\nreplicas = 2\n[physics]\nnu = 0.4\n[time]\ndt = 0.02\nt_final = 0.6\n\
         [output]\ncheckpoint_every = 10\n",
    )
    .unwrap();
    let full = tmp.path().join("full");
    let c = cfg.to_str().unwrap();
    assert!(
        slreset(&["run", "--config", c, "--out", full.to_str().unwrap()])
            .status
            .success()
    );

    let part = tmp.path().join("part");
    let p = part.to_str().unwrap();
    assert!(
        slreset(&["run", "--config", c, "--t-final", "0.3", "--out", p])
            .status
            .success()
    );
    let ck = part.join("checkpoint");
    let o = slreset(&[
        "run",
        "--resume",
        ck.to_str().unwrap(),
        "--t-final",
        "0.6",
        "--out",
        p,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        read(&full.join("diagnostics.csv")),
        read(&part.join("diagnostics.csv"))
    );
    assert_eq!(
        read(&full.join("resets.csv")),
        read(&part.join("resets.csv"))
    );
}
