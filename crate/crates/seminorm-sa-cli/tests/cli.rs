//! End-to-end CLI tests: exit codes, artifact layout, and byte-identical
//! reproducibility for identical (config, seed).

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seminorm-sa"))
}

fn run(sub: &str, config: &Path, seed: u64, out: &Path) -> Output {
    bin()
        .arg(sub)
        .arg("--config")
        .arg(config)
        .arg("--seed")
        .arg(seed.to_string())
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn CLI")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn fp_iterate_traces_exact_halving() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "fp.json",
        r#"{"kind":"fp-iterate",
            "a":[[0.5,0.0],[0.0,2.0]],
            "p":{"kind":"quadratic","dim":2,"matrix":[[1.0,0.0],[0.0,0.0]],"kernel_basis":[]},
            "x0":[1.0,1.0],"steps":20}"#,
    );
    let out = dir.path().join("o");
    let res = run("fp-iterate", &cfg, 0, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let traces = std::fs::read_to_string(out.join("traces.csv")).unwrap();
    let lines: Vec<&str> = traces.lines().collect();
    assert_eq!(lines[0], "k,trial,p_error,coord_sup");
    assert_eq!(lines.len(), 22); // header + 21 steps
    // Each step halves the seminorm error exactly; the last is 2^-20.
    let last: Vec<&str> = lines[21].split(',').collect();
    assert_eq!(last[0], "20");
    assert_eq!(last[2].parse::<f64>().unwrap(), 2f64.powi(-20));
    // The diverging second coordinate is reported in the sup column.
    assert_eq!(last[3].parse::<f64>().unwrap(), 2f64.powi(20));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn sa_run_is_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "sa.json",
        r#"{"kind":"sa-run","sigma":0.2,
            "schedule":{"kind":"const","alpha":0.05},
            "horizon":150,"trials":6,
            "envelope":{"init":2.0,"decay":0.3,"noise":1.0}}"#,
    );
    let (o1, o2) = (dir.path().join("r1"), dir.path().join("r2"));
    assert!(run("sa-run", &cfg, 9, &o1).status.success());
    assert!(run("sa-run", &cfg, 9, &o2).status.success());
    for name in ["traces.csv", "summary.csv", "envelope.csv", "manifest.json"] {
        let a = std::fs::read(o1.join(name)).unwrap();
        let b = std::fs::read(o2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    // A different seed changes the traces.
    let o3 = dir.path().join("r3");
    assert!(run("sa-run", &cfg, 10, &o3).status.success());
    assert_ne!(
        std::fs::read(o1.join("traces.csv")).unwrap(),
        std::fs::read(o3.join("traces.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");

    // Missing file.
    let res = run("sa-run", &dir.path().join("nope.json"), 0, &out);
    assert_eq!(res.status.code(), Some(1));

    // Invalid JSON.
    let bad = write_cfg(dir.path(), "bad.json", "{not json");
    let res = run("sa-run", &bad, 0, &out);
    assert_eq!(res.status.code(), Some(1));

    // Kind/subcommand mismatch.
    let mism = write_cfg(dir.path(), "mism.json", r#"{"kind":"acceptance"}"#);
    let res = run("sa-run", &mism, 0, &out);
    assert_eq!(res.status.code(), Some(1));

    // Schema violation (unknown field).
    let unk = write_cfg(
        dir.path(),
        "unk.json",
        r#"{"kind":"sa-run","sigma":0.2,"schedule":{"kind":"const","alpha":0.05},
            "horizon":10,"trials":2,"bogus":1}"#,
    );
    let res = run("sa-run", &unk, 0, &out);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn inadmissible_bound_check_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // Constant stepsize far above the window threshold: the bound's stepsize
    // condition fails, which is a numerical (not config) failure.
    let cfg = write_cfg(
        dir.path(),
        "vb.json",
        r#"{"kind":"verify-bounds","sigma":0.2,
            "schedule":{"kind":"const","alpha":0.3},
            "horizon":500,"trials":10}"#,
    );
    let res = run("verify-bounds", &cfg, 0, &dir.path().join("o"));
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn verify_bounds_passes_for_admissible_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "vb.json",
        r#"{"kind":"verify-bounds","sigma":0.2,
            "schedule":{"kind":"poly","alpha":0.05,"h":65536.0,"xi":0.6},
            "horizon":4000,"trials":40}"#,
    );
    let out = dir.path().join("o");
    let res = run("verify-bounds", &cfg, 5, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(verdict["pass"], true);
    assert_eq!(verdict["condition_pass"], true);
    assert!(out.join("envelope.csv").exists());
    assert!(out.join("summary.csv").exists());
}

#[test]
fn q_learn_on_mdp_file_emits_oracle_info() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = write_cfg(
        dir.path(),
        "mdp.json",
        r#"{"n_states":2,"n_actions":2,
            "transitions":[0.7,0.3,0.4,0.6,0.2,0.8,0.5,0.5],
            "rewards":[1.0,0.3,0.6,0.1]}"#,
    );
    let cfg = write_cfg(
        dir.path(),
        "ql.json",
        &format!(
            r#"{{"kind":"q-learn","mdp_file":{:?},
                "schedule":{{"kind":"poly","alpha":0.3,"h":50.0,"xi":0.7}},
                "horizon":300,"trials":5}}"#,
            mdp.to_str().unwrap()
        ),
    );
    let out = dir.path().join("o");
    let res = run("q-learn", &cfg, 1, &out);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let info: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("qlearn.json")).unwrap()).unwrap();
    assert!(info["j"].as_u64().unwrap() >= 1);
    assert!(info["r_star"].as_f64().unwrap() > 0.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
            .unwrap();
    // Every non-manifest artifact is listed with a hash.
    let listed: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["file"].as_str().unwrap())
        .collect();
    for name in ["qlearn.json", "traces.csv", "summary.csv"] {
        assert!(listed.contains(&name), "{name} missing from manifest");
    }
}

#[test]
fn acceptance_subcommand_reports_all_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "acc.json", r#"{"kind":"acceptance"}"#);
    let out = dir.path().join("o");
    let res = bin()
        .arg("acceptance")
        .arg("--config")
        .arg(&cfg)
        .arg("--seed")
        .arg("17")
        .arg("--out")
        .arg(&out)
        .env("SEMINORM_SA_THREADS", "2")
        .output()
        .expect("spawn CLI");
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("acceptance.json")).unwrap())
            .unwrap();
    let entries = report.as_array().unwrap();
    assert_eq!(entries.len(), 12);
    for e in entries {
        assert_eq!(e["pass"], true, "criterion {} failed", e["id"]);
    }
}
