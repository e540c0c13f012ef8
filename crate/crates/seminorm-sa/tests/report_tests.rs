//! Artifact emission: byte-identical reruns and manifest hash integrity.

use seminorm_sa::instances::{scalar_problem, two_state_chain};
use seminorm_sa::report::{write_envelope, write_manifest, write_summary, write_traces};
use seminorm_sa::sa::{bound_envelope, run_sa, EnvelopeParams, RunOptions};
use seminorm_sa::schedule::StepsizeSchedule;
use sha2::{Digest, Sha256};

#[test]
fn artifacts_are_byte_identical_across_reruns() {
    let problem = scalar_problem(0.2).unwrap();
    let opts = RunOptions {
        horizon: 200,
        n_trials: 8,
        seed: 42,
        keep_traces: true,
    };
    let sched = StepsizeSchedule::Constant { alpha: 0.05 };
    let chain = two_state_chain(0.3, 0.3).unwrap();
    let params = EnvelopeParams {
        init: 1.0,
        decay: 0.2,
        noise: 3.0,
    };

    let mut blobs: Vec<Vec<Vec<u8>>> = Vec::new();
    for _ in 0..2 {
        let run = run_sa(&problem, sched, &opts);
        let env = bound_envelope(&params, &sched, &chain, 200, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let t = write_traces(dir.path(), &run).unwrap();
        let s = write_summary(dir.path(), &run).unwrap();
        let e = write_envelope(dir.path(), &env).unwrap();
        let cfg = serde_json::json!({"kind": "sa-run", "alpha": 0.05});
        let m = write_manifest(dir.path(), &cfg, opts.seed, &[t.clone(), s.clone(), e.clone()])
            .unwrap();
        blobs.push(
            [t, s, e, m]
                .iter()
                .map(|p| std::fs::read(p).unwrap())
                .collect(),
        );
    }
    for (a, b) in blobs[0].iter().zip(&blobs[1]) {
        assert_eq!(a, b, "artifact bytes differ between identical runs");
    }
}

#[test]
fn manifest_hashes_match_file_contents() {
    let problem = scalar_problem(0.2).unwrap();
    let opts = RunOptions {
        horizon: 50,
        n_trials: 4,
        seed: 7,
        keep_traces: true,
    };
    let run = run_sa(&problem, StepsizeSchedule::Constant { alpha: 0.05 }, &opts);
    let dir = tempfile::tempdir().unwrap();
    let t = write_traces(dir.path(), &run).unwrap();
    let s = write_summary(dir.path(), &run).unwrap();
    let cfg = serde_json::json!({"kind": "sa-run"});
    let m = write_manifest(dir.path(), &cfg, opts.seed, &[t.clone(), s.clone()]).unwrap();

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&m).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["kind"], "sa-run");
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for (entry, path) in outputs.iter().zip([&t, &s]) {
        let bytes = std::fs::read(path).unwrap();
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = format!("{:x}", hasher.finalize());
        assert_eq!(entry["sha256"].as_str().unwrap(), digest);
        assert_eq!(entry["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(
            entry["file"].as_str().unwrap(),
            path.file_name().unwrap().to_str().unwrap()
        );
    }

    // CSV headers are stable.
    assert!(std::fs::read_to_string(&t)
        .unwrap()
        .starts_with("k,trial,p_error,coord_sup\n"));
    assert!(std::fs::read_to_string(&s)
        .unwrap()
        .starts_with("k,mean_sq_error,ci_low,ci_high\n"));
}
