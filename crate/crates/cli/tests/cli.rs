use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &[&str] = &["--set", "samples_per_class=20", "--set", "epochs=2", "--set", "steps_per_epoch=3"];

fn dgwm(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgwm"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("DGWM_OUTPUT_DIR")
        .output()
        .unwrap()
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_outputs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args: Vec<&str> = ["train", "--trials", "2", "--run-id", "r"].iter().chain(SMALL).copied().collect();
    for dir in [&a, &b] {
        let o = dgwm(&args, dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let volatile = |p: &PathBuf| {
        let name = p.file_name().unwrap().to_string_lossy();
        name.ends_with(".meta.json") || name == "timing.json"
    };
    let fa: BTreeMap<_, _> = files(a.path()).into_iter().filter(|(p, _)| !volatile(p)).collect();
    let fb: BTreeMap<_, _> = files(b.path()).into_iter().filter(|(p, _)| !volatile(p)).collect();
    assert!(fa.contains_key(Path::new("r/trial-1/record.csv")));
    assert!(fa.contains_key(Path::new("r/aggregate.json")));
    assert_eq!(fa, fb);
    for p in files(a.path()).keys().filter(|p| !p.to_string_lossy().ends_with(".meta.json")) {
        let meta = a.path().join(format!("{}.meta.json", p.display()));
        let text = fs::read_to_string(&meta).unwrap_or_else(|_| panic!("no sidecar for {}", p.display()));
        for key in ["\"command\"", "\"config_hash\"", "\"seed\"", "\"timestamp_unix\""] {
            assert!(text.contains(key), "{} lacks {key}", meta.display());
        }
    }
}

#[test]
fn usage_and_config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["train", "--bogus"],
        vec!["train", "--set", "no_such_key=1"],
        vec!["train", "--set", "tau=1.5"],
        vec!["train", "--set", "epochs=many"],
        vec!["train", "--setting", "all_labels"],
    ] {
        let o = dgwm(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "# small run\nepochs = 1\ntau = high\n").unwrap();
    let o = dgwm(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.cfg:3: bad value for `tau`"), "{}", stderr(&o));
    fs::write(&cfg, "tau = 2.5\n").unwrap();
    let o = dgwm(&["train", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "samples_per_class = 20\nepochs = 1\nsteps_per_epoch = 2\ntrials = 1\nseed = 3\n").unwrap();
    let o = dgwm(&["train", "--config", cfg.to_str().unwrap(), "--seed", "9", "--run-id", "r"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let agg = fs::read_to_string(dir.path().join("r/aggregate.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&agg).unwrap();
    assert_eq!(v["seeds"], serde_json::json!([9]));
}

#[test]
fn gen_data_writes_every_sample() {
    let dir = tempfile::tempdir().unwrap();
    let o = dgwm(&["gen-data", "--run-id", "g", "--set", "samples_per_class=20"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("g/data.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("domain,label,x_0,") && header.ends_with(",x_19"));
    assert_eq!(lines.count(), 4 * 5 * 20);
}

#[test]
fn eval_reads_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let args: Vec<&str> = ["train", "--trials", "1", "--run-id", "r"].iter().chain(SMALL).copied().collect();
    assert!(dgwm(&args, dir.path()).status.success());
    let ckpt = dir.path().join("r/trial-0/checkpoint.txt");
    let args: Vec<&str> =
        ["eval", "--run-id", "e", "--checkpoint", ckpt.to_str().unwrap()].iter().chain(SMALL).copied().collect();
    let o = dgwm(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("e/eval.json").exists());
}

#[test]
fn ablate_runs_each_grid_cell() {
    let dir = tempfile::tempdir().unwrap();
    let args: Vec<&str> = ["ablate", "--trials", "1", "--run-id", "a", "--grid", "modulation=off,on", "--grid", "tau=0.9"]
        .iter()
        .chain(SMALL)
        .copied()
        .collect();
    let o = dgwm(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("a/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("a/cell-1").is_dir());
}

#[test]
fn output_root_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dgwm"))
        .args(["gen-data", "--run-id", "g", "--set", "samples_per_class=20"])
        .env("DGWM_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("g/data.csv").exists());
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = dgwm(&["verify", "--run-id", "v"], dir.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}{}", stderr(&o));
    assert!(!stdout.contains("FAIL"));
    assert!(dir.path().join("v/verify.json").exists());
}
