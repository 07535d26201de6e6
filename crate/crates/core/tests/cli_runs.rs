use std::path::Path;

use dropkey::cli::{execute, run_command, CliFailure};
use dropkey::Error;

const CONFIG: &str = "seed = 2
[model]
height = 16
width = 16
embed_dim = 16
heads = 2
depth = 2
num_classes = 4
[train]
epochs = 2
batch_size = 16
[drop]
variant = \"dropkey\"
base_ratio = 0.3
schedule = \"down\"
[data.shapes]
classes = 4
count = 64
[eval]
runs = 2
";

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["dklab"];
    argv.extend_from_slice(args);
    run_command(&argv)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn theory_coeffs_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("tc");
    assert_eq!(run(&["theory-coeffs", "--p", "0.7,0.3", "--d", "0.3", "--out", s(&out)]), 0);
    assert_eq!(read(&out.join("coeffs.csv")), "j,p,c\n0,0.7,0.868132\n1,0.3,1.30769\n");
    let manifest: serde_json::Value = serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "theory-coeffs");
}

#[test]
fn train_is_reproducible_and_refuses_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&["train", "--config", s(&cfg), "--seed", "1", "--out", s(&a)]), 0);
    assert_eq!(run(&["train", "--config", s(&cfg), "--seed", "1", "--out", s(&b)]), 0);
    for f in ["metrics.csv", "summary.csv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    assert_eq!(std::fs::read(a.join("checkpoint.dkcp")).unwrap(), std::fs::read(b.join("checkpoint.dkcp")).unwrap());
    let manifest: serde_json::Value = serde_json::from_str(&read(&a.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["train"]["drop"]["variant"], "dropkey");

    let again = execute(&["dklab", "train", "--config", s(&cfg), "--out", s(&a)]);
    assert!(matches!(again, Err(CliFailure::Run(Error::OutputExists(_)))));
    assert_ne!(run(&["train", "--config", s(&cfg), "--out", s(&a)]), 0);

    let occ = tmp.path().join("occ");
    let ckpt = a.join("checkpoint.dkcp");
    assert_eq!(run(&["occlusion", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--ratios", "0,0.1,0.3,0.5,0.7,0.9", "--out", s(&occ)]), 0);
    let table = read(&occ.join("occlusion.csv"));
    assert_eq!(table.lines().count(), 7);
    assert!(table.starts_with("ratio,removed,mean_accuracy,std_accuracy\n0,0,"));

    for cmd in ["eval", "entropy", "mc-infer", "finetune"] {
        let out = tmp.path().join(cmd);
        assert_eq!(run(&[cmd, "--config", s(&cfg), "--checkpoint", s(&ckpt), "--mc-k", "2", "--out", s(&out)]), 0, "{cmd}");
        assert!(out.join("manifest.json").exists());
    }
}

#[test]
fn env_var_sets_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    std::env::set_var("DKLAB_OUT", tmp.path());
    assert_eq!(run(&["masks-stats", "--structure", "cross", "--ratio", "0.3", "--window", "1", "--samples", "50", "--seed", "4"]), 0);
    std::env::remove_var("DKLAB_OUT");
    let dirs: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(dirs.len(), 1);
    assert!(dirs[0].starts_with("run-") && dirs[0].ends_with("-4"), "{dirs:?}");
}

#[test]
fn errors_map_to_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(run(&["train", "--no-such-flag"]), 2);
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[drop]\nbase_ratio = 1.2\n").unwrap();
    assert_eq!(run(&["train", "--config", s(&bad), "--out", &out("x")]), 3);
    assert_eq!(run(&["eval", "--checkpoint", s(&bad), "--config", s(&tmp.path().join("missing.toml")), "--out", &out("y")]), 9);
    assert_eq!(run(&["theory-coeffs", "--p", "0.7,0.7", "--d", "0.3", "--out", &out("z")]), 6);
    assert_eq!(run(&["masks-stats", "--ratio", "1.5", "--out", &out("w")]), 7);
}

#[test]
fn theory_dynamics_writes_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("td");
    assert_eq!(run(&["theory-dynamics", "--steps", "20", "--out", s(&out)]), 0);
    let t = read(&out.join("trajectory.csv"));
    assert!(t.starts_with("step,loss,max_p,entropy\n"));
    assert!(t.lines().count() >= 21);
}
