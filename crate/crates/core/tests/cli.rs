use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use strokeseg::data::read_manifest;
use strokeseg::stats::parse_stats_csv;

fn strokeseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strokeseg")).args(args).env_remove("STROKESEG_DATA").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = strokeseg(args);
    assert!(o.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(args: &[&str]) -> (i32, String) {
    let o = strokeseg(args);
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, n: usize, seed: u64) {
    ok(&["synth", "--subjects", &n.to_string(), "--seed", &seed.to_string(), "--out", s(dir), "--extents", "197", "233", "8"]);
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_subjects_and_manifest() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    synth(&a, 10, 4);
    synth(&b, 10, 4);
    let m = read_manifest(&a).unwrap();
    assert_eq!((m.train.len(), m.val.len(), m.test.len()), (6, 2, 2));
    let subjects = fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(subjects, 10);
    assert_eq!(tree(&a), tree(&b));
    let (c, err) = code(&["synth", "--subjects", "4", "--out", s(&t.path().join("c"))]);
    assert_eq!(c, 2, "{err}");
}

#[test]
fn usage_errors_exit_with_two() {
    let t = tempfile::tempdir().unwrap();
    let (c, err) = code(&["train", "--model", "vnet", "--data", s(t.path())]);
    assert_eq!(c, 2);
    for name in ["unet2d", "attnunet2d", "resunet2d", "unettransformer2d", "transattn2d", "unet3d", "attnunet3d", "resunet3d"] {
        assert!(err.contains(name), "{err}");
    }
    assert_eq!(code(&["train", "--model", "unet2d"]).0, 2);
    assert_eq!(code(&["frobnicate"]).0, 2);
    assert_eq!(code(&["stats", "--volumes", s(&t.path().join("missing.csv")), "--out", s(t.path())]).0, 3);
    let cfg = t.path().join("bad.toml");
    fs::write(&cfg, "[train]\nlearning_rate = 0.1\n").unwrap();
    synth(&t.path().join("d"), 5, 0);
    let (c, err) = code(&["train", "--model", "unet2d", "--data", s(&t.path().join("d")), "--config", s(&cfg)]);
    assert_eq!(c, 2, "{err}");
    fs::write(&cfg, "[dat]\nroot = \"x\"\n").unwrap();
    assert_eq!(code(&["train", "--model", "unet2d", "--config", s(&cfg)]).0, 3);
}

#[test]
fn train_resume_and_eval_2d() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    let runs = t.path().join("runs");
    synth(&data, 5, 2);
    let common = ["--model", "unet2d", "--data", s(&data), "--out", s(&runs), "--width-scale", "16", "--slice-extent", "16", "--seed", "3"];
    ok(&[&["train"], &common[..], &["--epochs", "1"]].concat());
    let dir = runs.join("unet2d").join("3");
    for f in ["last.ckpt", "best.ckpt", "train_record.csv", "settings.toml", "timing.csv"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    ok(&[&["train"], &common[..], &["--epochs", "2", "--resume"]].concat());
    let record = fs::read_to_string(dir.join("train_record.csv")).unwrap();
    assert_eq!(record.lines().count(), 3, "{record}");

    let ckpt = dir.join("best.ckpt");
    let (c, _) = code(&["eval", "--model-ckpt", s(&ckpt), "--data", s(&data), "--split", "train"]);
    assert_eq!(c, 2);
    let out = t.path().join("eval");
    let summary = ok(&["eval", "--model-ckpt", s(&ckpt), "--data", s(&data), "--split", "test", "--out", s(&out)]);
    assert!(summary.contains("Dice") && summary.contains("IoU") && summary.contains("Precision") && summary.contains("Recall"));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(&header[header.len() - 4..], &["dice", "iou", "precision", "recall"]);
    assert!(csv.lines().count() > 1);
    assert!(!out.join("volumes.csv").exists());
    ok(&["eval", "--model-ckpt", s(&ckpt), "--data", s(&data), "--split", "train", "--allow-train-split", "--out", s(&out)]);
    assert_eq!(code(&["eval", "--model-ckpt", s(&ckpt), "--data", s(&data), "--split", "holdout"]).0, 2);
}

#[test]
fn eval_3d_feeds_stats() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    let runs = t.path().join("runs");
    synth(&data, 5, 6);
    ok(&["train", "--model", "unet3d", "--data", s(&data), "--out", s(&runs), "--width-scale", "16", "--volume-extents", "16", "16", "8", "--epochs", "1"]);
    let ckpt = runs.join("unet3d/0/best.ckpt");
    let out = t.path().join("eval");
    ok(&["eval", "--model-ckpt", s(&ckpt), "--data", s(&data), "--out", s(&out)]);
    let volumes = fs::read_to_string(out.join("volumes.csv")).unwrap();
    assert_eq!(volumes.lines().count(), 2, "one test subject out of five");
    let stats_out = t.path().join("stats");
    let (c, err) = code(&["stats", "--volumes", s(&out.join("volumes.csv")), "--out", s(&stats_out)]);
    assert_eq!(c, 0);
    assert!(err.contains("Pearson"), "{err}");
    assert!(stats_out.join("scatter_unet3d.svg").is_file() && stats_out.join("volume_boxplots.svg").is_file());
}

#[test]
fn stats_on_perfect_predictions() {
    let t = tempfile::tempdir().unwrap();
    let csv = t.path().join("volumes.csv");
    let mut text = String::from("model_id,subject_id,actual_mm3,predicted_mm3\n");
    for (i, v) in [120.0, 40.5, 3000.0, 812.0, 77.0].iter().enumerate() {
        text.push_str(&format!("resunet3d,sub-{i},{v},{v}\n"));
    }
    fs::write(&csv, text).unwrap();
    let out = t.path().join("out");
    let table = ok(&["stats", "--volumes", s(&csv), "--out", s(&out)]);
    assert!(table.contains("| Model | W+ | p-value | method | Pearson r | p-value | n |"));
    let rows = parse_stats_csv(&fs::read_to_string(out.join("stats.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].pearson.unwrap().r, 1.0);
    assert_eq!(rows[0].wilcoxon_p, 1.0);
    assert!(fs::read_to_string(out.join("scatter_resunet3d.svg")).unwrap().starts_with("<svg"));
    assert_eq!(code(&["stats", "--volumes", s(&csv), "--out", s(&out), "--one-sided", "up"]).0, 2);
}

#[test]
fn benchmark_smoke_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("data");
    synth(&data, 5, 8);
    let run = |out: &Path| {
        ok(&[
            "benchmark", "--data", s(&data), "--scale", "16", "--out", s(out), "--slice-extent", "16", "--volume-extents", "16", "16", "8",
            "--epochs", "1", "--models", "unet2d,resunet3d",
        ])
    };
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let printed = run(&a);
    run(&b);
    assert!(printed.contains("| U-Net 2D |"), "{printed}");
    let report = fs::read_to_string(a.join("report.md")).unwrap();
    assert!(report.contains("2D models") && report.contains("3D models") && report.contains("W+"));
    assert_eq!(tree(&a), tree(&b));
}
