use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pwae_core::data::{write_idx, ImageDataset};

fn pwae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pwae"))
        .args(args)
        .output()
        .expect("spawn pwae")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 40 synthetic 4×4 images: bright left or right half.
fn tiny_idx(dir: &Path, side: usize) -> PathBuf {
    let n = 40;
    let mut px = Vec::with_capacity(n * side * side);
    for k in 0..n {
        for _r in 0..side {
            for c in 0..side {
                let left = c < side / 2;
                px.push(if left == (k % 2 == 0) { 230 } else { 10 });
            }
        }
    }
    let ds = ImageDataset::new(px, n, side, side).unwrap();
    let p = dir.join(format!("tiny{side}.idx"));
    write_idx(&p, &ds).unwrap();
    p
}

fn train_tiny(dir: &Path, data: &Path, out: &str) -> PathBuf {
    let out = dir.join(out);
    ok(&pwae(&[
        "train-mnist",
        "--data",
        s(data),
        "--out",
        s(&out),
        "--epochs",
        "1",
        "--batch",
        "8",
        "--latent-dim",
        "2",
        "--hidden",
        "8",
        "--seed",
        "3",
        "--no-timing",
    ]));
    out
}

#[test]
fn missing_dataset_exits_with_two() {
    let out = pwae(&[
        "train-mnist",
        "--data",
        "/nonexistent/images.idx",
        "--epochs",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
    let out = pwae(&["train-graph", "--data", "/nonexistent/cora"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn smoke_run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_idx(dir.path(), 4);
    let a = train_tiny(dir.path(), &data, "a");
    let b = train_tiny(dir.path(), &data, "b");
    let ma = fs::read_to_string(a.join("metrics.jsonl")).unwrap();
    assert_eq!(ma.lines().count(), 1);
    assert_eq!(ma, fs::read_to_string(b.join("metrics.jsonl")).unwrap());
    assert_eq!(
        fs::read(a.join("model.ckpt")).unwrap(),
        fs::read(b.join("model.ckpt")).unwrap()
    );
}

#[test]
fn sample_plot_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_idx(dir.path(), 4);
    let run = train_tiny(dir.path(), &data, "run");
    let ckpt = run.join("model.ckpt");

    let g1 = dir.path().join("g1.pgm");
    let g2 = dir.path().join("g2.pgm");
    for g in [&g1, &g2] {
        ok(&pwae(&[
            "sample",
            "--checkpoint",
            s(&ckpt),
            "--n",
            "16",
            "--seed",
            "5",
            "--out",
            s(g),
        ]));
    }
    let bytes = fs::read(&g1).unwrap();
    assert!(bytes.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(bytes.len(), b"P5\n16 16\n255\n".len() + 256);
    assert_eq!(bytes, fs::read(&g2).unwrap());

    let svg = dir.path().join("z.svg");
    ok(&pwae(&[
        "plot-latent",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--limit",
        "25",
        "--out",
        s(&svg),
    ]));
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("class=\"pt\"").count(), 25);
    assert_eq!(text.matches("class=\"boundary\"").count(), 1);

    ok(&pwae(&[
        "plot-latent",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--limit",
        "0",
        "--out",
        s(&svg),
    ]));
    assert_eq!(
        fs::read_to_string(&svg)
            .unwrap()
            .matches("class=\"pt\"")
            .count(),
        0
    );

    let e1 = ok(&pwae(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
    ]));
    let e2 = ok(&pwae(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
    ]));
    assert_eq!(e1, e2);
    assert!(e1.contains("\"recon\""));

    let other = tiny_idx(dir.path(), 6);
    let out = pwae(&["eval", "--checkpoint", s(&ckpt), "--data", s(&other)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expects 16 pixels"));
}

#[test]
fn graph_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let stdout = ok(&pwae(&[
        "train-graph",
        "--data",
        "tree:2,3",
        "--epochs",
        "5",
        "--latent-dim",
        "2",
        "--hidden",
        "8,8",
        "--test-frac",
        "0.2",
        "--out",
        s(&out),
        "--no-timing",
    ]));
    assert!(stdout.contains("test auc"));
    assert_eq!(
        fs::read_to_string(out.join("metrics.jsonl"))
            .unwrap()
            .lines()
            .count(),
        5
    );
    let ckpt = out.join("model.ckpt");
    let e = ok(&pwae(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        "tree:2,3",
    ]));
    assert!(e.contains("\"auc\"") && e.contains("\"ap\""));
    let bad = pwae(&["eval", "--checkpoint", s(&ckpt), "--data", "tree:2,4"]);
    assert_eq!(bad.status.code(), Some(1));

    let svg = dir.path().join("tree.svg");
    ok(&pwae(&[
        "plot-latent",
        "--checkpoint",
        s(&ckpt),
        "--data",
        "tree:2,3",
        "--out",
        s(&svg),
    ]));
    assert_eq!(
        fs::read_to_string(&svg)
            .unwrap()
            .matches("class=\"pt\"")
            .count(),
        22
    );
}
