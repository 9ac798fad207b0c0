use std::path::Path;
use std::process::{Command, Output};

use rgp_core::graphbuild::read_graph;

const BASE: &str = "\
synth.n_per_class = 2
synth.n_classes = 2
synth.width = 512
synth.height = 512
model.gcn_dims = 64,16,16
model.n_keep = 4
model.n_heads = 2
model.n_classes = 2
train.train_fraction = 1
train.test_fraction = 0
train.epochs = 40
train.learning_rate = 0.005
eval.split = train
";

fn rgp(dir: &Path, config: &str, args: &[&str]) -> Output {
    std::fs::write(dir.join("run.cfg"), config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_rgp"))
        .current_dir(dir)
        .arg("--config")
        .arg("run.cfg")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_and_corrupt_are_byte_identical_across_runs() {
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let d = tempfile::tempdir().unwrap();
            ok(rgp(d.path(), BASE, &["synth"]));
            ok(rgp(
                d.path(),
                BASE,
                &["corrupt", "--fraction", "0.5", "--kinds", "mark,motion"],
            ));
            d
        })
        .collect();
    for f in [
        "images/img0001.png",
        "corrupted/manifest.csv",
        "corrupted/img0000.png",
        "corrupted/img0003.png",
    ] {
        let a = std::fs::read(runs[0].path().join("out").join(f)).unwrap();
        let b = std::fs::read(runs[1].path().join("out").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let manifest = std::fs::read_to_string(runs[0].path().join("out/corrupted/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 3);
}

#[test]
fn zero_fraction_writes_empty_manifest() {
    let d = tempfile::tempdir().unwrap();
    ok(rgp(d.path(), BASE, &["synth"]));
    ok(rgp(d.path(), BASE, &["corrupt", "--fraction", "0"]));
    let manifest = std::fs::read_to_string(d.path().join("out/corrupted/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().collect::<Vec<_>>(), ["item_id,kind,severity,seed"]);
    for id in ["img0000", "img0003"] {
        let a = std::fs::read(d.path().join(format!("out/images/{id}.png"))).unwrap();
        let b = std::fs::read(d.path().join(format!("out/corrupted/{id}.png"))).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn one_512_image_gives_four_nodes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = BASE
        .replace("synth.n_per_class = 2", "synth.n_per_class = 1")
        .replace("synth.n_classes = 2", "synth.n_classes = 1");
    let cfg = cfg.replace("model.n_classes = 2", "model.n_classes = 1");
    ok(rgp(d.path(), &cfg, &["synth"]));
    ok(rgp(d.path(), &cfg, &["build"]));
    let g = read_graph(&d.path().join("out/graphs/img0000.pgr")).unwrap();
    assert_eq!(g.n_nodes(), 4);
    assert_eq!(g.edges, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
}

#[test]
fn memorized_checkpoint_scores_one_on_train() {
    let d = tempfile::tempdir().unwrap();
    for cmd in ["synth", "build", "train"] {
        ok(rgp(d.path(), BASE, &[cmd]));
    }
    let stdout = ok(rgp(d.path(), BASE, &["eval"]));
    assert!(stdout.contains("train accuracy 1"), "{stdout}");
    let metrics = std::fs::read_to_string(d.path().join("out/eval_metrics.csv")).unwrap();
    assert_eq!(metrics.lines().nth(1).unwrap(), "train,off,4,1,1");
}

#[test]
fn bad_input_exits_nonzero() {
    let d = tempfile::tempdir().unwrap();
    ok(rgp(d.path(), BASE, &["synth"]));
    let out = rgp(d.path(), BASE, &["corrupt", "--kinds", "sepia"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sepia"));

    let out = rgp(d.path(), &format!("{BASE}train.bogus = 1\n"), &["train"]);
    assert_eq!(out.status.code(), Some(1));

    let out = Command::new(env!("CARGO_BIN_EXE_rgp"))
        .arg("synth")
        .current_dir(d.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = rgp(d.path(), BASE, &["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));

    let out = rgp(d.path(), BASE, &["eval"]);
    assert_eq!(out.status.code(), Some(1));
}
