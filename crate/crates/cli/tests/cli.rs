use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn vdsg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vdsg")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn small_corpus(dir: &Path) {
    fs::write(dir.join("synth.cfg"), "num_scenes=60\nseed=5\n").unwrap();
    let out = vdsg(&[
        "synth",
        "--config",
        &path(dir, "synth.cfg"),
        "--out",
        &path(dir, "c"),
        "--human-fraction",
        "0.25",
        "--test-scenes",
        "10",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn build_kb_from_caption_fixture() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.txt"),
        "a person riding a horse\nThe person is riding a horse on the beach.\na dog sitting on a bench\n",
    )
    .unwrap();
    let out = vdsg(&[
        "build-kb",
        "--captions",
        &path(dir.path(), "c.txt"),
        "--out",
        &path(dir.path(), "kb.tsv"),
        "--min-count",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let kb = fs::read_to_string(dir.path().join("kb.tsv")).unwrap();
    assert_eq!(
        kb,
        "#kbv1\ndog\tsitting on\tbench\t1\nhorse\ton\tbeach\t1\nperson\triding\thorse\t2\n"
    );
}

#[test]
fn default_threshold_drops_single_sightings() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.txt"),
        "a person riding a horse\na person riding a horse\na cat on a mat\n",
    )
    .unwrap();
    let out = vdsg(&[
        "build-kb",
        "--captions",
        &path(dir.path(), "c.txt"),
        "--out",
        &path(dir.path(), "kb.tsv"),
    ]);
    assert_eq!(code(&out), 0);
    let kb = fs::read_to_string(dir.path().join("kb.tsv")).unwrap();
    assert_eq!(kb, "#kbv1\nperson\triding\thorse\t2\n");
}

#[test]
fn usage_errors_exit_1() {
    let out = vdsg(&["align", "--bogus"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("vdsg: usage:"));
    assert_eq!(code(&vdsg(&["frobnicate"])), 1);
    assert_eq!(code(&vdsg(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let semi_without_dl = vdsg(&[
        "denoise",
        "--mode",
        "semi",
        "--ds",
        &path(dir.path(), "c/ds.jsonl"),
        "--kb",
        &path(dir.path(), "c/kb.tsv"),
        "--out",
        &path(dir.path(), "o"),
    ]);
    assert_eq!(code(&semi_without_dl), 1);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let d = dir.path();

    let missing = vdsg(&[
        "align",
        "--kb",
        &path(d, "nope.tsv"),
        "--scenes",
        &path(d, "c/scenes.jsonl"),
        "--out",
        &path(d, "x"),
    ]);
    assert_eq!(code(&missing), 2);

    fs::write(d.join("bad.jsonl"), "{\"id\": \"s\", \"width\": 10, \"height\": 10, \"objects\": [{\"box\": [5, 0, 1, 4], \"category\": 0}], \"relations\": []}\n").unwrap();
    let bad_box = vdsg(&[
        "align",
        "--kb",
        &path(d, "c/kb.tsv"),
        "--scenes",
        &path(d, "bad.jsonl"),
        "--out",
        &path(d, "x"),
    ]);
    assert_eq!(code(&bad_box), 2);
    let err = String::from_utf8_lossy(&bad_box.stderr);
    assert!(err.starts_with("vdsg: validation:"), "{err}");

    // a scorer trained on a one-category vocabulary cannot score the corpus
    fs::write(d.join("tiny.tsv"), "#kbv1\ncat\ton\tcat\t1\n").unwrap();
    fs::write(
        d.join("tiny.jsonl"),
        "{\"id\": \"t\", \"width\": 10, \"height\": 10, \"objects\": [{\"box\": [0, 0, 4, 4], \"category\": 0}, {\"box\": [2, 2, 6, 6], \"category\": 0}], \"relations\": [{\"sub\": 0, \"obj\": 1, \"candidates\": [1], \"provenance\": \"distant\"}]}\n",
    )
    .unwrap();
    fs::write(d.join("em.cfg"), "epochs=1\n").unwrap();
    let train = vdsg(&[
        "train",
        "--data",
        &path(d, "tiny.jsonl"),
        "--kb",
        &path(d, "tiny.tsv"),
        "--out",
        &path(d, "tiny.ckpt"),
        "--config",
        &path(d, "em.cfg"),
    ]);
    assert_eq!(code(&train), 0, "{}", String::from_utf8_lossy(&train.stderr));
    let eval = vdsg(&[
        "eval",
        "--scorer",
        &path(d, "tiny.ckpt"),
        "--scenes",
        &path(d, "c/test_scenes.jsonl"),
        "--gold",
        &path(d, "c/test_gold.jsonl"),
        "--out",
        &path(d, "m.csv"),
    ]);
    assert_eq!(code(&eval), 2);
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let d = dir.path();
    fs::write(d.join("hot.cfg"), "lr=1e308\nepochs=3\n").unwrap();
    let out = vdsg(&[
        "train",
        "--data",
        &path(d, "c/dl.jsonl"),
        "--kb",
        &path(d, "c/kb.tsv"),
        "--out",
        &path(d, "hot.ckpt"),
        "--config",
        &path(d, "hot.cfg"),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("vdsg: numerical:"));
}

#[test]
fn eval_writes_metric_rows() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let d = dir.path();
    fs::write(d.join("em.cfg"), "epochs=3\n").unwrap();
    let train = vdsg(&[
        "train",
        "--data",
        &path(d, "c/dl.jsonl"),
        "--kb",
        &path(d, "c/kb.tsv"),
        "--out",
        &path(d, "s.ckpt"),
        "--config",
        &path(d, "em.cfg"),
    ]);
    assert_eq!(code(&train), 0);
    let eval = vdsg(&[
        "eval",
        "--scorer",
        &path(d, "s.ckpt"),
        "--scenes",
        &path(d, "c/test_scenes.jsonl"),
        "--gold",
        &path(d, "c/test_gold.jsonl"),
        "--k",
        "20,50",
        "--out",
        &path(d, "m.csv"),
    ]);
    assert_eq!(code(&eval), 0);
    let csv = fs::read_to_string(d.join("m.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "metric,K,value");
    assert_eq!(lines.len(), 9);
    for line in &lines[1..] {
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
    let r20: f64 = lines[1].rsplit(',').next().unwrap().parse().unwrap();
    let r50: f64 = lines[5].rsplit(',').next().unwrap().parse().unwrap();
    assert!(r50 >= r20);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |out: &str, seed: &str| {
        let o = vdsg(&["--seed", seed, "synth", "--out", &path(d, out), "--test-scenes", "5"]);
        assert_eq!(code(&o), 0);
        fs::read(d.join(out).join("ds.jsonl")).unwrap()
    };
    // default corpus size keeps this a realistic check
    assert_eq!(run("a", "3"), run("b", "3"));
    assert_ne!(run("a", "3"), run("c", "4"));
}
