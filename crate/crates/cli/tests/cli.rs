use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = "\
synth.slides = 24
synth.rows = 2
synth.cols = 2
synth.cell_size = 64
prepare.region_area = 1024
prepare.patch_size = 32
model.dim = 16
model.heads = 2
model.blocks = 1
train.max_epochs = 3
train.patience = 2
train.learning_rate = 0.001
train.folds = 2
";

fn msmil(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msmil"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = msmil(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

impl Fixture {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("small.cfg");
        std::fs::write(&config, format!("{SMALL}{extra}")).unwrap();
        Self {
            _dir: dir,
            root,
            config,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn run(&self, args: &[&str]) -> String {
        let mut all = vec!["--config", s(&self.config)];
        all.extend_from_slice(args);
        ok(&all)
    }

    fn data_and_cache(&self) -> (PathBuf, PathBuf) {
        let (data, cache) = (self.path("data"), self.path("cache"));
        self.run(&["synth", "--out", s(&data)]);
        self.run(&["prepare", s(&data), "--out", s(&cache)]);
        (data, cache)
    }
}

#[test]
fn default_synth_writes_hundred_slides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("data");
    ok(&["synth", "--out", s(&out)]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["slides"].as_array().unwrap().len(), 100);
    assert!(out.join("config.resolved").exists());
    assert!(out.join("images/slide_0099.png").exists());
}

#[test]
fn synth_is_deterministic_per_seed() {
    let f = Fixture::new("");
    let read = |name: &str, seed: &str| {
        let out = f.path(name);
        f.run(&["synth", "--seed", seed, "--out", s(&out)]);
        std::fs::read(out.join("manifest.json")).unwrap()
    };
    let a = read("a", "5");
    assert_eq!(a, read("b", "5"));
    assert_ne!(a, read("c", "6"));
}

#[test]
fn bad_config_key_exits_2_naming_it() {
    let f = Fixture::new("train.lamda = 0.5\n");
    let out = msmil(&["--config", s(&f.config), "synth", "--out", s(&f.path("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.lamda"));
    // invalid flag values are usage errors too
    let out = msmil(&["synth", "--mask-ratio", "1.5", "--out", s(&f.path("d"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let f = Fixture::new("");
    let blocker = f.path("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let out = msmil(&["--config", s(&f.config), "synth", "--out", s(&blocker.join("data"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let f = Fixture::new("seed = 3\n");
    let first = f.path("first");
    f.run(&["synth", "--out", s(&first)]);
    let second = f.path("second");
    ok(&[
        "--config",
        s(&first.join("config.resolved")),
        "synth",
        "--out",
        s(&second),
    ]);
    assert_eq!(
        std::fs::read(first.join("manifest.json")).unwrap(),
        std::fs::read(second.join("manifest.json")).unwrap()
    );
    assert_eq!(
        std::fs::read(first.join("config.resolved")).unwrap(),
        std::fs::read(second.join("config.resolved")).unwrap()
    );
}

#[test]
fn prepare_is_resumable() {
    let f = Fixture::new("");
    let (data, cache) = f.data_and_cache();
    let index = json(&cache.join("cache.json"));
    let n = index["slides"].as_array().unwrap().len();
    assert!(n > 0);
    let done = cache.join("bags/slide_0000/done");
    let stamp = std::fs::metadata(&done).unwrap().modified().unwrap();
    let second = f.run(&["prepare", s(&data), "--out", s(&cache)]);
    assert!(second.contains("0 computed"), "{second}");
    assert!(second.contains(&format!("{n} cached")), "{second}");
    assert_eq!(std::fs::metadata(&done).unwrap().modified().unwrap(), stamp);
    // the seed does not touch bags, a prepare setting does
    let third = f.run(&["prepare", s(&data), "--out", s(&cache), "--seed", "1"]);
    assert!(third.contains("0 computed"), "{third}");
    let changed = f.path("changed.cfg");
    std::fs::write(&changed, format!("{SMALL}prepare.compactness = 20\n")).unwrap();
    let fourth = ok(&["--config", s(&changed), "prepare", s(&data), "--out", s(&cache)]);
    assert!(fourth.contains(&format!("{n} computed")), "{fourth}");
}

#[test]
fn unlabelled_slide_and_corrupt_png() {
    let f = Fixture::new("");
    let data = f.path("data");
    f.run(&["synth", "--out", s(&data)]);
    let mpath = data.join("manifest.json");
    let mut m = json(&mpath);
    m["slides"][0]["labels"] = Value::Null;
    m["slides"][0]["truth"] = Value::Null;
    std::fs::write(&mpath, serde_json::to_string(&m).unwrap()).unwrap();
    let corrupt = m["slides"][1]["image"].as_str().unwrap().to_string();
    std::fs::write(data.join(&corrupt), b"\x89PNG not really").unwrap();

    let cache = f.path("cache");
    let out = f.run(&["prepare", s(&data), "--out", s(&cache)]);
    assert!(out.contains("1 failed"), "{out}");
    let bag = json(&cache.join("bags/slide_0000/manifest.json"));
    assert_eq!(bag["has_instance_labels"], Value::Bool(false));
    let labels = std::fs::read_to_string(cache.join("bags/slide_0000/labels.csv")).unwrap();
    assert!(labels.lines().skip(1).all(|l| l.ends_with(',')));

    let strict = msmil(&[
        "--config",
        s(&f.config),
        "prepare",
        s(&data),
        "--out",
        s(&f.path("c2")),
        "--strict",
    ]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn train_eval_predict_visualize() {
    let f = Fixture::new("");
    let (data, cache) = f.data_and_cache();
    let run = f.path("run");
    f.run(&["train", s(&cache), "--out", s(&run)]);

    let metrics = json(&run.join("metrics.json"));
    assert!(metrics["macro_auc_mean"].is_f64());
    assert!(metrics["macro_auc_std"].is_f64());
    assert_eq!(metrics["instance_head_trained"], Value::Bool(true));
    assert_eq!(metrics["folds"].as_array().unwrap().len(), 2);
    assert!(run.join("config.resolved").exists());
    assert!(run.join("folds/fold1.json").exists());

    let ckpt = run.join("checkpoints/fold0");
    let test_slides = ckpt.join("test_slides.txt");
    let eval_out = f.path("eval");
    f.run(&[
        "eval",
        s(&ckpt),
        s(&cache),
        "--subset",
        s(&test_slides),
        "--out",
        s(&eval_out),
    ]);
    let eval = json(&eval_out.join("eval.json"));
    assert_eq!(eval["macro_auc"].as_f64(), metrics["folds"][0]["macro_auc"].as_f64());

    let pred_out = f.path("pred");
    f.run(&["predict", s(&ckpt), s(&cache), "--out", s(&pred_out)]);
    let preds = json(&pred_out.join("predictions.json"));
    let first = &preds["slides"][0];
    assert_eq!(first["slide_probs"].as_array().unwrap().len(), 4);
    assert!(!first["instances"].as_array().unwrap().is_empty());
    assert!(preds.get("macro_auc").is_none());

    let vis = f.path("vis");
    let slide = first["slide_id"].as_str().unwrap();
    let stdout = f.run(&["visualize", s(&ckpt), s(&cache), s(&data), slide, "--out", s(&vis)]);
    assert!(stdout.contains("agreement"), "{stdout}");
    let png = image_dims(&vis.join(format!("overlays/{slide}.png")));
    let src = image_dims(&data.join(format!("images/{slide}.png")));
    assert_eq!(png, src);
    let compare = image_dims(&vis.join(format!("overlays/{slide}_compare.png")));
    assert_eq!(compare, (2 * src.0, src.1));

    std::fs::remove_file(cache.join(format!("bags/{slide}/segmentation.bin"))).unwrap();
    let out = msmil(&["visualize", s(&ckpt), s(&cache), s(&data), slide, "--out", s(&vis)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("msmil prepare"));
}

fn image_dims(path: &Path) -> (u32, u32) {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    let be = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
    (be(16), be(20))
}

#[test]
fn slide_only_run_reports_untrained_instance_head() {
    let f = Fixture::new("train.fold = 0\n");
    let (_, cache) = f.data_and_cache();
    let run = f.path("run");
    let stdout = f.run(&["train", s(&cache), "--lambda", "1", "--out", s(&run)]);
    assert!(stdout.contains("instance head untrained"), "{stdout}");
    let metrics = json(&run.join("metrics.json"));
    assert_eq!(metrics["instance_head_trained"], Value::Bool(false));
    assert_eq!(metrics["lambda"].as_f64(), Some(1.0));
}

#[test]
fn mask_ratio_sweep_writes_table() {
    let f = Fixture::new("train.fold = 0\ntrain.max_epochs = 1\n");
    let (_, cache) = f.data_and_cache();
    let run = f.path("sweep");
    f.run(&["train", s(&cache), "--mask-ratio", "0,0.1,0.25,0.5", "--out", s(&run)]);
    for m in ["0", "0.1", "0.25", "0.5"] {
        let summary = json(&run.join(format!("mask_{m}/metrics.json")));
        assert!(summary["macro_auc_mean"].is_f64());
    }
    let table = std::fs::read_to_string(run.join("table2.csv")).unwrap();
    let rows: Vec<&str> = table.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        rows,
        ["setting", "masking 0%", "masking 10%", "masking 25%", "masking 50%"]
    );
}

#[test]
fn class_set_mismatch_exits_2() {
    let four = Fixture::new("train.fold = 0\ntrain.max_epochs = 1\n");
    let (_, cache4) = four.data_and_cache();
    let run = four.path("run");
    four.run(&["train", s(&cache4), "--out", s(&run)]);

    let three = Fixture::new("classes = NC,GG3,GG4\n");
    let (_, cache3) = three.data_and_cache();
    let ckpt = run.join("checkpoints/fold0");
    let out = msmil(&["eval", s(&ckpt), s(&cache3), "--out", s(&three.path("e"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("class set mismatch"));

    // a four-class config on a three-class cache is refused before training
    let out = msmil(&[
        "--config",
        s(&four.config),
        "train",
        s(&cache3),
        "--out",
        s(&four.path("r2")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
