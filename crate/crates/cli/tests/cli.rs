use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use wpal::metrics::{binarize_rows, EvalReport};
use wpal::model::{ModelConfig, ModelState};
use wpal::synth::read_dataset;

fn wpal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = wpal(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small dataset plus a tiny model config sized for it.
struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new(count: usize) -> Self {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data");
        ok(&["gen-data", "--count", &count.to_string(), "--seed", "5", "--out", s(&data)]);
        let cfg = ModelConfig {
            input_size: 24,
            ..ModelConfig::tiny(8)
        };
        fs::write(dir.path().join("model.txt"), cfg.to_text()).unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(out);
        let data = self.path("data");
        let cfg = self.path("model.txt");
        let mut args = vec!["train", "--data", s(&data), "--out", s(&out), "--learning-rate", "0.003"];
        if !extra.contains(&"--resume") {
            args.extend(["--model-config", s(&cfg)]);
        }
        args.extend(extra);
        ok(&args);
        out
    }
}

#[test]
fn zero_count_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = wpal(&["gen-data", "--count", "0", "--out", s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = wpal(&["train", "--data", s(&dir.path().join("nope")), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_stats_is_a_usage_error() {
    let f = Fixture::new(12);
    let run = f.train("run", &["--epochs", "1"]);
    let out = wpal(&[
        "localize",
        "--data",
        s(&f.path("data")),
        "--checkpoint",
        s(&run.join("model.ckpt")),
        "--stats",
        s(&f.path("absent.csv")),
        "--out",
        s(&f.path("loc")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let f = Fixture::new(24);
    let full = f.train("full", &["--epochs", "2"]);
    let half = f.train("half", &["--epochs", "1"]);
    let ckpt = half.join("model.ckpt");
    let resumed = f.train("resumed", &["--epochs", "2", "--resume", s(&ckpt)]);
    assert_eq!(
        fs::read(full.join("model.ckpt")).unwrap(),
        fs::read(resumed.join("model.ckpt")).unwrap()
    );
    assert_eq!(
        fs::read(full.join("train_log.csv")).unwrap(),
        fs::read(resumed.join("train_log.csv")).unwrap()
    );
}

#[test]
fn eval_report_matches_metrics_on_written_predictions() {
    let f = Fixture::new(30);
    let run = f.train("run", &["--epochs", "1"]);
    let out = f.path("eval");
    ok(&["eval", "--data", s(&f.path("data")), "--checkpoint", s(&run.join("model.ckpt")), "--out", s(&out)]);

    let csv = fs::read_to_string(out.join("predictions.csv")).unwrap();
    let scores: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect())
        .collect();
    let truth: Vec<Vec<bool>> = read_dataset(&f.path("data"))
        .unwrap()
        .labels()
        .iter()
        .map(|r| r.iter().map(|&v| v == 1.0).collect())
        .collect();
    let expected = EvalReport::compute(&binarize_rows(&scores), &truth).unwrap();
    assert_eq!(fs::read_to_string(out.join("report.txt")).unwrap(), expected.to_text());
}

#[test]
fn constant_half_output_predicts_all_negative() {
    let f = Fixture::new(30);
    let cfg = ModelConfig::read(&f.path("model.txt")).unwrap();
    let mut model = ModelState::build(cfg).unwrap();
    for name in ["fc.weight", "fc.bias"] {
        model.param_mut(name).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let ckpt = f.path("half.ckpt");
    model.save(&ckpt).unwrap();
    let out = f.path("eval");
    ok(&["eval", "--data", s(&f.path("data")), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("Rec_exam = 0\n"), "{report}");
    let per = fs::read_to_string(out.join("per_attribute.csv")).unwrap();
    for line in per.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[2], "0", "no true positives expected: {line}");
        assert_eq!(cols[4], "0", "no false positives expected: {line}");
    }
}

#[test]
fn localize_writes_maps_for_negative_predictions_too() {
    let f = Fixture::new(30);
    let run = f.train("run", &["--epochs", "1"]);
    let ckpt = run.join("model.ckpt");
    let stats = f.path("stats");
    ok(&["estrel", "--data", s(&f.path("data")), "--checkpoint", s(&ckpt), "--out", s(&stats)]);
    let loc = f.path("loc");
    ok(&[
        "localize",
        "--data",
        s(&f.path("data")),
        "--checkpoint",
        s(&ckpt),
        "--stats",
        s(&stats.join("stats.csv")),
        "--out",
        s(&loc),
        "--attributes",
        "hat,6",
        "--limit",
        "3",
    ]);
    let rows = fs::read_to_string(loc.join("locations.csv")).unwrap();
    let mut lines = rows.lines();
    assert_eq!(lines.next(), Some("image,attribute,name,prediction,rank,y,x,mass"));
    assert_eq!(lines.count(), 6);
    let first = fs::read_dir(&loc)
        .unwrap()
        .filter_map(|e| e.ok())
        .find(|e| e.path().is_dir())
        .unwrap()
        .path();
    for name in ["hat.pgm", "hat_overlay.ppm", "v-neck.pgm", "v-neck_locations.csv"] {
        assert!(first.join(name).is_file(), "missing {name}");
    }
}

#[test]
fn rank_bins_lists_k_rows_by_strength() {
    let f = Fixture::new(30);
    let run = f.train("run", &["--epochs", "1"]);
    let ckpt = run.join("model.ckpt");
    let stats = f.path("stats");
    ok(&["estrel", "--data", s(&f.path("data")), "--checkpoint", s(&ckpt), "--out", s(&stats)]);
    let out = ok(&[
        "rank-bins",
        "--stats",
        s(&stats.join("stats.csv")),
        "--checkpoint",
        s(&ckpt),
        "--attribute",
        "2",
        "--k",
        "5",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(rs.len(), 5);
    assert!(rs.windows(2).all(|w| w[0] >= w[1]), "{rs:?}");
}

#[test]
fn layer_gradcheck_passes_and_reports() {
    let out = ok(&["gradcheck", "--scope", "layer", "--seeds", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("conv"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}
