mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use circuit_augmentor::pipeline::{AugmentationSummary, Manifest, SWEEP_CSV_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_circuit-augmentor"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> PathBuf {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.toml");
    std::fs::write(&cfg, common::TINY_CONFIG).unwrap();
    (dir, cfg)
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn gen_data_twice_is_byte_identical() {
    let (_tmp, cfg) = setup();
    let c = cfg.to_str().unwrap();
    let dir = run_ok(&["gen-data", "--config", c, "--seed", "3"]);
    let first = common::snapshot(&dir);
    std::fs::remove_dir_all(&dir).unwrap();
    let again = run_ok(&["gen-data", "--config", c, "--seed", "3"]);
    assert_eq!(dir, again);
    assert_eq!(first, common::snapshot(&again));

    let m = manifest(&dir);
    assert_eq!(m.seed, 3);
    let csv = std::fs::read_to_string(dir.join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 81);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 19);

    let other = run_ok(&["gen-data", "--config", c, "--seed", "4"]);
    assert_ne!(other, dir);
}

#[test]
fn train_sample_eval_report_chain() {
    let (tmp, cfg) = setup();
    let c = cfg.to_str().unwrap();
    let cfg_before = std::fs::read(&cfg).unwrap();
    let train = run_ok(&["train-gan", "--config", c, "--epochs", "6"]);
    let names: Vec<String> = manifest(&train).artifacts.into_iter().map(|a| a.path).collect();
    for want in ["checkpoint_best.json", "checkpoint_final.json", "train_log.csv", "reports/epoch_00002.json", "reports/epoch_00006.json"] {
        assert!(names.iter().any(|n| n == want), "missing {want} in {names:?}");
    }
    let log = std::fs::read_to_string(train.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    let ckpt = train.join("checkpoint_best.json");
    let ckpt_bytes = std::fs::read(&ckpt).unwrap();
    let k = ckpt.to_str().unwrap();
    let sample = run_ok(&["sample", "--config", c, "--checkpoint", k]);
    assert_eq!(std::fs::read_to_string(sample.join("samples.csv")).unwrap().lines().count(), 26);
    let eval = run_ok(&["eval", "--config", c, "--checkpoint", k]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    assert!(report["kl"]["mean"].as_f64().unwrap() >= 0.0);
    assert!(report["pct_error"]["mean"].as_f64().is_some());
    let rep = run_ok(&["report", "--config", c, "--checkpoint", k]);
    for f in ["histograms_training.csv", "histograms_generated.csv"] {
        let text = std::fs::read_to_string(rep.join(f)).unwrap();
        assert!(text.lines().count() > 19);
    }

    // inputs untouched
    assert_eq!(std::fs::read(&cfg).unwrap(), cfg_before);
    assert_eq!(std::fs::read(&ckpt).unwrap(), ckpt_bytes);
    drop(tmp);
}

#[test]
fn sweep_writes_nine_rows_per_regularizer() {
    let (_tmp, cfg) = setup();
    let dir = run_ok(&["sweep", "--config", cfg.to_str().unwrap(), "--epochs", "2", "--jobs", "2"]);
    let text = std::fs::read_to_string(dir.join("sweep_summary.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), SWEEP_CSV_HEADER);
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 18);
    assert_eq!(rows.iter().filter(|r| r.starts_with("\"none\"")).count(), 9);
    assert_eq!(rows.iter().filter(|r| r.starts_with("\"spectral_reg(0.5)\"")).count(), 9);
}

#[test]
fn augment_train_fills_the_comparison_columns() {
    let (_tmp, cfg) = setup();
    let dir = run_ok(&["augment-train", "--config", cfg.to_str().unwrap()]);
    let s: AugmentationSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.join("augmentation.json")).unwrap()).unwrap();
    assert_eq!(s.circuit, "c17");
    assert_eq!(s.records.len(), 2);
    for r in &s.records {
        for v in [r.simulated_ps, r.predicted_real_ps, r.predicted_augmented_ps, r.pct_error_real, r.pct_error_augmented] {
            assert!(v.is_finite() && v >= 0.0);
        }
        assert_eq!((r.real_rows, r.artificial_rows), (40, 60));
    }
}

#[test]
fn failures_exit_nonzero_with_context() {
    let (tmp, cfg) = setup();
    let c = cfg.to_str().unwrap();
    let out = run(&["sample", "--config", c]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--checkpoint"));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\n[gan]\nlr = \"fast\"\n").unwrap();
    let out = run(&["gen-data", "--config", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml") && err.contains("line 3"), "{err}");

    let out = run(&["gen-data", "--config", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert!(!out.status.success());

    let out = run(&["frobnicate", "--config", c]);
    assert!(!out.status.success());
}

#[test]
fn shipped_config_is_valid() {
    use circuit_augmentor::pipeline::PipelineConfig;
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/nand2.toml");
    let cfg = PipelineConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.gan.epochs, 2000);
    assert_eq!(cfg.experiment.seeds.len(), 5);
}
