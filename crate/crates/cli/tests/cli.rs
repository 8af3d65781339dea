//! End-to-end runs of the `otsteg` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use otsteg::nn::checkpoint::save_checkpoint;
use otsteg::nn::{NetConfig, StegoModel};
use otsteg::pnm::save_image;
use otsteg::synthetic::toy_dataset;
use otsteg::{ImageTensor, SeededRng};
use tempfile::TempDir;

fn otsteg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otsteg")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_points(dir: &Path, name: &str, values: &[f64]) {
    let text: String = values.iter().map(|v| format!("{v}\n")).collect();
    fs::write(dir.join(name), text).unwrap();
}

/// Cover, secret and a small untrained checkpoint.
fn fixture(dir: &Path, use_mcot: bool) {
    let imgs: Vec<ImageTensor> = toy_dataset(5, 2, 32);
    save_image(&imgs[0], dir.join("cover.ppm")).unwrap();
    save_image(&imgs[1], dir.join("secret.ppm")).unwrap();
    let cfg = NetConfig { base: 2, use_mcot, mlp_hidden: 3 };
    let model = StegoModel::<f64>::new(cfg, &mut SeededRng::new(1)).unwrap();
    save_checkpoint(&model, 0, dir.join("model.stgo")).unwrap();
}

const HIDE: &[&str] = &[
    "hide", "--cover", "cover.ppm", "--secret", "secret.ppm", "--model", "model.stgo", "--out-stego", "stego.ppm",
];

#[test]
fn solve_ot_prints_the_two_point_cost() {
    let d = TempDir::new().unwrap();
    write_points(d.path(), "x", &[0.0, 2.0]);
    write_points(d.path(), "y", &[1.0, 3.0]);
    for solver in ["exact", "brute", "assignment"] {
        let o = otsteg(d.path(), &["solve-ot", "--x-file", "x", "--y-file", "y", "--solver", solver]);
        assert_eq!(code(&o), 0);
        assert!(stdout(&o).contains("total_cost 1.0\n"), "{}", stdout(&o));
    }
}

#[test]
fn solve_ot_exact_and_brute_agree_on_six_points() {
    let d = TempDir::new().unwrap();
    let mut rng = SeededRng::new(6);
    write_points(d.path(), "x", &rng.gaussian_vec::<f64>(6));
    write_points(d.path(), "y", &rng.gaussian_vec::<f64>(6));
    let cost = |solver: &str| {
        let o = otsteg(d.path(), &["solve-ot", "--x-file", "x", "--y-file", "y", "--solver", solver]);
        assert_eq!(code(&o), 0);
        stdout(&o).lines().find(|l| l.starts_with("total_cost")).unwrap().to_string()
    };
    assert_eq!(cost("exact"), cost("brute"));
}

#[test]
fn solve_ot_guards() {
    let d = TempDir::new().unwrap();
    let nine: Vec<f64> = (0..9).map(f64::from).collect();
    write_points(d.path(), "x9", &nine);
    assert_eq!(code(&otsteg(d.path(), &["solve-ot", "--x-file", "x9", "--y-file", "x9", "--solver", "brute"])), 2);
    fs::write(d.path().join("bad"), "1.0\nnot-a-number\n").unwrap();
    assert_eq!(code(&otsteg(d.path(), &["solve-ot", "--x-file", "bad", "--y-file", "x9"])), 2);
    assert_eq!(code(&otsteg(d.path(), &["solve-ot", "--x-file", "missing", "--y-file", "x9"])), 4);
}

#[test]
fn solve_ot_writes_a_key_and_entropic_csv() {
    let d = TempDir::new().unwrap();
    write_points(d.path(), "x", &[0.0, 2.0]);
    write_points(d.path(), "y", &[1.0, 3.0]);
    let o = otsteg(d.path(), &["solve-ot", "--x-file", "x", "--y-file", "y", "--out", "plan.key"]);
    assert_eq!(code(&o), 0);
    assert_eq!(&fs::read(d.path().join("plan.key")).unwrap()[..4], b"MCOT");
    let o = otsteg(d.path(), &["solve-ot", "--x-file", "x", "--y-file", "y", "--solver", "entropic", "--epsilon", "10", "--out", "plan.csv"]);
    assert_eq!(code(&o), 0);
    let cost: f64 = stdout(&o).lines().find_map(|l| l.strip_prefix("total_cost ")).unwrap().parse().unwrap();
    assert!(cost > 1.0);
    assert_eq!(fs::read_to_string(d.path().join("plan.csv")).unwrap().lines().count(), 2);
}

#[test]
fn hide_then_reveal_round_trip() {
    let d = TempDir::new().unwrap();
    fixture(d.path(), true);
    let mut args = HIDE.to_vec();
    args.extend(["--out-key", "stego.key"]);
    let o = otsteg(d.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["stego.ppm", "stego.key", "stego.ppm.metrics.json"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
    let reveal = ["reveal", "--stego", "stego.ppm", "--key", "stego.key", "--model", "model.stgo", "--out", "rec.ppm"];
    let mut scored = reveal.to_vec();
    scored.extend(["--secret", "secret.ppm"]);
    let o = otsteg(d.path(), &scored);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("psnr_y_secret_recovery"));
    assert!(d.path().join("rec.ppm.metrics.json").exists());

    fs::remove_file(d.path().join("rec.ppm.metrics.json")).unwrap();
    let o = otsteg(d.path(), &reveal);
    assert_eq!(code(&o), 0);
    assert!(!stdout(&o).contains("psnr"));
    assert!(!d.path().join("rec.ppm.metrics.json").exists());

    // idempotent: same inputs, same bytes
    let first = fs::read(d.path().join("stego.ppm")).unwrap();
    assert_eq!(code(&otsteg(d.path(), &args)), 0);
    assert_eq!(fs::read(d.path().join("stego.ppm")).unwrap(), first);
}

#[test]
fn hide_input_errors() {
    let d = TempDir::new().unwrap();
    fixture(d.path(), true);
    assert_eq!(code(&otsteg(d.path(), HIDE)), 2, "exact mode without a key path");
    let small: ImageTensor = toy_dataset(1, 1, 16).remove(0);
    save_image(&small, d.path().join("small.ppm")).unwrap();
    let o = otsteg(d.path(), &["hide", "--cover", "cover.ppm", "--secret", "small.ppm", "--model", "model.stgo", "--out-stego", "s.ppm", "--out-key", "k"]);
    assert_eq!(code(&o), 2);
    let mut entropic = HIDE.to_vec();
    entropic.extend(["--mode", "entropic", "--epsilon", "0.5"]);
    assert_eq!(code(&otsteg(d.path(), &entropic)), 0);
    entropic.extend(["--out-key", "k"]);
    assert_eq!(code(&otsteg(d.path(), &entropic)), 2);
}

#[test]
fn reveal_key_errors() {
    let d = TempDir::new().unwrap();
    fixture(d.path(), true);
    let mut args = HIDE.to_vec();
    args.extend(["--out-key", "stego.key"]);
    assert_eq!(code(&otsteg(d.path(), &args)), 0);
    let bytes = fs::read(d.path().join("stego.key")).unwrap();
    fs::write(d.path().join("short.key"), &bytes[..bytes.len() - 5]).unwrap();
    let o = otsteg(d.path(), &["reveal", "--stego", "stego.ppm", "--key", "short.key", "--model", "model.stgo", "--out", "r.ppm"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("truncated"));

    // a key for a different bridge shape
    let small: ImageTensor = toy_dataset(1, 1, 16).remove(0);
    save_image(&small, d.path().join("small.ppm")).unwrap();
    let o = otsteg(d.path(), &["reveal", "--stego", "small.ppm", "--key", "stego.key", "--model", "model.stgo", "--out", "r.ppm"]);
    assert_eq!(code(&o), 3);
    let o = otsteg(d.path(), &["reveal", "--stego", "stego.ppm", "--model", "model.stgo", "--out", "r.ppm"]);
    assert_eq!(code(&o), 2, "transport model without a key");
}

#[test]
fn model_without_transport_needs_no_key() {
    let d = TempDir::new().unwrap();
    fixture(d.path(), false);
    let mut args = HIDE.to_vec();
    args.extend(["--out-key", "stego.key"]);
    assert_eq!(code(&otsteg(d.path(), &args)), 0);
    let o = otsteg(d.path(), &["reveal", "--stego", "stego.ppm", "--model", "model.stgo", "--out", "r.ppm"]);
    assert_eq!(code(&o), 0);
}

const TINY: &[&str] = &["--synthetic", "4", "--base", "2", "--mlp-hidden", "3", "--epochs", "2"];

#[test]
fn train_is_deterministic_and_resumable() {
    let d = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let mut args = vec!["train", "--out-dir", out];
        args.extend(TINY);
        assert_eq!(code(&otsteg(d.path(), &args)), 0);
    }
    let a = fs::read(d.path().join("a/metrics.csv")).unwrap();
    assert_eq!(a, fs::read(d.path().join("b/metrics.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 3);

    // the manifest is a config file that reproduces the run
    let o = otsteg(d.path(), &["train", "--config", "a/manifest.txt", "--out-dir", "c"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(d.path().join("c/metrics.csv")).unwrap(), fs::read(d.path().join("a/metrics.csv")).unwrap());

    let mut args = vec!["train", "--out-dir", "r", "--resume", "a/model.stgo", "--epochs", "4"];
    args.extend(&TINY[..6]);
    let o = otsteg(d.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.path().join("r/metrics.csv")).unwrap();
    let epochs: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["3", "4"]);
}

#[test]
fn train_rejects_bad_datasets_and_config() {
    let d = TempDir::new().unwrap();
    fs::create_dir(d.path().join("empty")).unwrap();
    assert_eq!(code(&otsteg(d.path(), &["train", "--data", "empty", "--out-dir", "o"])), 2);
    fs::write(d.path().join("cfg"), "epochs=2\nnot_a_key=1\n").unwrap();
    let mut args = vec!["train", "--out-dir", "o", "--config", "cfg"];
    args.extend(&TINY[..6]);
    assert_eq!(code(&otsteg(d.path(), &args)), 2);
}

#[test]
fn flags_override_the_config_file() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("cfg"), "epochs=1\nseed=9\n").unwrap();
    let mut args = vec!["train", "--out-dir", "o", "--config", "cfg", "--seed", "3"];
    args.extend(&TINY[..6]);
    assert_eq!(code(&otsteg(d.path(), &args)), 0);
    let manifest = fs::read_to_string(d.path().join("o/manifest.txt")).unwrap();
    assert!(manifest.contains("\nepochs=1\n"));
    assert!(manifest.contains("\nseed=3\n"));
    assert!(manifest.contains("\nbatch=4\n"), "defaults fill the rest");
}

#[test]
fn ablate_pairs_runs_and_writes_manifests() {
    let d = TempDir::new().unwrap();
    let mut args = vec!["ablate", "--seeds", "2", "--out-dir", "ab"];
    args.extend(TINY);
    let o = otsteg(d.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(d.path().join("ab/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 + 2);
    let out = stdout(&o);
    assert!(out.contains("ablation PASS") || out.contains("ablation FAIL"));
    let with = fs::read_to_string(d.path().join("ab/run_seed0_mcot_true.manifest")).unwrap();
    let without = fs::read_to_string(d.path().join("ab/run_seed0_mcot_false.manifest")).unwrap();
    let differing: Vec<(&str, &str)> = with.lines().zip(without.lines()).filter(|(a, b)| a != b).collect();
    assert_eq!(differing, [("use_mcot=true", "use_mcot=false")]);

    let mut zero = vec!["ablate", "--seeds", "0", "--out-dir", "z"];
    zero.extend(TINY);
    assert_eq!(code(&otsteg(d.path(), &zero)), 2);
}

#[test]
fn bench_rows_and_guards() {
    let d = TempDir::new().unwrap();
    let o = otsteg(d.path(), &["bench", "--sizes", "64,256,1024", "--solvers", "exact", "--out", "b.csv"]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(d.path().join("b.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let o = otsteg(d.path(), &["bench", "--sizes", "6,16", "--solvers", "brute,entropic"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("brute force skipped for n = 16"));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("brute,")).count(), 1);
    for row in out.lines().filter(|l| l.starts_with("entropic,")) {
        let gap: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(gap >= -1e-12, "{row}");
    }
    assert_eq!(code(&otsteg(d.path(), &["bench", "--solvers", "simplex"])), 2);
}
