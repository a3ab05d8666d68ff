use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use morphtext::map::{decode_map, save_map};
use morphtext::FeatureMap;

fn morphtext(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morphtext")).args(args).output().unwrap()
}

fn code(args: &[&str]) -> i32 {
    morphtext(args).status.code().unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = path(dir.path(), "x");
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(code(&["train", "--config", "/nonexistent/run.ini", "--out", &out]), 1);
    assert_eq!(code(&["gradcheck", "--set", "no_such_key=1", "--out", &out]), 1);
    assert_eq!(code(&["gradcheck", "--block", "dmxx", "--out", &out]), 1);
    assert_eq!(code(&["visualize", dir.path().to_str().unwrap(), "--out", &out]), 1);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn gradcheck_passes_and_catches_a_flipped_backward() {
    let dir = tempfile::tempdir().unwrap();
    let ok = morphtext(&["gradcheck", "--block", "dmcl", "--trials", "2", "--out", &path(dir.path(), "ok")]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let csv = fs::read_to_string(dir.path().join("ok/gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(code(&["gradcheck", "--trials", "2", "--corrupt-backward", "--out", &path(dir.path(), "bad")]), 2);
    assert_eq!(code(&["gradcheck", "--trials", "0", "--out", &path(dir.path(), "none")]), 0);
}

#[test]
fn generate_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, run, eval) = (path(dir.path(), "corpus"), path(dir.path(), "run"), path(dir.path(), "eval"));
    assert_eq!(code(&["generate", "--out", &corpus, "--train-count", "12", "--test-count", "4"]), 0);
    let manifest = fs::read_to_string(dir.path().join("corpus/manifest.txt")).unwrap();
    assert!(manifest.contains("train = 12") && manifest.contains("config_sha256 = "), "{manifest}");

    let config = dir.path().join("run.ini");
    fs::write(&config, "seed = 4\n[train]\nepochs = 1\n[eval]\nbaseline = none\n").unwrap();
    let c = config.to_str().unwrap();
    assert_eq!(code(&["train", "--config", c, "--corpus", &corpus, "--out", &run, "--threads", "1"]), 0);
    let resolved = fs::read_to_string(dir.path().join("run/resolved.ini")).unwrap();
    assert!(resolved.starts_with("[train]") && resolved.contains("epochs = 1") && resolved.contains("seed = 4"));
    assert!(dir.path().join("run/loss.csv").is_file());

    let checkpoint = path(dir.path(), "run/checkpoint");
    assert_eq!(code(&["eval", "--config", c, "--corpus", &corpus, "--checkpoint", &checkpoint, "--out", &eval]), 0);
    let report = fs::read_to_string(dir.path().join("eval/report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().collect();
    assert_eq!(rows[0], "variant,tp,fp,fn,precision,recall,f_measure");
    assert!(rows[1].starts_with("none,") && rows[2].starts_with("dmop+dmcl,"), "{report}");

    let tiles = path(dir.path(), "tiles");
    assert_eq!(code(&["visualize", &path(dir.path(), "run"), "--out", &tiles]), 0);
    assert!(fs::read_dir(&tiles).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "pgm")));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = path(dir.path(), "corpus");
    assert_eq!(code(&["generate", "--out", &corpus, "--train-count", "2", "--test-count", "2"]), 0);
    let args = ["eval", "--corpus", &corpus, "--checkpoint", "/nonexistent/ckpt", "--out", &path(dir.path(), "e")];
    assert_eq!(code(&args), 2);
}

#[test]
fn map_files_render_one_pgm_per_channel() {
    let dir = tempfile::tempdir().unwrap();
    let m = FeatureMap::from_fn(2, 5, 3, |c, x, y| (c * 15 + y * 5 + x) as f64);
    let file = dir.path().join("probe.fm");
    save_map(&m, &file).unwrap();
    assert_eq!(decode_map(&fs::read(&file).unwrap()).unwrap(), m);
    let out = path(dir.path(), "pgm");
    assert_eq!(code(&["visualize", file.to_str().unwrap(), "--out", &out, "--set", "scale=1"]), 0);
    for c in 0..2 {
        let bytes = fs::read(dir.path().join(format!("pgm/probe_c{c}.pgm"))).unwrap();
        assert!(bytes.starts_with(b"P5\n5 3\n255\n"));
        // min-max scaled: first pixel black, last pixel white
        let pixels = &bytes[bytes.len() - 15..];
        assert_eq!((pixels[0], pixels[14]), (0, 255));
    }
}
