use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use swd_core::dropout;
use swd_core::{MaskRecord, SpectralDropoutConfig, Tensor4};

fn swd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = swd(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "swd {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Minimal PGM reader kept separate from the binary's parser.
fn read_pgm(path: &Path) -> (usize, usize, Vec<u32>) {
    let bytes = std::fs::read(path).unwrap();
    let text_header: Vec<&[u8]> = bytes.splitn(5, |b| b.is_ascii_whitespace()).collect();
    match &bytes[..2] {
        b"P5" => {
            let w: usize = std::str::from_utf8(text_header[1]).unwrap().parse().unwrap();
            let h: usize = std::str::from_utf8(text_header[2]).unwrap().parse().unwrap();
            assert_eq!(std::str::from_utf8(text_header[3]).unwrap(), "255");
            let raster = &bytes[bytes.len() - w * h..];
            (w, h, raster.iter().map(|&b| u32::from(b)).collect())
        }
        b"P2" => {
            let text = String::from_utf8(bytes).unwrap();
            let nums: Vec<u32> = text
                .lines()
                .filter(|l| !l.starts_with('#'))
                .flat_map(|l| l.split_whitespace())
                .skip(1)
                .map(|t| t.parse().unwrap())
                .collect();
            let (w, h) = (nums[0] as usize, nums[1] as usize);
            (w, h, nums[3..].to_vec())
        }
        other => panic!("not a PGM: {other:?}"),
    }
}

fn write_pgm(path: &Path, w: usize, h: usize, px: &[u8]) {
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend_from_slice(px);
    std::fs::write(path, bytes).unwrap();
}

fn max_gray_diff(a: &[u32], b: &[u32]) -> u32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).max().unwrap()
}

#[test]
fn decompose_then_reconstruct_is_within_one_gray_level() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("pattern32.pgm");
    let (_, _, original) = read_pgm(&input);
    for (wavelet, mode) in [("db3", "2d"), ("haar", "2d"), ("db3", "1d"), ("haar", "1d")] {
        let bands = dir.path().join(format!("{wavelet}-{mode}"));
        let back = dir.path().join(format!("{wavelet}-{mode}.pgm"));
        ok(&["decompose", s(&input), "--wavelet", wavelet, "--mode", mode, "--out", s(&bands)]);
        ok(&["reconstruct", s(&bands), "--out", s(&back)]);
        let (w, h, px) = read_pgm(&back);
        assert_eq!((w, h), (32, 32));
        assert!(max_gray_diff(&px, &original) <= 1, "{wavelet} {mode}");
    }
}

#[test]
fn constant_image_gives_mid_gray_detail_bands() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("flat.pgm");
    write_pgm(&input, 16, 16, &[90; 256]);
    let out = dir.path().join("bands");
    ok(&["decompose", s(&input), "--wavelet", "haar", "--mode", "2d", "--out", s(&out)]);
    for band in ["lh", "hl", "hh"] {
        let (_, _, px) = read_pgm(&out.join(format!("{band}.pgm")));
        assert!(px.iter().all(|&v| v == 128), "{band}: {px:?}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let bands = manifest["bands"].as_array().unwrap();
    assert_eq!(bands.len(), 4);
    for b in &bands[1..] {
        assert!(b["energy"].as_f64().unwrap() < 1e-24);
    }
}

#[test]
fn decompose_matches_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("pattern32.pgm");
    for (wavelet, mode) in [("db3", "2d"), ("haar", "1d")] {
        let name = format!("{wavelet}-{mode}");
        let out = dir.path().join(&name);
        ok(&["decompose", s(&input), "--wavelet", wavelet, "--mode", mode, "--out", s(&out)]);
        let golden = data(&format!("golden/{name}"));
        let mut files: Vec<_> = std::fs::read_dir(&golden).unwrap().map(|e| e.unwrap().file_name()).collect();
        files.sort();
        let mut produced: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
        produced.sort();
        assert_eq!(files, produced, "{name}");
        for f in files {
            let want = std::fs::read(golden.join(&f)).unwrap();
            let got = std::fs::read(out.join(&f)).unwrap();
            assert!(want == got, "{name}/{} differs from golden", f.to_string_lossy());
        }
    }
}

#[test]
fn zero_rate_dropout_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("pattern32.pgm");
    let (_, _, original) = read_pgm(&input);
    for variant in ["swd1d", "swd2d", "sfd1d", "sfd2d"] {
        let out = dir.path().join(variant);
        ok(&["dropout", s(&input), "--variant", variant, "--p", "0", "--seed", "5", "--out", s(&out)]);
        let (_, _, px) = read_pgm(&out.join("output.pgm"));
        assert!(max_gray_diff(&px, &original) <= 1, "{variant}");
    }
}

#[test]
fn seeded_dropout_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("pattern32.pgm");
    for (variant, eta) in [("swd1d", "0"), ("swd2d", "0"), ("sfd2d", "0.3")] {
        let run = |tag: &str| {
            let out = dir.path().join(format!("{variant}-{tag}"));
            ok(&[
                "dropout", s(&input), "--variant", variant, "--p", "0.4", "--eta", eta, "--seed", "11", "--out", s(&out),
            ]);
            ["output.pgm", "output.bin", "mask.bin", "summary.json"].map(|f| std::fs::read(out.join(f)).unwrap())
        };
        assert_eq!(run("a"), run("b"), "{variant}");
    }
}

#[test]
fn forced_hl_drop_matches_library_replay() {
    let dir = tempfile::tempdir().unwrap();
    let input = data("pattern32.pgm");
    let out = dir.path().join("hl");
    ok(&[
        "dropout", s(&input), "--variant", "swd2d", "--p", "0.5", "--seed", "2", "--force-mask", "101", "--out", s(&out),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["bands_dropped"], serde_json::json!(["HL"]));

    // Library oracle: zero HL, scale LH and HH by 1/(1-p), invert.
    let (w, h, px) = read_pgm(&input);
    let x = Tensor4::new([1, 1, h, w], px.iter().map(|&v| f64::from(v) / 255.0).collect()).unwrap();
    let cfg = SpectralDropoutConfig::swd2d(0.5);
    let want = dropout::replay(&x, &MaskRecord::forced(&cfg, vec![true, false, true]), &cfg).unwrap();
    let got = Tensor4::from_bytes(&std::fs::read(out.join("output.bin")).unwrap()).unwrap();
    assert!(got.max_abs_diff(&want) <= 1e-12);

    let f = swd_core::wavelet::db3_filter();
    let m = swd_core::Matrix::new(h, w, x.data().to_vec()).unwrap();
    let mut b = swd_core::wavelet::dwt2d(&m, &f).unwrap();
    b.hl = b.hl.scale(0.0);
    b.lh = b.lh.scale(2.0);
    b.hh = b.hh.scale(2.0);
    let manual = swd_core::wavelet::idwt2d(&b, &f).unwrap();
    let diff = manual.data().iter().zip(got.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-12, "{diff}");

    let record = MaskRecord::from_bytes(&std::fs::read(out.join("mask.bin")).unwrap()).unwrap();
    assert_eq!(record.bits, vec![true, false, true]);
}

#[test]
fn verify_exit_codes() {
    let out = ok(&["verify", "--suite", "wavelet"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
    assert_eq!(swd(&["verify", "--suite", "nonsense"]).status.code(), Some(2));
    let mutated = swd(&["verify", "--suite", "wavelet", "--perturb-tap", "1", "--perturb-delta", "1e-3"]);
    assert_eq!(mutated.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&mutated.stdout).contains("FAIL"));
}

#[test]
fn verify_writes_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    ok(&["verify", "--suite", "dct", "--json", s(&path)]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["passed"], serde_json::json!(true));
    assert_eq!(report["suites"].as_array().unwrap().len(), 1);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(swd(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(swd(&["dropout", "x.pgm", "--variant", "swd2d", "--out", "o"]).status.code(), Some(2));
    let missing = swd(&["decompose", "/nonexistent.pgm", "--out", "/tmp/never"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));
}

#[test]
fn bench_single_size_emits_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let dat = dir.path().join("t.dat");
    ok(&["bench", "--op", "dwt2d", "--sizes", "32", "--repeats", "5", "--out", s(&csv), "--gnuplot", s(&dat)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert_eq!(lines[0], "op,n,median_seconds");
    assert!(lines[1].starts_with("dwt2d,32,"));
    let plot = std::fs::read_to_string(&dat).unwrap();
    assert_eq!(plot.lines().filter(|l| !l.starts_with('#')).count(), 1);
    assert_eq!(swd(&["bench", "--op", "dwt2d", "--sizes", "32", "--repeats", "2"]).status.code(), Some(2));
}

fn write_json(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#""dataset": {"train": 32, "test": 32, "size": 8}, "epochs": 2, "record_timing": false"#;

#[test]
fn minimal_train_config_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "c.json", &format!("{{{SMALL}}}"));
    let out = dir.path().join("out");
    let run = ok(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&run.stdout).contains("baseline"));
    let csv = std::fs::read_to_string(out.join("runs/baseline_seed0.csv")).unwrap();
    assert!(csv.starts_with("epoch,train_loss,train_acc,test_loss,test_acc,epoch_seconds\n"));
    assert_eq!(csv.lines().count(), 4);
    assert!(out.join("summary.csv").exists());
}

#[test]
fn identical_configs_reproduce_identical_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "c.json",
        &format!(r#"{{{SMALL}, "seeds": [0, 1], "dropout": {{"variant": "swd1d", "p": 0.3}}}}"#),
    );
    let read_all = |out: &Path| {
        let mut files: Vec<_> = std::fs::read_dir(out.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.push(out.join("runs.csv"));
        files.push(out.join("summary.csv"));
        files.iter().map(|f| std::fs::read(f).unwrap()).collect::<Vec<_>>()
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["train", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["train", "--config", s(&cfg), "--out", s(&b)]);
    let (ra, rb) = (read_all(&a), read_all(&b));
    assert_eq!(ra.len(), 4);
    assert_eq!(ra, rb);
}

#[test]
fn sweep_writes_disjoint_run_files_and_best_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(
        dir.path(),
        "s.json",
        &format!(
            r#"{{{SMALL}, "self_test": false, "sweep": {{"kind": "hparams", "variant": "sfd2d", "p_grid": [0.1, 0.2], "eta_grid": [0.0, 0.3]}}}}"#
        ),
    );
    let out = dir.path().join("out");
    let run = ok(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&run.stdout).contains("best: p="));
    assert_eq!(std::fs::read_dir(out.join("runs")).unwrap().count(), 5);
    let best: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("best.json")).unwrap()).unwrap();
    assert!(best["label"].as_str().unwrap().starts_with("p="));
}

#[test]
fn schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    for (body, field) in [
        (r#"{"optimizer": {"lr": "fast"}}"#, "optimizer.lr"),
        (r#"{"dropout": {"variant": "swd2d", "p": 0.1, "colour": 1}}"#, "dropout"),
        (r#"{"net": {"blocks": [{"kind": "conv"}], "insertion_point": 0, "placement": "after_conv"}}"#, "net.blocks[0]"),
        (r#"{"epocs": 3}"#, "epocs"),
    ] {
        let cfg = write_json(dir.path(), "bad.json", body);
        let out = swd(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(field), "{body}: {err}");
    }
    let semantic = write_json(dir.path(), "sem.json", r#"{"dropout": {"variant": "swd2d", "p": 1.5}}"#);
    let out = swd(&["train", "--config", s(&semantic), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dropout"));
}
