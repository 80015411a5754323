use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array2;
use pushframe::io::{load_flatfield, load_samples, SampleData};
use pushframe::Image;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pushframe"));
    c.env("PUSHFRAME_THREADS", "2");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn pushframe")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Smooth blobs plus an edge, quantized to 8-bit levels so PGM storage is exact.
fn scene(n: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, w), |(i, j)| {
        let (y, x) = (i as f64 / n as f64, j as f64 / w as f64);
        let v = 0.4 + 0.3 * (6.0 * x).sin() * (4.0 * y).cos() + if x > 0.6 { 0.2 } else { 0.0 };
        (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
    })
}

fn write_scene(dir: &Path, name: &str, x: Array2<f64>) -> PathBuf {
    let path = dir.join(name);
    Image::mono(x).save(&path).unwrap();
    path
}

fn cropped(path: &Path) -> Array2<f64> {
    match load_samples(path).unwrap() {
        SampleData::Cropped(c) => c.data,
        other => panic!("expected cropped samples, got {other:?}"),
    }
}

#[test]
fn pattern_sizes_and_stable_digest() {
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("n2.pgm");
    ok(&["pattern", "--n", "2", "--out", p(&small)]);
    let bytes = std::fs::read(&small).unwrap();
    let header: Vec<&str> = std::str::from_utf8(&bytes[..11]).unwrap().split_whitespace().collect();
    assert_eq!(header, ["P5", "3", "2", "255"]);
    assert_eq!(bytes.len(), 11 + 6);

    let big = dir.path().join("n256.pgm");
    let a = ok(&["pattern", "--n", "256", "--ordering", "mirrored", "--out", p(&big)]);
    let img = Image::load(&big).unwrap();
    assert_eq!((img.height(), img.width()), (256, 257));
    assert!(img.band(0).column(256).iter().all(|&v| v == 1.0));
    let b = ok(&["pattern", "--n", "256", "--ordering", "mirrored", "--out", p(&big)]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8(a.stdout).unwrap().trim().len(), 64);
    assert!(dir.path().join("n256.pgm.manifest.json").exists());
}

#[test]
fn invalid_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["pattern", "--n", "12", "--out", p(&dir.path().join("x.pgm"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["plan", "--n", "16", "--m", "5", "--out", p(&dir.path().join("x.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(run(&["sweep"]).status.code(), Some(2));
}

#[test]
fn capture_matches_direct_mask_products() {
    let dir = tempfile::tempdir().unwrap();
    let x = scene(8, 8);
    let scene_path = write_scene(dir.path(), "s.pgm", x.clone());
    let mask_path = dir.path().join("mask.pgm");
    ok(&["pattern", "--n", "8", "--out", p(&mask_path)]);
    let mask = Image::load(&mask_path).unwrap().into_bands().remove(0);

    for dir_flag in ["forward", "reverse"] {
        let s_path = dir.path().join(format!("s_{dir_flag}.csv"));
        ok(&["capture", "--scene", p(&scene_path), "--direction", dir_flag, "--out", p(&s_path)]);
        let s = load_samples(&s_path).unwrap().into_cropped().unwrap();
        for j in 0..8 {
            for c in 0..9 {
                let want: f64 = (0..8).map(|i| x[[i, j]] * mask[[i, c]]).sum();
                let got = pushframe::SampleSource::reading(&s, j, c).unwrap();
                assert!((got - want).abs() < 1e-12);
            }
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s_forward.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "capture");
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_scene_gives_zero_samples_and_raw_has_blanks() {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = write_scene(dir.path(), "z.pgm", Array2::zeros((8, 5)));
    let out = dir.path().join("z.pfsm");
    let raw = dir.path().join("z_raw.csv");
    ok(&["capture", "--scene", p(&scene_path), "--out", p(&out), "--raw-out", p(&raw)]);
    assert!(cropped(&out).iter().all(|&v| v == 0.0));
    match load_samples(&raw).unwrap() {
        SampleData::Raw(m) => {
            assert_eq!(m.raw.dim(), (2 * 8 + 5, 9));
            assert!(m.raw.iter().any(|v| v.is_none()));
        }
        other => panic!("expected raw samples, got {other:?}"),
    }
}

#[test]
fn white_scene_calibrates_vignetting() {
    let dir = tempfile::tempdir().unwrap();
    let white = write_scene(dir.path(), "w.pgm", Array2::from_elem((16, 6), 1.0));
    let ff = dir.path().join("ff.csv");
    ok(&[
        "capture", "--scene", p(&white), "--vignetting", "0.3", "--flatfield-out", p(&ff),
        "--out", p(&dir.path().join("w.csv")),
    ]);
    let weights = load_flatfield(&ff).unwrap();
    assert_eq!(weights.len(), 17);
    assert!((weights[8] - 1.0).abs() < 1e-12);
    assert!((weights[0] - 1.0 / 0.7).abs() < 1e-12);

    let scene_path = write_scene(dir.path(), "s.pgm", scene(16, 6));
    let corrected = dir.path().join("c.csv");
    let ideal = dir.path().join("i.csv");
    ok(&[
        "capture", "--scene", p(&scene_path), "--vignetting", "0.3", "--flatfield", p(&ff),
        "--out", p(&corrected),
    ]);
    ok(&["capture", "--scene", p(&scene_path), "--out", p(&ideal)]);
    for (a, b) in cropped(&corrected).iter().zip(cropped(&ideal).iter()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn reconstruct_full_rate_and_compressed() {
    let dir = tempfile::tempdir().unwrap();
    let x = scene(32, 32);
    let scene_path = write_scene(dir.path(), "s.pgm", x);
    let plan = dir.path().join("plan.json");
    ok(&["plan", "--n", "32", "--rate", "1.0", "-b", "32", "--seed", "3", "--out", p(&plan)]);
    let samples = dir.path().join("s.csv");
    ok(&["capture", "--scene", p(&scene_path), "--plan", p(&plan), "--out", p(&samples)]);

    let full = dir.path().join("full.pgm");
    let report = dir.path().join("full.json");
    let out = ok(&[
        "reconstruct", "--samples", p(&samples), "--plan", p(&plan), "--truth", p(&scene_path),
        "--out", p(&full), "--report", p(&report),
    ]);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let psnr = rep["quality"]["psnr_db"].as_f64().unwrap_or(f64::INFINITY);
    assert!(psnr > 40.0, "full-rate PSNR {psnr}");
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("psnr_db"));

    let low = dir.path().join("low.pgm");
    let low_report = dir.path().join("low.json");
    let status = run(&[
        "reconstruct", "--samples", p(&samples), "--plan", p(&plan), "--rate", "0.2", "-b", "4",
        "--out", p(&low), "--report", p(&low_report),
    ])
    .status;
    assert!(matches!(status.code(), Some(0) | Some(3)));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&low_report).unwrap()).unwrap();
    let blocks = rep["bands"][0]["blocks"].as_array().unwrap();
    assert_eq!(blocks.len(), 8);
    assert!(blocks.iter().all(|b| b["converged"].is_boolean()));
    assert_eq!(rep["m"], 6);
}

#[test]
fn reconstruct_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = write_scene(dir.path(), "s.pgm", scene(16, 12));
    let plan = dir.path().join("plan.json");
    ok(&["plan", "--n", "16", "--rate", "0.5", "-b", "4", "--out", p(&plan)]);
    let samples = dir.path().join("s.csv");
    ok(&["capture", "--scene", p(&scene_path), "--out", p(&samples)]);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("r{threads}.pgm"));
        let status = bin()
            .env("PUSHFRAME_THREADS", threads)
            .args(["reconstruct", "--samples", p(&samples), "--plan", p(&plan), "--out", p(&out)])
            .status()
            .unwrap();
        assert!(matches!(status.code(), Some(0) | Some(3)));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sweep_emits_one_row_per_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let scene_path = write_scene(dir.path(), "s.pgm", scene(32, 16));
    let csv = dir.path().join("sweep.csv");
    let status = run(&[
        "sweep", "--scene", p(&scene_path), "--rates", "0.2,0.4", "--block-widths", "1,4,16",
        "--out-csv", p(&csv),
    ])
    .status;
    assert!(matches!(status.code(), Some(0) | Some(3)));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "rate,b,method,m,psnr_db,ssim,converged,wall_time_s");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|l| l.contains(",pooled,")).count(), 6);
    assert_eq!(rows.iter().filter(|l| l.contains(",naive,")).count(), 6);
}

#[test]
fn pan_emits_both_routes() {
    let dir = tempfile::tempdir().unwrap();
    let x = scene(32, 16);
    let path = dir.path().join("c.ppm");
    Image::rgb(x.clone(), x.mapv(|v| 1.0 - v), x.mapv(|v| v * v))
        .unwrap()
        .save(&path)
        .unwrap();
    let csv = dir.path().join("pan.csv");
    let fr = dir.path().join("fr.csv");
    let out = ok(&[
        "pan", "--scene-color", p(&path), "--mbar-list", "0.25,0.5", "--curve-rates", "0.375",
        "-b", "16", "--out-csv", p(&csv), "--fractions-csv", p(&fr),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("route,mbar_rate,mbar,m_pan,m_band,psnr_db,ssim"));
    assert_eq!(text.lines().filter(|l| l.starts_with("independent,")).count(), 2);
    assert!(text.lines().any(|l| l.starts_with("pan,")));
    assert_eq!(std::fs::read_to_string(&fr).unwrap().lines().count(), 3);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}
