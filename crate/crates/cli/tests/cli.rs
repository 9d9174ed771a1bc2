//! Behavioral tests of the `dehaze` binary: exit codes, file outputs, and
//! reproducibility.

use dehaze_core::io;
use dehaze_core::metrics::mse_image;
use dehaze_core::net::{predict_transmission, NetworkParams};
use dehaze_core::synth::DatasetManifest;
use dehaze_core::Image;
use dehaze_testkit as tk;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dehaze"))
}

fn write_scene(dir: &Path, name: &str, seed: u64, h: usize, w: usize) -> (PathBuf, PathBuf) {
    let mut rng = tk::rng(seed);
    let img = Image::new(
        h,
        w,
        3,
        tk::textured_scene(&mut rng, h, w)
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect(),
    )
    .unwrap();
    let depth: Vec<f64> = tk::smooth_field(&mut rng, h, w);
    let img_path = dir.join(format!("{name}.png"));
    let depth_path = dir.join(format!("{name}.txt"));
    io::write_image(&img_path, &img).unwrap();
    let mut text = String::new();
    for y in 0..h {
        let row: Vec<String> = (0..w).map(|x| format!("{}", depth[y * w + x])).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    fs::write(&depth_path, text).unwrap();
    (img_path, depth_path)
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn net_method_requires_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _) = write_scene(dir.path(), "x", 1, 24, 24);
    let out = bin()
        .args([
            "dehaze",
            "--image", img.to_str().unwrap(),
            "--method", "net",
            "--out", dir.path().join("out.png").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(
        stderr_of(&out).contains("--checkpoint is required"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn synth_missing_depth_names_path_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    let depths = dir.path().join("depths");
    fs::create_dir_all(&scenes).unwrap();
    fs::create_dir_all(&depths).unwrap();
    // One good pair, one clean image with no depth file.
    let (_, d) = write_scene(&scenes, "good", 2, 24, 24);
    fs::rename(&d, depths.join("good.txt")).unwrap();
    write_scene(&scenes, "bad", 3, 24, 24);
    fs::remove_file(scenes.join("bad.txt")).unwrap();

    let out_dir = dir.path().join("out");
    let out = bin()
        .args([
            "synth",
            "--input", scenes.to_str().unwrap(),
            "--depth", depths.to_str().unwrap(),
            "--out", out_dir.to_str().unwrap(),
            "--patch", "16",
            "--per-image", "2",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("bad.txt"), "stderr: {}", stderr_of(&out));
    // The good input still produced manifest entries.
    let manifest = DatasetManifest::load(&out_dir.join("manifest.txt")).unwrap();
    assert_eq!(manifest.entries.len(), 2);
}

#[test]
fn classical_dehaze_writes_valid_deterministic_output() {
    let dir = tempfile::tempdir().unwrap();
    let (img_path, _) = write_scene(dir.path(), "scene", 4, 32, 32);
    let out_a = dir.path().join("a.png");
    let out_b = dir.path().join("b.png");
    for (out, trans) in [(&out_a, true), (&out_b, false)] {
        let mut cmd = bin();
        cmd.args([
            "dehaze",
            "--image", img_path.to_str().unwrap(),
            "--method", "classical",
            "--out", out.to_str().unwrap(),
        ]);
        if trans {
            cmd.args(["--out-trans", dir.path().join("t.png").to_str().unwrap()]);
        }
        let status = cmd.status().unwrap();
        assert!(status.success());
    }
    let decoded = io::read_image(&out_a).unwrap();
    assert!(decoded.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let t = io::read_transmission(&dir.path().join("t.png")).unwrap();
    assert_eq!((t.height(), t.width()), (32, 32));
    assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());
}

#[test]
fn train_writes_curve_and_reloadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    fs::create_dir_all(&scenes).unwrap();
    for i in 0..2 {
        write_scene(&scenes, &format!("s{i}"), 10 + i as u64, 32, 32);
    }
    let data = dir.path().join("data");
    let status = bin()
        .args([
            "--seed", "5",
            "synth",
            "--input", scenes.to_str().unwrap(),
            "--depth", scenes.to_str().unwrap(),
            "--out", data.to_str().unwrap(),
            "--patch", "16",
            "--per-image", "8",
            "--split", "0.75",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let ckpt = dir.path().join("net.ckpt");
    let curve = dir.path().join("curve.csv");
    let status = bin()
        .args([
            "--seed", "5",
            "train",
            "--manifest", data.join("manifest.txt").to_str().unwrap(),
            "--checkpoint", ckpt.to_str().unwrap(),
            "--curve", curve.to_str().unwrap(),
            "--epochs", "3",
            "--batch", "8",
        ])
        .status()
        .unwrap();
    assert!(status.success());

    // Curve has a header plus one row per epoch.
    let text = fs::read_to_string(&curve).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,train_mse,val_mse");
    assert_eq!(lines.len(), 1 + 3);

    // Reloading the checkpoint reproduces the final val loss.
    let final_val: f64 = lines
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    let params = NetworkParams::load(&ckpt).unwrap();
    let manifest = DatasetManifest::load(&data.join("manifest.txt")).unwrap();
    let mut sum = 0.0;
    let mut count = 0usize;
    for e in manifest.val_entries() {
        let hazy = io::read_image(&e.hazy_path).unwrap();
        let stored = io::read_transmission(&e.trans_path).unwrap();
        let pred = predict_transmission(&hazy, &params).unwrap();
        sum += mse_image(&pred.to_gray_image(), &stored.to_gray_image()).unwrap();
        count += 1;
    }
    let recomputed = sum / count as f64;
    assert!(
        (recomputed - final_val).abs() < 1e-12,
        "recomputed {recomputed} vs curve {final_val}"
    );
}

#[test]
fn eval_ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs");
    fs::create_dir_all(&pairs).unwrap();
    for i in 0..3 {
        let mut rng = tk::rng(40 + i as u64);
        let img = Image::new(
            24,
            24,
            3,
            tk::uniform_vec(&mut rng, 24 * 24 * 3, 0.0, 1.0)
                .into_iter()
                .map(|v| io::dequant16(io::quant16(v)))
                .collect(),
        )
        .unwrap();
        io::write_image(&pairs.join(format!("p{i}_hazy.png")), &img).unwrap();
        io::write_image(&pairs.join(format!("p{i}_gt.png")), &img).unwrap();
    }
    let report = dir.path().join("report.csv");
    let out = bin()
        .args([
            "eval",
            "--pairs", pairs.to_str().unwrap(),
            "--method", "none",
            "--report", report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean ssim: 1.0000"), "stdout: {stdout}");
    assert!(stdout.contains("mean mse: 0.000000"), "stdout: {stdout}");

    let text = fs::read_to_string(&report).unwrap();
    assert_eq!(text.lines().count(), 1 + 3); // header + one row per pair
    for row in text.lines().skip(1) {
        assert!(row.ends_with(",inf"), "psnr sentinel missing: {row}");
    }
}

#[test]
fn eval_runs_both_methods_on_the_same_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = dir.path().join("scenes");
    fs::create_dir_all(&scenes).unwrap();
    for i in 0..2 {
        write_scene(&scenes, &format!("s{i}"), 20 + i as u64, 40, 40);
    }
    let data = dir.path().join("data");
    assert!(bin()
        .args([
            "synth",
            "--input", scenes.to_str().unwrap(),
            "--depth", scenes.to_str().unwrap(),
            "--out", data.to_str().unwrap(),
            "--patch", "24",
            "--per-image", "4",
        ])
        .status()
        .unwrap()
        .success());
    let ckpt = dir.path().join("net.ckpt");
    assert!(bin()
        .args([
            "train",
            "--manifest", data.join("manifest.txt").to_str().unwrap(),
            "--checkpoint", ckpt.to_str().unwrap(),
            "--epochs", "1",
            "--batch", "4",
        ])
        .status()
        .unwrap()
        .success());

    for (method, extra) in [
        ("classical", Vec::<&str>::new()),
        ("net", vec!["--checkpoint", ckpt.to_str().unwrap()]),
    ] {
        let report = dir.path().join(format!("report_{method}.csv"));
        let mut args = vec![
            "eval".to_string(),
            "--pairs".into(),
            data.join("manifest.txt").display().to_string(),
            "--method".into(),
            method.into(),
            "--report".into(),
            report.display().to_string(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        let out = bin().args(&args).output().unwrap();
        assert!(out.status.success(), "{method} eval failed");
        let text = fs::read_to_string(&report).unwrap();
        assert_eq!(text.lines().count(), 1 + 8, "{method} report rows");
    }
}

#[test]
fn bench_rejects_too_few_repeats() {
    let out = bin()
        .args(["bench", "--repeats", "2", "--size", "16x16", "--images", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr_of(&out).contains("3"), "stderr: {}", stderr_of(&out));
}

#[test]
fn eval_empty_pairs_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "eval",
            "--pairs", dir.path().to_str().unwrap(),
            "--method", "none",
            "--report", dir.path().join("r.csv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
