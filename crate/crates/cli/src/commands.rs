//! Implementations of the CLI subcommands.

use crate::{BenchMethod, EvalMethod, Method};
use anyhow::{bail, Context, Result};
use dehaze_core::classical::{
    dark_channel, dehaze_classical, estimate_airlight, estimate_transmission, DEFAULT_ETA,
    DEFAULT_FRACTION, DEFAULT_PATCH,
};
use dehaze_core::io;
use dehaze_core::metrics::{bench_time, mse_image, psnr, ssim, MetricReport, MetricRow};
use dehaze_core::net::{dehaze_net, predict_transmission, NetworkParams};
use dehaze_core::nn::SGDConfig;
use dehaze_core::synth::{build_manifest, AirlightSpec, DatasetManifest, HazeParams};
use dehaze_core::{Airlight, Image};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const RASTER_EXTENSIONS: [&str; 4] = ["png", "pgm", "ppm", "bmp"];

fn is_raster(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| RASTER_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn sorted_rasters(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_raster(p))
        .collect();
    files.sort();
    Ok(files)
}

fn parse_airlight(spec: &str) -> Result<AirlightSpec> {
    if spec.eq_ignore_ascii_case("jitter") {
        return Ok(AirlightSpec::Jitter { lo: 0.7, hi: 1.0 });
    }
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        bail!("--airlight expects \"r,g,b\" or \"jitter\", got \"{spec}\"");
    }
    let mut rgb = [0.0f64; 3];
    for (v, p) in rgb.iter_mut().zip(&parts) {
        *v = p
            .trim()
            .parse()
            .with_context(|| format!("bad airlight component \"{p}\""))?;
    }
    Ok(AirlightSpec::Fixed(Airlight::new(rgb)?))
}

/// Locates the depth file for a clean image: same stem in the depth
/// directory with a .txt/.png/.pgm/.ppm extension. Falls back to the .txt
/// candidate so a missing file fails downstream with its path named.
fn depth_candidate(depth_dir: &Path, clean: &Path) -> PathBuf {
    let stem = clean.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    for ext in ["txt", "png", "pgm", "ppm"] {
        let c = depth_dir.join(format!("{stem}.{ext}"));
        if c.exists() {
            return c;
        }
    }
    depth_dir.join(format!("{stem}.txt"))
}

#[allow(clippy::too_many_arguments)]
pub fn synth(
    input: &Path,
    depth: &Path,
    out: &Path,
    beta: f64,
    airlight: &str,
    patch: usize,
    per_image: usize,
    split: f64,
    seed: u64,
    verbose: bool,
) -> Result<ExitCode> {
    let cleans = sorted_rasters(input)?;
    if cleans.is_empty() {
        bail!("no raster images found in {}", input.display());
    }
    let inputs: Vec<(PathBuf, PathBuf)> = cleans
        .into_iter()
        .map(|c| {
            let d = depth_candidate(depth, &c);
            (c, d)
        })
        .collect();
    if verbose {
        for (c, d) in &inputs {
            eprintln!("pair: {} + {}", c.display(), d.display());
        }
    }
    let params = HazeParams {
        beta,
        airlight: parse_airlight(airlight)?,
        seed,
    };
    let (manifest, failures) = build_manifest(&inputs, &params, patch, per_image, split, out)?;
    println!(
        "wrote {} entries ({} train / {} val) to {}",
        manifest.entries.len(),
        manifest.train_entries().count(),
        manifest.val_entries().count(),
        out.join("manifest.txt").display()
    );
    for f in &failures {
        eprintln!("error: {}: {}", f.path.display(), f.reason);
    }
    Ok(if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

pub fn train(
    manifest_path: &Path,
    checkpoint: &Path,
    curve: Option<&Path>,
    epochs: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<ExitCode> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let cfg = SGDConfig::new(lr, batch, epochs, seed)?;
    let (params, report) = dehaze_core::net::train(&manifest, &cfg)?;
    for (e, (t, v)) in report
        .train_loss
        .iter()
        .zip(&report.val_loss)
        .enumerate()
    {
        println!("epoch {}/{} train_mse {t} val_mse {v}", e + 1, epochs);
    }
    println!("trained in {:.1}s", report.wall_secs);
    params.save(checkpoint)?;
    println!("checkpoint: {}", checkpoint.display());
    if let Some(curve_path) = curve {
        let mut csv = String::from("epoch,train_mse,val_mse\n");
        for (e, (t, v)) in report
            .train_loss
            .iter()
            .zip(&report.val_loss)
            .enumerate()
        {
            csv.push_str(&format!("{},{t},{v}\n", e + 1));
        }
        io::atomic_write(curve_path, csv.as_bytes())?;
        println!("curve: {}", curve_path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn load_net(checkpoint: Option<&Path>) -> Result<NetworkParams> {
    let path = checkpoint
        .context("--checkpoint is required with --method net (path to a trained checkpoint)")?;
    Ok(NetworkParams::load(path)?)
}

pub fn dehaze(
    image: &Path,
    method: Method,
    checkpoint: Option<&Path>,
    out: &Path,
    out_trans: Option<&Path>,
) -> Result<ExitCode> {
    let img = io::read_image(image)?;
    let (recovered, tr, _air) = match method {
        Method::Classical => dehaze_classical(&img)?,
        Method::Net => {
            let params = load_net(checkpoint)?;
            dehaze_net(&img, &params)?
        }
    };
    io::write_image(out, &recovered)?;
    println!("recovered: {}", out.display());
    if let Some(tp) = out_trans {
        io::write_transmission(tp, &tr)?;
        println!("transmission: {}", tp.display());
    }
    Ok(ExitCode::SUCCESS)
}

enum PairSource {
    /// (hazy image, ground-truth image) file pairs.
    Files(Vec<(PathBuf, PathBuf)>),
    /// Dataset manifest: predicted transmission scored against the stored
    /// transmission patches.
    Manifest(DatasetManifest),
}

fn resolve_pairs(pairs: &Path) -> Result<PairSource> {
    if pairs.is_dir() {
        let files = sorted_rasters(pairs)?;
        let mut out = Vec::new();
        for f in &files {
            let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if let Some(prefix) = stem.strip_suffix("_hazy") {
                let ext = f.extension().and_then(|e| e.to_str()).unwrap_or("png");
                let gt = f.with_file_name(format!("{prefix}_gt.{ext}"));
                if gt.exists() {
                    out.push((f.clone(), gt));
                }
            }
        }
        if out.is_empty() {
            bail!(
                "no <stem>_hazy / <stem>_gt raster pairs found in {}",
                pairs.display()
            );
        }
        return Ok(PairSource::Files(out));
    }
    let text = fs::read_to_string(pairs)
        .with_context(|| format!("cannot read pairs file {}", pairs.display()))?;
    if text.starts_with("# dehaze-manifest") {
        return Ok(PairSource::Manifest(DatasetManifest::load(pairs)?));
    }
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            bail!(
                "{}:{}: expected \"hazy_path gt_path\"",
                pairs.display(),
                line_no + 1
            );
        }
        out.push((PathBuf::from(fields[0]), PathBuf::from(fields[1])));
    }
    if out.is_empty() {
        bail!("pairs file {} has no entries", pairs.display());
    }
    Ok(PairSource::Files(out))
}

fn score(path: &Path, a: &Image, b: &Image) -> Result<MetricRow> {
    Ok(MetricRow {
        path: path.display().to_string(),
        ssim: ssim(a, b)?,
        mse: mse_image(a, b)?,
        psnr: psnr(a, b)?,
    })
}

pub fn eval(
    pairs: &Path,
    method: EvalMethod,
    checkpoint: Option<&Path>,
    report_path: &Path,
    verbose: bool,
) -> Result<ExitCode> {
    let source = resolve_pairs(pairs)?;
    let net = match method {
        EvalMethod::Net => Some(load_net(checkpoint)?),
        _ => None,
    };
    let mut report = MetricReport::default();

    match source {
        PairSource::Files(list) => {
            for (hazy_path, gt_path) in &list {
                let hazy = io::read_image(hazy_path)?;
                let gt = io::read_image(gt_path)?;
                let output = match method {
                    EvalMethod::None => hazy,
                    EvalMethod::Classical => dehaze_classical(&hazy)?.0,
                    EvalMethod::Net => {
                        dehaze_net(&hazy, net.as_ref().expect("loaded above"))?.0
                    }
                };
                report.push(score(hazy_path, &output, &gt)?);
            }
        }
        PairSource::Manifest(manifest) => {
            if method == EvalMethod::None {
                bail!("--method none needs image pairs, not a dataset manifest");
            }
            if manifest.entries.is_empty() {
                bail!("manifest {} has no entries", pairs.display());
            }
            for entry in &manifest.entries {
                let hazy = io::read_image(&entry.hazy_path)?;
                let stored = io::read_transmission(&entry.trans_path)?;
                let predicted = match method {
                    EvalMethod::Net => {
                        predict_transmission(&hazy, net.as_ref().expect("loaded above"))?
                    }
                    EvalMethod::Classical => {
                        let dark = dark_channel(&hazy, DEFAULT_PATCH)?;
                        let air = estimate_airlight(&hazy, &dark, DEFAULT_FRACTION)?;
                        estimate_transmission(&hazy, &air, DEFAULT_ETA, DEFAULT_PATCH)?
                    }
                    EvalMethod::None => unreachable!(),
                };
                report.push(score(
                    &entry.hazy_path,
                    &predicted.to_gray_image(),
                    &stored.to_gray_image(),
                )?);
            }
        }
    }

    if verbose {
        for r in &report.rows {
            println!("{}  ssim {:.4}  mse {:.6}  psnr {:.4}", r.path, r.ssim, r.mse, r.psnr);
        }
    }
    println!("{}", report.summary());
    io::atomic_write(report_path, report.to_csv().as_bytes())?;
    println!("report: {}", report_path.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_size(size: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = size.split(['x', 'X']).collect();
    if parts.len() != 2 {
        bail!("--size expects WIDTHxHEIGHT, got \"{size}\"");
    }
    let w: usize = parts[0].trim().parse().context("bad width")?;
    let h: usize = parts[1].trim().parse().context("bad height")?;
    if w == 0 || h == 0 {
        bail!("--size must be positive");
    }
    Ok((w, h))
}

fn random_unit_image(seed: u64, h: usize, w: usize) -> Image {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
    Image::new(h, w, 3, data).expect("generated values are in range")
}

pub fn bench(
    method: BenchMethod,
    size: &str,
    repeats: usize,
    images: usize,
    checkpoint: Option<&Path>,
    report: Option<&Path>,
    seed: u64,
) -> Result<ExitCode> {
    let (w, h) = parse_size(size)?;
    if images == 0 {
        bail!("--images must be at least 1");
    }
    let test_images: Vec<Image> = (0..images)
        .map(|i| random_unit_image(seed.wrapping_add(i as u64), h, w))
        .collect();

    let mut lines = vec![format!(
        "timing on {w}x{h}x3, {} image(s), {repeats} repeats (mean +/- stddev seconds per image)",
        images
    )];

    let run_classical = matches!(method, BenchMethod::Classical | BenchMethod::Both);
    let run_net = matches!(method, BenchMethod::Net | BenchMethod::Both);

    if run_classical {
        let stats = bench_time(
            |img| dehaze_classical(img).map(drop),
            &test_images,
            repeats,
        )?;
        for (i, s) in stats.iter().enumerate() {
            lines.push(format!(
                "classical  image {i}: {:.6} +/- {:.6}",
                s.mean_secs, s.stddev_secs
            ));
        }
    }
    if run_net {
        let params = match checkpoint {
            Some(p) => NetworkParams::load(p)?,
            // Untrained weights: output quality is meaningless, timing is not.
            None => NetworkParams::init(seed),
        };
        let stats = bench_time(
            |img| dehaze_net(img, &params).map(drop),
            &test_images,
            repeats,
        )?;
        for (i, s) in stats.iter().enumerate() {
            lines.push(format!(
                "net        image {i}: {:.6} +/- {:.6}",
                s.mean_secs, s.stddev_secs
            ));
        }
    }

    let text = lines.join("\n") + "\n";
    print!("{text}");
    if let Some(rp) = report {
        io::atomic_write(rp, text.as_bytes())?;
        println!("report: {}", rp.display());
    }
    Ok(ExitCode::SUCCESS)
}
