//! Synthetic haze generation: exponential transmission from depth, the
//! optical forward model, patch extraction, and on-disk dataset manifests.

use crate::error::{Error, Result};
use crate::io;
use crate::raster::{Airlight, DepthMap, Image, TransmissionMap};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

/// How the per-image airlight is chosen during synthesis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AirlightSpec {
    /// Same airlight for every image.
    Fixed(Airlight),
    /// Per-image gray airlight drawn uniformly from `[lo, hi]`.
    Jitter { lo: f64, hi: f64 },
}

/// Parameters of the haze generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HazeParams {
    /// Scattering coefficient per depth unit.
    pub beta: f64,
    pub airlight: AirlightSpec,
    pub seed: u64,
}

impl Default for HazeParams {
    fn default() -> Self {
        HazeParams {
            beta: 1.0,
            airlight: AirlightSpec::Fixed(Airlight([0.8, 0.8, 0.8])),
            seed: 0,
        }
    }
}

/// Tr(x) = exp(-beta * d(x)); in (0, 1] for finite nonnegative depth.
pub fn transmission_from_depth(depth: &DepthMap, beta: f64) -> Result<TransmissionMap> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::invalid(format!(
            "beta must be finite and >= 0, got {beta}"
        )));
    }
    let data = depth.data().iter().map(|&d| (-beta * d).exp()).collect();
    TransmissionMap::new(depth.height(), depth.width(), data)
}

/// Optical forward model: I_c = R_c * Tr + A_c * (1 - Tr).
pub fn synthesize_hazy(clean: &Image, tr: &TransmissionMap, air: &Airlight) -> Result<Image> {
    if clean.channels() != 3 {
        return Err(Error::invalid(
            "synthesize_hazy requires a 3-channel clean image",
        ));
    }
    if clean.height() != tr.height() || clean.width() != tr.width() {
        return Err(Error::shape(
            "synthesize_hazy clean vs transmission",
            &[clean.height(), clean.width()],
            &[tr.height(), tr.width()],
        ));
    }
    let (h, w) = (clean.height(), clean.width());
    let mut data = Vec::with_capacity(h * w * 3);
    for y in 0..h {
        for x in 0..w {
            let t = tr.at(y, x);
            for c in 0..3 {
                data.push(clean.at(y, x, c) * t + air.0[c] * (1.0 - t));
            }
        }
    }
    Image::new(h, w, 3, data)
}

/// Uniformly random top-left corners for `count` patches of side `patch`
/// inside an `h` x `w` raster; a given seed always yields the same corners.
pub fn sample_corners(
    h: usize,
    w: usize,
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if patch == 0 || patch > h.min(w) {
        return Err(Error::invalid(format!(
            "patch size {patch} does not fit a {h}x{w} raster"
        )));
    }
    if count == 0 {
        return Err(Error::invalid("patch count must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let y = rng.gen_range(0..=h - patch);
            let x = rng.gen_range(0..=w - patch);
            (y, x)
        })
        .collect())
}

/// Extracts aligned (hazy, transmission) patch pairs at seeded random
/// corners.
pub fn extract_patches(
    hazy: &Image,
    tr: &TransmissionMap,
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(Image, TransmissionMap)>> {
    if hazy.height() != tr.height() || hazy.width() != tr.width() {
        return Err(Error::shape(
            "extract_patches hazy vs transmission",
            &[hazy.height(), hazy.width()],
            &[tr.height(), tr.width()],
        ));
    }
    let corners = sample_corners(hazy.height(), hazy.width(), patch, count, seed)?;
    corners
        .into_iter()
        .map(|(y, x)| {
            Ok((
                hazy.crop(y, x, patch, patch)?,
                tr.crop(y, x, patch, patch)?,
            ))
        })
        .collect()
}

/// Train/validation tag per manifest entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub split: Split,
    pub hazy_path: PathBuf,
    pub trans_path: PathBuf,
    pub airlight: Airlight,
}

/// Index of (hazy patch, transmission patch, airlight) triples on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub patch_size: usize,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn train_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Split::Train)
    }

    pub fn val_entries(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Split::Val)
    }

    /// Serializes as line-oriented text: a header comment carrying the patch
    /// size, then one record per line:
    /// `split hazy_path trans_path A_r A_g A_b`.
    pub fn to_text(&self) -> String {
        let mut out = format!("# dehaze-manifest v1 patch={}\n", self.patch_size);
        for e in &self.entries {
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                e.split,
                e.hazy_path.display(),
                e.trans_path.display(),
                e.airlight.0[0],
                e.airlight.0[1],
                e.airlight.0[2],
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::atomic_write(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut patch_size = None;
        let mut entries = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for tok in rest.split_whitespace() {
                    if let Some(p) = tok.strip_prefix("patch=") {
                        patch_size = Some(p.parse().map_err(|_| {
                            Error::Manifest(format!("bad patch size '{p}' in header"))
                        })?);
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(Error::Manifest(format!(
                    "line {}: expected 6 fields, got {}",
                    line_no + 1,
                    fields.len()
                )));
            }
            let split = match fields[0] {
                "train" => Split::Train,
                "val" => Split::Val,
                other => {
                    return Err(Error::Manifest(format!(
                        "line {}: unknown split '{other}'",
                        line_no + 1
                    )))
                }
            };
            let mut rgb = [0.0f64; 3];
            for (i, v) in rgb.iter_mut().enumerate() {
                *v = fields[3 + i].parse().map_err(|_| {
                    Error::Manifest(format!(
                        "line {}: bad airlight component '{}'",
                        line_no + 1,
                        fields[3 + i]
                    ))
                })?;
            }
            entries.push(ManifestEntry {
                split,
                hazy_path: PathBuf::from(fields[1]),
                trans_path: PathBuf::from(fields[2]),
                airlight: Airlight::new(rgb)?,
            });
        }
        let patch_size =
            patch_size.ok_or_else(|| Error::Manifest("missing patch size header".into()))?;
        Ok(DatasetManifest {
            patch_size,
            entries,
        })
    }
}

/// A per-input failure recorded while building a dataset; the manifest
/// excludes the failed input.
#[derive(Clone, Debug)]
pub struct BuildFailure {
    pub path: PathBuf,
    pub reason: String,
}

fn jittered_airlight(spec: &AirlightSpec, draw: f64) -> Result<Airlight> {
    match spec {
        AirlightSpec::Fixed(a) => Ok(*a),
        AirlightSpec::Jitter { lo, hi } => {
            if !(*lo > 0.0 && lo <= hi && *hi <= 1.0) {
                return Err(Error::invalid(format!(
                    "airlight jitter range must satisfy 0 < lo <= hi <= 1, got [{lo}, {hi}]"
                )));
            }
            Airlight::gray(lo + (hi - lo) * draw)
        }
    }
}

/// Builds a synthetic hazy patch dataset from (clean image, depth map) file
/// pairs.
///
/// Per input: the depth map is normalized to [0, 1], turned into a
/// transmission map via `exp(-beta * d)` and quantized to the 16-bit grid so
/// that stored patches re-synthesize bit-for-bit; the hazy image follows the
/// optical model; `per_image` aligned patch pairs are sampled and written as
/// 16-bit PNGs under `out_dir/patches`. Entries are shuffled once and split
/// `split_ratio : 1 - split_ratio` into train/val. The manifest is written
/// to `out_dir/manifest.txt`. Unreadable inputs become [`BuildFailure`]s;
/// everything else proceeds. The whole construction is a pure function of
/// the inputs and `params.seed`.
pub fn build_manifest(
    inputs: &[(PathBuf, PathBuf)],
    params: &HazeParams,
    patch: usize,
    per_image: usize,
    split_ratio: f64,
    out_dir: &Path,
) -> Result<(DatasetManifest, Vec<BuildFailure>)> {
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::invalid(format!(
            "split ratio must lie in (0, 1), got {split_ratio}"
        )));
    }
    if inputs.is_empty() {
        return Err(Error::invalid("no input image/depth pairs given"));
    }
    let patches_dir = out_dir.join("patches");
    fs::create_dir_all(&patches_dir).map_err(|e| Error::io(&patches_dir, e))?;

    // Derive per-image sub-seeds up front so a failed input does not shift
    // the randomness of later ones.
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let draws: Vec<(u64, f64)> = inputs
        .iter()
        .map(|_| (master.next_u64(), master.gen_range(0.0..1.0)))
        .collect();
    let shuffle_seed = master.next_u64();

    let mut entries = Vec::new();
    let mut failures = Vec::new();

    for (idx, (clean_path, depth_path)) in inputs.iter().enumerate() {
        let (corner_seed, air_draw) = draws[idx];
        let result = (|| -> Result<Vec<ManifestEntry>> {
            let clean = io::read_image(clean_path)?;
            if clean.channels() != 3 {
                return Err(Error::invalid(format!(
                    "{}: clean image must be 3-channel",
                    clean_path.display()
                )));
            }
            let depth = io::read_depth(depth_path)?;
            if depth.height() != clean.height() || depth.width() != clean.width() {
                return Err(Error::shape(
                    "clean image vs depth map",
                    &[clean.height(), clean.width()],
                    &[depth.height(), depth.width()],
                ));
            }
            let air = jittered_airlight(&params.airlight, air_draw)?;
            let tr = transmission_from_depth(&depth.normalized(), params.beta)?;
            // Snap to the 16-bit storage grid before synthesis so that the
            // persisted (hazy, transmission) pair is exactly consistent.
            let tr_q = TransmissionMap::new(
                tr.height(),
                tr.width(),
                tr.data()
                    .iter()
                    .map(|&v| io::dequant16(io::quant16(v)))
                    .collect(),
            )?;
            let hazy = synthesize_hazy(&clean, &tr_q, &air)?;
            let pairs = extract_patches(&hazy, &tr_q, patch, per_image, corner_seed)?;
            let corners = sample_corners(hazy.height(), hazy.width(), patch, per_image, corner_seed)?;

            let mut out = Vec::with_capacity(pairs.len());
            for (p, ((hp, tp), (cy, cx))) in pairs.iter().zip(corners).enumerate() {
                let hazy_path =
                    patches_dir.join(format!("img{idx:03}_p{p:03}_y{cy:04}_x{cx:04}_hazy.png"));
                let trans_path =
                    patches_dir.join(format!("img{idx:03}_p{p:03}_y{cy:04}_x{cx:04}_trans.png"));
                io::write_image(&hazy_path, hp)?;
                io::write_transmission(&trans_path, tp)?;
                out.push(ManifestEntry {
                    split: Split::Train, // assigned below
                    hazy_path,
                    trans_path,
                    airlight: air,
                });
            }
            Ok(out)
        })();
        match result {
            Ok(mut es) => entries.append(&mut es),
            Err(e) => failures.push(BuildFailure {
                path: clean_path.clone(),
                reason: e.to_string(),
            }),
        }
    }

    if !entries.is_empty() {
        // Deterministic shuffled split at the patch level.
        let mut order: Vec<usize> = (0..entries.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let n_train = ((split_ratio * entries.len() as f64).round() as usize)
            .clamp(1, entries.len().saturating_sub(1).max(1));
        for (rank, &i) in order.iter().enumerate() {
            entries[i].split = if rank < n_train {
                Split::Train
            } else {
                Split::Val
            };
        }
    }

    let manifest = DatasetManifest {
        patch_size: patch,
        entries,
    };
    manifest.save(&out_dir.join("manifest.txt"))?;
    Ok((manifest, failures))
}
