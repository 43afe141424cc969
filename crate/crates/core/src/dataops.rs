//! Training data plumbing: synthetic underwater degradation, paired
//! datasets on disk, patch extraction and augmentation.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conv::filter_gaussian;
use crate::error::{Error, Result};
use crate::image::{flip_h, rotate90, to_float, to_u8, Image};
use crate::io::{load_image, save_image};
use crate::resize::resize_bicubic;
use crate::scalar::Scalar;

/// Co-located network inputs (bicubic-upscaled LR) and targets (HR).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch<T> {
    pub inputs: Vec<Image<T>>,
    pub targets: Vec<Image<T>>,
}

impl<T: Scalar> TrainBatch<T> {
    pub fn new(inputs: Vec<Image<T>>, targets: Vec<Image<T>>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!("{} inputs but {} targets", inputs.len(), targets.len())));
        }
        for (i, (x, y)) in inputs.iter().zip(&targets).enumerate() {
            if !x.same_shape(y) {
                return Err(Error::Shape(format!("pair {i}: {:?} vs {:?}", x.shape(), y.shape())));
            }
        }
        Ok(Self { inputs, targets })
    }

    pub fn empty() -> Self {
        Self { inputs: Vec::new(), targets: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn push(&mut self, input: Image<T>, target: Image<T>) -> Result<()> {
        if !input.same_shape(&target) {
            return Err(Error::Shape(format!("{:?} vs {:?}", input.shape(), target.shape())));
        }
        self.inputs.push(input);
        self.targets.push(target);
        Ok(())
    }
}

/// Synthetic underwater forward model: colour absorption, a fog veil, optical
/// blur and sensor downsampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradationConfig {
    pub blur_sigma: f64,
    pub downsample_factor: usize,
    /// Transmission `t` in `x t + A (1 − t)`.
    pub fog_transmission: f64,
    /// Veil colour `A`.
    pub veil_color: [f64; 3],
    /// Per-channel multiplier; red is absorbed most.
    pub channel_attenuation: [f64; 3],
    pub seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            blur_sigma: 1.0,
            downsample_factor: 2,
            fog_transmission: 0.7,
            veil_color: [0.35, 0.55, 0.60],
            channel_attenuation: [0.6, 0.85, 0.9],
            seed: 0,
        }
    }
}

impl DegradationConfig {
    /// The degradation that changes nothing.
    pub fn identity() -> Self {
        Self {
            blur_sigma: 0.0,
            downsample_factor: 1,
            fog_transmission: 1.0,
            veil_color: [0.0; 3],
            channel_attenuation: [1.0; 3],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma >= 0.0) || !self.blur_sigma.is_finite() {
            return Err(Error::Parameter(format!("blur_sigma must be >= 0, got {}", self.blur_sigma)));
        }
        if self.downsample_factor == 0 {
            return Err(Error::Parameter("downsample_factor must be >= 1".into()));
        }
        if !(self.fog_transmission > 0.0 && self.fog_transmission <= 1.0) {
            return Err(Error::Parameter(format!(
                "fog_transmission must be in (0, 1], got {}",
                self.fog_transmission
            )));
        }
        for (c, &a) in self.veil_color.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Parameter(format!("veil_color[{c}] must be in [0, 1], got {a}")));
            }
        }
        for (c, &a) in self.channel_attenuation.iter().enumerate() {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Parameter(format!("channel_attenuation[{c}] must be in (0, 1], got {a}")));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Averages non-overlapping `factor`×`factor` blocks, dropping any remainder.
pub fn box_downsample<T: Scalar>(img: &Image<T>, factor: usize) -> Result<Image<T>> {
    if factor == 0 {
        return Err(Error::Parameter("downsample factor must be >= 1".into()));
    }
    let (oh, ow) = (img.height() / factor, img.width() / factor);
    if oh == 0 || ow == 0 {
        return Err(Error::Shape(format!(
            "{}x{} image is smaller than downsample factor {factor}",
            img.height(),
            img.width()
        )));
    }
    let inv = 1.0 / (factor * factor) as f64;
    Image::from_fn(oh, ow, img.channels(), |c, y, x| {
        let mut acc = 0.0;
        for dy in 0..factor {
            for dx in 0..factor {
                acc += img.get(c, y * factor + dy, x * factor + dx).to_f64_lossy();
            }
        }
        T::from_f64_lossy(acc * inv)
    })
}

/// Applies the forward model. Returns `(degraded, ground_truth)`, where the
/// ground truth is the input cropped to a multiple of the downsample factor.
pub fn degrade<T: Scalar>(img: &Image<T>, config: &DegradationConfig) -> Result<(Image<T>, Image<T>)> {
    config.validate()?;
    if img.channels() != 3 {
        return Err(Error::Shape(format!("degradation needs an RGB image, got {} channels", img.channels())));
    }
    let f = config.downsample_factor;
    let (h, w) = ((img.height() / f) * f, (img.width() / f) * f);
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!("image smaller than downsample factor {f}")));
    }
    let ground_truth = img.crop(0, 0, h, w)?;
    let t = config.fog_transmission;
    let mut veiled = ground_truth.clone();
    for c in 0..3 {
        let (att, veil) = (config.channel_attenuation[c], config.veil_color[c] * (1.0 - t));
        for v in veiled.plane_mut(c) {
            *v = T::from_f64_lossy(att * v.to_f64_lossy() * t + veil);
        }
    }
    let blurred = if config.blur_sigma > 0.0 { filter_gaussian(&veiled, config.blur_sigma)? } else { veiled };
    let degraded = if f > 1 { box_downsample(&blurred, f)? } else { blurred };
    Ok((degraded, ground_truth))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairEntry {
    pub gt: String,
    pub degraded: String,
}

/// Index of a degraded/ground-truth dataset. Paths are relative to the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairManifest {
    pub pairs: Vec<PairEntry>,
    pub config: DegradationConfig,
    pub config_hash: String,
    #[serde(skip)]
    root: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl PairManifest {
    /// Reads a manifest and checks that every path exists and the hash matches.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: PairManifest =
            serde_json::from_str(&text).map_err(|e| Error::format("manifest", e.to_string()))?;
        manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if manifest.config.hash() != manifest.config_hash {
            return Err(Error::format("manifest", "config_hash does not match config"));
        }
        for entry in &manifest.pairs {
            for rel in [&entry.gt, &entry.degraded] {
                let p = manifest.root.join(rel);
                if !p.is_file() {
                    return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
                }
            }
        }
        Ok(manifest)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Loads pair `i` as `(degraded, ground_truth)` float images.
    pub fn load_pair<T: Scalar>(&self, i: usize) -> Result<(Image<T>, Image<T>)> {
        let entry = &self.pairs[i];
        let degraded = to_float(&load_image(self.resolve(&entry.degraded))?);
        let gt = to_float(&load_image(self.resolve(&entry.gt))?);
        Ok((degraded, gt))
    }

    /// Display name of pair `i` (the ground-truth file stem).
    pub fn name(&self, i: usize) -> String {
        Path::new(&self.pairs[i].gt)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "ppm", "pgm", "pnm"];

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Degrades every image in `input_dir`, writing `gt/<stem>.png`,
/// `degraded/<stem>.png` and `manifest.json` under `output_dir`.
/// Grayscale inputs are expanded to RGB.
pub fn make_pairs(input_dir: &Path, output_dir: &Path, config: &DegradationConfig) -> Result<PairManifest> {
    config.validate()?;
    let files = list_images(input_dir)?;
    if files.is_empty() {
        return Err(Error::Empty(format!("no images in {}", input_dir.display())));
    }
    let (gt_dir, deg_dir) = (output_dir.join("gt"), output_dir.join("degraded"));
    for d in [&gt_dir, &deg_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut stems = BTreeSet::new();
    let mut pairs = Vec::with_capacity(files.len());
    for file in &files {
        let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if !stems.insert(stem.clone()) {
            return Err(Error::Parameter(format!("duplicate image name {stem:?} in {}", input_dir.display())));
        }
        let img: Image<f64> = to_float(&load_image(file)?);
        let (degraded, gt) = degrade(&img.gray_to_rgb()?, config)?;
        let (gt_rel, deg_rel) = (format!("gt/{stem}.png"), format!("degraded/{stem}.png"));
        save_image(&to_u8(&gt)?, output_dir.join(&gt_rel))?;
        save_image(&to_u8(&degraded)?, output_dir.join(&deg_rel))?;
        pairs.push(PairEntry { gt: gt_rel, degraded: deg_rel });
    }
    let manifest = PairManifest {
        pairs,
        config: config.clone(),
        config_hash: config.hash(),
        root: output_dir.to_path_buf(),
    };
    let path = output_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Top-left corners of the patch grid, row-major.
pub fn patch_grid(height: usize, width: usize, patch: usize, stride: usize) -> Vec<(usize, usize)> {
    if patch == 0 || stride == 0 || height < patch || width < patch {
        return Vec::new();
    }
    let ys = (0..=height - patch).step_by(stride);
    ys.flat_map(|y| (0..=width - patch).step_by(stride).map(move |x| (y, x))).collect()
}

#[derive(Clone, Debug)]
pub struct PatchExtraction<T> {
    pub batch: TrainBatch<T>,
    /// Images too small for a single patch.
    pub skipped: usize,
}

/// Co-located patches on a regular grid, shuffled by `seed`.
pub fn extract_patches<T: Scalar>(
    lr_upscaled: &Image<T>,
    hr: &Image<T>,
    patch_size: usize,
    stride: usize,
    seed: u64,
) -> Result<PatchExtraction<T>> {
    if !lr_upscaled.same_shape(hr) {
        return Err(Error::Shape(format!("pair shapes differ: {:?} vs {:?}", lr_upscaled.shape(), hr.shape())));
    }
    if patch_size == 0 || stride == 0 {
        return Err(Error::Parameter("patch size and stride must be positive".into()));
    }
    let mut grid = patch_grid(hr.height(), hr.width(), patch_size, stride);
    if grid.is_empty() {
        return Ok(PatchExtraction { batch: TrainBatch::empty(), skipped: 1 });
    }
    grid.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut batch = TrainBatch::empty();
    for (y, x) in grid {
        batch.push(
            lr_upscaled.crop(y, x, patch_size, patch_size)?,
            hr.crop(y, x, patch_size, patch_size)?,
        )?;
    }
    Ok(PatchExtraction { batch, skipped: 0 })
}

/// A random flip/rotation/rescale applied identically to both members of a pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Augmentation {
    pub flip: bool,
    pub quarter_turns: u32,
    pub scale: f64,
}

impl Augmentation {
    pub const SCALES: [f64; 3] = [1.0, 0.9, 0.8];

    pub fn identity() -> Self {
        Self { flip: false, quarter_turns: 0, scale: 1.0 }
    }

    /// Flip with p = 0.5, k·90° with k uniform, scale uniform over [`Self::SCALES`].
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        Self {
            flip: rng.random_bool(0.5),
            quarter_turns: rng.random_range(0..4),
            scale: Self::SCALES[rng.random_range(0..Self::SCALES.len())],
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Flip then rotate.
    pub fn apply_geometric<T: Scalar>(&self, img: &Image<T>) -> Image<T> {
        let flipped = if self.flip { flip_h(img) } else { img.clone() };
        rotate90(&flipped, self.quarter_turns)
    }

    /// Bicubic rescale by `scale`, rounding the target size.
    pub fn apply_scale<T: Scalar>(&self, img: &Image<T>) -> Result<Image<T>> {
        if self.scale == 1.0 {
            return Ok(img.clone());
        }
        let h = ((img.height() as f64 * self.scale).round() as usize).max(1);
        let w = ((img.width() as f64 * self.scale).round() as usize).max(1);
        resize_bicubic(img, h, w)
    }

    pub fn apply<T: Scalar>(&self, img: &Image<T>) -> Result<Image<T>> {
        Ok(self.apply_geometric(&self.apply_scale(img)?))
    }
}

/// Draws one [`Augmentation`] from `seed` and applies it to both members.
pub fn augment<T: Scalar>(lr: &Image<T>, hr: &Image<T>, seed: u64) -> Result<(Image<T>, Image<T>)> {
    if !lr.same_shape(hr) {
        return Err(Error::Shape(format!("pair shapes differ: {:?} vs {:?}", lr.shape(), hr.shape())));
    }
    let aug = Augmentation::sample(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((aug.apply(lr)?, aug.apply(hr)?))
}

/// Procedural colourful test scene: a two-colour gradient overlaid with
/// random ellipses and rectangles, plus fine sinusoidal texture.
pub fn synthetic_scene<T: Scalar>(height: usize, width: usize, seed: u64) -> Result<Image<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let color = |rng: &mut ChaCha8Rng| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    let (top, bottom) = (color(&mut rng), color(&mut rng));
    let (h, w) = (height as f64, width as f64);

    struct Shape {
        ellipse: bool,
        cy: f64,
        cx: f64,
        ry: f64,
        rx: f64,
        color: [f64; 3],
        freq: f64,
        phase: f64,
    }
    let shapes: Vec<Shape> = (0..12)
        .map(|_| Shape {
            ellipse: rng.random_bool(0.5),
            cy: rng.random::<f64>() * h,
            cx: rng.random::<f64>() * w,
            ry: (0.05 + 0.25 * rng.random::<f64>()) * h,
            rx: (0.05 + 0.25 * rng.random::<f64>()) * w,
            color: color(&mut rng),
            freq: 0.3 + 1.2 * rng.random::<f64>(),
            phase: rng.random::<f64>() * std::f64::consts::TAU,
        })
        .collect();

    let mut rgb = vec![[0.0f64; 3]; height * width];
    for y in 0..height {
        let t = y as f64 / (h - 1.0).max(1.0);
        for x in 0..width {
            let mut px: [f64; 3] = std::array::from_fn(|c| top[c] * (1.0 - t) + bottom[c] * t);
            for s in &shapes {
                let (dy, dx) = ((y as f64 - s.cy) / s.ry, (x as f64 - s.cx) / s.rx);
                let inside = if s.ellipse { dy * dy + dx * dx <= 1.0 } else { dy.abs() <= 1.0 && dx.abs() <= 1.0 };
                if inside {
                    let texture = 0.15 * (s.freq * (x as f64 + 0.7 * y as f64) + s.phase).sin();
                    px = std::array::from_fn(|c| s.color[c] + texture);
                }
            }
            rgb[y * width + x] = px;
        }
    }
    Image::from_fn(height, width, 3, |c, y, x| T::from_f64_lossy(rgb[y * width + x][c].clamp(0.0, 1.0)))
}
