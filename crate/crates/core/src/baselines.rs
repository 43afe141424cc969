//! Classical enhancement baselines: global histogram equalization, CLAHE and
//! single-scale Retinex.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{rgb_to_luma, Image};
use crate::msr::{msr_enhance, MsrConfig};
use crate::scalar::Scalar;

pub const HE_BINS: usize = 256;
pub const DEFAULT_SSR_SIGMA: f64 = 80.0;

/// Rounds to the nearest of 256 output levels `k / 255`.
#[inline]
pub fn quantize_level(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Histogram bin of a sample in `[0, 1]`.
#[inline]
pub fn bin_index(v: f64, bins: usize) -> usize {
    ((v.clamp(0.0, 1.0) * bins as f64).floor() as usize).min(bins - 1)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMode {
    /// Equalize luma and scale RGB by the per-pixel luma gain.
    #[default]
    Luma,
    /// Equalize each channel independently (shifts hue).
    PerChannel,
}

fn histogram(values: impl Iterator<Item = f64>, bins: usize) -> Vec<u64> {
    let mut hist = vec![0u64; bins];
    for v in values {
        hist[bin_index(v, bins)] += 1;
    }
    hist
}

/// Replaces luma by `new_luma`, scaling each pixel's RGB by `Y' / Y`. A pixel
/// pushed past 1 is desaturated toward white at constant luma instead of
/// being clipped per channel. Black pixels become gray at `Y'`.
fn apply_luma_gain<T: Scalar>(img: &Image<T>, luma: &[f64], new_luma: &[f64]) -> Image<T> {
    let mut out = img.clone();
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let mut rgb = vec![[0.0f64; 3]; img.plane_len()];
    for (i, px) in rgb.iter_mut().enumerate() {
        let (y, y2) = (luma[i], new_luma[i]);
        let c = [r[i], g[i], b[i]].map(|v| v.to_f64_lossy());
        *px = if y > 0.0 { c.map(|v| v * (y2 / y)) } else { [y2; 3] };
        let peak = px.iter().copied().fold(f64::MIN, f64::max);
        if peak > 1.0 {
            let t = (1.0 - y2) / (peak - y2);
            *px = px.map(|v| y2 + t * (v - y2));
        }
    }
    for c in 0..3 {
        for (v, px) in out.plane_mut(c).iter_mut().zip(&rgb) {
            *v = T::from_f64_lossy(px[c].clamp(0.0, 1.0));
        }
    }
    out
}

fn luma_plane<T: Scalar>(img: &Image<T>) -> Vec<f64> {
    if img.channels() == 1 {
        img.plane(0).iter().map(|v| v.to_f64_lossy()).collect()
    } else {
        rgb_to_luma(img).expect("3 channels").plane(0).iter().map(|v| v.to_f64_lossy()).collect()
    }
}

/// Replaces the single channel, or the luma of an RGB image, by `mapped`.
fn write_back<T: Scalar>(img: &Image<T>, luma: &[f64], mapped: Vec<f64>) -> Image<T> {
    if img.channels() == 1 {
        let data = mapped.into_iter().map(T::from_f64_lossy).collect();
        Image::from_vec(img.height(), img.width(), 1, data).expect("same shape")
    } else {
        apply_luma_gain(img, luma, &mapped)
    }
}

/// Output levels `ceil(255 (cdf − cdf_min) / (total − cdf_min)) / 255`, in
/// exact integer arithmetic. Only the lowest occupied bin maps to 0, so a
/// second pass sees the same histogram and reproduces the same levels.
fn he_levels(hist: &[u64]) -> Option<Vec<f64>> {
    let total: u64 = hist.iter().sum();
    let cdf_min = hist.iter().copied().find(|&h| h > 0)?;
    if total == cdf_min {
        return None;
    }
    let denom = total - cdf_min;
    let mut run = 0u64;
    Some(
        hist.iter()
            .map(|&h| {
                run += h;
                let num = 255 * run.saturating_sub(cdf_min);
                num.div_ceil(denom) as f64 / 255.0
            })
            .collect(),
    )
}

/// Global 256-bin histogram equalization in luma mode, with output on the
/// 256 levels `k / 255`.
pub fn hist_equalize<T: Scalar>(img: &Image<T>) -> Image<T> {
    hist_equalize_with(img, ColorMode::Luma)
}

pub fn hist_equalize_with<T: Scalar>(img: &Image<T>, mode: ColorMode) -> Image<T> {
    let equalize = |plane: &[f64]| -> Option<Vec<f64>> {
        let lut = he_levels(&histogram(plane.iter().copied(), HE_BINS))?;
        Some(plane.iter().map(|&v| lut[bin_index(v, HE_BINS)]).collect())
    };
    if mode == ColorMode::PerChannel && img.channels() > 1 {
        let mut out = img.clone();
        for c in 0..img.channels() {
            let plane: Vec<f64> = img.plane(c).iter().map(|v| v.to_f64_lossy()).collect();
            if let Some(mapped) = equalize(&plane) {
                out.plane_mut(c).iter_mut().zip(mapped).for_each(|(d, m)| *d = T::from_f64_lossy(m));
            }
        }
        return out;
    }
    let luma = luma_plane(img);
    match equalize(&luma) {
        Some(mapped) => write_back(img, &luma, mapped),
        None => img.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaheConfig {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Bin ceiling as a multiple of the mean bin height.
    pub clip_limit: f64,
    pub bins: usize,
    pub color_mode: ColorMode,
}

impl Default for ClaheConfig {
    fn default() -> Self {
        Self { tiles_x: 8, tiles_y: 8, clip_limit: 2.0, bins: 256, color_mode: ColorMode::Luma }
    }
}

impl ClaheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tiles_x == 0 || self.tiles_y == 0 {
            return Err(Error::Parameter(format!("clahe tiles must be >= 1, got {}x{}", self.tiles_x, self.tiles_y)));
        }
        if !(self.clip_limit >= 1.0) {
            return Err(Error::Parameter(format!("clahe.clip_limit must be >= 1, got {}", self.clip_limit)));
        }
        if self.bins < 2 {
            return Err(Error::Parameter(format!("clahe.bins must be >= 2, got {}", self.bins)));
        }
        Ok(())
    }
}

/// Tile boundaries `floor(t·len / tiles)` for `t = 0..=tiles`.
fn tile_bounds(len: usize, tiles: usize) -> Vec<usize> {
    (0..=tiles).map(|t| t * len / tiles).collect()
}

/// Clipped, redistributed tile histogram turned into a level table. Excess
/// above the ceiling is spread as `floor(excess / bins)` per bin; the
/// remainder is dropped. A tile with a single occupied bin maps identically.
fn tile_lut(hist: &mut [u64], count: usize, config: &ClaheConfig) -> Vec<f64> {
    let bins = hist.len();
    let ceiling = ((config.clip_limit * count as f64 / bins as f64).floor() as u64).max(1);
    let mut excess = 0u64;
    for h in hist.iter_mut() {
        if *h > ceiling {
            excess += *h - ceiling;
            *h = ceiling;
        }
    }
    let share = excess / bins as u64;
    hist.iter_mut().for_each(|h| *h += share);
    he_levels(hist).unwrap_or_else(|| (0..bins).map(|b| (b as f64 + 0.5) / bins as f64).collect())
}

/// Interpolation cell along one axis: the two neighbouring tile indices and
/// the weight of the second.
fn blend_axis(pos: usize, centers: &[f64]) -> (usize, usize, f64) {
    let p = pos as f64;
    let last = centers.len() - 1;
    if p <= centers[0] {
        return (0, 0, 0.0);
    }
    if p >= centers[last] {
        return (last, last, 0.0);
    }
    let t = centers.windows(2).position(|w| p >= w[0] && p < w[1]).expect("inside centers");
    (t, t + 1, (p - centers[t]) / (centers[t + 1] - centers[t]))
}

/// Contrast-limited adaptive histogram equalization. Blended values are
/// rounded to the levels `k / 255`.
pub fn clahe<T: Scalar>(img: &Image<T>, config: &ClaheConfig) -> Result<Image<T>> {
    config.validate()?;
    let (h, w) = (img.height(), img.width());
    if w < config.tiles_x || h < config.tiles_y {
        return Err(Error::Parameter(format!(
            "image {h}x{w} is smaller than the {}x{} tile grid",
            config.tiles_y, config.tiles_x
        )));
    }
    if config.color_mode == ColorMode::PerChannel && img.channels() > 1 {
        let mut out = img.clone();
        for c in 0..img.channels() {
            let plane: Vec<f64> = img.plane(c).iter().map(|v| v.to_f64_lossy()).collect();
            let mapped = clahe_plane(&plane, h, w, config);
            out.plane_mut(c).iter_mut().zip(mapped).for_each(|(d, m)| *d = T::from_f64_lossy(m));
        }
        return Ok(out);
    }
    let luma = luma_plane(img);
    let mapped = clahe_plane(&luma, h, w, config);
    Ok(write_back(img, &luma, mapped))
}

fn clahe_plane(plane: &[f64], h: usize, w: usize, config: &ClaheConfig) -> Vec<f64> {
    let bins = config.bins;
    let ys = tile_bounds(h, config.tiles_y);
    let xs = tile_bounds(w, config.tiles_x);
    let mut luts = Vec::with_capacity(config.tiles_x * config.tiles_y);
    for ty in 0..config.tiles_y {
        for tx in 0..config.tiles_x {
            let values = (ys[ty]..ys[ty + 1]).flat_map(|y| (xs[tx]..xs[tx + 1]).map(move |x| plane[y * w + x]));
            let mut hist = histogram(values, bins);
            let count = (ys[ty + 1] - ys[ty]) * (xs[tx + 1] - xs[tx]);
            luts.push(tile_lut(&mut hist, count, config));
        }
    }
    let center = |b: &[usize], t: usize| (b[t] + b[t + 1]) as f64 / 2.0 - 0.5;
    let cy: Vec<f64> = (0..config.tiles_y).map(|t| center(&ys, t)).collect();
    let cx: Vec<f64> = (0..config.tiles_x).map(|t| center(&xs, t)).collect();
    let col_cells: Vec<_> = (0..w).map(|x| blend_axis(x, &cx)).collect();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let (t0, t1, wy) = blend_axis(y, &cy);
        for (x, &(u0, u1, wx)) in col_cells.iter().enumerate() {
            let b = bin_index(plane[y * w + x], bins);
            let m = |ty: usize, tx: usize| luts[ty * config.tiles_x + tx][b];
            let top = (1.0 - wx) * m(t0, u0) + wx * m(t0, u1);
            let bottom = (1.0 - wx) * m(t1, u0) + wx * m(t1, u1);
            out.push(quantize_level((1.0 - wy) * top + wy * bottom));
        }
    }
    out
}

/// Single-scale Retinex with the default percentile stretch.
pub fn ssr<T: Scalar>(img: &Image<T>, sigma: f64) -> Result<Image<T>> {
    msr_enhance(img, &MsrConfig::single_scale(sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_gray(seed: u64, h: usize, w: usize) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, 1, |_, _, _| rng.random::<f64>()).unwrap()
    }

    fn unlimited(tiles: usize) -> ClaheConfig {
        ClaheConfig { tiles_x: tiles, tiles_y: tiles, clip_limit: 256.0, ..ClaheConfig::default() }
    }

    #[test]
    fn two_level_image() {
        let img = Image::from_vec(2, 2, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(hist_equalize(&img).data(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn constant_image_is_unchanged() {
        let img = Image::<f64>::filled(5, 4, 3, 0.37).unwrap();
        assert_eq!(hist_equalize(&img), img);
        let gray = Image::<f64>::filled(16, 16, 1, 0.37).unwrap();
        // Degenerate tiles map identically: value stays in its bin.
        let out = clahe(&gray, &ClaheConfig { tiles_x: 2, tiles_y: 2, ..ClaheConfig::default() }).unwrap();
        assert!(out.data().iter().all(|&v| bin_index(v, 256) == bin_index(0.37, 256)));
    }

    #[test]
    fn he_matches_straight_loop() {
        let img = random_gray(1, 9, 7);
        let out = hist_equalize(&img);
        let n = img.data().len();
        let bins: Vec<usize> = img.data().iter().map(|&v| ((v * 256.0).floor() as usize).min(255)).collect();
        let cdf = |b: usize| bins.iter().filter(|&&x| x <= b).count();
        let cdf_min = (0..256).map(cdf).find(|&c| c > 0).unwrap();
        for (i, &b) in bins.iter().enumerate() {
            let expect = (cdf(b) - cdf_min) as f64 / (n - cdf_min) as f64;
            assert!((out.data()[i] - (expect * 255.0 - 1e-9).ceil() / 255.0).abs() < 1e-15);
        }
    }

    #[test]
    fn he_flattens_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = Image::<f64>::from_fn(32, 32, 1, |_, _, _| rng.random::<f64>().powi(3)).unwrap();
        let flatness = |im: &Image<f64>| {
            let h = histogram(im.data().iter().copied(), 16);
            let n = im.data().len() as f64;
            h.iter().map(|&c| (c as f64 / n - 1.0 / 16.0).abs()).fold(0.0, f64::max)
        };
        assert!(flatness(&hist_equalize(&img)) <= flatness(&img));
    }

    #[test]
    fn luma_mode_preserves_chromaticity_and_luma() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Image::<f64>::from_fn(8, 8, 3, |c, _, _| 0.1 + 0.5 * rng.random::<f64>() + 0.1 * c as f64).unwrap();
        let out = hist_equalize(&img);
        let (y_in, y_out) = (luma_plane(&img), luma_plane(&out));
        let target = he_levels(&histogram(y_in.iter().copied(), HE_BINS)).unwrap();
        let mut unsaturated = 0;
        for i in 0..64 {
            assert!((y_out[i] - target[bin_index(y_in[i], HE_BINS)]).abs() < 1e-12);
            let px: Vec<f64> = (0..3).map(|c| out.plane(c)[i]).collect();
            if px.iter().all(|&v| v < 1.0 - 1e-9) && y_out[i] > 0.0 {
                unsaturated += 1;
                let (r, g) = (img.plane(0)[i], img.plane(1)[i]);
                assert!((r / g - px[0] / px[1]).abs() < 1e-9);
            }
        }
        assert!(unsaturated > 10);
        let per = hist_equalize_with(&img, ColorMode::PerChannel);
        assert_ne!(per, out);
    }

    #[test]
    fn clahe_single_tile_unlimited_equals_he() {
        for seed in 0..10 {
            let img = random_gray(seed, 20, 17);
            let a = clahe(&img, &unlimited(1)).unwrap();
            assert_eq!(a, hist_equalize(&img));
        }
    }

    /// Straight-loop CLAHE for a 16×16 image with two tiles side by side.
    fn reference_two_tiles(img: &Image<f64>, clip_limit: f64) -> Vec<f64> {
        let bin = |v: f64| ((v * 256.0).floor() as usize).min(255);
        let mut luts = Vec::new();
        for tx in 0..2 {
            let mut hist = [0u64; 256];
            for y in 0..16 {
                for x in 8 * tx..8 * tx + 8 {
                    hist[bin(img.get(0, y, x))] += 1;
                }
            }
            let ceiling = ((clip_limit * 128.0 / 256.0).floor() as u64).max(1);
            let mut excess = 0;
            for h in hist.iter_mut() {
                if *h > ceiling {
                    excess += *h - ceiling;
                    *h = ceiling;
                }
            }
            for h in hist.iter_mut() {
                *h += excess / 256;
            }
            let total: u64 = hist.iter().sum();
            let mut lut = [0.0; 256];
            let mut run = 0;
            let mut cdf_min = None;
            for b in 0..256 {
                run += hist[b];
                if cdf_min.is_none() && run > 0 {
                    cdf_min = Some(run);
                }
                let m = cdf_min.unwrap_or(0);
                let (num, den) = (255 * (run - m.min(run)), total - m);
                lut[b] = ((num + den - 1) / den) as f64 / 255.0;
            }
            luts.push(lut);
        }
        // Tile centers at x = 3.5 and 11.5.
        let mut out = Vec::new();
        for y in 0..16 {
            for x in 0..16 {
                let b = bin(img.get(0, y, x));
                let xf = x as f64;
                let v = if xf <= 3.5 {
                    luts[0][b]
                } else if xf >= 11.5 {
                    luts[1][b]
                } else {
                    let wx = (xf - 3.5) / 8.0;
                    (1.0 - wx) * luts[0][b] + wx * luts[1][b]
                };
                out.push((v * 255.0).round() / 255.0);
            }
        }
        out
    }

    #[test]
    fn clahe_matches_two_tile_reference() {
        for (seed, clip) in [(0, 2.0), (1, 4.0), (2, 256.0)] {
            let img = random_gray(seed, 16, 16);
            let cfg = ClaheConfig { tiles_x: 2, tiles_y: 1, clip_limit: clip, ..ClaheConfig::default() };
            let out = clahe(&img, &cfg).unwrap();
            assert_eq!(out.data(), reference_two_tiles(&img, clip).as_slice(), "seed {seed}");
        }
    }

    #[test]
    fn clahe_rejects_small_images_and_bad_config() {
        let img = random_gray(0, 4, 4);
        assert!(clahe(&img, &ClaheConfig::default()).is_err());
        let bad = ClaheConfig { clip_limit: 0.5, ..ClaheConfig::default() };
        assert!(clahe(&random_gray(0, 16, 16), &bad).is_err());
    }

    #[test]
    fn clahe_output_in_range_and_uniform_input() {
        let img = Image::<f64>::filled(16, 16, 3, 0.5).unwrap();
        let out = clahe(&img, &ClaheConfig { tiles_x: 4, tiles_y: 4, ..ClaheConfig::default() }).unwrap();
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let gray = ssr(&img, DEFAULT_SSR_SIGMA).unwrap();
        assert!(gray.data().iter().all(|&v| v == 0.5));
    }

    proptest! {
        #[test]
        fn he_is_idempotent(seed in 0u64..1000, h in 2usize..20, w in 2usize..20, c in prop::sample::select(vec![1usize, 3])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = Image::<f64>::from_fn(h, w, c, |_, _, _| rng.random::<f64>()).unwrap();
            let once = hist_equalize(&img);
            let twice = hist_equalize(&once);
            for (a, b) in once.data().iter().zip(twice.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 255.0 + 1e-9);
            }
        }
    }
}
