//! Multi-scale Retinex.
//!
//! Each channel is treated as reflectance × illumination. Illumination at
//! scale σ is estimated by Gaussian smoothing, and the raw output averages the
//! log-ratios over all scales:
//!
//! ```text
//! MSR(I) = (1/N) Σ_i [ log(I + ε) − log(G_σi ∗ I + ε) ]
//! ```
//!
//! The unbounded raw output is mapped to `[0, 1]` by a per-channel percentile
//! stretch.

use serde::{Deserialize, Serialize};

use crate::conv::{filter_gaussian, gaussian_plane, PassOrder};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsrConfig {
    pub scales: Vec<f64>,
    /// Added inside both logarithms.
    pub epsilon: f64,
    pub low_percentile: f64,
    pub high_percentile: f64,
}

impl Default for MsrConfig {
    fn default() -> Self {
        Self { scales: vec![15.0, 80.0, 250.0], epsilon: 1.0 / 255.0, low_percentile: 1.0, high_percentile: 99.0 }
    }
}

impl MsrConfig {
    pub fn single_scale(sigma: f64) -> Self {
        Self { scales: vec![sigma], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Parameter("msr.scales must not be empty".into()));
        }
        for (i, &s) in self.scales.iter().enumerate() {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Parameter(format!("msr.scales[{i}] must be positive, got {s}")));
            }
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Parameter(format!("msr.epsilon must be positive, got {}", self.epsilon)));
        }
        let (lo, hi) = (self.low_percentile, self.high_percentile);
        if !(0.0 <= lo && lo < hi && hi <= 100.0) {
            return Err(Error::Parameter(format!("msr percentiles need 0 <= low < high <= 100, got {lo}, {hi}")));
        }
        Ok(())
    }
}

/// Log-domain Retinex output, same shape as the input image.
#[derive(Clone, Debug, PartialEq)]
pub struct MsrRaw<T>(pub Image<T>);

/// Illumination estimate `G_σ ∗ I`, per channel.
pub fn illumination_estimate<T: Scalar>(img: &Image<T>, sigma: f64) -> Result<Image<T>> {
    filter_gaussian(img, sigma)
}

fn check_domain<T: Scalar>(img: &Image<T>) -> Result<()> {
    match img.data().iter().position(|v| !(*v >= T::zero())) {
        Some(i) => Err(Error::Domain(format!("retinex input must be non-negative, sample {i} is {}", img.data()[i]))),
        None => Ok(()),
    }
}

/// `log(I + ε) − log(G_σ ∗ I + ε)` for one `f64` plane.
fn log_ratio_plane(plane: &[f64], h: usize, w: usize, sigma: f64, eps: f64) -> Result<Vec<f64>> {
    let illum = gaussian_plane(plane, h, w, sigma, PassOrder::RowsFirst)?;
    Ok(plane.iter().zip(&illum).map(|(&v, &l)| (v + eps).ln() - (l + eps).ln()).collect())
}

fn planes_f64<T: Scalar>(img: &Image<T>) -> Vec<Vec<f64>> {
    (0..img.channels()).map(|c| img.plane(c).iter().map(|v| v.to_f64_lossy()).collect()).collect()
}

/// Single-scale Retinex log-ratio.
pub fn single_scale_raw<T: Scalar>(img: &Image<T>, sigma: f64, epsilon: f64) -> Result<MsrRaw<T>> {
    MsrConfig { scales: vec![sigma], epsilon, ..MsrConfig::default() }.validate()?;
    check_domain(img)?;
    let (h, w) = (img.height(), img.width());
    let planes = planes_f64(img)
        .iter()
        .map(|p| Ok(log_ratio_plane(p, h, w, sigma, epsilon)?.into_iter().map(T::from_f64_lossy).collect()))
        .collect::<Result<Vec<Vec<T>>>>()?;
    Ok(MsrRaw(Image::from_planes(h, w, planes)?))
}

/// Equal-weight average of single-scale log-ratios over `config.scales`.
pub fn msr_raw<T: Scalar>(img: &Image<T>, config: &MsrConfig) -> Result<MsrRaw<T>> {
    config.validate()?;
    check_domain(img)?;
    let (h, w) = (img.height(), img.width());
    let n = config.scales.len() as f64;
    let mut planes = Vec::with_capacity(img.channels());
    for plane in planes_f64(img) {
        let mut acc = vec![0.0f64; h * w];
        for &sigma in &config.scales {
            let r = log_ratio_plane(&plane, h, w, sigma, config.epsilon)?;
            acc.iter_mut().zip(r).for_each(|(a, r)| *a += r);
        }
        planes.push(acc.into_iter().map(|v| T::from_f64_lossy(v / n)).collect());
    }
    Ok(MsrRaw(Image::from_planes(h, w, planes)?))
}

/// Percentile of sorted data with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Per-channel affine stretch of `[p_low, p_high]` onto `[0, 1]`, clamped.
/// A channel whose percentiles coincide maps to 0.5.
pub fn msr_normalize<T: Scalar>(raw: &MsrRaw<T>, config: &MsrConfig) -> Image<T> {
    let img = &raw.0;
    let mut out = img.clone();
    let half = T::from_f64_lossy(0.5);
    for c in 0..img.channels() {
        let mut sorted: Vec<f64> = img.plane(c).iter().map(|v| v.to_f64_lossy()).collect();
        sorted.sort_by(f64::total_cmp);
        let lo = percentile(&sorted, config.low_percentile);
        let hi = percentile(&sorted, config.high_percentile);
        let dst = out.plane_mut(c);
        if !(hi > lo) {
            dst.fill(half);
            continue;
        }
        let span = hi - lo;
        for v in dst.iter_mut() {
            *v = T::from_f64_lossy(((v.to_f64_lossy() - lo) / span).clamp(0.0, 1.0));
        }
    }
    out
}

/// Raw multi-scale Retinex followed by the percentile stretch.
pub fn msr_enhance<T: Scalar>(img: &Image<T>, config: &MsrConfig) -> Result<Image<T>> {
    Ok(msr_normalize(&msr_raw(img, config)?, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{flip_h, flip_v, rotate90};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, h: usize, w: usize, c: usize, lo: f64) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, c, |_, _, _| lo + (1.0 - lo) * rng.random::<f64>()).unwrap()
    }

    #[test]
    fn uniform_image_has_zero_raw_and_gray_output() {
        let img = Image::<f64>::filled(12, 9, 3, 0.42).unwrap();
        let raw = msr_raw(&img, &MsrConfig::default()).unwrap();
        assert!(raw.0.data().iter().all(|&v| v == 0.0));
        let out = msr_enhance(&img, &MsrConfig::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn illumination_of_uniform_and_near_delta() {
        let img = Image::<f64>::filled(5, 5, 1, 0.3).unwrap();
        assert!(illumination_estimate(&img, 4.0).unwrap().data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        let x = random_image(1, 9, 9, 1, 0.0);
        let y = illumination_estimate(&x, 0.1).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!(illumination_estimate(&x, 0.0).is_err());
    }

    #[test]
    fn single_scale_matches_straight_loops() {
        let img = random_image(2, 5, 5, 1, 0.0);
        let (sigma, eps) = (1.0, 1.0 / 255.0);
        let raw = msr_raw(&img, &MsrConfig { scales: vec![sigma], ..MsrConfig::default() }).unwrap();
        let r = (3.0 * sigma).ceil() as isize;
        let g: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
        let gsum: f64 = g.iter().sum::<f64>().powi(2);
        for y in 0..5isize {
            for x in 0..5isize {
                let mut l = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let v = img.get(0, (y + dy).clamp(0, 4) as usize, (x + dx).clamp(0, 4) as usize);
                        l += g[(dy + r) as usize] * g[(dx + r) as usize] / gsum * v;
                    }
                }
                let expect = ((img.get(0, y as usize, x as usize) + eps) / (l + eps)).ln();
                assert!((raw.0.get(0, y as usize, x as usize) - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn one_scale_reduces_to_single_scale_bit_exactly() {
        let img = random_image(3, 14, 11, 3, 0.0);
        for sigma in [2.0, 15.0, 80.0] {
            let a = msr_raw(&img, &MsrConfig::single_scale(sigma)).unwrap();
            let b = single_scale_raw(&img, sigma, 1.0 / 255.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gain_invariance_with_scaled_epsilon() {
        let img = random_image(4, 16, 16, 3, 0.0);
        let cfg = MsrConfig { scales: vec![2.0, 6.0], ..MsrConfig::default() };
        let base = msr_raw(&img, &cfg).unwrap();
        for k in [0.5, 2.0, 10.0] {
            let scaled = img.map(|v| v * k);
            let cfg_k = MsrConfig { epsilon: cfg.epsilon * k, ..cfg.clone() };
            let out = msr_raw(&scaled, &cfg_k).unwrap();
            for (a, b) in base.0.data().iter().zip(out.0.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gain_invariance_with_fixed_epsilon_for_bright_inputs() {
        // The residual is f(I) − f(L) with f(x) = log((x + ε/k) / (x + ε)) monotone,
        // so it is bounded by |f(min I)|.
        let cfg = MsrConfig { scales: vec![3.0, 9.0], ..MsrConfig::default() };
        let eps = cfg.epsilon;
        let img = random_image(5, 16, 16, 3, 50.0 * eps);
        let min = img.data().iter().copied().fold(f64::INFINITY, f64::min);
        let base = msr_raw(&img, &cfg).unwrap();
        for k in [0.5, 0.8, 1.5, 2.0] {
            let out = msr_raw(&img.map(|v| v * k), &cfg).unwrap();
            let err = base.0.data().iter().zip(out.0.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let bound = ((min + eps / k) / (min + eps)).ln().abs();
            assert!(err <= bound + 1e-12, "k {k}: {err} > {bound}");
            if k >= 1.0 {
                assert!(err < 0.01, "k {k}: {err}");
            }
        }
    }

    #[test]
    fn negative_input_is_domain_error() {
        let img = Image::from_vec(1, 2, 1, vec![0.1, -0.1]).unwrap();
        assert!(matches!(msr_raw(&img, &MsrConfig::default()), Err(Error::Domain(_))));
    }

    #[test]
    fn config_validation() {
        assert!(MsrConfig::default().validate().is_ok());
        assert!(MsrConfig { scales: vec![], ..MsrConfig::default() }.validate().is_err());
        assert!(MsrConfig { scales: vec![-1.0], ..MsrConfig::default() }.validate().is_err());
        assert!(MsrConfig { low_percentile: 50.0, high_percentile: 50.0, ..MsrConfig::default() }.validate().is_err());
    }

    #[test]
    fn normalize_two_value_raw() {
        let raw = MsrRaw(Image::from_vec(1, 4, 1, vec![-1.0, 1.0, -1.0, 1.0]).unwrap());
        let cfg = MsrConfig { low_percentile: 0.0, high_percentile: 100.0, ..MsrConfig::default() };
        assert_eq!(msr_normalize(&raw, &cfg).data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn normalize_saturates_percentile_tails() {
        // 101 distinct values: the 1st and 99th percentiles land on order statistics.
        let raw = MsrRaw(Image::from_vec(1, 101, 1, (0..101).map(|i| (i as f64 * 0.37).sin() + i as f64).collect()).unwrap());
        let out = msr_normalize(&raw, &MsrConfig::default());
        let zeros = out.data().iter().filter(|&&v| v == 0.0).count();
        let ones = out.data().iter().filter(|&&v| v == 1.0).count();
        assert!(zeros * 100 >= 101 && ones * 100 >= 101, "{zeros} {ones}");
    }

    #[test]
    fn percentile_interpolates() {
        let s = [0.0, 10.0, 20.0, 30.0, 40.0];
        assert_eq!(percentile(&s, 0.0), 0.0);
        assert_eq!(percentile(&s, 100.0), 40.0);
        assert_eq!(percentile(&s, 50.0), 20.0);
        assert!((percentile(&s, 10.0) - 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn output_in_unit_range(seed in 0u64..500) {
            let img = random_image(seed, 10, 12, 3, 0.0);
            let out = msr_enhance(&img, &MsrConfig { scales: vec![1.0, 4.0], ..MsrConfig::default() }).unwrap();
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn raw_commutes_with_flips_and_rotations(seed in 0u64..500) {
            let img = random_image(seed, 9, 13, 1, 0.0);
            let cfg = MsrConfig { scales: vec![1.5, 5.0], ..MsrConfig::default() };
            let base = msr_raw(&img, &cfg).unwrap().0;
            let ops: [fn(&Image<f64>) -> Image<f64>; 3] = [flip_h, flip_v, |x| rotate90(x, 1)];
            for op in ops {
                let a = msr_raw(&op(&img), &cfg).unwrap().0;
                let b = op(&base);
                for (p, q) in a.data().iter().zip(b.data()) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }
    }
}
