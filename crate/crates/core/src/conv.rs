//! Multi-channel "same" convolution, ReLU and separable Gaussian filtering.
//!
//! Convolution is cross-correlation (no kernel flip). Every inner product is
//! accumulated in `f64` in a fixed order: bias, then input channel, kernel row,
//! kernel column.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Border policy for samples outside the image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    Zero,
    #[default]
    Replicate,
}

/// Convolution weights indexed `[c_out][c_in][k_h][k_w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D<T> {
    c_out: usize,
    c_in: usize,
    k_h: usize,
    k_w: usize,
    weights: Vec<T>,
}

impl<T: Scalar> Kernel2D<T> {
    pub fn new(c_out: usize, c_in: usize, k_h: usize, k_w: usize, weights: Vec<T>) -> Result<Self> {
        if k_h % 2 == 0 || k_w % 2 == 0 {
            return Err(Error::Shape(format!("kernel size must be odd, got {k_h}x{k_w}")));
        }
        if c_out == 0 || c_in == 0 {
            return Err(Error::Shape("kernel channel counts must be positive".into()));
        }
        if weights.len() != c_out * c_in * k_h * k_w {
            return Err(Error::Shape(format!(
                "kernel has {} weights, expected {c_out}x{c_in}x{k_h}x{k_w}",
                weights.len()
            )));
        }
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::Numeric("kernel weights must be finite".into()));
        }
        Ok(Self { c_out, c_in, k_h, k_w, weights })
    }

    /// Skips validation; for gradient tensors, which may be non-finite.
    pub(crate) fn from_raw(c_out: usize, c_in: usize, k_h: usize, k_w: usize, weights: Vec<T>) -> Self {
        debug_assert_eq!(weights.len(), c_out * c_in * k_h * k_w);
        Self { c_out, c_in, k_h, k_w, weights }
    }

    pub fn zeros(c_out: usize, c_in: usize, k_h: usize, k_w: usize) -> Result<Self> {
        Self::new(c_out, c_in, k_h, k_w, vec![T::zero(); c_out * c_in * k_h * k_w])
    }

    /// Per-channel pass-through kernel of size `k`×`k`.
    pub fn identity(channels: usize, k: usize) -> Result<Self> {
        let mut kernel = Self::zeros(channels, channels, k, k)?;
        for c in 0..channels {
            kernel.set(c, c, k / 2, k / 2, T::one());
        }
        Ok(kernel)
    }

    #[inline]
    pub fn c_out(&self) -> usize {
        self.c_out
    }
    #[inline]
    pub fn c_in(&self) -> usize {
        self.c_in
    }
    #[inline]
    pub fn k_h(&self) -> usize {
        self.k_h
    }
    #[inline]
    pub fn k_w(&self) -> usize {
        self.k_w
    }
    #[inline]
    pub fn weights(&self) -> &[T] {
        &self.weights
    }
    #[inline]
    pub fn weights_mut(&mut self) -> &mut [T] {
        &mut self.weights
    }

    #[inline]
    pub fn index(&self, o: usize, c: usize, i: usize, j: usize) -> usize {
        ((o * self.c_in + c) * self.k_h + i) * self.k_w + j
    }

    #[inline]
    pub fn get(&self, o: usize, c: usize, i: usize, j: usize) -> T {
        self.weights[self.index(o, c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, o: usize, c: usize, i: usize, j: usize, v: T) {
        let k = self.index(o, c, i, j);
        self.weights[k] = v;
    }
}

/// One bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BiasVec<T>(pub Vec<T>);

impl<T: Scalar> BiasVec<T> {
    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Copies a plane into an `f64` buffer with `ry` rows and `rx` columns of
/// border on each side.
pub(crate) fn pad_plane<T: Scalar>(
    src: &[T],
    h: usize,
    w: usize,
    ry: usize,
    rx: usize,
    mode: PaddingMode,
) -> Vec<f64> {
    let (ph, pw) = (h + 2 * ry, w + 2 * rx);
    let mut out = vec![0.0f64; ph * pw];
    for py in 0..ph {
        let sy = py as isize - ry as isize;
        let sy = match mode {
            PaddingMode::Zero if sy < 0 || sy >= h as isize => continue,
            _ => sy.clamp(0, h as isize - 1) as usize,
        };
        let row = &src[sy * w..(sy + 1) * w];
        let dst = &mut out[py * pw..(py + 1) * pw];
        for (px, d) in dst.iter_mut().enumerate() {
            let sx = px as isize - rx as isize;
            *d = match mode {
                PaddingMode::Zero if sx < 0 || sx >= w as isize => 0.0,
                _ => row[sx.clamp(0, w as isize - 1) as usize].to_f64_lossy(),
            };
        }
    }
    out
}

/// Same-size convolution over `f64` planes; returns one `f64` plane per output channel.
pub(crate) fn conv_planes<T: Scalar>(
    inputs: &[Vec<f64>],
    h: usize,
    w: usize,
    kernel: &Kernel2D<T>,
    bias: &BiasVec<T>,
    pad: PaddingMode,
) -> Vec<Vec<f64>> {
    let (ry, rx) = (kernel.k_h / 2, kernel.k_w / 2);
    let pw = w + 2 * rx;
    let padded: Vec<Vec<f64>> = inputs.iter().map(|p| pad_plane(p, h, w, ry, rx, pad)).collect();
    (0..kernel.c_out)
        .map(|o| {
            let mut acc = vec![bias.0[o].to_f64_lossy(); h * w];
            for (c, src) in padded.iter().enumerate() {
                for i in 0..kernel.k_h {
                    for j in 0..kernel.k_w {
                        let wgt = kernel.get(o, c, i, j).to_f64_lossy();
                        for y in 0..h {
                            let s = &src[(y + i) * pw + j..(y + i) * pw + j + w];
                            let d = &mut acc[y * w..(y + 1) * w];
                            for (d, s) in d.iter_mut().zip(s) {
                                *d += wgt * s;
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect()
}

fn check_conv_shapes<T: Scalar>(channels: usize, kernel: &Kernel2D<T>, bias: &BiasVec<T>) -> Result<()> {
    if channels != kernel.c_in {
        return Err(Error::Shape(format!(
            "image has {channels} channels but kernel expects {}",
            kernel.c_in
        )));
    }
    if bias.len() != kernel.c_out {
        return Err(Error::Shape(format!(
            "bias has {} entries but kernel has {} outputs",
            bias.len(),
            kernel.c_out
        )));
    }
    Ok(())
}

/// Same-size multi-channel convolution with bias.
///
/// The output has `kernel.c_out()` channels. Because [`Image`] only carries
/// 1 or 3 channels, hidden feature maps with other widths use
/// [`FeatureMap`] and [`conv2d_features`] instead.
pub fn conv2d<T: Scalar>(
    img: &Image<T>,
    kernel: &Kernel2D<T>,
    bias: &BiasVec<T>,
    pad: PaddingMode,
) -> Result<Image<T>> {
    check_conv_shapes(img.channels(), kernel, bias)?;
    let fm = FeatureMap::from_image(img);
    let out = conv2d_features(&fm, kernel, bias, pad)?;
    out.to_image()
}

/// Stack of `f64` planes with an arbitrary channel count.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub planes: Vec<Vec<f64>>,
}

impl FeatureMap {
    pub fn from_image<T: Scalar>(img: &Image<T>) -> Self {
        Self {
            height: img.height(),
            width: img.width(),
            planes: (0..img.channels())
                .map(|c| img.plane(c).iter().map(|v| v.to_f64_lossy()).collect())
                .collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn to_image<T: Scalar>(&self) -> Result<Image<T>> {
        Image::from_planes(
            self.height,
            self.width,
            self.planes
                .iter()
                .map(|p| p.iter().map(|&v| T::from_f64_lossy(v)).collect())
                .collect(),
        )
    }

    pub fn relu(mut self) -> Self {
        for p in &mut self.planes {
            for v in p.iter_mut() {
                *v = v.max(0.0);
            }
        }
        self
    }
}

pub fn conv2d_features<T: Scalar>(
    input: &FeatureMap,
    kernel: &Kernel2D<T>,
    bias: &BiasVec<T>,
    pad: PaddingMode,
) -> Result<FeatureMap> {
    check_conv_shapes(input.channels(), kernel, bias)?;
    Ok(FeatureMap {
        height: input.height,
        width: input.width,
        planes: conv_planes(&input.planes, input.height, input.width, kernel, bias, pad),
    })
}

/// `max(v, 0)` per sample.
pub fn relu<T: Scalar>(img: &Image<T>) -> Image<T> {
    img.map(|v| v.max(T::zero()))
}

/// Normalized Gaussian taps at offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel_1d(sigma: f64) -> Result<Vec<f64>> {
    gaussian_kernel_1d_capped(sigma, usize::MAX)
}

/// As [`gaussian_kernel_1d`] with the radius limited to `max_radius`.
pub fn gaussian_kernel_1d_capped(sigma: f64, max_radius: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("gaussian sigma must be positive and finite, got {sigma}")));
    }
    let r = ((3.0 * sigma).ceil() as usize).min(max_radius);
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (0..=2 * r)
        .map(|k| {
            let d = k as f64 - r as f64;
            (-d * d / denom).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    Ok(taps)
}

fn filter_rows(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = taps.len() / 2;
    let mut out = vec![0.0; h * w];
    let mut padded = vec![0.0; w + 2 * r];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (p, v) in padded.iter_mut().enumerate() {
            *v = row[(p as isize - r as isize).clamp(0, w as isize - 1) as usize];
        }
        for x in 0..w {
            out[y * w + x] = taps.iter().zip(&padded[x..x + taps.len()]).map(|(t, v)| t * v).sum();
        }
    }
    out
}

fn filter_cols(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = taps.len() / 2;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        for (k, &t) in taps.iter().enumerate() {
            let sy = (y as isize + k as isize - r as isize).clamp(0, h as isize - 1) as usize;
            for (d, s) in dst.iter_mut().zip(&src[sy * w..(sy + 1) * w]) {
                *d += t * s;
            }
        }
    }
    out
}

/// Which separable pass runs first; the results agree to rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassOrder {
    RowsFirst,
    ColumnsFirst,
}

/// Gaussian blur of one `f64` plane with replicate borders.
/// The radius is capped at `max(h, w)`.
pub fn gaussian_plane(src: &[f64], h: usize, w: usize, sigma: f64, order: PassOrder) -> Result<Vec<f64>> {
    let taps = gaussian_kernel_1d_capped(sigma, h.max(w))?;
    // Filtering deviations from the first sample keeps constant planes exact.
    let base = src.first().copied().unwrap_or(0.0);
    let dev: Vec<f64> = src.iter().map(|v| v - base).collect();
    let out = match order {
        PassOrder::RowsFirst => filter_cols(&filter_rows(&dev, h, w, &taps), h, w, &taps),
        PassOrder::ColumnsFirst => filter_rows(&filter_cols(&dev, h, w, &taps), h, w, &taps),
    };
    Ok(out.into_iter().map(|v| v + base).collect())
}

/// Per-channel separable Gaussian blur (horizontal, then vertical).
pub fn filter_gaussian<T: Scalar>(img: &Image<T>, sigma: f64) -> Result<Image<T>> {
    filter_gaussian_ordered(img, sigma, PassOrder::RowsFirst)
}

pub fn filter_gaussian_ordered<T: Scalar>(img: &Image<T>, sigma: f64, order: PassOrder) -> Result<Image<T>> {
    let fm = FeatureMap::from_image(img);
    let planes = fm
        .planes
        .iter()
        .map(|p| gaussian_plane(p, img.height(), img.width(), sigma, order))
        .collect::<Result<Vec<_>>>()?;
    FeatureMap { height: img.height(), width: img.width(), planes }.to_image()
}
