//! Planar image containers and the pixel-format conversions between them.
//!
//! Samples are stored channel-major: all of channel 0 row by row, then
//! channel 1, and so on. Floating-point images live in the nominal range
//! `[0, 1]`; 8-bit images only appear at file boundaries.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Planar floating-point image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

/// Planar 8-bit image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageU8 {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

fn check_dims(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Shape(format!("image dimensions must be positive, got {height}x{width}")));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::Shape(format!("channels must be 1 or 3, got {channels}")));
    }
    if len != height * width * channels {
        return Err(Error::Shape(format!(
            "data length {len} does not match {height}x{width}x{channels}"
        )));
    }
    Ok(())
}

impl<T: Scalar> Image<T> {
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        check_dims(height, width, channels, data.len())?;
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::from_vec(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, T::zero())
    }

    /// Builds an image from one plane per channel.
    pub fn from_planes(height: usize, width: usize, planes: Vec<Vec<T>>) -> Result<Self> {
        let channels = planes.len();
        let mut data = Vec::with_capacity(height * width * channels);
        for (c, plane) in planes.into_iter().enumerate() {
            if plane.len() != height * width {
                return Err(Error::Shape(format!(
                    "plane {c} has {} samples, expected {}",
                    plane.len(),
                    height * width
                )));
            }
            data.extend(plane);
        }
        Self::from_vec(height, width, channels, data)
    }

    /// Builds an image by evaluating `f(channel, y, x)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::from_vec(height, width, channels, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape<U>(&self, other: &Image<U>) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts the sample type.
    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    pub fn clamp01(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies a `ph`×`pw` window starting at (`y0`, `x0`).
    pub fn crop(&self, y0: usize, x0: usize, ph: usize, pw: usize) -> Result<Self> {
        if ph == 0 || pw == 0 || y0 + ph > self.height || x0 + pw > self.width {
            return Err(Error::Shape(format!(
                "crop {ph}x{pw} at ({y0},{x0}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(ph * pw * self.channels);
        for c in 0..self.channels {
            let plane = self.plane(c);
            for y in y0..y0 + ph {
                data.extend_from_slice(&plane[y * self.width + x0..y * self.width + x0 + pw]);
            }
        }
        Self::from_vec(ph, pw, self.channels, data)
    }

    /// Replicates a single-channel image into three identical channels.
    pub fn gray_to_rgb(&self) -> Result<Self> {
        match self.channels {
            3 => Ok(self.clone()),
            1 => Self::from_planes(
                self.height,
                self.width,
                vec![self.data.clone(), self.data.clone(), self.data.clone()],
            ),
            c => Err(Error::Shape(format!("cannot expand {c}-channel image to RGB"))),
        }
    }
}

impl ImageU8 {
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(height, width, channels, data.len())?;
        Ok(Self { height, width, channels, data })
    }

    /// Builds a planar image from interleaved (pixel-major) samples.
    pub fn from_interleaved(height: usize, width: usize, channels: usize, pixels: &[u8]) -> Result<Self> {
        check_dims(height, width, channels, pixels.len())?;
        let n = height * width;
        let mut data = vec![0u8; pixels.len()];
        for (i, px) in pixels.chunks_exact(channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * n + i] = v;
            }
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn to_interleaved(&self) -> Vec<u8> {
        let n = self.height * self.width;
        let mut out = Vec::with_capacity(self.data.len());
        for i in 0..n {
            for c in 0..self.channels {
                out.push(self.data[c * n + i]);
            }
        }
        out
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

/// Maps every 8-bit sample `v` to `v / 255`.
pub fn to_float<T: Scalar>(img: &ImageU8) -> Image<T> {
    let data = img.data.iter().map(|&v| T::from_f64_lossy(f64::from(v) / 255.0)).collect();
    Image { height: img.height, width: img.width, channels: img.channels, data }
}

/// Quantizes to 8 bits: clamp to `[0, 1]`, scale by 255, round half away from zero.
pub fn to_u8<T: Scalar>(img: &Image<T>) -> Result<ImageU8> {
    let mut data = Vec::with_capacity(img.data.len());
    for (i, &v) in img.data.iter().enumerate() {
        let v = v.to_f64_lossy();
        if v.is_nan() {
            return Err(Error::Numeric(format!("NaN sample at index {i}")));
        }
        // f64::round rounds half away from zero.
        data.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    Ok(ImageU8 { height: img.height, width: img.width, channels: img.channels, data })
}

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Single-channel luma `0.299 R + 0.587 G + 0.114 B`.
pub fn rgb_to_luma<T: Scalar>(img: &Image<T>) -> Result<Image<T>> {
    if img.channels != 3 {
        return Err(Error::Shape(format!("luma needs 3 channels, got {}", img.channels)));
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let data = (0..img.plane_len())
        .map(|i| {
            let y = LUMA_WEIGHTS[0] * r[i].to_f64_lossy()
                + LUMA_WEIGHTS[1] * g[i].to_f64_lossy()
                + LUMA_WEIGHTS[2] * b[i].to_f64_lossy();
            T::from_f64_lossy(y)
        })
        .collect();
    Image::from_vec(img.height, img.width, 1, data)
}

/// Mirrors left to right.
pub fn flip_h<T: Scalar>(img: &Image<T>) -> Image<T> {
    let mut out = img.clone();
    for c in 0..img.channels {
        for row in out.plane_mut(c).chunks_exact_mut(img.width) {
            row.reverse();
        }
    }
    out
}

/// Mirrors top to bottom.
pub fn flip_v<T: Scalar>(img: &Image<T>) -> Image<T> {
    let (h, w) = (img.height, img.width);
    let mut out = img.clone();
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h {
            dst[y * w..(y + 1) * w].copy_from_slice(&src[(h - 1 - y) * w..(h - y) * w]);
        }
    }
    out
}

/// Rotates counter-clockwise by `quarter_turns` × 90°.
pub fn rotate90<T: Scalar>(img: &Image<T>, quarter_turns: u32) -> Image<T> {
    let (h, w) = (img.height, img.width);
    match quarter_turns % 4 {
        0 => img.clone(),
        2 => flip_v(&flip_h(img)),
        k => {
            let mut data = Vec::with_capacity(img.data.len());
            for c in 0..img.channels {
                let src = img.plane(c);
                // Output is w×h.
                for oy in 0..w {
                    for ox in 0..h {
                        let (sy, sx) = if k == 1 { (ox, w - 1 - oy) } else { (h - 1 - ox, oy) };
                        data.push(src[sy * w + sx]);
                    }
                }
            }
            Image { height: w, width: h, channels: img.channels, data }
        }
    }
}
