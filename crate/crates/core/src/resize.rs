//! Separable bicubic resampling (Keys kernel, a = -0.5) with replicate borders.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

const A: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn cubic_weight(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((A * t - 5.0 * A) * t + 8.0 * A) * t - 4.0 * A
    } else {
        0.0
    }
}

/// Four source indices and weights per output coordinate along one axis.
struct AxisTaps {
    index: Vec<[usize; 4]>,
    weight: Vec<[f64; 4]>,
}

fn axis_taps(in_len: usize, out_len: usize) -> AxisTaps {
    let scale = in_len as f64 / out_len as f64;
    let last = in_len as isize - 1;
    let mut index = Vec::with_capacity(out_len);
    let mut weight = Vec::with_capacity(out_len);
    for o in 0..out_len {
        // Pixel-center alignment.
        let src = (o as f64 + 0.5) * scale - 0.5;
        let base = src.floor();
        let frac = src - base;
        let base = base as isize;
        let mut idx = [0usize; 4];
        let mut w = [0.0f64; 4];
        for k in 0..4 {
            let off = k as isize - 1;
            idx[k] = (base + off).clamp(0, last) as usize;
            w[k] = cubic_weight(frac - off as f64);
        }
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        index.push(idx);
        weight.push(w);
    }
    AxisTaps { index, weight }
}

/// Resamples to `out_h`×`out_w`; output is clamped to `[0, 1]`.
pub fn resize_bicubic<T: Scalar>(img: &Image<T>, out_h: usize, out_w: usize) -> Result<Image<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!("resize target must be positive, got {out_h}x{out_w}")));
    }
    let (h, w) = (img.height(), img.width());
    let cols = axis_taps(w, out_w);
    let rows = axis_taps(h, out_h);
    let mut planes = Vec::with_capacity(img.channels());
    let mut tmp = vec![0.0f64; h * out_w];
    for c in 0..img.channels() {
        let src = img.plane(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for x in 0..out_w {
                let (idx, wt) = (&cols.index[x], &cols.weight[x]);
                tmp[y * out_w + x] = (0..4).map(|k| wt[k] * row[idx[k]].to_f64_lossy()).sum();
            }
        }
        let mut plane = Vec::with_capacity(out_h * out_w);
        for y in 0..out_h {
            let (idx, wt) = (&rows.index[y], &rows.weight[y]);
            for x in 0..out_w {
                let v: f64 = (0..4).map(|k| wt[k] * tmp[idx[k] * out_w + x]).sum();
                plane.push(T::from_f64_lossy(v.clamp(0.0, 1.0)));
            }
        }
        planes.push(plane);
    }
    Image::from_planes(out_h, out_w, planes)
}

/// Bicubic resize by an integer factor.
pub fn upscale<T: Scalar>(img: &Image<T>, factor: usize) -> Result<Image<T>> {
    resize_bicubic(img, img.height() * factor, img.width() * factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midpoint_weights() {
        let w: Vec<f64> = [1.5, 0.5, -0.5, -1.5].iter().map(|&t| cubic_weight(t)).collect();
        assert_eq!(w, vec![-0.0625, 0.5625, 0.5625, -0.0625]);
    }

    #[test]
    fn kernel_interpolates() {
        assert_eq!(cubic_weight(0.0), 1.0);
        assert_eq!(cubic_weight(1.0), 0.0);
        assert_eq!(cubic_weight(2.0), 0.0);
    }

    #[test]
    fn same_size_is_identity() {
        let img = Image::<f64>::from_fn(7, 5, 3, |c, y, x| ((c * 31 + y * 7 + x * 3) % 11) as f64 / 11.0).unwrap();
        let out = resize_bicubic(&img, 7, 5).unwrap();
        for (a, b) in img.data().iter().zip(out.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_target_is_error() {
        let img = Image::<f64>::zeros(2, 2, 1).unwrap();
        assert!(resize_bicubic(&img, 0, 2).is_err());
    }

    #[test]
    fn doubling_a_step_row_matches_kernel_sum() {
        // 1×4 row [0, 0, 1, 1] doubled: output 3 sits at source 1.25.
        let img = Image::<f64>::from_vec(1, 4, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let out = resize_bicubic(&img, 1, 8).unwrap();
        let expect: f64 = (0..4).map(|k| cubic_weight(0.25 - (k as f64 - 1.0)) * [0.0, 0.0, 1.0, 1.0][k]).sum();
        assert!((out.data()[3] - expect.clamp(0.0, 1.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn preserves_constants(v in 0.0f64..=1.0, h in 1usize..12, w in 1usize..12, s in prop::sample::select(vec![0.5, 1.0, 2.0, 3.0])) {
            let img = Image::<f64>::filled(h, w, 3, v).unwrap();
            let oh = ((h as f64 * s).round() as usize).max(1);
            let ow = ((w as f64 * s).round() as usize).max(1);
            let out = resize_bicubic(&img, oh, ow).unwrap();
            prop_assert_eq!(out.shape(), (oh, ow, 3));
            for &o in out.data() {
                prop_assert!((o - v).abs() < 1e-9);
            }
        }
    }
}
