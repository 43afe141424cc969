//! Full-reference quality metrics (PSNR, SSIM) and the colorfulness statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{rgb_to_luma, Image};
use crate::scalar::Scalar;

pub const CSV_HEADER: &str = "method,image,psnr_db,ssim,colorfulness,seconds";

const WINDOW_RADIUS: isize = 5;
const WINDOW_SIGMA: f64 = 1.5;

fn check_shapes<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Shape(format!("metric inputs differ in shape: {:?} vs {:?}", a.shape(), b.shape())))
    }
}

pub fn mse<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    check_shapes(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(max² / MSE)` in dB; `f64::INFINITY` for identical images.
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>, max_value: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_value * max_value / m).log10())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsimWindow {
    /// One evaluation over whole-image statistics.
    Global,
    /// Mean over 11×11 Gaussian (σ = 1.5) local statistics.
    #[default]
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimParams {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub window: SsimWindow,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self { k1: 0.01, k2: 0.03, dynamic_range: 1.0, window: SsimWindow::Gaussian }
    }
}

impl SsimParams {
    pub fn global() -> Self {
        Self { window: SsimWindow::Global, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::Parameter(format!(
                "ssim constants must be positive, got k1={} k2={} L={}",
                self.k1, self.k2, self.dynamic_range
            )));
        }
        Ok(())
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Weighted population statistics `(μx, μy, σx², σy², σxy)`.
fn weighted_stats(xs: &[f64], ys: &[f64], ws: &[f64]) -> (f64, f64, f64, f64, f64) {
    let wsum: f64 = ws.iter().sum();
    let mut mx = 0.0;
    let mut my = 0.0;
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        mx += w * x;
        my += w * y;
    }
    mx /= wsum;
    my /= wsum;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        let (dx, dy) = (x - mx, y - my);
        vx += w * dx * dx;
        vy += w * dy * dy;
        cxy += w * dx * dy;
    }
    (mx, my, vx / wsum, vy / wsum, cxy / wsum)
}

fn ssim_term(stats: (f64, f64, f64, f64, f64), c1: f64, c2: f64) -> f64 {
    let (mx, my, vx, vy, cxy) = stats;
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

fn gray_plane<T: Scalar>(img: &Image<T>) -> Vec<f64> {
    let src = if img.channels() == 1 { img.clone() } else { rgb_to_luma(img).expect("3 channels") };
    src.plane(0).iter().map(|v| v.to_f64_lossy()).collect()
}

/// Structural similarity, computed on luma for RGB inputs. The Gaussian
/// window is truncated at the image border and renormalized.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>, params: &SsimParams) -> Result<f64> {
    check_shapes(a, b)?;
    params.validate()?;
    let (x, y) = (gray_plane(a), gray_plane(b));
    let (c1, c2) = (params.c1(), params.c2());
    match params.window {
        SsimWindow::Global => Ok(ssim_term(weighted_stats(&x, &y, &vec![1.0; x.len()]), c1, c2)),
        SsimWindow::Gaussian => {
            let (h, w) = (a.height() as isize, a.width() as isize);
            let g: Vec<f64> = (-WINDOW_RADIUS..=WINDOW_RADIUS)
                .map(|d| (-((d * d) as f64) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp())
                .collect();
            let mut total = 0.0;
            let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
            for cy in 0..h {
                for cx in 0..w {
                    xs.clear();
                    ys.clear();
                    ws.clear();
                    for dy in -WINDOW_RADIUS..=WINDOW_RADIUS {
                        let py = cy + dy;
                        if py < 0 || py >= h {
                            continue;
                        }
                        for dx in -WINDOW_RADIUS..=WINDOW_RADIUS {
                            let px = cx + dx;
                            if px < 0 || px >= w {
                                continue;
                            }
                            let i = (py * w + px) as usize;
                            xs.push(x[i]);
                            ys.push(y[i]);
                            ws.push(g[(dy + WINDOW_RADIUS) as usize] * g[(dx + WINDOW_RADIUS) as usize]);
                        }
                    }
                    total += ssim_term(weighted_stats(&xs, &ys, &ws), c1, c2);
                }
            }
            Ok(total / (h * w) as f64)
        }
    }
}

/// Opponent-channel colorfulness `sqrt(σ²rg + σ²yb) + 0.3·sqrt(μ²rg + μ²yb)`,
/// scaled by 255.
pub fn colorfulness<T: Scalar>(img: &Image<T>) -> Result<f64> {
    if img.channels() != 3 {
        return Err(Error::Shape(format!("colorfulness needs 3 channels, got {}", img.channels())));
    }
    let n = img.plane_len() as f64;
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let opp = |i: usize| {
        let (r, g, b) = (r[i].to_f64_lossy(), g[i].to_f64_lossy(), b[i].to_f64_lossy());
        (r - g, 0.5 * (r + g) - b)
    };
    let (mut m_rg, mut m_yb) = (0.0, 0.0);
    for i in 0..img.plane_len() {
        let (rg, yb) = opp(i);
        m_rg += rg;
        m_yb += yb;
    }
    m_rg /= n;
    m_yb /= n;
    let (mut v_rg, mut v_yb) = (0.0, 0.0);
    for i in 0..img.plane_len() {
        let (rg, yb) = opp(i);
        v_rg += (rg - m_rg).powi(2);
        v_yb += (yb - m_yb).powi(2);
    }
    v_rg /= n;
    v_yb /= n;
    Ok(255.0 * ((v_rg + v_yb).sqrt() + 0.3 * (m_rg * m_rg + m_yb * m_yb).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub colorfulness: f64,
    pub elapsed_seconds: f64,
}

/// PSNR and SSIM against `reference`, colorfulness of `candidate`. Timing is
/// left at zero for the caller to fill in.
pub fn evaluate_pair<T: Scalar>(reference: &Image<T>, candidate: &Image<T>, params: &SsimParams) -> Result<MetricsReport> {
    check_shapes(reference, candidate)?;
    let colorfulness = if candidate.channels() == 3 { colorfulness(candidate)? } else { 0.0 };
    Ok(MetricsReport {
        psnr_db: psnr(reference, candidate, 1.0)?,
        ssim: ssim(reference, candidate, params)?,
        colorfulness,
        elapsed_seconds: 0.0,
    })
}

/// Six-decimal fixed point; infinities print as `inf` / `-inf`.
pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.6}")
    }
}

pub fn csv_row(method: &str, image: &str, report: &MetricsReport) -> String {
    format!(
        "{method},{image},{},{},{},{}",
        format_value(report.psnr_db),
        format_value(report.ssim),
        format_value(report.colorfulness),
        format_value(report.elapsed_seconds)
    )
}
