//! End-to-end enhancement (super-resolution then Retinex) and the set of
//! methods compared by the benchmark.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{clahe, hist_equalize, ssr, ClaheConfig, DEFAULT_SSR_SIGMA};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::msr::{msr_enhance, MsrConfig};
use crate::resize::upscale;
use crate::scalar::Scalar;
use crate::srcnn::{super_resolve, SrcnnModel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    Full,
    SrcnnOnly,
    MsrOnly,
}

impl Stage {
    pub fn needs_model(self) -> bool {
        self != Stage::MsrOnly
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    #[default]
    SrcnnFirst,
    MsrFirst,
}

/// One configured enhancement pass.
#[derive(Clone, Copy, Debug)]
pub struct Enhancer<'a, T> {
    pub model: Option<&'a SrcnnModel<T>>,
    pub scale_factor: usize,
    pub msr: &'a MsrConfig,
    pub stage: Stage,
    pub order: StageOrder,
}

impl<T: Scalar> Enhancer<'_, T> {
    fn model(&self) -> Result<&SrcnnModel<T>> {
        self.model.ok_or_else(|| Error::Parameter(format!("{:?} mode needs an SRCNN model", self.stage)))
    }

    /// `MsrOnly` keeps the input size; the other stages scale by `scale_factor`.
    pub fn enhance(&self, img: &Image<T>) -> Result<Image<T>> {
        match (self.stage, self.order) {
            (Stage::MsrOnly, _) => msr_enhance(img, self.msr),
            (Stage::SrcnnOnly, _) => super_resolve(self.model()?, img, self.scale_factor),
            (Stage::Full, StageOrder::SrcnnFirst) => {
                msr_enhance(&super_resolve(self.model()?, img, self.scale_factor)?, self.msr)
            }
            (Stage::Full, StageOrder::MsrFirst) => {
                super_resolve(self.model()?, &msr_enhance(img, self.msr)?, self.scale_factor)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Input,
    HistEqualize,
    Clahe,
    Ssr,
    Msr,
    Srcnn,
    Proposed,
}

impl Method {
    pub const ALL: [Method; 7] =
        [Method::Input, Method::HistEqualize, Method::Clahe, Method::Ssr, Method::Msr, Method::Srcnn, Method::Proposed];

    /// Benchmark default: every method except SRCNN alone.
    pub const DEFAULT_SET: [Method; 6] =
        [Method::Input, Method::HistEqualize, Method::Clahe, Method::Ssr, Method::Msr, Method::Proposed];

    pub fn name(self) -> &'static str {
        match self {
            Method::Input => "input",
            Method::HistEqualize => "hist_equalize",
            Method::Clahe => "clahe",
            Method::Ssr => "ssr",
            Method::Msr => "msr",
            Method::Srcnn => "srcnn",
            Method::Proposed => "proposed",
        }
    }

    pub fn needs_model(self) -> bool {
        matches!(self, Method::Srcnn | Method::Proposed)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown method {s:?}")))
    }
}

/// Settings shared by every benchmarked method.
#[derive(Clone, Debug)]
pub struct MethodContext<'a, T> {
    pub model: Option<&'a SrcnnModel<T>>,
    pub scale_factor: usize,
    pub msr: MsrConfig,
    pub clahe: ClaheConfig,
    pub ssr_sigma: f64,
}

impl<'a, T: Scalar> MethodContext<'a, T> {
    pub fn new(model: Option<&'a SrcnnModel<T>>, scale_factor: usize) -> Self {
        Self { model, scale_factor, msr: MsrConfig::default(), clahe: ClaheConfig::default(), ssr_sigma: DEFAULT_SSR_SIGMA }
    }

    fn enhancer(&self, stage: Stage) -> Enhancer<'_, T> {
        Enhancer { model: self.model, scale_factor: self.scale_factor, msr: &self.msr, stage, order: StageOrder::SrcnnFirst }
    }
}

/// Applies `method` to a degraded low-resolution image. Methods without a
/// super-resolution stage run on the bicubic upscale, so every output has the
/// ground-truth size.
pub fn run_method<T: Scalar>(method: Method, degraded: &Image<T>, ctx: &MethodContext<'_, T>) -> Result<Image<T>> {
    match method {
        Method::Srcnn => ctx.enhancer(Stage::SrcnnOnly).enhance(degraded),
        Method::Proposed => ctx.enhancer(Stage::Full).enhance(degraded),
        _ => {
            let up = upscale(degraded, ctx.scale_factor)?;
            match method {
                Method::Input => Ok(up),
                Method::HistEqualize => Ok(hist_equalize(&up)),
                Method::Clahe => clahe(&up, &ctx.clahe),
                Method::Ssr => ssr(&up, ctx.ssr_sigma),
                Method::Msr => msr_enhance(&up, &ctx.msr),
                Method::Srcnn | Method::Proposed => unreachable!(),
            }
        }
    }
}
