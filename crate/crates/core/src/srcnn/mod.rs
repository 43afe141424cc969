//! Three-layer super-resolution CNN.
//!
//! ```text
//! F1 = ReLU(I  * K1 + b1)   f1×f1, c  -> n1
//! F2 = ReLU(F1 * K2 + b2)   f2×f2, n1 -> n2
//! HR =      F2 * K3 + b3    f3×f3, n2 -> c
//! ```
//!
//! The input is the low-resolution image already upscaled (bicubic) to the
//! target size; every layer preserves spatial size.

mod backward;
mod format;
mod optim;
mod train;

pub use backward::{mse_loss, srcnn_backward, GradientSet};
pub use format::{load_model, read_model, save_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use optim::{train_step, OptimizerKind, OptimizerState, TrainConfig};
pub use train::{train, train_from, TrainingSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::conv::{conv2d_features, BiasVec, FeatureMap, Kernel2D, PaddingMode};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::resize::upscale;
use crate::scalar::Scalar;

/// Standard deviation of the initial weight distribution.
pub const INIT_STD: f64 = 1e-3;

/// Filter sizes and widths of the three layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub f1: usize,
    pub f2: usize,
    pub f3: usize,
    pub n1: usize,
    pub n2: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self { f1: 9, f2: 1, f3: 5, n1: 64, n2: 32 }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("f1", self.f1), ("f2", self.f2), ("f3", self.f3)] {
            if f == 0 || f % 2 == 0 {
                return Err(Error::Parameter(format!("{name} must be odd and positive, got {f}")));
            }
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::Parameter("n1 and n2 must be positive".into()));
        }
        Ok(())
    }

    /// Shapes `(c_out, c_in, k)` of the three layers for `channels` image channels.
    pub fn layer_shapes(&self, channels: usize) -> [(usize, usize, usize); 3] {
        [
            (self.n1, channels, self.f1),
            (self.n2, self.n1, self.f2),
            (channels, self.n2, self.f3),
        ]
    }
}

/// Weights and bias of one convolution layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub kernel: Kernel2D<T>,
    pub bias: BiasVec<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Result<Self> {
        Ok(Self { kernel: Kernel2D::zeros(c_out, c_in, k, k)?, bias: BiasVec::zeros(c_out) })
    }

    pub fn parameter_count(&self) -> usize {
        self.kernel.weights().len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SrcnnModel<T> {
    layers: [ConvLayer<T>; 3],
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct ForwardTrace {
    pub input: FeatureMap,
    pub pre1: FeatureMap,
    pub act1: FeatureMap,
    pub pre2: FeatureMap,
    pub act2: FeatureMap,
    pub output: FeatureMap,
}

impl<T: Scalar> SrcnnModel<T> {
    pub fn new(layers: [ConvLayer<T>; 3]) -> Result<Self> {
        let channels = layers[0].kernel.c_in();
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("model channels must be 1 or 3, got {channels}")));
        }
        let chain = [
            (layers[0].kernel.c_out(), layers[1].kernel.c_in()),
            (layers[1].kernel.c_out(), layers[2].kernel.c_in()),
            (layers[2].kernel.c_out(), channels),
        ];
        for (k, (out, next)) in chain.into_iter().enumerate() {
            if out != next {
                return Err(Error::Shape(format!("layer {} outputs {out} channels, next expects {next}", k + 1)));
            }
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.kernel.k_h() != layer.kernel.k_w() {
                return Err(Error::Shape(format!("layer {} kernel must be square", k + 1)));
            }
            if layer.bias.len() != layer.kernel.c_out() {
                return Err(Error::Shape(format!("layer {} bias length mismatch", k + 1)));
            }
            if !layer.bias.0.iter().all(|b| b.is_finite()) {
                return Err(Error::Numeric(format!("layer {} bias not finite", k + 1)));
            }
        }
        Ok(Self { layers })
    }

    pub fn zeros(arch: &Architecture, channels: usize) -> Result<Self> {
        arch.validate()?;
        let [s1, s2, s3] = arch.layer_shapes(channels);
        Self::new([
            ConvLayer::zeros(s1.0, s1.1, s1.2)?,
            ConvLayer::zeros(s2.0, s2.1, s2.2)?,
            ConvLayer::zeros(s3.0, s3.1, s3.2)?,
        ])
    }

    pub fn channels(&self) -> usize {
        self.layers[0].kernel.c_in()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            f1: self.layers[0].kernel.k_h(),
            f2: self.layers[1].kernel.k_h(),
            f3: self.layers[2].kernel.k_h(),
            n1: self.layers[0].kernel.c_out(),
            n2: self.layers[1].kernel.c_out(),
        }
    }

    pub fn layers(&self) -> &[ConvLayer<T>; 3] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>; 3] {
        &mut self.layers
    }

    /// Parameter tensors in file order: K1, b1, K2, b2, K3, b3.
    pub fn tensors(&self) -> [&[T]; 6] {
        let [l1, l2, l3] = &self.layers;
        [l1.kernel.weights(), &l1.bias.0, l2.kernel.weights(), &l2.bias.0, l3.kernel.weights(), &l3.bias.0]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 6] {
        let [l1, l2, l3] = &mut self.layers;
        [
            l1.kernel.weights_mut(),
            &mut l1.bias.0,
            l2.kernel.weights_mut(),
            &mut l2.bias.0,
            l3.kernel.weights_mut(),
            &mut l3.bias.0,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::parameter_count).sum()
    }

    pub fn cast<U: Scalar>(&self) -> SrcnnModel<U> {
        let cast_layer = |l: &ConvLayer<T>| ConvLayer {
            kernel: Kernel2D::new(
                l.kernel.c_out(),
                l.kernel.c_in(),
                l.kernel.k_h(),
                l.kernel.k_w(),
                l.kernel.weights().iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
            )
            .expect("shape preserved"),
            bias: BiasVec(l.bias.0.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect()),
        };
        SrcnnModel { layers: [cast_layer(&self.layers[0]), cast_layer(&self.layers[1]), cast_layer(&self.layers[2])] }
    }

    pub(crate) fn trace(&self, input: &Image<T>, pad: PaddingMode) -> Result<ForwardTrace> {
        if input.channels() != self.channels() {
            return Err(Error::Shape(format!(
                "input has {} channels, model expects {}",
                input.channels(),
                self.channels()
            )));
        }
        let [l1, l2, l3] = &self.layers;
        let input = FeatureMap::from_image(input);
        let pre1 = conv2d_features(&input, &l1.kernel, &l1.bias, pad)?;
        let act1 = pre1.clone().relu();
        let pre2 = conv2d_features(&act1, &l2.kernel, &l2.bias, pad)?;
        let act2 = pre2.clone().relu();
        let output = conv2d_features(&act2, &l3.kernel, &l3.bias, pad)?;
        Ok(ForwardTrace { input, pre1, act1, pre2, act2, output })
    }

    /// Forward pass; the output is neither activated nor clamped.
    pub fn forward(&self, input: &Image<T>, pad: PaddingMode) -> Result<Image<T>> {
        self.trace(input, pad)?.output.to_image()
    }
}

/// Gaussian(0, 0.001) weights and zero biases drawn from `seed`.
pub fn srcnn_init<T: Scalar>(arch: &Architecture, channels: usize, seed: u64) -> Result<SrcnnModel<T>> {
    let mut model = SrcnnModel::zeros(arch, channels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    for layer in model.layers_mut().iter_mut() {
        for w in layer.kernel.weights_mut() {
            *w = T::from_f64_lossy(normal.sample(&mut rng));
        }
    }
    Ok(model)
}

/// Forward pass with replicate padding.
pub fn srcnn_forward<T: Scalar>(model: &SrcnnModel<T>, input: &Image<T>) -> Result<Image<T>> {
    model.forward(input, PaddingMode::Replicate)
}

/// Bicubic upscale by `scale_factor`, then the network, clamped to `[0, 1]`.
pub fn super_resolve<T: Scalar>(model: &SrcnnModel<T>, lr_image: &Image<T>, scale_factor: usize) -> Result<Image<T>> {
    if scale_factor == 0 {
        return Err(Error::Parameter("scale factor must be at least 1".into()));
    }
    if lr_image.channels() != model.channels() {
        return Err(Error::Shape(format!(
            "input has {} channels, model expects {}",
            lr_image.channels(),
            model.channels()
        )));
    }
    let up = upscale(lr_image, scale_factor)?;
    Ok(srcnn_forward(model, &up)?.clamp01())
}
