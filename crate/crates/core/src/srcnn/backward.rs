//! Loss and analytic gradients.
//!
//! The loss is the per-pixel mean squared error averaged over the batch:
//! `(1/N) Σ_i (1/S_i) ‖HR_i − ĤR_i‖²`, where `S_i` is the sample count of
//! image `i`.

use rayon::prelude::*;

use super::{ConvLayer, SrcnnModel};
use crate::conv::{pad_plane, BiasVec, FeatureMap, Kernel2D, PaddingMode};
use crate::dataops::TrainBatch;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// ∂Loss/∂θ, shaped like the model it was computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet<T> {
    pub layers: [ConvLayer<T>; 3],
}

impl<T: Scalar> GradientSet<T> {
    pub fn tensors(&self) -> [&[T]; 6] {
        let [l1, l2, l3] = &self.layers;
        [l1.kernel.weights(), &l1.bias.0, l2.kernel.weights(), &l2.bias.0, l3.kernel.weights(), &l3.bias.0]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute component.
    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v.to_f64_lossy().abs())
            .fold(0.0, f64::max)
    }
}

fn check_pairs<T: Scalar>(predictions: &[Image<T>], targets: &[Image<T>]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::Empty("loss needs at least one sample".into()));
    }
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    for (i, (p, t)) in predictions.iter().zip(targets).enumerate() {
        if !p.same_shape(t) {
            return Err(Error::Shape(format!("sample {i}: prediction {:?} vs target {:?}", p.shape(), t.shape())));
        }
    }
    Ok(())
}

fn sample_sse<T: Scalar>(p: &Image<T>, t: &Image<T>) -> f64 {
    p.data()
        .iter()
        .zip(t.data())
        .map(|(a, b)| {
            let d = a.to_f64_lossy() - b.to_f64_lossy();
            d * d
        })
        .sum()
}

/// Batch-averaged per-pixel mean squared error.
pub fn mse_loss<T: Scalar>(predictions: &[Image<T>], targets: &[Image<T>]) -> Result<f64> {
    check_pairs(predictions, targets)?;
    let n = predictions.len() as f64;
    let total: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| sample_sse(p, t) / p.data().len() as f64)
        .sum();
    Ok(total / n)
}

/// Raw `f64` gradients of one layer.
struct LayerGrad {
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

/// Gradients of one convolution layer given the upstream gradient
/// `grad_out` (∂L/∂output). Returns ∂L/∂input when `want_input` is set.
fn layer_backward<T: Scalar>(
    input: &FeatureMap,
    kernel: &Kernel2D<T>,
    grad_out: &[Vec<f64>],
    pad: PaddingMode,
    want_input: bool,
) -> (LayerGrad, Option<Vec<Vec<f64>>>) {
    let (h, w) = (input.height, input.width);
    let (kh, kw) = (kernel.k_h(), kernel.k_w());
    let (ry, rx) = (kh / 2, kw / 2);
    let (ph, pw) = (h + 2 * ry, w + 2 * rx);
    let padded: Vec<Vec<f64>> = input.planes.iter().map(|p| pad_plane(p, h, w, ry, rx, pad)).collect();

    let bias: Vec<f64> = grad_out.iter().map(|g| g.iter().sum()).collect();
    let mut kgrad = vec![0.0; kernel.weights().len()];
    for (o, g) in grad_out.iter().enumerate() {
        for (c, src) in padded.iter().enumerate() {
            for i in 0..kh {
                for j in 0..kw {
                    let mut acc = 0.0;
                    for y in 0..h {
                        let s = &src[(y + i) * pw + j..(y + i) * pw + j + w];
                        acc += g[y * w..(y + 1) * w].iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                    }
                    kgrad[kernel.index(o, c, i, j)] = acc;
                }
            }
        }
    }

    let input_grad = want_input.then(|| {
        (0..kernel.c_in())
            .map(|c| {
                // Scatter into the padded frame, then fold the border back.
                let mut gp = vec![0.0; ph * pw];
                for (o, g) in grad_out.iter().enumerate() {
                    for i in 0..kh {
                        for j in 0..kw {
                            let wgt = kernel.get(o, c, i, j).to_f64_lossy();
                            for y in 0..h {
                                let d = &mut gp[(y + i) * pw + j..(y + i) * pw + j + w];
                                for (d, s) in d.iter_mut().zip(&g[y * w..(y + 1) * w]) {
                                    *d += wgt * s;
                                }
                            }
                        }
                    }
                }
                let mut gx = vec![0.0; h * w];
                for py in 0..ph {
                    let sy = py as isize - ry as isize;
                    let inside_y = sy >= 0 && sy < h as isize;
                    if pad == PaddingMode::Zero && !inside_y {
                        continue;
                    }
                    let sy = sy.clamp(0, h as isize - 1) as usize;
                    for px in 0..pw {
                        let sx = px as isize - rx as isize;
                        if pad == PaddingMode::Zero && (sx < 0 || sx >= w as isize) {
                            continue;
                        }
                        gx[sy * w + sx.clamp(0, w as isize - 1) as usize] += gp[py * pw + px];
                    }
                }
                gx
            })
            .collect()
    });
    (LayerGrad { kernel: kgrad, bias }, input_grad)
}

fn relu_mask(grad: &mut [Vec<f64>], pre: &FeatureMap) {
    for (g, z) in grad.iter_mut().zip(&pre.planes) {
        for (g, &z) in g.iter_mut().zip(z) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
    }
}

/// Loss contribution and raw gradients of one sample, already scaled by `1/N`.
fn sample_backward<T: Scalar>(
    model: &SrcnnModel<T>,
    input: &Image<T>,
    target: &Image<T>,
    batch_len: usize,
    pad: PaddingMode,
) -> Result<(f64, [LayerGrad; 3])> {
    let trace = model.trace(input, pad)?;
    let count = target.data().len() as f64;
    let scale = 2.0 / (count * batch_len as f64);
    let mut sse = 0.0;
    let mut grad: Vec<Vec<f64>> = Vec::with_capacity(target.channels());
    for (c, out) in trace.output.planes.iter().enumerate() {
        let t = target.plane(c);
        grad.push(
            out.iter()
                .zip(t)
                .map(|(&o, &t)| {
                    let d = o - t.to_f64_lossy();
                    sse += d * d;
                    scale * d
                })
                .collect(),
        );
    }
    let [l1, l2, l3] = model.layers();
    let (g3, ga2) = layer_backward(&trace.act2, &l3.kernel, &grad, pad, true);
    let mut gz2 = ga2.expect("requested");
    relu_mask(&mut gz2, &trace.pre2);
    let (g2, ga1) = layer_backward(&trace.act1, &l2.kernel, &gz2, pad, true);
    let mut gz1 = ga1.expect("requested");
    relu_mask(&mut gz1, &trace.pre1);
    let (g1, _) = layer_backward(&trace.input, &l1.kernel, &gz1, pad, false);
    Ok((sse / count / batch_len as f64, [g1, g2, g3]))
}

/// Loss and exact gradients over a batch.
///
/// Samples may be processed in parallel; their contributions are summed in
/// batch order, so the result does not depend on the worker count.
pub fn srcnn_backward<T: Scalar>(
    model: &SrcnnModel<T>,
    batch: &TrainBatch<T>,
    pad: PaddingMode,
) -> Result<(f64, GradientSet<T>)> {
    let (inputs, targets) = (&batch.inputs, &batch.targets);
    check_pairs(inputs, targets)?;
    for (i, t) in targets.iter().enumerate() {
        if t.channels() != model.channels() {
            return Err(Error::Shape(format!("target {i} has {} channels, model expects {}", t.channels(), model.channels())));
        }
    }
    let n = inputs.len();
    let parts: Vec<(f64, [LayerGrad; 3])> = inputs
        .par_iter()
        .zip(targets.par_iter())
        .map(|(x, t)| sample_backward(model, x, t, n, pad))
        .collect::<Result<_>>()?;

    let mut loss = 0.0;
    let mut acc: [LayerGrad; 3] = std::array::from_fn(|k| {
        let l = &model.layers()[k];
        LayerGrad { kernel: vec![0.0; l.kernel.weights().len()], bias: vec![0.0; l.bias.len()] }
    });
    for (l, grads) in parts {
        loss += l;
        for (a, g) in acc.iter_mut().zip(grads) {
            a.kernel.iter_mut().zip(g.kernel).for_each(|(a, g)| *a += g);
            a.bias.iter_mut().zip(g.bias).for_each(|(a, g)| *a += g);
        }
    }

    let layers = std::array::from_fn(|k| {
        let shape = &model.layers()[k].kernel;
        ConvLayer {
            kernel: Kernel2D::from_raw(
                shape.c_out(),
                shape.c_in(),
                shape.k_h(),
                shape.k_w(),
                acc[k].kernel.iter().map(|&v| T::from_f64_lossy(v)).collect(),
            ),
            bias: BiasVec(acc[k].bias.iter().map(|&v| T::from_f64_lossy(v)).collect()),
        }
    });
    Ok((loss, GradientSet { layers }))
}

#[cfg(test)]
mod tests {
    use super::super::Architecture;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn img(h: usize, w: usize, v: &[f64]) -> Image<f64> {
        Image::from_vec(h, w, 1, v.to_vec()).unwrap()
    }

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Image<f64> {
        Image::from_fn(h, w, c, |_, _, _| rng.random()).unwrap()
    }

    fn random_model(rng: &mut ChaCha8Rng, arch: &Architecture, c: usize) -> SrcnnModel<f64> {
        let mut m = SrcnnModel::zeros(arch, c).unwrap();
        for t in m.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random::<f64>() - 0.3;
            }
        }
        m
    }

    #[test]
    fn loss_examples() {
        let a = img(1, 2, &[0.3, 0.7]);
        assert_eq!(mse_loss(&[a.clone()], &[a.clone()]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[img(1, 1, &[0.0])], &[img(1, 1, &[1.0])]).unwrap(), 1.0);
        // Per-image squared-difference sums 0.02 and 0.04 over 2 samples each.
        let p = [img(1, 2, &[0.1, 0.1]), img(1, 2, &[0.2, 0.0])];
        let t = [img(1, 2, &[0.0, 0.0]), img(1, 2, &[0.0, 0.0])];
        assert!((mse_loss(&p, &t).unwrap() - 0.015).abs() < 1e-15);
    }

    #[test]
    fn loss_errors() {
        assert!(matches!(mse_loss::<f64>(&[], &[]), Err(Error::Empty(_))));
        assert!(matches!(
            mse_loss(&[img(1, 2, &[0.0, 0.0])], &[img(2, 1, &[0.0, 0.0])]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let arch = Architecture { f1: 3, f2: 1, f3: 3, n1: 2, n2: 2 };
        let m = random_model(&mut rng, &arch, 1);
        let x = random_image(&mut rng, 6, 6, 1);
        let y = m.forward(&x, PaddingMode::Replicate).unwrap();
        let (loss, g) = srcnn_backward(&m, &TrainBatch::new(vec![x], vec![y]).unwrap(), PaddingMode::Replicate).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.max_abs() < 1e-12);
    }

    #[test]
    fn doubling_residual_doubles_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let arch = Architecture { f1: 3, f2: 1, f3: 3, n1: 2, n2: 2 };
        let m = random_model(&mut rng, &arch, 1);
        let x = random_image(&mut rng, 6, 6, 1);
        let y = m.forward(&x, PaddingMode::Zero).unwrap();
        let d = random_image(&mut rng, 6, 6, 1);
        let t1 = Image::from_vec(6, 6, 1, y.data().iter().zip(d.data()).map(|(a, b)| a - 0.1 * b).collect()).unwrap();
        let t2 = Image::from_vec(6, 6, 1, y.data().iter().zip(d.data()).map(|(a, b)| a - 0.2 * b).collect()).unwrap();
        let (_, g1) = srcnn_backward(&m, &TrainBatch::new(vec![x.clone()], vec![t1]).unwrap(), PaddingMode::Zero).unwrap();
        let (_, g2) = srcnn_backward(&m, &TrainBatch::new(vec![x], vec![t2]).unwrap(), PaddingMode::Zero).unwrap();
        for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
            for (a, b) in a.iter().zip(b.iter()) {
                assert!((2.0 * a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn loss_matches_mse_of_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let arch = Architecture { f1: 3, f2: 1, f3: 3, n1: 3, n2: 2 };
        let m = random_model(&mut rng, &arch, 3);
        let xs: Vec<_> = (0..3).map(|_| random_image(&mut rng, 5, 4, 3)).collect();
        let ts: Vec<_> = (0..3).map(|_| random_image(&mut rng, 5, 4, 3)).collect();
        let preds: Vec<_> = xs.iter().map(|x| m.forward(x, PaddingMode::Replicate).unwrap()).collect();
        let (loss, _) = srcnn_backward(&m, &TrainBatch::new(xs.clone(), ts.clone()).unwrap(), PaddingMode::Replicate).unwrap();
        assert!((loss - mse_loss(&preds, &ts).unwrap()).abs() < 1e-12);
    }
}
