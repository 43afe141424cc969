use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{srcnn_init, train_step, OptimizerState, SrcnnModel, TrainConfig};
use crate::dataops::{extract_patches, Augmentation, TrainBatch};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Whole-image training pairs `(bicubic-upscaled LR, HR)`.
#[derive(Clone, Debug)]
pub struct TrainingSet<T> {
    pairs: Vec<(Image<T>, Image<T>)>,
}

impl<T: Scalar> TrainingSet<T> {
    pub fn new(pairs: Vec<(Image<T>, Image<T>)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("training set has no pairs".into()));
        }
        let channels = pairs[0].1.channels();
        for (i, (lr, hr)) in pairs.iter().enumerate() {
            if !lr.same_shape(hr) {
                return Err(Error::Shape(format!("pair {i}: {:?} vs {:?}", lr.shape(), hr.shape())));
            }
            if hr.channels() != channels {
                return Err(Error::Shape(format!("pair {i} has {} channels, expected {channels}", hr.channels())));
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.pairs[0].1.channels()
    }

    pub fn pairs(&self) -> &[(Image<T>, Image<T>)] {
        &self.pairs
    }
}

/// Draws augmented patches from per-scale pools, each walked in a freshly
/// shuffled order every epoch.
struct PatchSampler<T> {
    pools: Vec<TrainBatch<T>>,
    orders: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> PatchSampler<T> {
    fn new(set: &TrainingSet<T>, config: &TrainConfig) -> Result<Self> {
        let mut pools = Vec::with_capacity(Augmentation::SCALES.len());
        for &scale in &Augmentation::SCALES {
            let aug = Augmentation { scale, ..Augmentation::identity() };
            let mut pool = TrainBatch::empty();
            for (i, (lr, hr)) in set.pairs.iter().enumerate() {
                let (lr, hr) = (aug.apply_scale(lr)?, aug.apply_scale(hr)?);
                let seed = config.seed.wrapping_add(i as u64);
                let ext = extract_patches(&lr, &hr, config.patch_size, config.patch_stride, seed)?;
                for (x, y) in ext.batch.inputs.into_iter().zip(ext.batch.targets) {
                    pool.push(x, y)?;
                }
            }
            pools.push(pool);
        }
        if pools.iter().all(TrainBatch::is_empty) {
            return Err(Error::Empty(format!(
                "no training image is at least {0}x{0} pixels",
                config.patch_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let orders = pools.iter().map(|_| Vec::new()).collect();
        let cursors = pools.iter().map(|_| 0).collect();
        Ok(Self { pools, orders, cursors, rng })
    }

    fn next_patch(&mut self) -> Result<(Image<T>, Image<T>)> {
        let aug = Augmentation::sample(&mut self.rng);
        let wanted = Augmentation::SCALES.iter().position(|&s| s == aug.scale).unwrap_or(0);
        let k = if self.pools[wanted].is_empty() {
            self.pools.iter().position(|p| !p.is_empty()).expect("checked non-empty")
        } else {
            wanted
        };
        if self.cursors[k] >= self.orders[k].len() {
            let mut order: Vec<usize> = (0..self.pools[k].len()).collect();
            order.shuffle(&mut self.rng);
            self.orders[k] = order;
            self.cursors[k] = 0;
        }
        let idx = self.orders[k][self.cursors[k]];
        self.cursors[k] += 1;
        let pool = &self.pools[k];
        Ok((aug.apply_geometric(&pool.inputs[idx]), aug.apply_geometric(&pool.targets[idx])))
    }

    fn next_batch(&mut self, size: usize) -> Result<TrainBatch<T>> {
        let mut batch = TrainBatch::empty();
        for _ in 0..size {
            let (x, y) = self.next_patch()?;
            batch.push(x, y)?;
        }
        Ok(batch)
    }
}

/// Trains a freshly initialized model for `config.iterations` steps.
/// Returns the model and the per-iteration loss.
pub fn train<T: Scalar>(set: &TrainingSet<T>, config: &TrainConfig) -> Result<(SrcnnModel<T>, Vec<f64>)> {
    let model = srcnn_init(&config.architecture, set.channels(), config.seed)?;
    train_from(model, set, config, |_, _| {})
}

/// Continues training `model`, calling `on_step(iteration, loss)` after each step.
pub fn train_from<T: Scalar>(
    mut model: SrcnnModel<T>,
    set: &TrainingSet<T>,
    config: &TrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<(SrcnnModel<T>, Vec<f64>)> {
    config.validate()?;
    if model.channels() != set.channels() {
        return Err(Error::Shape(format!(
            "model has {} channels, training data {}",
            model.channels(),
            set.channels()
        )));
    }
    if config.iterations == 0 {
        return Ok((model, Vec::new()));
    }
    let mut sampler = PatchSampler::new(set, config)?;
    let mut state = OptimizerState::new();
    let mut history = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let batch = sampler.next_batch(config.batch_size)?;
        let loss = train_step(&mut model, &batch, config, &mut state, it)?;
        on_step(it, loss);
        history.push(loss);
    }
    Ok((model, history))
}
