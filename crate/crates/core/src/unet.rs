//! UNet_xxs: a pruned U-Net for binary segmentation on small inputs.
//!
//! The network has `depth` encoder stages of conv-conv-pool, a two-conv
//! bottleneck, a symmetric decoder of transposed-conv upsampling with skip
//! concatenation, and a 1×1 head to one channel followed by a sigmoid. All
//! 3×3 convolutions use "same" zero padding so skips line up spatially.
//!
//! With the default `depth = 2, base_channels = 8` the model holds 29,321
//! trainable values.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::iou;
use crate::par::{self, Execution};
use crate::raster::{GrayImage, Mask};
use crate::tensor::ops::{sigmoid, Padding};
use crate::tensor::{GradientTape, LayerKind, LayerSpec, ParamSet, Real, Adam, Sgd, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum UnetError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input image is empty")]
    EmptyImage,
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = UnetError> = std::result::Result<T, E>;

/// Which of the two segmentation problems a model solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    /// Face image in, two eye discs out.
    FindEyes,
    /// Periocular crop in, iris region out.
    SegmentIris,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::FindEyes => "find_eyes",
            Task::SegmentIris => "segment_iris",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "find_eyes" => Some(Task::FindEyes),
            "segment_iris" => Some(Task::SegmentIris),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnetXxsConfig {
    /// Network input width in pixels.
    pub input_width: usize,
    /// Network input height in pixels.
    pub input_height: usize,
    pub base_channels: usize,
    /// Number of pooling stages.
    pub depth: usize,
    /// Foreground iff the sigmoid output is strictly above this value.
    pub threshold: f32,
    pub task: Task,
    /// Seed for He-uniform weight initialisation.
    pub seed: u64,
}

impl UnetXxsConfig {
    /// 160×96 face input.
    pub fn find_eyes() -> Self {
        Self { input_width: 160, input_height: 96, base_channels: 8, depth: 2, threshold: 0.5, task: Task::FindEyes, seed: 42 }
    }

    /// 128×96 periocular input.
    pub fn segment_iris() -> Self {
        Self { input_width: 128, input_height: 96, ..Self::find_eyes() }.with_task(Task::SegmentIris)
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::FindEyes => Self::find_eyes(),
            Task::SegmentIris => Self::segment_iris(),
        }
    }

    /// Same topology with doubled widths: roughly four times the parameters.
    pub fn control(&self) -> Self {
        Self { base_channels: self.base_channels * 2, ..self.clone() }
    }

    pub fn with_task(mut self, task: Task) -> Self {
        self.task = task;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(UnetError::InvalidConfig("depth 0 leaves no encoder".into()));
        }
        if self.base_channels == 0 {
            return Err(UnetError::InvalidConfig("base_channels must be positive".into()));
        }
        let div = 1usize << self.depth;
        if self.input_width == 0
            || self.input_height == 0
            || !self.input_width.is_multiple_of(div)
            || !self.input_height.is_multiple_of(div)
        {
            return Err(UnetError::InvalidConfig(format!(
                "input {}×{} must be divisible by {div} for depth {}",
                self.input_width, self.input_height, self.depth
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(UnetError::InvalidConfig(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Slots {
    weight: usize,
    bias: usize,
}

/// A built UNet_xxs: layer table plus trainable parameters.
#[derive(Debug, Clone)]
pub struct UnetXxs<T: Real = f32> {
    config: UnetXxsConfig,
    layers: Vec<LayerSpec>,
    params: ParamSet<T>,
}

/// Parameter table printed by `model-info`.
#[derive(Debug, Clone)]
pub struct ModelInfo {
    pub layers: Vec<LayerSpec>,
    pub total_params: usize,
}

impl fmt::Display for ModelInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14} {:<18} {:>4} {:>4} {:>8}", "layer", "kind", "in", "out", "params")?;
        for l in &self.layers {
            writeln!(
                f,
                "{:<14} {:<18} {:>4} {:>4} {:>8}",
                l.name,
                l.kind.name(),
                l.in_channels,
                l.out_channels,
                l.param_count()
            )?;
        }
        write!(f, "total trainable parameters: {}", self.total_params)
    }
}

fn layer_table(cfg: &UnetXxsConfig) -> Vec<LayerSpec> {
    use LayerKind::*;
    let b = cfg.base_channels;
    let mut layers = Vec::new();
    let mut ch = 1;
    for s in 0..cfg.depth {
        let w = b << s;
        layers.push(LayerSpec::new(format!("enc{s}.conv0"), Conv3x3, ch, w));
        layers.push(LayerSpec::new(format!("enc{s}.relu0"), Relu, w, w));
        layers.push(LayerSpec::new(format!("enc{s}.conv1"), Conv3x3, w, w));
        layers.push(LayerSpec::new(format!("enc{s}.relu1"), Relu, w, w));
        layers.push(LayerSpec::new(format!("enc{s}.pool"), MaxPool2x2, w, w));
        ch = w;
    }
    let mid = b << cfg.depth;
    layers.push(LayerSpec::new("mid.conv0", Conv3x3, ch, mid));
    layers.push(LayerSpec::new("mid.relu0", Relu, mid, mid));
    layers.push(LayerSpec::new("mid.conv1", Conv3x3, mid, mid));
    layers.push(LayerSpec::new("mid.relu1", Relu, mid, mid));
    ch = mid;
    for s in (0..cfg.depth).rev() {
        let w = b << s;
        layers.push(LayerSpec::new(format!("dec{s}.up"), TransposeConv2x2, ch, w));
        layers.push(LayerSpec::new(format!("dec{s}.concat"), Concat, w, 2 * w));
        layers.push(LayerSpec::new(format!("dec{s}.conv0"), Conv3x3, 2 * w, w));
        layers.push(LayerSpec::new(format!("dec{s}.relu0"), Relu, w, w));
        layers.push(LayerSpec::new(format!("dec{s}.conv1"), Conv3x3, w, w));
        layers.push(LayerSpec::new(format!("dec{s}.relu1"), Relu, w, w));
        ch = w;
    }
    layers.push(LayerSpec::new("head", Conv1x1, ch, 1));
    layers.push(LayerSpec::new("head.sigmoid", Sigmoid, 1, 1));
    layers
}

/// Builds a freshly initialised model (He-uniform kernels, zero biases).
pub fn build_unet_xxs(config: &UnetXxsConfig) -> Result<UnetXxs> {
    UnetXxs::new(config)
}

impl<T: Real> UnetXxs<T> {
    pub fn new(config: &UnetXxsConfig) -> Result<Self> {
        config.validate()?;
        let layers = layer_table(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        for l in &layers {
            let Some(ws) = l.weight_shape() else { continue };
            let fan_in = match l.kind {
                LayerKind::TransposeConv2x2 => l.in_channels * 4,
                _ => l.in_channels * ws[2] * ws[3],
            };
            let bound = (6.0 / fan_in as f64).sqrt();
            params.push(format!("{}.weight", l.name), ws.to_vec(), Tensor::random_uniform(ws, -bound, bound, &mut rng))?;
            if l.has_bias {
                params.push(format!("{}.bias", l.name), vec![l.out_channels], Tensor::zeros([l.out_channels, 1, 1, 1]))?;
            }
        }
        Ok(Self { config: config.clone(), layers, params })
    }

    pub fn config(&self) -> &UnetXxsConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn model_info(&self) -> ModelInfo {
        ModelInfo { layers: self.layers.clone(), total_params: self.layers.iter().map(LayerSpec::param_count).sum() }
    }

    /// Sets every parameter to zero (logits become 0 everywhere).
    pub fn zero_params(&mut self) {
        for slot in 0..self.params.len() {
            self.params.get_mut(slot).data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    fn slots(&self, layer: &str) -> Slots {
        let weight = self.params.find(&format!("{layer}.weight")).expect("layer table and params agree");
        let bias = self.params.find(&format!("{layer}.bias")).expect("layer table and params agree");
        Slots { weight, bias }
    }

    fn conv(&self, tape: &mut GradientTape<T>, x: Var, layer: &str, relu: bool) -> Result<Var> {
        let s = self.slots(layer);
        let w = tape.param(&self.params, s.weight);
        let b = tape.param(&self.params, s.bias);
        let y = tape.conv2d(x, w, Some(b), Padding::Same)?;
        Ok(if relu { tape.relu(y)? } else { y })
    }

    /// Records the forward pass and returns the pre-sigmoid logits.
    pub fn forward_logits(&self, tape: &mut GradientTape<T>, x: Var) -> Result<Var> {
        let mut skips = Vec::with_capacity(self.config.depth);
        let mut h = x;
        for s in 0..self.config.depth {
            h = self.conv(tape, h, &format!("enc{s}.conv0"), true)?;
            h = self.conv(tape, h, &format!("enc{s}.conv1"), true)?;
            skips.push(h);
            h = tape.max_pool2x2(h)?;
        }
        h = self.conv(tape, h, "mid.conv0", true)?;
        h = self.conv(tape, h, "mid.conv1", true)?;
        for s in (0..self.config.depth).rev() {
            let up = self.slots(&format!("dec{s}.up"));
            let w = tape.param(&self.params, up.weight);
            let b = tape.param(&self.params, up.bias);
            h = tape.conv_transpose2x2(h, w, Some(b))?;
            h = tape.concat(skips[s], h)?;
            h = self.conv(tape, h, &format!("dec{s}.conv0"), true)?;
            h = self.conv(tape, h, &format!("dec{s}.conv1"), true)?;
        }
        self.conv(tape, h, "head", false)
    }

    /// Sigmoid probabilities for a `(batch, 1, H, W)` input.
    pub fn predict(&self, input: Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = GradientTape::new();
        let x = tape.input(input);
        let logits = self.forward_logits(&mut tape, x)?;
        Ok(tape.take_value(logits).map(sigmoid))
    }
}

impl UnetXxs<f32> {
    /// Resized and normalised network input for `image`.
    pub fn prepare_input(&self, image: &GrayImage) -> Result<Tensor<f32>> {
        if image.is_empty() {
            return Err(UnetError::EmptyImage);
        }
        let (w, h) = (self.config.input_width, self.config.input_height);
        Ok(Tensor::from_vec([1, 1, h, w], image.resize_normalized(w, h))?)
    }

    /// Probability map at network resolution.
    pub fn probabilities(&self, image: &GrayImage) -> Result<Tensor<f32>> {
        self.predict(self.prepare_input(image)?)
    }

    pub fn load_params(&mut self, loaded: &ParamSet<f32>) -> Result<()> {
        Ok(self.params.assign_from(loaded)?)
    }
}

/// Runs the model on `image` and returns a mask at the image's own size.
///
/// The image is resized (bilinear) to the network input, normalised to
/// `[0, 1]`, thresholded strictly above `config.threshold` and the mask is
/// resized back with nearest-neighbour sampling.
pub fn segment(model: &UnetXxs, image: &GrayImage) -> Result<Mask> {
    let probs = model.probabilities(image)?;
    let cfg = model.config();
    let t = cfg.threshold;
    let bits = probs.data().iter().map(|&p| p > t).collect();
    let net = Mask::from_bits(cfg.input_width, cfg.input_height, bits).expect("network output matches config");
    Ok(net.resize_nearest(image.width(), image.height()))
}

/// [`segment`] over many images; pure per image, so it may fan out.
pub fn segment_batch(model: &UnetXxs, images: &[GrayImage], mode: Execution) -> Vec<Result<Mask>> {
    par::map(mode, images, |img| segment(model, img))
}

/// One training pair: an image and its ground-truth mask, same size.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: GrayImage,
    pub mask: Mask,
}

/// Parameter update rule used by [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    /// Gradient descent with `TrainOptions::momentum`.
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(Self::Sgd),
            "adam" => Some(Self::Adam),
            _ => None,
        }
    }
}

enum Updater {
    Sgd(Sgd<f32>),
    Adam(Adam<f32>),
}

impl Updater {
    fn step(&mut self, params: &mut ParamSet<f32>, grads: &[Tensor<f32>]) -> std::result::Result<(), TensorError> {
        match self {
            Updater::Sgd(o) => o.step(params, grads),
            Updater::Adam(o) => o.step(params, grads),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub lr: f32,
    /// Heavy-ball momentum for [`OptimizerKind::Sgd`]; 0 gives plain
    /// gradient descent.
    pub momentum: f32,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { optimizer: OptimizerKind::Adam, epochs: 30, lr: 0.005, momentum: 0.9, batch_size: 4, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean binary cross-entropy over the epoch's batches.
    pub loss: f64,
    /// Mean IoU over the validation set at source resolution, when one is given.
    pub val_iou: Option<f64>,
}

/// Mean binary cross-entropy of `logits` against 0/1 `targets` and its
/// gradient with respect to the logits.
pub fn bce_with_logits(logits: &Tensor<f32>, targets: &[f32]) -> (f64, Tensor<f32>) {
    let n = targets.len() as f64;
    let mut loss = 0.0f64;
    let inv = 1.0 / n as f32;
    let grad = logits
        .data()
        .iter()
        .zip(targets)
        .map(|(&z, &y)| {
            let zf = z as f64;
            loss += zf.max(0.0) - zf * y as f64 + (-zf.abs()).exp().ln_1p();
            (sigmoid(z) - y) * inv
        })
        .collect();
    (loss / n, Tensor::from_vec(logits.shape(), grad).expect("same length as logits"))
}

struct Prepared {
    input: Vec<f32>,
    target: Vec<f32>,
}

fn prepare(model: &UnetXxs, s: &Sample) -> Result<Prepared> {
    if s.image.is_empty() {
        return Err(UnetError::EmptyImage);
    }
    let (w, h) = (model.config().input_width, model.config().input_height);
    let input = s.image.resize_normalized(w, h);
    let target = s.mask.resize_nearest(w, h).bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Ok(Prepared { input, target })
}

/// Mean IoU of `model` over `samples`, measured at source resolution.
pub fn mean_iou(model: &UnetXxs, samples: &[Sample], mode: Execution) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let scores = par::map(mode, samples, |s| -> Result<f64> {
        let pred = segment(model, &s.image)?;
        Ok(iou(&pred, &s.mask).unwrap_or(0.0))
    });
    let mut total = 0.0;
    for s in scores {
        total += s?;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch training with binary cross-entropy.
///
/// Deterministic for a given `(model seed, options.seed, dataset order)`.
/// Runs on the calling thread only.
pub fn train(
    model: &mut UnetXxs,
    train_set: &[Sample],
    val_set: &[Sample],
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>> {
    if train_set.is_empty() {
        return Err(UnetError::EmptyDataset);
    }
    let prepared = train_set.iter().map(|s| prepare(model, s)).collect::<Result<Vec<_>>>()?;
    let (w, h) = (model.config().input_width, model.config().input_height);
    let plane = w * h;
    let batch = opts.batch_size.max(1);
    let mut opt = match opts.optimizer {
        OptimizerKind::Sgd => Updater::Sgd(Sgd::new(opts.lr, opts.momentum)),
        OptimizerKind::Adam => Updater::Adam(Adam::new(opts.lr)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut log = Vec::with_capacity(opts.epochs);

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            let mut input = Vec::with_capacity(chunk.len() * plane);
            let mut target = Vec::with_capacity(chunk.len() * plane);
            for &i in chunk {
                input.extend_from_slice(&prepared[i].input);
                target.extend_from_slice(&prepared[i].target);
            }
            let mut tape = GradientTape::new();
            let x = tape.input(Tensor::from_vec([chunk.len(), 1, h, w], input)?);
            let logits = model.forward_logits(&mut tape, x)?;
            let (loss, grad) = bce_with_logits(tape.value(logits), &target);
            if !loss.is_finite() {
                return Err(UnetError::Diverged { epoch });
            }
            let grads = tape.backward(logits, &grad, model.params())?;
            opt.step(model.params_mut(), &grads.params).map_err(|e| match e {
                TensorError::NonFiniteGradient(_) => UnetError::Diverged { epoch },
                other => other.into(),
            })?;
            loss_sum += loss;
            batches += 1;
        }
        let val_iou = if val_set.is_empty() { None } else { Some(mean_iou(model, val_set, Execution::Sequential)?) };
        let entry = EpochLog { epoch, loss: loss_sum / batches as f64, val_iou };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(log)
}
