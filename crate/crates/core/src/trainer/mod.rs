//! Joint training of a worker backbone `f_W`, a prediction head `f_P` that
//! sees unbound outputs, and an adversarial head `f_A` that sees raw worker
//! outputs through gradient reversal.

mod adam;
mod dataset;
mod linear;
mod model_file;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::backbone::layers::{
    circconv_backward, circconv_forward, dense_backward, dense_forward, leaky_relu,
    leaky_relu_backward, reverse_grad_backward, reverse_grad_forward, softmax,
    softmax_cross_entropy, ConvShape,
};
use crate::backbone::{Backbone, Layer, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::vsa::{bind_tensors, correlate, sample_secret, Secret};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dataset::{
    synth_dataset, synth_dataset_with, Split, SynthDataset, DEFAULT_CLASSES, DEFAULT_NOISE_SD,
    DEFAULT_TEST, DEFAULT_TRAIN, IMAGE_SIDE,
};
pub use linear::{linear_adversary_demo, LinearDemo, LinearSoftmax, LINEAR_L2};
pub use model_file::{
    decode_model, encode_model, read_model, write_model, MODEL_MAGIC, MODEL_VERSION,
};

pub const HIDDEN: usize = 64;
const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
const CHANNELS: usize = 16;

const TAG_INIT: u64 = 1;
const TAG_SHUFFLE: u64 = 2;
const TAG_SECRET: u64 = 3;
const TAG_EVAL: u64 = 4;

pub fn reverse_grad(t: &Tensor<f64>) -> Tensor<f64> {
    Tensor::from_parts(t.dims().to_vec(), reverse_grad_forward(t.data()))
}

pub fn reverse_grad_back(upstream: &Tensor<f64>) -> Tensor<f64> {
    Tensor::from_parts(upstream.dims().to_vec(), reverse_grad_backward(upstream.data()))
}

/// The three convolutions of the toy worker stack.
pub fn toy_conv_shapes() -> [ConvShape; 3] {
    let s = |cin, cout| ConvShape {
        h: IMAGE_SIDE,
        w: IMAGE_SIDE,
        kh: 3,
        kw: 3,
        cin,
        cout,
    };
    [s(1, CHANNELS), s(CHANNELS, CHANNELS), s(CHANNELS, 1)]
}

fn fan_in_uniform(n: usize, fan_in: usize, stream: &RngStream) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    stream
        .draw(|r| (0..n).map(|_| r.random_range(-bound..bound)).collect())
        .0
}

/// `flatten -> dense 256->64 -> leaky relu -> dense 64->C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

struct HeadTrace {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

struct HeadGrad {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    input: Vec<f64>,
}

impl Head {
    fn init(classes: usize, stream: &RngStream) -> Self {
        Self {
            w1: fan_in_uniform(HIDDEN * PIXELS, PIXELS, &stream.derive(&[0])),
            b1: vec![0.0; HIDDEN],
            w2: fan_in_uniform(classes * HIDDEN, HIDDEN, &stream.derive(&[1])),
            b2: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.b2.len()
    }

    pub fn inputs(&self) -> usize {
        self.w1.len() / HIDDEN
    }

    fn trace(&self, x: &[f64]) -> HeadTrace {
        let pre = dense_forward(&self.w1, Some(&self.b1), x, HIDDEN);
        let hidden = leaky_relu(&pre, LEAKY_SLOPE);
        let logits = dense_forward(&self.w2, Some(&self.b2), &hidden, self.classes());
        HeadTrace {
            pre,
            hidden,
            logits,
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).logits
    }

    fn backward(&self, x: &[f64], t: &HeadTrace, dlogits: &[f64]) -> HeadGrad {
        let (w2, b2, dhidden) = dense_backward(&self.w2, &t.hidden, dlogits);
        let dpre = leaky_relu_backward(&t.pre, &dhidden, LEAKY_SLOPE);
        let (w1, b1, input) = dense_backward(&self.w1, x, &dpre);
        HeadGrad {
            w1,
            b1,
            w2,
            b2,
            input,
        }
    }
}

/// Worker stack plus the two heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub kernels: [Vec<f64>; 3],
    pub pred: Head,
    pub adv: Head,
}

struct BackboneTrace {
    input: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    out: Vec<f64>,
}

pub const BLOCKS: usize = 11;

impl ToyModel {
    /// Weights uniform in `+-1/sqrt(fan_in)`, zero biases.
    pub fn init(classes: usize, seed: u64) -> Self {
        let root = RngStream::new(seed).derive(&[TAG_INIT]);
        let kernels = toy_conv_shapes().map(|s| {
            fan_in_uniform(
                s.kernel_len(),
                s.kh * s.kw * s.cin,
                &root.derive(&[0, s.cin as u64, s.cout as u64]),
            )
        });
        Self {
            kernels,
            pred: Head::init(classes, &root.derive(&[1])),
            adv: Head::init(classes, &root.derive(&[2])),
        }
    }

    pub fn classes(&self) -> usize {
        self.pred.classes()
    }

    /// Parameter blocks in a fixed order: three kernels, then
    /// `w1, b1, w2, b2` of the prediction head, then of the adversarial head.
    pub fn blocks(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.kernels.to_vec();
        for h in [&self.pred, &self.adv] {
            out.extend([h.w1.clone(), h.b1.clone(), h.w2.clone(), h.b2.clone()]);
        }
        out
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Result<Self> {
        if blocks.len() != BLOCKS {
            return Err(Error::shape(format!("expected {BLOCKS} parameter blocks, got {}", blocks.len())));
        }
        let mut it = blocks.into_iter();
        let mut next = || it.next().unwrap();
        let kernels = [next(), next(), next()];
        for (k, s) in kernels.iter().zip(toy_conv_shapes()) {
            if k.len() != s.kernel_len() {
                return Err(Error::shape(format!(
                    "kernel has {} weights, expected {}",
                    k.len(),
                    s.kernel_len()
                )));
            }
        }
        let mut head = || -> Result<Head> {
            let h = Head {
                w1: next(),
                b1: next(),
                w2: next(),
                b2: next(),
            };
            let c = h.b2.len();
            if h.w1.len() != HIDDEN * PIXELS || h.b1.len() != HIDDEN || h.w2.len() != c * HIDDEN || c == 0 {
                return Err(Error::shape("malformed head parameters"));
            }
            Ok(h)
        };
        let pred = head()?;
        let adv = head()?;
        if pred.classes() != adv.classes() {
            return Err(Error::shape("heads disagree on the class count"));
        }
        Ok(Self { kernels, pred, adv })
    }

    pub fn parameter_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().flatten().all(|v| v.is_finite())
    }

    /// The trained worker stack as a servable backbone.
    pub fn to_backbone(&self) -> Backbone {
        let [s1, s2, s3] = toy_conv_shapes();
        let conv = |shape, k: &Vec<f64>| Layer::CircConv2d {
            shape,
            weights: k.clone(),
        };
        let layers = vec![
            conv(s1, &self.kernels[0]),
            Layer::LeakyRelu { alpha: LEAKY_SLOPE },
            conv(s2, &self.kernels[1]),
            Layer::LeakyRelu { alpha: LEAKY_SLOPE },
            conv(s3, &self.kernels[2]),
        ];
        Backbone::new([IMAGE_SIDE, IMAGE_SIDE, 1], layers).expect("toy shapes are consistent")
    }

    fn backbone_trace(&self, x: &[f64]) -> BackboneTrace {
        let [s1, s2, s3] = toy_conv_shapes();
        let z1 = circconv_forward(&self.kernels[0], x, s1);
        let a1 = leaky_relu(&z1, LEAKY_SLOPE);
        let z2 = circconv_forward(&self.kernels[1], &a1, s2);
        let a2 = leaky_relu(&z2, LEAKY_SLOPE);
        let out = circconv_forward(&self.kernels[2], &a2, s3);
        BackboneTrace {
            input: x.to_vec(),
            z1,
            a1,
            z2,
            a2,
            out,
        }
    }

    /// Worker output `f_W(x)` for one `16 x 16 x 1` image.
    pub fn worker(&self, x: &Tensor<f64>) -> Result<Tensor<f64>> {
        check_image(x)?;
        Ok(Tensor::from_parts(x.dims().to_vec(), self.backbone_trace(x.data()).out))
    }

    fn backbone_backward(&self, t: &BackboneTrace, dout: &[f64]) -> [Vec<f64>; 3] {
        let [s1, s2, s3] = toy_conv_shapes();
        let (dk3, da2) = circconv_backward(&self.kernels[2], &t.a2, dout, s3);
        let dz2 = leaky_relu_backward(&t.z2, &da2, LEAKY_SLOPE);
        let (dk2, da1) = circconv_backward(&self.kernels[1], &t.a1, &dz2, s2);
        let dz1 = leaky_relu_backward(&t.z1, &da1, LEAKY_SLOPE);
        let (dk1, _) = circconv_backward(&self.kernels[0], &t.input, &dz1, s1);
        [dk1, dk2, dk3]
    }

    /// Class probabilities of the full client/worker path with secret `s`.
    pub fn predict_with_secret(&self, x: &Tensor<f64>, s: &Secret<f64>) -> Result<Vec<f64>> {
        let r = self.worker(&crate::vsa::bind(x, s)?)?;
        let u = crate::vsa::unbind(&r, s)?;
        Ok(softmax(&self.pred.logits(u.data())))
    }

    /// Loss and per-block gradients for one example under secret `s`.
    pub fn example_gradient(
        &self,
        x: &Tensor<f64>,
        label: usize,
        s: &Secret<f64>,
    ) -> Result<ExampleGradient> {
        let parts = self.example_parts(x, label, s)?;
        let mut grads = parts.backbone_pred;
        for (g, a) in grads.iter_mut().zip(&parts.backbone_adv) {
            for (gi, ai) in g.iter_mut().zip(a) {
                *gi += ai;
            }
        }
        let mut blocks: Vec<Vec<f64>> = grads.to_vec();
        blocks.extend(parts.pred_head);
        blocks.extend(parts.adv_head);
        Ok(ExampleGradient {
            loss: parts.loss_pred + parts.loss_adv,
            pred_correct: parts.pred_correct,
            adv_correct: parts.adv_correct,
            blocks,
        })
    }

    /// Both loss terms and their gradients kept apart, so the reversal
    /// identity can be checked path by path.
    pub fn example_parts(&self, x: &Tensor<f64>, label: usize, s: &Secret<f64>) -> Result<PathGradients> {
        check_image(x)?;
        if label >= self.classes() {
            return Err(Error::param(format!("label {label} outside 0..{}", self.classes())));
        }
        let dims = x.dims().to_vec();
        let xh = bind_tensors(x, s.tensor())?;
        let trace = self.backbone_trace(xh.data());
        let r = Tensor::from_parts(dims.clone(), trace.out.clone());

        let u = correlate(&r, s.tensor())?;
        let tp = self.pred.trace(u.data());
        let (loss_pred, dlp) = softmax_cross_entropy(&tp.logits, label);
        let gp = self.pred.backward(u.data(), &tp, &dlp);
        // Correlation with `s` is transposed by convolution with `s`.
        let dr_pred = bind_tensors(&Tensor::from_parts(dims.clone(), gp.input), s.tensor())?;

        let ra = reverse_grad(&r);
        let ta = self.adv.trace(ra.data());
        let (loss_adv, dla) = softmax_cross_entropy(&ta.logits, label);
        let ga = self.adv.backward(ra.data(), &ta, &dla);
        let dr_adv = reverse_grad_back(&Tensor::from_parts(dims, ga.input));

        Ok(PathGradients {
            loss_pred,
            loss_adv,
            pred_correct: argmax(&tp.logits) == label,
            adv_correct: argmax(&ta.logits) == label,
            dr_pred: dr_pred.clone(),
            dr_adv: dr_adv.clone(),
            backbone_pred: self.backbone_backward(&trace, dr_pred.data()),
            backbone_adv: self.backbone_backward(&trace, dr_adv.data()),
            pred_head: vec![gp.w1, gp.b1, gp.w2, gp.b2],
            adv_head: vec![ga.w1, ga.b1, ga.w2, ga.b2],
        })
    }
}

/// Gradients of one example, split by loss term.
#[derive(Debug, Clone)]
pub struct PathGradients {
    pub loss_pred: f64,
    pub loss_adv: f64,
    pub pred_correct: bool,
    pub adv_correct: bool,
    /// Gradient reaching `r` from the prediction term.
    pub dr_pred: Tensor<f64>,
    /// Gradient reaching `r` from the adversarial term, already reversed.
    pub dr_adv: Tensor<f64>,
    pub backbone_pred: [Vec<f64>; 3],
    pub backbone_adv: [Vec<f64>; 3],
    pub pred_head: Vec<Vec<f64>>,
    pub adv_head: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ExampleGradient {
    pub loss: f64,
    pub pred_correct: bool,
    pub adv_correct: bool,
    /// Same order as [`ToyModel::blocks`].
    pub blocks: Vec<Vec<f64>>,
}

fn check_image(x: &Tensor<f64>) -> Result<()> {
    if x.dims() != [IMAGE_SIDE, IMAGE_SIDE, 1] {
        return Err(Error::shape(format!(
            "toy model takes {IMAGE_SIDE}x{IMAGE_SIDE}x1 images, got {:?}",
            x.dims()
        )));
    }
    Ok(())
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epoch at which the learning rate is multiplied by `decay_factor`.
    pub decay_epoch: usize,
    pub decay_factor: f64,
    /// L2 penalty on both heads' weights.
    pub head_weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            adam: AdamConfig::default(),
            decay_epoch: 40,
            decay_factor: 0.1,
            head_weight_decay: 0.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        let ok = self.batch_size > 0
            && a.lr > 0.0
            && a.eps > 0.0
            && (0.0..1.0).contains(&a.beta1)
            && (0.0..1.0).contains(&a.beta2)
            && self.decay_factor > 0.0
            && self.head_weight_decay >= 0.0
            && [a.lr, a.eps, self.decay_factor, self.head_weight_decay]
                .iter()
                .all(|v| v.is_finite());
        if !ok {
            return Err(Error::param(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.decay_epoch {
            self.adam.lr * self.decay_factor
        } else {
            self.adam.lr
        }
    }
}

/// Epoch averages over the training examples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub pred_acc: f64,
    pub adv_acc: f64,
}

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,pred_acc,adv_acc\n");
    for m in log {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            m.epoch, m.train_loss, m.pred_acc, m.adv_acc
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub log: Vec<EpochMetrics>,
}

/// Secret drawn for position `index` of epoch `epoch`.
fn training_secret(seed: u64, epoch: usize, index: usize) -> Result<Secret<f64>> {
    let stream = RngStream::new(seed).derive(&[TAG_SECRET, epoch as u64, index as u64]);
    Ok(sample_secret(&[IMAGE_SIDE, IMAGE_SIDE, 1], &stream)?.0)
}

pub fn train_csps(data: &SynthDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_csps_with(data, cfg, |_| {})
}

/// Training loop. `on_epoch` sees each epoch's metrics as they are produced.
pub fn train_csps_with(
    data: &SynthDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train = &data.train;
    if train.is_empty() {
        return Err(Error::param("empty training split"));
    }
    let mut model = ToyModel::init(data.classes, cfg.seed);
    let mut params = model.blocks();
    let mut state = AdamState::zeros_like(&params);
    let mut log = Vec::with_capacity(cfg.epochs);
    let n = train.len();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        RngStream::new(cfg.seed)
            .derive(&[TAG_SHUFFLE, epoch as u64])
            .draw(|r| order.shuffle(r));
        let (mut loss_sum, mut pred_hits, mut adv_hits) = (0.0, 0usize, 0usize);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
            let mut batch_loss = 0.0;
            for (offset, &i) in idx.iter().enumerate() {
                let position = batch * cfg.batch_size + offset;
                let s = training_secret(cfg.seed, epoch, position)?;
                let g = match model.example_gradient(&train.images[i], train.labels[i], &s) {
                    Err(Error::NonFinite(_)) => {
                        return Err(Error::Diverged {
                            epoch,
                            batch,
                            param_norm: model.parameter_norm(),
                        })
                    }
                    other => other?,
                };
                batch_loss += g.loss;
                pred_hits += g.pred_correct as usize;
                adv_hits += g.adv_correct as usize;
                for (acc, gb) in grads.iter_mut().zip(&g.blocks) {
                    for (a, v) in acc.iter_mut().zip(gb) {
                        *a += v;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch,
                    param_norm: model.parameter_norm(),
                });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / idx.len() as f64;
            for (b, g) in grads.iter_mut().enumerate() {
                let decay = if is_head_weight(b) { cfg.head_weight_decay } else { 0.0 };
                for (gi, pi) in g.iter_mut().zip(&params[b]) {
                    *gi = *gi * scale + decay * pi;
                }
            }
            adam_step(&mut params, &grads, &mut state, &cfg.adam, cfg.lr_at(epoch))?;
            model = ToyModel::from_blocks(params.clone())?;
            if !model.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch,
                    param_norm: model.parameter_norm(),
                });
            }
        }
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / n as f64,
            pred_acc: pred_hits as f64 / n as f64,
            adv_acc: adv_hits as f64 / n as f64,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} pred {:.3} adv {:.3}",
            m.train_loss,
            m.pred_acc,
            m.adv_acc
        );
        on_epoch(&m);
        log.push(m);
    }
    Ok(TrainOutcome { model, log })
}

/// Dense weight matrices of either head (biases are not decayed).
fn is_head_weight(block: usize) -> bool {
    matches!(block, 3 | 5 | 7 | 9)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    /// Full client/worker path with a fresh secret per example.
    WithSecret,
    /// Adversarial head on the worker output only.
    AdversaryRaw,
    /// Prediction head on the raw image.
    Plain,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::WithSecret => "with_secret",
            EvalMode::AdversaryRaw => "adversary_raw",
            EvalMode::Plain => "plain",
        }
    }
}

/// Accuracy on `split`. Secrets (for the modes that use them) come from
/// `seed` and the example index, so results do not depend on scheduling.
pub fn evaluate(model: &ToyModel, split: &Split, mode: EvalMode, seed: u64) -> Result<f64> {
    let hits: Vec<bool> = (0..split.len())
        .into_par_iter()
        .map(|i| -> Result<bool> {
            let x = &split.images[i];
            check_image(x)?;
            let logits = match mode {
                EvalMode::Plain => model.pred.logits(x.data()),
                EvalMode::WithSecret => return Ok(argmax(&averaged_prediction(model, x, 1, seed, i)?) == split.labels[i]),
                EvalMode::AdversaryRaw => {
                    let s = eval_secret(seed, i, 0)?;
                    let r = model.worker(&crate::vsa::bind(x, &s)?)?;
                    model.adv.logits(r.data())
                }
            };
            Ok(argmax(&logits) == split.labels[i])
        })
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / split.len().max(1) as f64)
}

fn eval_secret(seed: u64, index: usize, replicate: usize) -> Result<Secret<f64>> {
    let stream = RngStream::new(seed).derive(&[TAG_EVAL, index as u64, replicate as u64]);
    Ok(sample_secret(&[IMAGE_SIDE, IMAGE_SIDE, 1], &stream)?.0)
}

/// Mean class probabilities over `k` independent secrets.
pub fn averaged_prediction(
    model: &ToyModel,
    x: &Tensor<f64>,
    k: usize,
    seed: u64,
    index: usize,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    let mut mean = vec![0.0; model.classes()];
    for j in 0..k {
        let p = model.predict_with_secret(x, &eval_secret(seed, index, j)?)?;
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / k as f64;
        }
    }
    Ok(mean)
}

/// Accuracy of [`averaged_prediction`] over `split`.
pub fn evaluate_averaged(model: &ToyModel, split: &Split, k: usize, seed: u64) -> Result<f64> {
    let hits: Vec<bool> = (0..split.len())
        .into_par_iter()
        .map(|i| Ok(argmax(&averaged_prediction(model, &split.images[i], k, seed, i)?) == split.labels[i]))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / split.len().max(1) as f64)
}

/// Worker outputs on freshly bound copies of `split`, as an adversary
/// observing the worker would collect them.
pub fn worker_outputs(model: &ToyModel, split: &Split, seed: u64) -> Result<Vec<Tensor<f64>>> {
    (0..split.len())
        .into_par_iter()
        .map(|i| {
            let s = eval_secret(seed, i, 0)?;
            model.worker(&crate::vsa::bind(&split.images[i], &s)?)
        })
        .collect()
}

/// Freshly bound copies of `split`, drawn with the same secrets as
/// [`worker_outputs`].
pub fn bound_inputs(split: &Split, seed: u64) -> Result<Vec<Tensor<f64>>> {
    (0..split.len())
        .into_par_iter()
        .map(|i| crate::vsa::bind(&split.images[i], &eval_secret(seed, i, 0)?))
        .collect()
}

/// Trains a fresh head (same architecture as the heads above) on fixed
/// feature vectors with the schedule and optimizer of `cfg`.
pub fn fit_head(features: &[Vec<f64>], labels: &[usize], classes: usize, cfg: &TrainConfig) -> Result<Head> {
    cfg.validate()?;
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::param("need matching, non-empty features and labels"));
    }
    if features.iter().any(|f| f.len() != PIXELS) || labels.iter().any(|&l| l >= classes) {
        return Err(Error::param(format!(
            "features must have {PIXELS} entries and labels lie in 0..{classes}"
        )));
    }
    let root = RngStream::new(cfg.seed);
    let mut head = Head::init(classes, &root.derive(&[TAG_INIT, 3]));
    let mut params = vec![head.w1.clone(), head.b1.clone(), head.w2.clone(), head.b2.clone()];
    let mut state = AdamState::zeros_like(&params);
    let n = features.len();
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        root.derive(&[TAG_SHUFFLE, epoch as u64]).draw(|r| order.shuffle(r));
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
            let mut loss = 0.0;
            for &i in idx {
                let t = head.trace(&features[i]);
                let (l, dl) = softmax_cross_entropy(&t.logits, labels[i]);
                loss += l;
                let g = head.backward(&features[i], &t, &dl);
                for (acc, gb) in grads.iter_mut().zip([g.w1, g.b1, g.w2, g.b2]) {
                    for (a, v) in acc.iter_mut().zip(gb) {
                        *a += v;
                    }
                }
            }
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch,
                    param_norm: params.iter().flatten().map(|v| v * v).sum::<f64>().sqrt(),
                });
            }
            let scale = 1.0 / idx.len() as f64;
            for (b, g) in grads.iter_mut().enumerate() {
                let decay = if b % 2 == 0 { cfg.head_weight_decay } else { 0.0 };
                for (gi, pi) in g.iter_mut().zip(&params[b]) {
                    *gi = *gi * scale + decay * pi;
                }
            }
            adam_step(&mut params, &grads, &mut state, &cfg.adam, cfg.lr_at(epoch))?;
            head = Head {
                w1: params[0].clone(),
                b1: params[1].clone(),
                w2: params[2].clone(),
                b2: params[3].clone(),
            };
        }
    }
    Ok(head)
}
