//! Feedforward network with hand-rolled reverse-mode gradients.
//!
//! Supports plain ERM, marginal FRL (adversary predicting A from the
//! representation, trained through a gradient-reversal connection), and
//! class-conditional FRL (adversary additionally sees the one-hot task
//! label, targeting R independent of A given Y). Optimization is AdamW with
//! early stopping on validation worst-group AUC.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::metrics::auc;
use crate::rng;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training data must contain both groups and both classes")]
    MissingGroupOrClass,
    #[error("non-finite loss at epoch {epoch} (diverged)")]
    Diverged { epoch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    fn grad_from_output(&self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Extractor layout: `layer_widths[0]` is the input width and the last
/// entry is the representation width. The task head and (when present) the
/// adversary head both read the representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    /// Index of the layer emitting the representation; the last layer.
    pub representation_index: usize,
}

impl Architecture {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Self {
        let representation_index = layer_widths.len() - 1;
        Architecture {
            layer_widths,
            activation,
            representation_index,
        }
    }

    /// Default architecture for `d` input features.
    pub fn for_input(d: usize) -> Self {
        Architecture::new(vec![d, 64, 32], Activation::Relu)
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn representation_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Erm,
    FrlMarginal,
    FrlConditional,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::FrlMarginal => "frl",
            Method::FrlConditional => "cfrl",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "erm" => Some(Method::Erm),
            "frl" | "frl_marginal" => Some(Method::FrlMarginal),
            "cfrl" | "frl_conditional" => Some(Method::FrlConditional),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Lambda: weight of the reversed adversary gradient on the encoder.
    pub adversarial_coefficient: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_method(method: Method) -> Self {
        TrainConfig {
            method,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            adversarial_coefficient: match method {
                Method::FrlConditional => 0.05,
                _ => 1.0,
            },
            max_epochs: 50,
            patience: 5,
            batch_size: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major (n_out x n_in).
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    fn init<R: Rng>(n_in: usize, n_out: usize, g: &mut R) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let w = (0..n_in * n_out).map(|_| g.gen_range(-bound..bound)).collect();
        let b = (0..n_out).map(|_| g.gen_range(-bound..bound)).collect();
        Dense { n_in, n_out, w, b }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let s: f64 = row.iter().zip(x).map(|(w, x)| w * x).sum();
            out.push(s + self.b[o]);
        }
    }

    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub task_loss: f64,
    pub adversary_loss: f64,
    pub val_worst_group_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub architecture: Architecture,
    pub extractor: Vec<Dense>,
    pub task_head: Dense,
    pub adversary_head: Option<Dense>,
    pub method: Method,
    pub history: Vec<EpochStats>,
    pub stopping_epoch: usize,
}

/// Deterministic fan-in-scaled uniform initialization of the extractor and
/// task head. The adversary head, when a method needs one, is created at
/// the start of training from its own stream of the same seed.
pub fn init_model(arch: &Architecture, seed: u64) -> TrainedModel {
    let mut g = rng::stream(seed, 0x1417);
    let mut extractor = Vec::new();
    for win in arch.layer_widths.windows(2) {
        extractor.push(Dense::init(win[0], win[1], &mut g));
    }
    let task_head = Dense::init(arch.representation_width(), 1, &mut g);
    TrainedModel {
        architecture: arch.clone(),
        extractor,
        task_head,
        adversary_head: None,
        method: Method::Erm,
        history: Vec::new(),
        stopping_epoch: 0,
    }
}

impl TrainedModel {
    pub fn extractor_param_count(&self) -> usize {
        self.extractor.iter().map(Dense::n_params).sum()
    }

    /// Forward pass through the extractor; returns all layer outputs
    /// (activations applied), with the input at index 0.
    fn forward_extractor(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::new();
        for layer in &self.extractor {
            layer.forward(acts.last().unwrap(), &mut pre);
            acts.push(pre.iter().map(|v| self.architecture.activation.apply(*v)).collect());
        }
        acts
    }

    /// Probability of y = 1 and the representation vector for input `x`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
        if x.len() != self.architecture.input_width() {
            return Err(NnError::DimensionMismatch {
                expected: self.architecture.input_width(),
                got: x.len(),
            });
        }
        let acts = self.forward_extractor(x);
        let r = acts.last().unwrap().clone();
        let mut logit = Vec::new();
        self.task_head.forward(&r, &mut logit);
        Ok((sigmoid(logit[0]), r))
    }

    /// Representation matrix, one row per record.
    pub fn extract_representations(&self, d: &Dataset) -> Result<Vec<Vec<f64>>, NnError> {
        (0..d.len())
            .map(|i| self.predict(&d.features(i)).map(|(_, r)| r))
            .collect()
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_string(self).unwrap())
    }

    pub fn load(path: &std::path::Path) -> anyhow::Result<TrainedModel> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn bce(p: f64, y: f64) -> f64 {
    let eps = 1e-12;
    -(y * (p + eps).ln() + (1.0 - y) * (1.0 - p + eps).ln())
}

/// Per-tensor gradient accumulators matching a [`Dense`] layout.
#[derive(Debug, Clone)]
struct DenseGrad {
    w: Vec<f64>,
    b: Vec<f64>,
}

impl DenseGrad {
    fn zeros(d: &Dense) -> Self {
        DenseGrad {
            w: vec![0.0; d.w.len()],
            b: vec![0.0; d.b.len()],
        }
    }
}

/// Gradients of one batch, with the encoder's task-path and adversary-path
/// contributions kept separate so the gradient-reversal combination (and its
/// sign) stays inspectable.
pub struct BatchGrads {
    task_loss: f64,
    adv_loss: f64,
    /// d(task loss)/d(extractor params), per layer.
    enc_task: Vec<DenseGrad>,
    /// d(adversary loss)/d(extractor params), per layer, un-reversed.
    enc_adv: Vec<DenseGrad>,
    task_head: DenseGrad,
    adv_head: Option<DenseGrad>,
}

impl BatchGrads {
    /// Flat d(task loss)/d(extractor) in layer order (w then b per layer).
    pub fn encoder_task_grad(&self) -> Vec<f64> {
        flatten(&self.enc_task)
    }

    /// Flat d(adversary loss)/d(extractor), before reversal.
    pub fn encoder_adversary_grad(&self) -> Vec<f64> {
        flatten(&self.enc_adv)
    }

    pub fn task_loss(&self) -> f64 {
        self.task_loss
    }

    pub fn adversary_loss(&self) -> f64 {
        self.adv_loss
    }
}

fn flatten(grads: &[DenseGrad]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend_from_slice(&g.w);
        out.extend_from_slice(&g.b);
    }
    out
}

/// Backpropagates `dloss_dout` through `layer` at input `input`, adding the
/// parameter gradients to `grad` and returning d(loss)/d(input).
fn backprop_dense(layer: &Dense, input: &[f64], dloss_dout: &[f64], grad: &mut DenseGrad) -> Vec<f64> {
    let mut dinput = vec![0.0; layer.n_in];
    for o in 0..layer.n_out {
        let d = dloss_dout[o];
        if d == 0.0 {
            continue;
        }
        grad.b[o] += d;
        let row = o * layer.n_in;
        for i in 0..layer.n_in {
            grad.w[row + i] += d * input[i];
            dinput[i] += d * layer.w[row + i];
        }
    }
    dinput
}

pub struct Sample {
    pub x: Vec<f64>,
    pub y: u8,
    pub a: u8,
}

pub fn dataset_samples(d: &Dataset) -> Vec<Sample> {
    (0..d.len())
        .map(|i| Sample {
            x: d.features(i),
            y: d.records[i].y,
            a: d.records[i].a,
        })
        .collect()
}

fn adversary_input(r: &[f64], y: u8, method: Method) -> Vec<f64> {
    let mut u = r.to_vec();
    if method == Method::FrlConditional {
        u.push(if y == 0 { 1.0 } else { 0.0 });
        u.push(if y == 1 { 1.0 } else { 0.0 });
    }
    u
}

/// Analytic batch gradients for the model under `method`. Losses are means
/// over the batch.
pub fn compute_grads(model: &TrainedModel, batch: &[Sample], method: Method) -> BatchGrads {
    let act = model.architecture.activation;
    let n = batch.len() as f64;
    let mut enc_task: Vec<DenseGrad> = model.extractor.iter().map(DenseGrad::zeros).collect();
    let mut enc_adv: Vec<DenseGrad> = model.extractor.iter().map(DenseGrad::zeros).collect();
    let mut task_head = DenseGrad::zeros(&model.task_head);
    let mut adv_head = model.adversary_head.as_ref().map(DenseGrad::zeros);
    let mut task_loss = 0.0;
    let mut adv_loss = 0.0;

    for s in batch {
        let acts = model.forward_extractor(&s.x);
        let r = acts.last().unwrap();
        let mut logit = Vec::new();
        model.task_head.forward(r, &mut logit);
        let p = sigmoid(logit[0]);
        task_loss += bce(p, s.y as f64) / n;
        let dlogit = (p - s.y as f64) / n;
        let dr_task = backprop_dense(&model.task_head, r, &[dlogit], &mut task_head);

        // Adversary path: gradient of the adversary loss wrt the
        // representation, routed back through the extractor separately.
        let dr_adv = if let (Some(adv), Some(adv_grad)) = (&model.adversary_head, adv_head.as_mut())
        {
            let u = adversary_input(r, s.y, method);
            let mut alogit = Vec::new();
            adv.forward(&u, &mut alogit);
            let pa = sigmoid(alogit[0]);
            adv_loss += bce(pa, s.a as f64) / n;
            let dalogit = (pa - s.a as f64) / n;
            let du = backprop_dense(adv, &u, &[dalogit], adv_grad);
            Some(du[..r.len()].to_vec())
        } else {
            None
        };

        // Backprop each path through the extractor.
        for (path_grad, mut delta) in [
            (&mut enc_task, Some(dr_task)),
            (&mut enc_adv, dr_adv),
        ] {
            let Some(mut d) = delta.take() else { continue };
            for (li, layer) in model.extractor.iter().enumerate().rev() {
                for (dk, out) in d.iter_mut().zip(&acts[li + 1]) {
                    *dk *= act.grad_from_output(*out);
                }
                d = backprop_dense(layer, &acts[li], &d, &mut path_grad[li]);
            }
        }
    }

    BatchGrads {
        task_loss,
        adv_loss,
        enc_task,
        enc_adv,
        task_head,
        adv_head,
    }
}

/// AdamW state for one tensor.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig, t: usize) {
        let eps = 1e-8;
        let bc1 = 1.0 - cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(t as i32);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grads[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= cfg.lr * (mhat / (vhat.sqrt() + eps) + cfg.weight_decay * params[i]);
        }
    }
}

fn worst_group_auc(model: &TrainedModel, val: &[Sample]) -> f64 {
    let mut scores: Vec<(f64, u8, u8)> = Vec::with_capacity(val.len());
    for s in val {
        let (p, _) = model.predict(&s.x).expect("dimension checked at entry");
        scores.push((p, s.y, s.a));
    }
    let mut worst = f64::INFINITY;
    for a in 0..2u8 {
        let group: Vec<(f64, u8)> = scores
            .iter()
            .filter(|(_, _, ga)| *ga == a)
            .map(|(p, y, _)| (*p, *y))
            .collect();
        if let Some(v) = auc(&group) {
            worst = worst.min(v);
        }
    }
    if worst.is_finite() {
        worst
    } else {
        auc(&scores.iter().map(|(p, y, _)| (*p, *y)).collect::<Vec<_>>()).unwrap_or(0.5)
    }
}

/// Sets the model's method and, for adversarial methods, attaches a freshly
/// initialized adversary head from its own seed stream. The stream is
/// separate from the extractor's, so ERM and FRL initializations share
/// extractor and task-head weights exactly.
pub fn attach_adversary(model: &mut TrainedModel, method: Method, seed: u64) {
    model.method = method;
    if method != Method::Erm {
        let adv_in = model.architecture.representation_width()
            + if method == Method::FrlConditional { 2 } else { 0 };
        let mut g = rng::stream(seed, 0xADD5);
        model.adversary_head = Some(Dense::init(adv_in, 1, &mut g));
    }
}

/// Trains a model under the configured method.
///
/// The encoder receives the task gradient plus, for FRL methods, minus
/// lambda times the adversary's gradient through the representation; the
/// adversary head itself descends its own loss. Early stopping monitors
/// validation worst-group AUC and returns the weights of the best epoch
/// (earliest epoch on ties).
pub fn train(
    train: &Dataset,
    val: &Dataset,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<TrainedModel, NnError> {
    if train.is_empty() || val.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    if !(train.has_group(0) && train.has_group(1) && train.has_class(0) && train.has_class(1)) {
        return Err(NnError::MissingGroupOrClass);
    }
    let train_samples = dataset_samples(train);
    let val_samples = dataset_samples(val);
    if train_samples[0].x.len() != arch.input_width() {
        return Err(NnError::DimensionMismatch {
            expected: arch.input_width(),
            got: train_samples[0].x.len(),
        });
    }

    let mut model = init_model(arch, cfg.seed);
    attach_adversary(&mut model, cfg.method, cfg.seed);

    let batch_size = cfg.batch_size.min(train_samples.len()).max(1);
    let lambda = cfg.adversarial_coefficient;
    let mut opt_enc: Vec<Adam> = model.extractor.iter().map(|l| Adam::new(l.n_params())).collect();
    let mut opt_task = Adam::new(model.task_head.n_params());
    let mut opt_adv = model.adversary_head.as_ref().map(|l| Adam::new(l.n_params()));

    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let mut shuffle_rng = rng::stream(cfg.seed, 0x0BA7C);
    let mut best: Option<(f64, usize, TrainedModel)> = None;
    let mut t = 0usize;

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_task = 0.0;
        let mut epoch_adv = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| Sample {
                    x: train_samples[i].x.clone(),
                    y: train_samples[i].y,
                    a: train_samples[i].a,
                })
                .collect();
            let grads = compute_grads(&model, &batch, cfg.method);
            epoch_task += grads.task_loss;
            epoch_adv += grads.adv_loss;
            batches += 1.0;
            if !grads.task_loss.is_finite() || !grads.adv_loss.is_finite() {
                return Err(NnError::Diverged { epoch });
            }
            t += 1;
            // Encoder update: task gradient plus the lambda-scaled,
            // sign-reversed adversary gradient.
            for (li, layer) in model.extractor.iter_mut().enumerate() {
                let gt = &grads.enc_task[li];
                let ga = &grads.enc_adv[li];
                let mut flat_g: Vec<f64> = gt
                    .w
                    .iter()
                    .zip(&ga.w)
                    .map(|(t, a)| t - lambda * a)
                    .collect();
                flat_g.extend(gt.b.iter().zip(&ga.b).map(|(t, a)| t - lambda * a));
                let mut flat_p: Vec<f64> = layer.w.clone();
                flat_p.extend_from_slice(&layer.b);
                opt_enc[li].step(&mut flat_p, &flat_g, cfg, t);
                let (w, b) = flat_p.split_at(layer.w.len());
                layer.w.copy_from_slice(w);
                layer.b.copy_from_slice(b);
            }
            let mut flat_g = grads.task_head.w.clone();
            flat_g.extend_from_slice(&grads.task_head.b);
            let th = &mut model.task_head;
            let mut flat_p = th.w.clone();
            flat_p.extend_from_slice(&th.b);
            opt_task.step(&mut flat_p, &flat_g, cfg, t);
            let (w, b) = flat_p.split_at(th.w.len());
            th.w.copy_from_slice(w);
            th.b.copy_from_slice(b);
            if let (Some(adv), Some(opt), Some(ag)) =
                (model.adversary_head.as_mut(), opt_adv.as_mut(), grads.adv_head.as_ref())
            {
                let mut flat_g = ag.w.clone();
                flat_g.extend_from_slice(&ag.b);
                let mut flat_p = adv.w.clone();
                flat_p.extend_from_slice(&adv.b);
                opt.step(&mut flat_p, &flat_g, cfg, t);
                let (w, b) = flat_p.split_at(adv.w.len());
                adv.w.copy_from_slice(w);
                adv.b.copy_from_slice(b);
            }
        }

        let val_auc = worst_group_auc(&model, &val_samples);
        model.history.push(EpochStats {
            task_loss: epoch_task / batches,
            adversary_loss: epoch_adv / batches,
            val_worst_group_auc: val_auc,
        });
        let improved = best.as_ref().map_or(true, |(b, _, _)| val_auc > *b);
        if improved {
            let mut snap = model.clone();
            snap.stopping_epoch = epoch;
            best = Some((val_auc, epoch, snap));
        } else if epoch - best.as_ref().unwrap().1 >= cfg.patience {
            break;
        }
    }

    let history = model.history.clone();
    let (_, stop, mut out) = best.expect("at least one epoch ran");
    out.history = history;
    out.stopping_epoch = stop;
    Ok(out)
}

/// Compares every analytic partial derivative against central finite
/// differences with step `eps`. Covers the task path (extractor and task
/// head against the task loss), the adversary head against the adversary
/// loss, and the encoder-side adversary path (whose reversal is a fixed
/// -lambda scaling checked separately). Returns the max relative error.
pub fn grad_check(model: &TrainedModel, batch: &[Sample], eps: f64) -> f64 {
    let method = model.method;
    let analytic = compute_grads(model, batch, method);
    let mut max_err: f64 = 0.0;
    let mut rel = |a: f64, fd: f64| {
        let scale = a.abs().max(fd.abs()).max(1e-6);
        max_err = max_err.max((a - fd).abs() / scale);
    };

    // Finite difference of a loss under a single-parameter perturbation.
    let fd_loss = |mutate: &dyn Fn(&mut TrainedModel, f64), which_task: bool| -> f64 {
        let mut plus = model.clone();
        mutate(&mut plus, eps);
        let mut minus = model.clone();
        mutate(&mut minus, -eps);
        let lp = compute_grads(&plus, batch, method);
        let lm = compute_grads(&minus, batch, method);
        if which_task {
            (lp.task_loss - lm.task_loss) / (2.0 * eps)
        } else {
            (lp.adv_loss - lm.adv_loss) / (2.0 * eps)
        }
    };

    for li in 0..model.extractor.len() {
        for wi in 0..model.extractor[li].w.len() {
            let fd_t = fd_loss(&|m, e| m.extractor[li].w[wi] += e, true);
            rel(analytic.enc_task[li].w[wi], fd_t);
            if model.adversary_head.is_some() {
                let fd_a = fd_loss(&|m, e| m.extractor[li].w[wi] += e, false);
                rel(analytic.enc_adv[li].w[wi], fd_a);
            }
        }
        for bi in 0..model.extractor[li].b.len() {
            let fd_t = fd_loss(&|m, e| m.extractor[li].b[bi] += e, true);
            rel(analytic.enc_task[li].b[bi], fd_t);
            if model.adversary_head.is_some() {
                let fd_a = fd_loss(&|m, e| m.extractor[li].b[bi] += e, false);
                rel(analytic.enc_adv[li].b[bi], fd_a);
            }
        }
    }
    for wi in 0..model.task_head.w.len() {
        rel(analytic.task_head.w[wi], fd_loss(&|m, e| m.task_head.w[wi] += e, true));
    }
    rel(analytic.task_head.b[0], fd_loss(&|m, e| m.task_head.b[0] += e, true));
    if let Some(ag) = &analytic.adv_head {
        let nw = ag.w.len();
        for wi in 0..nw {
            rel(
                ag.w[wi],
                fd_loss(&|m, e| m.adversary_head.as_mut().unwrap().w[wi] += e, false),
            );
        }
        rel(
            ag.b[0],
            fd_loss(&|m, e| m.adversary_head.as_mut().unwrap().b[0] += e, false),
        );
    }
    max_err
}
