//! Training-Time Matching: teacher training on real data, soft labels, and
//! student training on distilled data against the teacher's temperature-
//! scaled predictions, plus the hard-label baseline.
//!
//! Per minibatch the teacher is evaluated online on exactly the augmented
//! view the student sees, so the matching happens at every epoch.

pub mod augment;

use crate::dataio::{Checkpoint, ImageDataset};
use crate::error::{Error, Result};
use crate::numerics::{cosine_lr, kernels, Activation, AdamW, AdamWConfig, Mlp, StreamRng, Tape, Tensor};

pub use augment::{random_resized_crop, CropConfig};

/// Image classifier MLP with its penultimate activations exposed as the
/// feature space for evaluation metrics.
#[derive(Debug, Clone)]
pub struct ClassifierNet {
    pub net: Mlp,
}

impl ClassifierNet {
    pub fn new(input_width: usize, hidden: &[usize], num_classes: usize, rng: &StreamRng) -> Self {
        let mut dims = vec![input_width];
        dims.extend_from_slice(hidden);
        dims.push(num_classes);
        ClassifierNet { net: Mlp::new(&dims, Activation::Relu, Activation::Identity, rng) }
    }

    pub fn num_classes(&self) -> usize {
        self.net.output_width()
    }

    pub fn input_width(&self) -> usize {
        self.net.input_width()
    }

    /// Logit rows for `[N, input_width]` image rows.
    pub fn logits(&self, images: &Tensor) -> Tensor {
        self.net.forward(images)
    }

    /// Penultimate (post-activation) feature rows.
    pub fn features(&self, images: &Tensor) -> Tensor {
        self.net.forward_upto(images, self.net.layers.len() - 1)
    }

    pub fn feature_width(&self) -> usize {
        let layers = &self.net.layers;
        layers[layers.len() - 1].weight.shape[0]
    }

    pub fn to_checkpoint(&self, prefix: &str) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new();
        for (name, t) in self.net.named_params(prefix) {
            ckpt.insert(&name, t)?;
        }
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, prefix: &str) -> Result<Self> {
        let net = crate::autoencoder::mlp_from_checkpoint(ckpt, prefix, Activation::Relu, Activation::Identity)?;
        Ok(ClassifierNet { net })
    }
}

/// Shared optimizer/augmentation settings for teacher and student runs.
#[derive(Debug, Clone)]
pub struct KDConfig {
    pub temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub hidden: [usize; 2],
    pub augment: bool,
    pub crop_min_scale: f64,
}

impl Default for KDConfig {
    fn default() -> Self {
        KDConfig {
            temperature: 20.0,
            epochs: 500,
            batch_size: 100,
            lr: 1e-3,
            lr_min: 1e-5,
            weight_decay: 0.01,
            hidden: [256, 64],
            augment: true,
            crop_min_scale: 0.08,
        }
    }
}

impl KDConfig {
    fn crop_config(&self) -> CropConfig {
        CropConfig { min_scale: self.crop_min_scale, max_scale: 1.0 }
    }
}

/// Temperature-scaled probability rows `softmax(logits / temperature)`.
pub fn soft_labels(teacher: &ClassifierNet, images: &Tensor, temperature: f64) -> Result<Tensor> {
    if temperature <= 0.0 {
        return Err(Error::InvalidArgument {
            op: "soft_labels",
            msg: format!("temperature {temperature} must be positive"),
        });
    }
    let logits = teacher.logits(images);
    let scaled: Vec<f64> = logits.data.iter().map(|v| v / temperature).collect();
    let data = kernels::softmax_rows(&scaled, logits.width());
    Ok(Tensor { shape: logits.shape, data, requires_grad: false })
}

/// Distillation loss `T^2 * mean_rows KL(softmax(t/T) || softmax(s/T))`,
/// computed directly (no tape); the taped twin lives in [`train_student`].
pub fn kd_loss(teacher_logits: &Tensor, student_logits: &Tensor, temperature: f64) -> f64 {
    assert_eq!(teacher_logits.shape, student_logits.shape, "kd_loss shape mismatch");
    assert!(temperature > 0.0, "temperature must be positive");
    let w = teacher_logits.width();
    let t_scaled: Vec<f64> = teacher_logits.data.iter().map(|v| v / temperature).collect();
    let s_scaled: Vec<f64> = student_logits.data.iter().map(|v| v / temperature).collect();
    let log_p = kernels::log_softmax_rows(&t_scaled, w);
    let log_q = kernels::log_softmax_rows(&s_scaled, w);
    let rows = teacher_logits.rows() as f64;
    let kl: f64 = log_p.iter().zip(&log_q).map(|(lp, lq)| lp.exp() * (lp - lq)).sum();
    temperature * temperature * kl / rows
}

struct EpochLoop<'a> {
    dataset: &'a ImageDataset,
    config: &'a KDConfig,
    shuffle_rng: StreamRng,
    augment_rng: StreamRng,
}

impl<'a> EpochLoop<'a> {
    fn new(dataset: &'a ImageDataset, config: &'a KDConfig, rng: &StreamRng) -> Self {
        EpochLoop {
            dataset,
            config,
            shuffle_rng: rng.substream("shuffle"),
            augment_rng: rng.substream("augment"),
        }
    }

    /// Visit each minibatch of one epoch with its (possibly augmented) view.
    fn for_each_batch(&mut self, mut f: impl FnMut(&Tensor, &[usize]) -> Result<()>) -> Result<()> {
        let n = self.dataset.len();
        let mut order: Vec<usize> = (0..n).collect();
        self.shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(self.config.batch_size.max(1)) {
            let rows = self.dataset.to_unit_rows_indexed(chunk);
            let view = if self.config.augment {
                random_resized_crop(
                    &rows,
                    self.dataset.height,
                    self.dataset.width,
                    self.dataset.channels,
                    &self.config.crop_config(),
                    &mut self.augment_rng,
                )
            } else {
                rows
            };
            let labels: Vec<usize> = chunk.iter().map(|&i| self.dataset.labels[i] as usize).collect();
            f(&view, &labels)?;
        }
        Ok(())
    }
}

/// The deterministic initial student (or teacher) network for a run seed.
pub fn init_classifier(dataset: &ImageDataset, config: &KDConfig, seed: u64, role: &str) -> ClassifierNet {
    let rng = StreamRng::new(seed).substream("ttm").substream(role);
    ClassifierNet::new(dataset.pixels_per_image(), &config.hidden, dataset.num_categories(), &rng)
}

fn run_classifier_training(
    dataset: &ImageDataset,
    config: &KDConfig,
    seed: u64,
    role: &str,
    mut batch_loss: impl FnMut(&mut Tape, &crate::numerics::BoundMlp, &Tensor, &[usize]) -> Result<crate::numerics::VarId>,
) -> Result<(ClassifierNet, Vec<f64>)> {
    let rng = StreamRng::new(seed).substream("ttm").substream(role);
    let mut model = ClassifierNet::new(dataset.pixels_per_image(), &config.hidden, dataset.num_categories(), &rng);
    let mut opt = AdamW::new(AdamWConfig { lr: config.lr, weight_decay: config.weight_decay, ..Default::default() });

    let batches_per_epoch = dataset.len().div_ceil(config.batch_size.max(1));
    let total_steps = config.epochs * batches_per_epoch;
    let mut looper = EpochLoop::new(dataset, config, &rng);
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        looper.for_each_batch(|view, labels| {
            opt.set_lr(cosine_lr(step, total_steps, config.lr, config.lr_min));
            step += 1;

            let mut tape = Tape::new();
            let bound = model.net.bind(&mut tape);
            let loss = batch_loss(&mut tape, &bound, view, labels)?;
            let loss_val = tape.value(loss).item();
            if !loss_val.is_finite() {
                return Err(Error::Diverged { unit: "epoch", index: epoch });
            }
            epoch_loss += loss_val * labels.len() as f64;
            seen += labels.len();

            let store = tape.backward(loss)?;
            let ids = bound.named_ids(role);
            let grads: Vec<Tensor> = ids.iter().map(|(_, id)| store.get(*id)).collect();
            let mut params = model.net.named_params_mut(role);
            opt.step(&mut params, &grads)
        })?;
        history.push(epoch_loss / seen as f64);
    }
    Ok((model, history))
}

/// Cross-entropy training on real data; the resulting network is frozen and
/// reused as the soft-label source.
pub fn train_teacher(real: &ImageDataset, config: &KDConfig, seed: u64) -> Result<(ClassifierNet, Vec<f64>)> {
    run_classifier_training(real, config, seed, "teacher", |tape, bound, view, labels| {
        let x = tape.leaf(view.clone());
        let logits = bound.forward(tape, x)?;
        let lp = tape.log_softmax(logits);
        tape.nll_loss(lp, labels)
    })
}

/// Soft-label student: per augmented view, match the teacher's
/// temperature-scaled distribution under the scaled KL objective. No
/// hard-label term.
pub fn train_student(
    distilled: &ImageDataset,
    teacher: &ClassifierNet,
    config: &KDConfig,
    seed: u64,
) -> Result<(ClassifierNet, Vec<f64>)> {
    let tau = config.temperature;
    if tau <= 0.0 {
        return Err(Error::InvalidArgument { op: "train_student", msg: format!("temperature {tau} must be positive") });
    }
    run_classifier_training(distilled, config, seed, "student", |tape, bound, view, _labels| {
        let teacher_logits = teacher.logits(view);
        let x = tape.leaf(view.clone());
        let student_logits = bound.forward(tape, x)?;
        let s_scaled = tape.mul_scalar(student_logits, 1.0 / tau);
        let log_q = tape.log_softmax(s_scaled);
        let t = tape.leaf(teacher_logits);
        let t_scaled = tape.mul_scalar(t, 1.0 / tau);
        let log_p = tape.log_softmax(t_scaled);
        let kl = tape.kl_div(log_p, log_q)?;
        Ok(tape.mul_scalar(kl, tau * tau))
    })
}

/// Hard-label baseline: the same loop with cross-entropy on stored labels.
pub fn train_student_hard(
    distilled: &ImageDataset,
    config: &KDConfig,
    seed: u64,
) -> Result<(ClassifierNet, Vec<f64>)> {
    run_classifier_training(distilled, config, seed, "student", |tape, bound, view, labels| {
        let x = tape.leaf(view.clone());
        let logits = bound.forward(tape, x)?;
        let lp = tape.log_softmax(logits);
        tape.nll_loss(lp, labels)
    })
}
