//! Perceptual-compression pair: encode images into a compact latent space
//! and decode latents back to images.
//!
//! Deterministic MLP autoencoder trained with plain reconstruction MSE.
//! After training, per-dimension latent statistics over the train set are
//! stored so downstream stages can work in a standardized latent space and
//! restore the affine before decoding.

use crate::dataio::{Checkpoint, ImageDataset};
use crate::error::{Error, Result};
use crate::numerics::{cosine_lr, Activation, AdamW, AdamWConfig, Mlp, StreamRng, Tape, Tensor};

/// Latent rows paired with their category labels.
#[derive(Debug, Clone)]
pub struct LatentBatch {
    /// `[N, d_z]`
    pub latents: Tensor,
    pub labels: Vec<usize>,
    pub num_categories: usize,
}

impl LatentBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.latents.width()
    }

    /// Row indices belonging to `category`.
    pub fn indices_of(&self, category: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == category)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct AeConfig {
    pub latent_dim: usize,
    pub hidden: [usize; 2],
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            latent_dim: 32,
            hidden: [256, 128],
            epochs: 40,
            batch_size: 64,
            lr: 1e-3,
            lr_min: 1e-5,
            weight_decay: 0.0,
        }
    }
}

/// Trained encoder/decoder pair plus the latent standardization affine.
#[derive(Debug, Clone)]
pub struct AePair {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_mean: Vec<f64>,
    pub latent_std: Vec<f64>,
}

impl AePair {
    pub fn latent_dim(&self) -> usize {
        self.encoder.output_width()
    }

    pub fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    fn new_untrained(input_width: usize, config: &AeConfig, rng: &StreamRng) -> Self {
        let enc_dims = [input_width, config.hidden[0], config.hidden[1], config.latent_dim];
        let dec_dims = [config.latent_dim, config.hidden[1], config.hidden[0], input_width];
        AePair {
            encoder: Mlp::new(&enc_dims, Activation::Silu, Activation::Identity, &rng.substream("encoder")),
            decoder: Mlp::new(&dec_dims, Activation::Silu, Activation::Sigmoid, &rng.substream("decoder")),
            latent_mean: vec![0.0; config.latent_dim],
            latent_std: vec![1.0; config.latent_dim],
        }
    }

    /// Encode a dataset into raw (unstandardized) latent rows.
    pub fn encode(&self, images: &ImageDataset) -> Result<LatentBatch> {
        if images.pixels_per_image() != self.input_width() {
            return Err(Error::ShapeMismatch {
                op: "encode",
                lhs: vec![images.len(), images.pixels_per_image()],
                rhs: vec![images.len(), self.input_width()],
            });
        }
        let latents = self.encoder.forward(&images.to_unit_rows());
        Ok(LatentBatch { latents, labels: images.labels_usize(), num_categories: images.num_categories() })
    }

    /// Map raw latents to the standardized space (mean 0, std 1 per
    /// dimension over the train set).
    pub fn standardize(&self, latents: &Tensor) -> Tensor {
        self.affine_latents(latents, |v, m, s| (v - m) / s)
    }

    /// Inverse of [`AePair::standardize`].
    pub fn destandardize(&self, latents: &Tensor) -> Tensor {
        self.affine_latents(latents, |v, m, s| v * s + m)
    }

    fn affine_latents(&self, latents: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
        let d = self.latent_dim();
        assert_eq!(latents.width(), d, "latent width mismatch");
        let mut out = latents.clone();
        for row in out.data.chunks_exact_mut(d) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = f(*v, self.latent_mean[j], self.latent_std[j]);
            }
        }
        out
    }

    /// Decode raw latent rows to images in `[0, 1]`.
    pub fn decode(&self, latents: &Tensor) -> Result<Tensor> {
        if latents.width() != self.latent_dim() {
            return Err(Error::ShapeMismatch {
                op: "decode",
                lhs: latents.shape.clone(),
                rhs: vec![latents.rows(), self.latent_dim()],
            });
        }
        Ok(self.decoder.forward(latents))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new();
        for (name, t) in self.encoder.named_params("ae.enc") {
            ckpt.insert(&name, t)?;
        }
        for (name, t) in self.decoder.named_params("ae.dec") {
            ckpt.insert(&name, t)?;
        }
        ckpt.insert("ae.latent_mean", &Tensor::new(vec![self.latent_dim()], self.latent_mean.clone())?)?;
        ckpt.insert("ae.latent_std", &Tensor::new(vec![self.latent_dim()], self.latent_std.clone())?)?;
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let encoder = mlp_from_checkpoint(ckpt, "ae.enc", Activation::Silu, Activation::Identity)?;
        let decoder = mlp_from_checkpoint(ckpt, "ae.dec", Activation::Silu, Activation::Sigmoid)?;
        let latent_mean = ckpt.get_tensor("ae.latent_mean")?.data;
        let latent_std = ckpt.get_tensor("ae.latent_std")?.data;
        Ok(AePair { encoder, decoder, latent_mean, latent_std })
    }
}

/// Rebuild an [`Mlp`] whose layers were stored as `{prefix}.{i}.weight/bias`.
pub fn mlp_from_checkpoint(
    ckpt: &Checkpoint,
    prefix: &str,
    hidden: Activation,
    output: Activation,
) -> Result<Mlp> {
    let mut layers = Vec::new();
    for i in 0.. {
        let wname = format!("{prefix}.{i}.weight");
        if ckpt.get(&wname).is_none() {
            break;
        }
        let weight = ckpt.get_tensor(&wname)?.with_grad();
        let bias = ckpt.get_tensor(&format!("{prefix}.{i}.bias"))?.with_grad();
        layers.push(crate::numerics::Linear { weight, bias });
    }
    if layers.is_empty() {
        return Err(Error::InvalidArgument {
            op: "mlp_from_checkpoint",
            msg: format!("no layers under prefix {prefix:?}"),
        });
    }
    Ok(Mlp { layers, hidden_activation: hidden, output_activation: output })
}

/// Train the pair on reconstruction MSE. Returns the pair and the per-epoch
/// mean loss history.
pub fn train_autoencoder(
    dataset: &ImageDataset,
    config: &AeConfig,
    seed: u64,
) -> Result<(AePair, Vec<f64>)> {
    let rng = StreamRng::new(seed).substream("autoencoder");
    let mut ae = AePair::new_untrained(dataset.pixels_per_image(), config, &rng);

    let n = dataset.len();
    let batch = config.batch_size.max(1).min(n);
    let batches_per_epoch = n.div_ceil(batch);
    let total_steps = config.epochs * batches_per_epoch;

    let mut opt = AdamW::new(AdamWConfig { lr: config.lr, weight_decay: config.weight_decay, ..Default::default() });
    let mut shuffle_rng = rng.substream("shuffle");
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        shuffle_rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let input = dataset.to_unit_rows_indexed(chunk);
            opt.set_lr(cosine_lr(step, total_steps, config.lr, config.lr_min));
            step += 1;

            let mut tape = Tape::new();
            let enc = ae.encoder.bind(&mut tape);
            let dec = ae.decoder.bind(&mut tape);
            let x = tape.leaf(input);
            let z = enc.forward(&mut tape, x)?;
            let recon = dec.forward(&mut tape, z)?;
            let loss = tape.mse_loss(recon, x)?;
            let loss_val = tape.value(loss).item();
            if !loss_val.is_finite() {
                return Err(Error::Diverged { unit: "epoch", index: epoch });
            }
            epoch_loss += loss_val * chunk.len() as f64;

            let store = tape.backward(loss)?;
            let mut ids = enc.named_ids("enc");
            ids.extend(dec.named_ids("dec"));
            let grads: Vec<Tensor> = ids.iter().map(|(_, id)| store.get(*id)).collect();
            let mut params = ae.encoder.named_params_mut("enc");
            params.extend(ae.decoder.named_params_mut("dec"));
            opt.step(&mut params, &grads)?;
        }
        history.push(epoch_loss / n as f64);
    }

    let stats_source = ae.encode(dataset)?;
    let (mean, std) = latent_stats(&stats_source.latents);
    ae.latent_mean = mean;
    ae.latent_std = std;
    Ok((ae, history))
}

/// Per-dimension mean and standard deviation; std is floored at 1e-8 so
/// degenerate dimensions stay invertible.
fn latent_stats(latents: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (latents.rows(), latents.width());
    let mut mean = vec![0.0; d];
    for row in latents.data.chunks_exact(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for row in latents.data.chunks_exact(d) {
        for (j, v) in row.iter().enumerate() {
            let c = v - mean[j];
            var[j] += c * c;
        }
    }
    let std = var.iter().map(|&v| (v / n as f64).sqrt().max(1e-8)).collect();
    (mean, std)
}

/// Single affine layer from latents to category logits; the class-structure
/// probe used to judge latent quality and sampler conditioning.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub net: Mlp,
}

impl LinearProbe {
    pub fn predict(&self, latents: &Tensor) -> Vec<usize> {
        let logits = self.net.forward(latents);
        let k = logits.width();
        logits.data.chunks_exact(k).map(crate::numerics::kernels::argmax).collect()
    }

    pub fn accuracy(&self, latents: &Tensor, labels: &[usize]) -> f64 {
        let predictions = self.predict(latents);
        let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
        hits as f64 / labels.len() as f64
    }
}

/// Fit a linear probe by full-batch cross-entropy.
pub fn train_linear_probe(batch: &LatentBatch, epochs: usize, seed: u64) -> Result<LinearProbe> {
    let rng = StreamRng::new(seed).substream("probe");
    let mut net = Mlp::new(
        &[batch.latent_dim(), batch.num_categories],
        Activation::Identity,
        Activation::Identity,
        &rng,
    );
    let mut opt = AdamW::new(AdamWConfig { lr: 0.05, weight_decay: 0.0, ..Default::default() });

    for epoch in 0..epochs {
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let x = tape.leaf(batch.latents.clone());
        let logits = bound.forward(&mut tape, x)?;
        let lp = tape.log_softmax(logits);
        let loss = tape.nll_loss(lp, &batch.labels)?;
        if !tape.value(loss).item().is_finite() {
            return Err(Error::Diverged { unit: "epoch", index: epoch });
        }
        let store = tape.backward(loss)?;
        let ids = bound.named_ids("probe");
        let grads: Vec<Tensor> = ids.iter().map(|(_, id)| store.get(*id)).collect();
        let mut params = net.named_params_mut("probe");
        opt.step(&mut params, &grads)?;
    }
    Ok(LinearProbe { net })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::generate_shapes;

    fn tiny_dataset() -> ImageDataset {
        generate_shapes(12, 3, 16, 16, 4.0, 5).unwrap()
    }

    fn tiny_config() -> AeConfig {
        AeConfig { latent_dim: 8, hidden: [32, 16], epochs: 3, batch_size: 12, ..Default::default() }
    }

    #[test]
    fn encode_shape_contract_and_purity() {
        let data = tiny_dataset();
        let (ae, _) = train_autoencoder(&data, &tiny_config(), 1).unwrap();
        let a = ae.encode(&data).unwrap();
        let b = ae.encode(&data).unwrap();
        assert_eq!(a.latents.shape, vec![36, 8]);
        assert_eq!(a.latents.data, b.latents.data);
        assert_eq!(a.labels, data.labels_usize());
    }

    #[test]
    fn encode_rejects_wrong_input_shape() {
        let data = tiny_dataset();
        let (ae, _) = train_autoencoder(&data, &tiny_config(), 1).unwrap();
        let other = generate_shapes(2, 2, 8, 8, 0.0, 1).unwrap();
        assert!(matches!(ae.encode(&other), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn decode_output_in_unit_range_and_shape_roundtrip() {
        let data = tiny_dataset();
        let (ae, _) = train_autoencoder(&data, &tiny_config(), 1).unwrap();
        let zero = Tensor::zeros(vec![1, 8]);
        let img = ae.decode(&zero).unwrap();
        assert_eq!(img.shape, vec![1, 256]);
        assert!(img.data.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let enc = ae.encode(&data).unwrap();
        let dec = ae.decode(&enc.latents).unwrap();
        assert_eq!(dec.shape, vec![data.len(), data.pixels_per_image()]);
        assert!(ae.decode(&Tensor::zeros(vec![1, 5])).is_err());
    }

    #[test]
    fn training_is_deterministic_and_loss_falls() {
        let data = tiny_dataset();
        let mut cfg = tiny_config();
        cfg.epochs = 8;
        let (_, h1) = train_autoencoder(&data, &cfg, 3).unwrap();
        let (_, h2) = train_autoencoder(&data, &cfg, 3).unwrap();
        assert_eq!(h1, h2);
        assert!(h1.last().unwrap() < h1.first().unwrap());
    }

    #[test]
    fn zero_epochs_returns_untrained_pair_and_empty_history() {
        let data = tiny_dataset();
        let mut cfg = tiny_config();
        cfg.epochs = 0;
        let (ae, history) = train_autoencoder(&data, &cfg, 1).unwrap();
        assert!(history.is_empty());
        assert_eq!(ae.latent_dim(), 8);
    }

    #[test]
    fn standardize_roundtrip() {
        let data = tiny_dataset();
        let (ae, _) = train_autoencoder(&data, &tiny_config(), 1).unwrap();
        let z = ae.encode(&data).unwrap().latents;
        let s = ae.standardize(&z);
        // Standardized train latents have mean ~0, std ~1 per dimension.
        let (m, sd) = latent_stats(&s);
        assert!(m.iter().all(|v| v.abs() < 1e-9));
        assert!(sd.iter().all(|v| (v - 1.0).abs() < 1e-9));
        let back = ae.destandardize(&s);
        for (a, b) in back.data.iter().zip(&z.data) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_forward_at_f32() {
        let data = tiny_dataset();
        let (ae, _) = train_autoencoder(&data, &tiny_config(), 1).unwrap();
        let ckpt = ae.to_checkpoint().unwrap();
        let back = AePair::from_checkpoint(&ckpt).unwrap();
        assert_eq!(back.latent_dim(), ae.latent_dim());
        assert_eq!(back.encoder.layers.len(), ae.encoder.layers.len());
        // f32 narrowing means values match at f32 precision exactly.
        for (a, b) in ae.encoder.layers[0].weight.data.iter().zip(&back.encoder.layers[0].weight.data) {
            assert_eq!(*a as f32, *b as f32);
        }
    }
}
