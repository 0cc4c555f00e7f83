//! Noise-prediction network and the label-conditioning table.
//!
//! The denoiser is an MLP over `concat(z_t, time_embedding(t), label_embedding)`;
//! conditioning enters by concatenation. The embedding table carries one
//! trainable row per category plus a reserved null row for unconditional
//! prediction.

use crate::dataio::Checkpoint;
use crate::error::{Error, Result};
use crate::numerics::{Activation, Mlp, StreamRng, Tensor};

pub const TIME_EMBED_WIDTH: usize = 32;
pub const COND_EMBED_WIDTH: usize = 32;

/// Sinusoidal position features of a timestep.
pub fn time_embedding(t: usize) -> [f64; TIME_EMBED_WIDTH] {
    let mut out = [0.0; TIME_EMBED_WIDTH];
    let half = TIME_EMBED_WIDTH / 2;
    for i in 0..half {
        let freq = (-(i as f64) / half as f64 * 10_000f64.ln()).exp();
        let angle = t as f64 * freq;
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    out
}

/// Rows of time embeddings for a batch of timesteps.
pub fn time_embedding_rows(ts: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(ts.len() * TIME_EMBED_WIDTH);
    for &t in ts {
        data.extend_from_slice(&time_embedding(t));
    }
    Tensor { shape: vec![ts.len(), TIME_EMBED_WIDTH], data, requires_grad: false }
}

/// Learned label-embedding table; row `num_categories` is the null row.
#[derive(Debug, Clone)]
pub struct CondEmbedder {
    /// `[K+1, COND_EMBED_WIDTH]`
    pub table: Tensor,
    pub num_categories: usize,
}

impl CondEmbedder {
    pub fn new(num_categories: usize, rng: &StreamRng) -> Self {
        let mut init_rng = rng.substream("cond_table");
        let data = init_rng.normal_vec((num_categories + 1) * COND_EMBED_WIDTH);
        CondEmbedder {
            table: Tensor { shape: vec![num_categories + 1, COND_EMBED_WIDTH], data, requires_grad: true },
            num_categories,
        }
    }

    pub fn null_index(&self) -> usize {
        self.num_categories
    }

    /// Validate a label; the null index is allowed.
    pub fn check_label(&self, label: usize) -> Result<()> {
        if label > self.num_categories {
            return Err(Error::InvalidArgument {
                op: "CondEmbedder",
                msg: format!("label {} out of range 0..={}", label, self.num_categories),
            });
        }
        Ok(())
    }

    /// Embedding rows for a batch of labels (tape-free).
    pub fn embed_rows(&self, labels: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(labels.len() * COND_EMBED_WIDTH);
        for &l in labels {
            self.check_label(l)?;
            data.extend_from_slice(self.table.row(l));
        }
        Ok(Tensor { shape: vec![labels.len(), COND_EMBED_WIDTH], data, requires_grad: false })
    }
}

/// MLP noise predictor.
#[derive(Debug, Clone)]
pub struct DenoiserNet {
    pub net: Mlp,
    pub latent_dim: usize,
}

impl DenoiserNet {
    pub fn new(latent_dim: usize, hidden: &[usize], rng: &StreamRng) -> Self {
        let mut dims = vec![latent_dim + TIME_EMBED_WIDTH + COND_EMBED_WIDTH];
        dims.extend_from_slice(hidden);
        dims.push(latent_dim);
        DenoiserNet {
            net: Mlp::new(&dims, Activation::Silu, Activation::Identity, &rng.substream("denoiser")),
            latent_dim,
        }
    }

    /// Predict noise for latent rows `z_t` at per-row timesteps and labels
    /// (tape-free inference path).
    pub fn predict(
        &self,
        embedder: &CondEmbedder,
        z_t: &Tensor,
        timesteps: &[usize],
        labels: &[usize],
    ) -> Result<Tensor> {
        let n = z_t.rows();
        if z_t.width() != self.latent_dim || timesteps.len() != n || labels.len() != n {
            return Err(Error::InvalidArgument {
                op: "DenoiserNet::predict",
                msg: format!(
                    "{} latent rows of width {} with {} timestep(s), {} label(s); expected width {}",
                    n,
                    z_t.width(),
                    timesteps.len(),
                    labels.len(),
                    self.latent_dim
                ),
            });
        }
        let cond = embedder.embed_rows(labels)?;
        let time = time_embedding_rows(timesteps);
        let in_w = self.net.input_width();
        let mut data = Vec::with_capacity(n * in_w);
        for i in 0..n {
            data.extend_from_slice(z_t.row(i));
            data.extend_from_slice(time.row(i));
            data.extend_from_slice(cond.row(i));
        }
        let input = Tensor { shape: vec![n, in_w], data, requires_grad: false };
        Ok(self.net.forward(&input))
    }
}

/// Serialize denoiser ("diff.") and conditioning table ("cond.") together.
pub fn diffusion_to_checkpoint(denoiser: &DenoiserNet, embedder: &CondEmbedder) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::new();
    for (name, t) in denoiser.net.named_params("diff") {
        ckpt.insert(&name, t)?;
    }
    ckpt.insert("cond.table", &embedder.table)?;
    Ok(ckpt)
}

pub fn diffusion_from_checkpoint(ckpt: &Checkpoint) -> Result<(DenoiserNet, CondEmbedder)> {
    let net = crate::autoencoder::mlp_from_checkpoint(ckpt, "diff", Activation::Silu, Activation::Identity)?;
    let table = ckpt.get_tensor("cond.table")?.with_grad();
    let latent_dim = net.output_width();
    if net.input_width() != latent_dim + TIME_EMBED_WIDTH + COND_EMBED_WIDTH {
        return Err(Error::InvalidArgument {
            op: "diffusion_from_checkpoint",
            msg: format!("denoiser input width {} inconsistent with latent width {}", net.input_width(), latent_dim),
        });
    }
    let num_categories = table.shape[0] - 1;
    Ok((DenoiserNet { net, latent_dim }, CondEmbedder { table, num_categories }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_embedding_in_range_and_distinct() {
        let a = time_embedding(1);
        let b = time_embedding(999);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
        assert_ne!(a, b);
    }

    #[test]
    fn embedder_null_row_is_last() {
        let e = CondEmbedder::new(4, &StreamRng::new(1));
        assert_eq!(e.null_index(), 4);
        assert_eq!(e.table.shape, vec![5, COND_EMBED_WIDTH]);
        assert!(e.check_label(4).is_ok());
        assert!(e.check_label(5).is_err());
    }

    #[test]
    fn predict_output_width_is_latent_dim() {
        let rng = StreamRng::new(2);
        let d = DenoiserNet::new(8, &[16], &rng);
        let e = CondEmbedder::new(3, &rng);
        let z = Tensor::zeros(vec![4, 8]);
        let out = d.predict(&e, &z, &[1, 2, 3, 4], &[0, 1, 2, 3]).unwrap();
        assert_eq!(out.shape, vec![4, 8]);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let rng = StreamRng::new(3);
        let d = DenoiserNet::new(6, &[12, 12], &rng);
        let e = CondEmbedder::new(4, &rng);
        let ckpt = diffusion_to_checkpoint(&d, &e).unwrap();
        let (d2, e2) = diffusion_from_checkpoint(&ckpt).unwrap();
        assert_eq!(d2.latent_dim, 6);
        assert_eq!(e2.num_categories, 4);
        assert_eq!(d2.net.layers.len(), d.net.layers.len());
    }
}
