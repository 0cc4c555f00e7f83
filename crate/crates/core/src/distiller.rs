//! End-to-end distillation: encode real images, standardize, cluster into
//! per-category prototypes, synthesize one latent per (prototype, replica)
//! by guided partial diffusion, decode, and assemble the distilled dataset
//! with complete provenance.

use crate::autoencoder::AePair;
use crate::dataio::ImageDataset;
use crate::diffusion::{sample_from_prototype, CondEmbedder, DenoiserNet, NoiseSchedule, SamplerConfig};
use crate::error::{Error, Result};
use crate::numerics::{StreamRng, Tensor};
use crate::prototypes::{learn_prototypes, KMeansConfig, KMeansState, PrototypeSet};
use crate::ttm::{soft_labels, ClassifierNet};

#[derive(Debug, Clone, Copy)]
pub struct DistillConfig {
    /// Prototypes learned per category (C).
    pub prototypes_per_category: usize,
    /// Images per category in the output (IPC).
    pub images_per_category: usize,
    pub strength: f64,
    pub guidance: f64,
    pub ddim_steps: usize,
    pub kmeans_passes: usize,
    pub kmeans_batch: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            prototypes_per_category: 10,
            images_per_category: 10,
            strength: 0.7,
            guidance: 8.0,
            ddim_steps: 50,
            kmeans_passes: 5,
            kmeans_batch: 64,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let (c, ipc) = (self.prototypes_per_category, self.images_per_category);
        if c == 0 || ipc == 0 {
            return Err(Error::InvalidArgument {
                op: "DistillConfig",
                msg: "prototypes_per_category and images_per_category must be >= 1".into(),
            });
        }
        if ipc > c && ipc % c != 0 {
            return Err(Error::InvalidArgument {
                op: "DistillConfig",
                msg: format!("images_per_category {ipc} exceeds prototypes {c} but is not a multiple of it"),
            });
        }
        Ok(())
    }

    /// Prototypes actually sampled from, and replicas per prototype.
    fn plan(&self) -> (usize, usize) {
        let (c, ipc) = (self.prototypes_per_category, self.images_per_category);
        if ipc <= c {
            (ipc, 1)
        } else {
            (c, ipc / c)
        }
    }

    fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            centers_per_category: self.prototypes_per_category,
            passes: self.kmeans_passes,
            batch_size: self.kmeans_batch,
        }
    }
}

/// Where one distilled image came from: enough to regenerate it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub category: usize,
    pub prototype: usize,
    pub sampler_seed: u64,
}

#[derive(Debug, Clone)]
pub struct DistilledDataset {
    pub dataset: ImageDataset,
    /// One record per image, aligned with dataset order.
    pub provenance: Vec<Provenance>,
    /// Optional teacher soft labels, `[N, K]`.
    pub soft_labels: Option<Tensor>,
}

impl DistilledDataset {
    /// Line-based provenance sidecar: `index,category,prototype,seed`.
    pub fn provenance_csv(&self) -> String {
        let mut out = String::from("index,category,prototype,seed\n");
        for (i, p) in self.provenance.iter().enumerate() {
            out.push_str(&format!("{},{},{},{}\n", i, p.category, p.prototype, p.sampler_seed));
        }
        out
    }

    /// Attach teacher soft predictions for storage alongside the images.
    pub fn attach_soft_labels(&mut self, teacher: &ClassifierNet, temperature: f64) -> Result<()> {
        self.soft_labels = Some(soft_labels(teacher, &self.dataset.to_unit_rows(), temperature)?);
        Ok(())
    }
}

pub fn parse_provenance(text: &str) -> Result<Vec<Provenance>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::InvalidArgument {
                op: "parse_provenance",
                msg: format!("line {}: expected 4 fields, got {}", lineno + 1, fields.len()),
            });
        }
        let parse = |s: &str| -> Result<u64> {
            s.trim().parse().map_err(|e| Error::InvalidArgument {
                op: "parse_provenance",
                msg: format!("line {}: {}", lineno + 1, e),
            })
        };
        out.push(Provenance {
            category: parse(fields[1])? as usize,
            prototype: parse(fields[2])? as usize,
            sampler_seed: parse(fields[3])?,
        });
    }
    Ok(out)
}

/// The deterministic sampler seed for one (category, prototype, replica).
fn sample_seed(root: &StreamRng, category: usize, prototype: usize, replica: usize) -> u64 {
    root.derive(&format!("distill.sample.cat{category}.proto{prototype}.rep{replica}"))
}

/// Run Algorithm-1 end to end with prototypes learned from the real data.
/// Returns the distilled dataset and the prototypes it was sampled from.
pub fn distill(
    real: &ImageDataset,
    ae: &AePair,
    denoiser: &DenoiserNet,
    embedder: &CondEmbedder,
    schedule: &NoiseSchedule,
    config: &DistillConfig,
) -> Result<(DistilledDataset, PrototypeSet)> {
    config.validate()?;
    let mut latents = ae.encode(real).map_err(|e| e.in_stage("encode"))?;
    latents.latents = ae.standardize(&latents.latents);
    let protos = learn_prototypes(&latents, &config.kmeans(), StreamRng::new(config.seed).derive("distill.prototypes"))
        .map_err(|e| e.in_stage("prototypes"))?;
    let distilled = synthesize(&protos, real, ae, denoiser, embedder, schedule, config)?;
    Ok((distilled, protos))
}

/// The prototype-ablation baseline: identical pipeline, but prototypes are
/// replaced by seeded standard-normal latents.
pub fn distill_random_init(
    real: &ImageDataset,
    ae: &AePair,
    denoiser: &DenoiserNet,
    embedder: &CondEmbedder,
    schedule: &NoiseSchedule,
    config: &DistillConfig,
) -> Result<(DistilledDataset, PrototypeSet)> {
    config.validate()?;
    let root = StreamRng::new(config.seed);
    let d = ae.latent_dim();
    let states = (0..real.num_categories())
        .map(|cat| {
            let mut rng = root.substream(&format!("distill.random_init.cat{cat}"));
            let centers = (0..config.prototypes_per_category).map(|_| rng.normal_vec(d)).collect();
            KMeansState { centers, counts: vec![0; config.prototypes_per_category] }
        })
        .collect();
    let protos = PrototypeSet { states };
    let distilled = synthesize(&protos, real, ae, denoiser, embedder, schedule, config)?;
    Ok((distilled, protos))
}

/// Synthesize the distilled dataset from an existing prototype set.
/// `template` supplies image dimensions and category names.
pub fn synthesize(
    protos: &PrototypeSet,
    template: &ImageDataset,
    ae: &AePair,
    denoiser: &DenoiserNet,
    embedder: &CondEmbedder,
    schedule: &NoiseSchedule,
    config: &DistillConfig,
) -> Result<DistilledDataset> {
    config.validate()?;
    let k = template.num_categories();
    if protos.num_categories() != k {
        return Err(Error::InvalidArgument {
            op: "synthesize",
            msg: format!("{} prototype categories for a {}-category dataset", protos.num_categories(), k),
        }
        .in_stage("synthesize"));
    }
    let (protos_used, replicas) = config.plan();
    if protos.centers_per_category() < protos_used {
        return Err(Error::InvalidArgument {
            op: "synthesize",
            msg: format!(
                "{} prototypes per category available, {} required",
                protos.centers_per_category(),
                protos_used
            ),
        }
        .in_stage("synthesize"));
    }

    let root = StreamRng::new(config.seed);
    let mut latent_rows = Vec::with_capacity(k * config.images_per_category * ae.latent_dim());
    let mut provenance = Vec::with_capacity(k * config.images_per_category);
    let mut labels = Vec::with_capacity(k * config.images_per_category);

    // Output ordered by (category, prototype, replica).
    for cat in 0..k {
        for p_idx in 0..protos_used {
            for rep in 0..replicas {
                let seed = sample_seed(&root, cat, p_idx, rep);
                let sampler = SamplerConfig {
                    strength: config.strength,
                    guidance: config.guidance,
                    steps: config.ddim_steps,
                    seed,
                };
                let z = sample_from_prototype(denoiser, embedder, schedule, protos.prototype(cat, p_idx), cat, &sampler)
                    .map_err(|e| e.in_stage("synthesize"))?;
                latent_rows.extend_from_slice(&z.data);
                provenance.push(Provenance { category: cat, prototype: p_idx, sampler_seed: seed });
                labels.push(cat as u16);
            }
        }
    }

    let latents = Tensor {
        shape: vec![labels.len(), ae.latent_dim()],
        data: latent_rows,
        requires_grad: false,
    };
    let images = decode_to_pixels(ae, &latents).map_err(|e| e.in_stage("decode"))?;
    let dataset = ImageDataset::new(
        images,
        labels,
        template.height,
        template.width,
        template.channels,
        template.category_names.clone(),
    )
    .map_err(|e| e.in_stage("assemble"))?;

    Ok(DistilledDataset { dataset, provenance, soft_labels: None })
}

/// Destandardize, decode, and quantize latent rows to pixel bytes
/// (round-half-up).
pub fn decode_to_pixels(ae: &AePair, standardized_latents: &Tensor) -> Result<Vec<u8>> {
    let raw = ae.destandardize(standardized_latents);
    let decoded = ae.decode(&raw)?;
    Ok(decoded.data.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect())
}

/// Regenerate one image from its provenance record; byte-identical to the
/// stored image when fed the same models and config.
pub fn replay_image(
    record: &Provenance,
    protos: &PrototypeSet,
    ae: &AePair,
    denoiser: &DenoiserNet,
    embedder: &CondEmbedder,
    schedule: &NoiseSchedule,
    config: &DistillConfig,
) -> Result<Vec<u8>> {
    let sampler = SamplerConfig {
        strength: config.strength,
        guidance: config.guidance,
        steps: config.ddim_steps,
        seed: record.sampler_seed,
    };
    let z = sample_from_prototype(
        denoiser,
        embedder,
        schedule,
        protos.prototype(record.category, record.prototype),
        record.category,
        &sampler,
    )?;
    decode_to_pixels(ae, &z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{train_autoencoder, AeConfig};
    use crate::dataio::generate_shapes;
    use crate::diffusion::{train_denoiser, DiffTrainConfig};

    struct Fixture {
        real: ImageDataset,
        ae: AePair,
        denoiser: DenoiserNet,
        embedder: CondEmbedder,
        schedule: NoiseSchedule,
    }

    fn fixture() -> Fixture {
        let real = generate_shapes(12, 3, 16, 16, 4.0, 2).unwrap();
        let ae_cfg = AeConfig { latent_dim: 8, hidden: [32, 16], epochs: 2, batch_size: 12, ..Default::default() };
        let (ae, _) = train_autoencoder(&real, &ae_cfg, 1).unwrap();
        let mut latents = ae.encode(&real).unwrap();
        latents.latents = ae.standardize(&latents.latents);
        let schedule = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
        let diff_cfg = DiffTrainConfig { steps: 5, batch_size: 8, hidden: [16, 16], ..Default::default() };
        let (denoiser, embedder, _) = train_denoiser(&latents, &schedule, &diff_cfg, 3).unwrap();
        Fixture { real, ae, denoiser, embedder, schedule }
    }

    fn config(c: usize, ipc: usize) -> DistillConfig {
        DistillConfig {
            prototypes_per_category: c,
            images_per_category: ipc,
            ddim_steps: 10,
            kmeans_passes: 2,
            kmeans_batch: 16,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn count_contract_and_balance() {
        let f = fixture();
        let cfg = config(4, 4);
        let (out, protos) = distill(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
        assert_eq!(out.dataset.len(), 12);
        assert_eq!(out.dataset.category_counts(), vec![4; 3]);
        assert_eq!(out.provenance.len(), 12);
        assert_eq!(protos.len(), 12);
    }

    #[test]
    fn deterministic_output_bytes() {
        let f = fixture();
        let cfg = config(2, 2);
        let (a, _) = distill(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
        let (b, _) = distill(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
        assert_eq!(a.dataset.to_bytes().unwrap(), b.dataset.to_bytes().unwrap());
        assert_eq!(a.provenance_csv(), b.provenance_csv());
    }

    #[test]
    fn zero_strength_decodes_prototypes_directly() {
        let f = fixture();
        let mut cfg = config(3, 3);
        cfg.strength = 0.0;
        let (out, protos) = distill(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
        // Each image must equal decode(prototype) exactly.
        for (i, rec) in out.provenance.iter().enumerate() {
            let proto = protos.prototype(rec.category, rec.prototype);
            let z = Tensor { shape: vec![1, proto.len()], data: proto.to_vec(), requires_grad: false };
            let pixels = decode_to_pixels(&f.ae, &z).unwrap();
            assert_eq!(out.dataset.image(i), &pixels[..], "image {i} differs from decoded prototype");
        }
    }

    #[test]
    fn replicas_expand_ipc_beyond_prototypes() {
        let f = fixture();
        let cfg = config(2, 6); // 3 replicas per prototype
        let (out, _) = distill(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
        assert_eq!(out.dataset.len(), 18);
        // Replica seeds differ, so images from one prototype differ.
        assert_ne!(out.dataset.image(0), out.dataset.image(1));
        // Non-multiple rejected.
        let bad = config(4, 6);
        assert!(distill(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &bad).is_err());
    }

    #[test]
    fn random_init_matches_contract_and_differs_from_prototype_run() {
        let f = fixture();
        let cfg = config(2, 2);
        let (a, _) = distill(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
        let (b, _) = distill_random_init(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
        assert_eq!(b.dataset.len(), a.dataset.len());
        assert_eq!(b.dataset.category_counts(), a.dataset.category_counts());
        assert_ne!(a.dataset.images, b.dataset.images);
        let (b2, _) = distill_random_init(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
        assert_eq!(b.dataset.to_bytes().unwrap(), b2.dataset.to_bytes().unwrap());
    }

    #[test]
    fn provenance_replay_reproduces_images() {
        let f = fixture();
        let cfg = config(2, 2);
        let (out, protos) = distill(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
        for (i, rec) in out.provenance.iter().enumerate() {
            let replayed = replay_image(rec, &protos, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
            assert_eq!(out.dataset.image(i), &replayed[..]);
        }
    }

    #[test]
    fn provenance_csv_roundtrip() {
        let f = fixture();
        let cfg = config(2, 2);
        let (out, _) = distill(&f.real, &f.ae, &f.denoiser, &f.embedder, &f.schedule, &cfg).unwrap();
        let parsed = parse_provenance(&out.provenance_csv()).unwrap();
        assert_eq!(parsed, out.provenance);
    }
}
