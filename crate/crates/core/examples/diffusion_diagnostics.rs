use d4m_core::autoencoder::{train_linear_probe, AePair, LatentBatch};
use d4m_core::dataio::{load_checkpoint, load_dataset};
use d4m_core::diffusion::{diffusion_from_checkpoint, heldout_loss, sample_from_prototype, NoiseSchedule, SamplerConfig, DenoiserNet, CondEmbedder};
use d4m_core::numerics::{StreamRng, Tensor};

fn main() {
    let dir = std::env::args().nth(1).unwrap();
    let ae = AePair::from_checkpoint(&load_checkpoint(format!("{dir}/ae.d4mw")).unwrap()).unwrap();
    let (den, emb) = diffusion_from_checkpoint(&load_checkpoint(format!("{dir}/diff.d4mw")).unwrap()).unwrap();
    let train = load_dataset(format!("{dir}/shapes_train.d4md")).unwrap();
    let mut latents = ae.encode(&train).unwrap();
    latents.latents = ae.standardize(&latents.latents);
    let schedule = NoiseSchedule::default_linear();

    // Linear probe on train latents
    let probe = train_linear_probe(&latents, 300, 42).unwrap();
    let probe_acc = probe.accuracy(&latents.latents, &latents.labels);
    println!("probe_train_acc={probe_acc:.4}");

    // Conditioning effectiveness: 200 samples at s=1, g=8, labels round-robin
    let d = ae.latent_dim();
    let k = latents.num_categories;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let root = StreamRng::new(777);
    for i in 0..200 {
        let label = i % k;
        let cfg = SamplerConfig { strength: 1.0, guidance: 8.0, steps: 50, seed: root.derive(&format!("cond{i}")) };
        let z = sample_from_prototype(&den, &emb, &schedule, &vec![0.0; d], label, &cfg).unwrap();
        rows.extend_from_slice(&z.data);
        labels.push(label);
    }
    let sampled = Tensor { shape: vec![200, d], data: rows, requires_grad: false };
    let acc = probe.accuracy(&sampled, &labels);
    println!("conditioning_acc={acc:.4} (chance {:.4})", 1.0 / k as f64);

    // Strength monotonicity: mean ||z - proto|| over 100 seeds for s in {0.1,0.5,0.9}
    let proto: Vec<f64> = latents.latents.row(0).to_vec();
    for s in [0.1, 0.5, 0.9] {
        let mut total = 0.0;
        for i in 0..100 {
            let cfg = SamplerConfig { strength: s, guidance: 8.0, steps: 50, seed: root.derive(&format!("mono{s}{i}")) };
            let z = sample_from_prototype(&den, &emb, &schedule, &proto, 0, &cfg).unwrap();
            let dist: f64 = z.data.iter().zip(&proto).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            total += dist;
        }
        println!("strength={s} mean_dist={:.4}", total / 100.0);
    }

    // Heldout loss vs untrained
    let (unt_den, unt_emb): (DenoiserNet, CondEmbedder) = {
        let rng = StreamRng::new(12345).substream("untrained");
        (DenoiserNet::new(d, &[256, 256], &rng), CondEmbedder::new(k, &rng))
    };
    let trained = heldout_loss(&den, &emb, &schedule, &latents, 55).unwrap();
    let untrained = heldout_loss(&unt_den, &unt_emb, &schedule, &latents, 55).unwrap();
    println!("heldout trained={trained:.4} untrained={untrained:.4} ratio={:.4}", trained / untrained);
}
