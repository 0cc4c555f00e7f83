//! Strength-controlled, guidance-scaled sampling from prototype latents.
//!
//! The prototype is noised part-way along the forward trajectory (the
//! `strength` fraction), then denoised with deterministic DDIM updates using
//! guided noise predictions. The only randomness is the seeded initial noise.

use crate::error::{Error, Result};
use crate::numerics::{StreamRng, Tensor};

use super::model::{CondEmbedder, DenoiserNet};
use super::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    /// Fraction of the forward-noising trajectory applied to the prototype;
    /// 0 returns it unchanged, 1 ignores it.
    pub strength: f64,
    /// Guidance scale; 1 is the neutral (purely conditional) case.
    pub guidance: f64,
    /// DDIM step-grid length.
    pub steps: usize,
    pub seed: u64,
}

impl SamplerConfig {
    pub fn validate(&self, schedule: &NoiseSchedule) -> Result<()> {
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(Error::InvalidArgument {
                op: "SamplerConfig",
                msg: format!("strength {} outside [0, 1]", self.strength),
            });
        }
        if self.guidance < 1.0 {
            return Err(Error::InvalidArgument {
                op: "SamplerConfig",
                msg: format!("guidance {} < 1", self.guidance),
            });
        }
        if self.steps == 0 || self.steps > schedule.total_timesteps() {
            return Err(Error::InvalidArgument {
                op: "SamplerConfig",
                msg: format!("steps {} outside 1..={}", self.steps, schedule.total_timesteps()),
            });
        }
        Ok(())
    }
}

/// Guided noise prediction `eps_null + g * (eps_label - eps_null)` for one
/// latent row. `g == 1` returns the conditional prediction bit-for-bit.
pub fn cfg_predict(
    denoiser: &DenoiserNet,
    embedder: &CondEmbedder,
    z_t: &Tensor,
    t: usize,
    label: usize,
    guidance: f64,
) -> Result<Tensor> {
    if guidance < 1.0 {
        return Err(Error::InvalidArgument { op: "cfg_predict", msg: format!("guidance {} < 1", guidance) });
    }
    embedder.check_label(label)?;
    let n = z_t.rows();
    let cond = denoiser.predict(embedder, z_t, &vec![t; n], &vec![label; n])?;
    if guidance == 1.0 || label == embedder.null_index() {
        return Ok(cond);
    }
    let uncond = denoiser.predict(embedder, z_t, &vec![t; n], &vec![embedder.null_index(); n])?;
    let data = uncond
        .data
        .iter()
        .zip(&cond.data)
        .map(|(u, c)| u + guidance * (c - u))
        .collect();
    Ok(Tensor { shape: cond.shape.clone(), data, requires_grad: false })
}

/// The DDIM timestep grid: `steps` evenly spaced integers from T down to 1.
pub fn timestep_grid(total_timesteps: usize, steps: usize) -> Vec<usize> {
    if steps == 1 {
        return vec![total_timesteps];
    }
    (0..steps)
        .map(|k| {
            let t = total_timesteps as f64 - (total_timesteps as f64 - 1.0) * k as f64 / (steps as f64 - 1.0);
            t.round() as usize
        })
        .collect()
}

/// Synthesize one latent from a prototype under `label`.
///
/// `round(strength * steps)` grid entries are used: the prototype is noised
/// to `round(strength * T)`, then denoised over the last entries of the grid
/// with a terminal step to t=0. Zero effective steps return the prototype
/// unchanged.
pub fn sample_from_prototype(
    denoiser: &DenoiserNet,
    embedder: &CondEmbedder,
    schedule: &NoiseSchedule,
    prototype: &[f64],
    label: usize,
    config: &SamplerConfig,
) -> Result<Tensor> {
    config.validate(schedule)?;
    if label >= embedder.num_categories {
        return Err(Error::InvalidArgument {
            op: "sample_from_prototype",
            msg: format!("label {} out of range [0, {})", label, embedder.num_categories),
        });
    }
    if prototype.len() != denoiser.latent_dim {
        return Err(Error::ShapeMismatch {
            op: "sample_from_prototype",
            lhs: vec![prototype.len()],
            rhs: vec![denoiser.latent_dim],
        });
    }

    let steps_used = (config.strength * config.steps as f64).round() as usize;
    let proto = Tensor { shape: vec![1, prototype.len()], data: prototype.to_vec(), requires_grad: false };
    if steps_used == 0 {
        return Ok(proto);
    }

    let t_total = schedule.total_timesteps();
    let t_enc = ((config.strength * t_total as f64).round() as usize).min(t_total);
    let mut noise_rng = StreamRng::new(config.seed).substream("init_noise");
    let noise = Tensor {
        shape: proto.shape.clone(),
        data: noise_rng.normal_vec(prototype.len()),
        requires_grad: false,
    };
    let mut z = schedule.q_sample(&proto, t_enc, &noise)?;

    let grid = timestep_grid(t_total, config.steps);
    let sub = &grid[config.steps - steps_used..];
    for (j, &t_cur) in sub.iter().enumerate() {
        let t_next = if j + 1 < sub.len() { sub[j + 1] } else { 0 };
        let eps = cfg_predict(denoiser, embedder, &z, t_cur, label, config.guidance)?;
        let ab_cur = schedule.alpha_bar(t_cur);
        let ab_next = schedule.alpha_bar(t_next);
        let (sig_cur, spread_cur) = (ab_cur.sqrt(), (1.0 - ab_cur).sqrt());
        let (sig_next, spread_next) = (ab_next.sqrt(), (1.0 - ab_next).sqrt());
        for i in 0..z.data.len() {
            let z0_pred = (z.data[i] - spread_cur * eps.data[i]) / sig_cur;
            z.data[i] = sig_next * z0_pred + spread_next * eps.data[i];
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_models(d: usize, k: usize, seed: u64) -> (DenoiserNet, CondEmbedder) {
        let rng = StreamRng::new(seed);
        (DenoiserNet::new(d, &[16], &rng), CondEmbedder::new(k, &rng))
    }

    #[test]
    fn grid_is_evenly_spaced_and_covers_t_to_one() {
        let g = timestep_grid(1000, 50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 1000);
        assert_eq!(*g.last().unwrap(), 1);
        assert!(g.windows(2).all(|w| w[0] > w[1]));

        let full = timestep_grid(100, 100);
        assert_eq!(full, (1..=100).rev().collect::<Vec<_>>());
    }

    #[test]
    fn zero_strength_returns_prototype() {
        let (d, e) = tiny_models(4, 2, 1);
        let sched = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
        let proto = [0.5, -0.2, 1.0, 0.0];
        let cfg = SamplerConfig { strength: 0.0, guidance: 8.0, steps: 10, seed: 3 };
        let out = sample_from_prototype(&d, &e, &sched, &proto, 1, &cfg).unwrap();
        assert_eq!(out.data, proto.to_vec());
    }

    #[test]
    fn sampler_is_deterministic() {
        let (d, e) = tiny_models(4, 2, 1);
        let sched = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
        let proto = [0.5, -0.2, 1.0, 0.0];
        let cfg = SamplerConfig { strength: 0.7, guidance: 4.0, steps: 10, seed: 3 };
        let a = sample_from_prototype(&d, &e, &sched, &proto, 0, &cfg).unwrap();
        let b = sample_from_prototype(&d, &e, &sched, &proto, 0, &cfg).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn guidance_one_is_bit_identical_to_conditional() {
        let (d, e) = tiny_models(4, 3, 5);
        let z = Tensor::new(vec![1, 4], vec![0.1, 0.2, -0.3, 0.9]).unwrap();
        let guided = cfg_predict(&d, &e, &z, 42, 2, 1.0).unwrap();
        let cond = d.predict(&e, &z, &[42], &[2]).unwrap();
        assert_eq!(guided.data, cond.data);
    }

    #[test]
    fn guidance_below_one_rejected() {
        let (d, e) = tiny_models(4, 2, 5);
        let z = Tensor::zeros(vec![1, 4]);
        assert!(cfg_predict(&d, &e, &z, 10, 0, 0.0).is_err());
        let sched = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
        let cfg = SamplerConfig { strength: 0.5, guidance: 0.5, steps: 10, seed: 1 };
        assert!(cfg.validate(&sched).is_err());
    }

    #[test]
    fn guidance_scales_the_conditional_delta() {
        let (d, e) = tiny_models(4, 2, 7);
        let z = Tensor::new(vec![1, 4], vec![0.4, -0.1, 0.0, 1.2]).unwrap();
        let t = 33;
        let cond = d.predict(&e, &z, &[t], &[1]).unwrap();
        let uncond = d.predict(&e, &z, &[t], &[e.null_index()]).unwrap();
        let guided = cfg_predict(&d, &e, &z, t, 1, 8.0).unwrap();
        for i in 0..4 {
            let expected = uncond.data[i] + 8.0 * (cond.data[i] - uncond.data[i]);
            assert!((guided.data[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_label_rejected() {
        let (d, e) = tiny_models(4, 2, 9);
        let sched = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
        let cfg = SamplerConfig { strength: 0.5, guidance: 2.0, steps: 10, seed: 1 };
        let proto = [0.0; 4];
        assert!(sample_from_prototype(&d, &e, &sched, &proto, 2, &cfg).is_err());
    }
}
