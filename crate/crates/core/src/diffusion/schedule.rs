//! Forward-noising constants and the closed-form noising step.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Diffusion constants: per-timestep noise rates and their running product.
/// Index 0 is the clean state (`alpha_bar(0) == 1`); trained timesteps run
/// `1..=total_timesteps`.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    betas: Vec<f64>,      // [T+1]; betas[0] unused
    alpha_bars: Vec<f64>, // [T+1]; alpha_bars[0] = 1
}

pub const DEFAULT_TIMESTEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

impl NoiseSchedule {
    /// Linear beta ramp from `beta_start` at t=1 to `beta_end` at t=T.
    pub fn linear(total_timesteps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if total_timesteps < 2 || beta_start <= 0.0 || beta_end >= 1.0 || beta_start >= beta_end {
            return Err(Error::InvalidArgument {
                op: "NoiseSchedule::linear",
                msg: format!("need T >= 2 and 0 < beta_start < beta_end < 1, got T={total_timesteps}, {beta_start}..{beta_end}"),
            });
        }
        let t = total_timesteps;
        let mut betas = vec![0.0; t + 1];
        let mut alpha_bars = vec![1.0; t + 1];
        for i in 1..=t {
            betas[i] = beta_start + (beta_end - beta_start) * (i - 1) as f64 / (t - 1) as f64;
            alpha_bars[i] = alpha_bars[i - 1] * (1.0 - betas[i]);
        }
        Ok(NoiseSchedule { betas, alpha_bars })
    }

    pub fn default_linear() -> Self {
        NoiseSchedule::linear(DEFAULT_TIMESTEPS, DEFAULT_BETA_START, DEFAULT_BETA_END).unwrap()
    }

    pub fn total_timesteps(&self) -> usize {
        self.betas.len() - 1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    /// Cumulative product of `1 - beta` up to `t`; 1 at t=0.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// Closed-form forward noising `z_t = sqrt(ab_t) z0 + sqrt(1-ab_t) noise`.
    /// The caller supplies the noise, so this is exactly reproducible.
    pub fn q_sample(&self, z0: &Tensor, t: usize, noise: &Tensor) -> Result<Tensor> {
        if t > self.total_timesteps() {
            return Err(Error::InvalidArgument {
                op: "q_sample",
                msg: format!("t={} out of range 0..={}", t, self.total_timesteps()),
            });
        }
        if z0.shape != noise.shape {
            return Err(Error::ShapeMismatch { op: "q_sample", lhs: z0.shape.clone(), rhs: noise.shape.clone() });
        }
        let ab = self.alpha_bar(t);
        let (signal, spread) = (ab.sqrt(), (1.0 - ab).sqrt());
        let data = z0.data.iter().zip(&noise.data).map(|(z, e)| signal * z + spread * e).collect();
        Ok(Tensor { shape: z0.shape.clone(), data, requires_grad: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::StreamRng;

    #[test]
    fn alpha_bar_strictly_decreasing_and_small_at_end() {
        let s = NoiseSchedule::default_linear();
        assert_eq!(s.alpha_bar(0), 1.0);
        for t in 1..=s.total_timesteps() {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1), "alpha_bar not decreasing at t={t}");
        }
        assert!(s.alpha_bar(s.total_timesteps()) < 0.01);
    }

    #[test]
    fn beta_endpoints() {
        let s = NoiseSchedule::default_linear();
        assert_eq!(s.beta(1), DEFAULT_BETA_START);
        assert_eq!(s.beta(DEFAULT_TIMESTEPS), DEFAULT_BETA_END);
        assert!(s.beta(1) > 0.0 && s.beta(DEFAULT_TIMESTEPS) < 1.0);
    }

    #[test]
    fn q_sample_identity_at_t0() {
        let s = NoiseSchedule::default_linear();
        let z0 = Tensor::new(vec![1, 4], vec![0.3, -1.0, 2.0, 0.0]).unwrap();
        let noise = Tensor::new(vec![1, 4], vec![5.0, 5.0, 5.0, 5.0]).unwrap();
        let zt = s.q_sample(&z0, 0, &noise).unwrap();
        assert_eq!(zt.data, z0.data);
    }

    #[test]
    fn q_sample_pure_noise_branch() {
        let s = NoiseSchedule::default_linear();
        let z0 = Tensor::zeros(vec![1, 3]);
        let noise = Tensor::new(vec![1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        let t = 400;
        let zt = s.q_sample(&z0, t, &noise).unwrap();
        let spread = (1.0 - s.alpha_bar(t)).sqrt();
        for (a, e) in zt.data.iter().zip(&noise.data) {
            assert_eq!(*a, spread * e);
        }
    }

    #[test]
    fn q_sample_rejects_out_of_range_t() {
        let s = NoiseSchedule::default_linear();
        let z = Tensor::zeros(vec![1, 2]);
        assert!(s.q_sample(&z, 1001, &z.clone()).is_err());
    }

    #[test]
    fn monte_carlo_mean_and_variance_match_closed_form() {
        let s = NoiseSchedule::default_linear();
        let t = 500;
        let draws = 10_000;
        let z0_val = 0.8;
        let z0 = Tensor::new(vec![1, 1], vec![z0_val]).unwrap();
        let mut rng = StreamRng::new(99).substream("mc");
        let mut samples = Vec::with_capacity(draws);
        for _ in 0..draws {
            let noise = Tensor::new(vec![1, 1], vec![rng.normal()]).unwrap();
            samples.push(s.q_sample(&z0, t, &noise).unwrap().data[0]);
        }
        let ab = s.alpha_bar(t);
        let expect_mean = ab.sqrt() * z0_val;
        let expect_var = 1.0 - ab;
        let mean = samples.iter().sum::<f64>() / draws as f64;
        let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws - 1) as f64;
        let mean_sigma = expect_var.sqrt() / (draws as f64).sqrt();
        let var_sigma = expect_var * (2.0 / (draws as f64 - 1.0)).sqrt();
        assert!((mean - expect_mean).abs() < 3.0 * mean_sigma, "mean {mean} vs {expect_mean}");
        assert!((var - expect_var).abs() < 3.0 * var_sigma, "var {var} vs {expect_var}");
    }
}
