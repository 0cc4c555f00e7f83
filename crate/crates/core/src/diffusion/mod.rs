//! Label-conditioned latent diffusion: forward noising, denoiser training,
//! and strength-controlled guided sampling from prototypes.

pub mod model;
pub mod sampler;
pub mod schedule;
pub mod train;

pub use model::{
    diffusion_from_checkpoint, diffusion_to_checkpoint, time_embedding, CondEmbedder, DenoiserNet,
    COND_EMBED_WIDTH, TIME_EMBED_WIDTH,
};
pub use sampler::{cfg_predict, sample_from_prototype, timestep_grid, SamplerConfig};
pub use schedule::NoiseSchedule;
pub use train::{heldout_loss, train_denoiser, DiffTrainConfig};
