//! Dense-tensor arithmetic, reverse-mode differentiation, AdamW, and seeded
//! randomness — the substrate every trainable network here is built on.

pub mod kernels;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use nn::{Activation, BoundMlp, Linear, Mlp};
pub use optim::{cosine_lr, AdamW, AdamWConfig};
pub use rng::StreamRng;
pub use tape::{Gradients, Tape, VarId};
pub use tensor::Tensor;
