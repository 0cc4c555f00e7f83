//! Binary dataset/checkpoint formats, the procedural shapes generator, and
//! image dumps.

mod bytes;
pub mod checkpoint;
pub mod dataset;
pub mod pgm;
pub mod shapes;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, StoredTensor};
pub use dataset::{load_dataset, save_dataset, ImageDataset};
pub use pgm::{dump_image, image_to_text};
pub use shapes::generate_shapes;
