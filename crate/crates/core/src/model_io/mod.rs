//! Model files, datasets and fixture training.

mod dataset;
mod format;
mod idx;
mod synthetic;
mod train;

pub use dataset::{parse_manifest, read_manifest, split_indices, write_manifest, Dataset, DatasetSource};
pub use format::{
    decode_header, decode_model, encode_model, load_model, save_model, LayerHeader, ModelHeader, TensorEntry,
    FORMAT_VERSION,
};
pub use idx::{load_idx, write_idx_images, write_idx_labels, IMAGES_MAGIC, LABELS_MAGIC};
pub use synthetic::{gen_synthetic, SyntheticSpec};
pub use train::{accuracy, train_fixture, Architecture, LayerTemplate, TrainConfig};
