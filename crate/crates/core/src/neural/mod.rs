//! Relation-network localizer built on a small dense-layer toolkit.

mod adam;
mod checkpoint;
mod mlp;
mod relnet;
mod target;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use mlp::{Dense, Mlp, MlpCache, MlpSpec};
pub use relnet::{
    canonical_order, gnn_localize, pair_features, relnet_forward, FeatureConfig, FeatureKind, RelNet, RelNetSpec,
    OUTPUT_INIT_SCALE, PAIR_METADATA_LEN,
};
pub use target::{mae_loss, target_map, TargetMap};
pub use train::{
    batch_gradients, dataset_loss, train, EpochRecord, RelNetGradients, TrainConfig, TrainHistory, TrainingExample,
};
