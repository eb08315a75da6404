//! Dataset synthesis, evaluation and config loading.

mod config;
mod dataset;
mod eval;

pub use config::{load_config, parse_config};
pub use dataset::{
    channel_file, example_seed, generate_dataset, read_example, synthesize, write_example, DatasetConfig,
    DatasetManifest, ManifestEntry, Split, SplitCounts, SynthesisConfig, MANIFEST_FILE, MANIFEST_VERSION,
    MAX_SPLIT_SIZE, SCENE_FILE,
};
pub use eval::{
    evaluate, load_training_examples, localize, mean_euclid_error, prepare, scene_grid, summarize,
    training_example, EvalOptions, EvalReport, EvalRow, LocalizeConfig, Method,
};
