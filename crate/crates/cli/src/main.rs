use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adhoc_ssl::harness::{
    evaluate, generate_dataset, load_config, load_training_examples, localize, prepare, read_example, DatasetConfig,
    DatasetManifest, EvalOptions, EvalReport, LocalizeConfig, Method, Split,
};
use adhoc_ssl::features::Heatmap;
use adhoc_ssl::neural::{load_checkpoint, save_checkpoint, train, FeatureKind, RelNet, RelNetSpec, TrainConfig};
use adhoc_ssl::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "adhoc-ssl", version, about = "Sound source localization on ad-hoc microphone arrays")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed (simulate) or the training seed (train).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory or file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset of reverberant multichannel recordings.
    Simulate,
    /// Train a relation network on a simulated dataset.
    Train {
        /// Dataset root; overrides the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Evaluate a localizer on the test split of a dataset.
    Eval {
        #[arg(long, value_enum)]
        method: CliMethod,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoints of neural methods; errors are aggregated across them.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Write PGM heatmaps of the first examples here.
        #[arg(long)]
        heatmaps: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        heatmap_count: usize,
    },
    /// Localize the source of one example directory.
    Localize {
        #[arg(long, value_enum)]
        method: CliMethod,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        grid_n: Option<usize>,
        /// Write the heatmap (.pgm or .csv).
        #[arg(long)]
        emit_heatmap: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Convert a CSV heatmap to PGM (or back).
    RenderHeatmap {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMethod {
    Tdoa,
    Slf,
    GnnGcc,
    GnnSlf,
}

impl From<CliMethod> for Method {
    fn from(m: CliMethod) -> Self {
        match m {
            CliMethod::Tdoa => Method::Tdoa,
            CliMethod::Slf => Method::Slf,
            CliMethod::GnnGcc => Method::GnnGcc,
            CliMethod::GnnSlf => Method::GnnSlf,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainRunConfig {
    dataset: Option<PathBuf>,
    features: FeatureKind,
    localize: LocalizeConfig,
    /// Hidden and output sizes of the relation MLP; defaults to three
    /// layers of `grid_n^2`.
    relation_layers: Option<Vec<usize>>,
    fusion_layers: Option<Vec<usize>>,
    /// Seeds the weight initialization.
    init_seed: u64,
    train: TrainConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            features: FeatureKind::Slf,
            localize: LocalizeConfig::default(),
            relation_layers: None,
            fusion_layers: None,
            init_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Serialize)]
struct LocalizeOutput {
    estimate_xy: [f64; 2],
    method: Method,
    grid_n: usize,
}

fn config_or_default<T: Default + serde::de::DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    path.map_or_else(|| Ok(T::default()), load_config)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let Global { config, seed, out } = cli.global;
    let config = config.as_deref();
    match cli.command {
        Command::Simulate => {
            let mut cfg: DatasetConfig = config_or_default(config)?;
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            let out = out.ok_or_else(|| Error::InvalidConfig("simulate needs --out <dir>".into()))?;
            let manifest = generate_dataset(&cfg, &out)?;
            println!("{}", serde_json::to_string(&manifest.counts)?);
        }
        Command::Train { data } => {
            let mut cfg: TrainRunConfig = config_or_default(config)?;
            if let Some(seed) = seed {
                cfg.train.rng_seed = seed;
                cfg.init_seed = seed;
            }
            let root = data
                .or(cfg.dataset.clone())
                .ok_or_else(|| Error::InvalidConfig("train needs a dataset (--data or \"dataset\")".into()))?;
            let manifest = DatasetManifest::load(&root)?;
            let features = cfg.localize.features(cfg.features);
            let mut spec = RelNetSpec::new(features.clone());
            if let Some(layers) = cfg.relation_layers {
                spec.relation_layers = layers;
            }
            if let Some(layers) = cfg.fusion_layers {
                spec.fusion_layers = layers;
            }
            let model = RelNet::new(spec, cfg.init_seed)?;
            let frame_ms = cfg.localize.frame_ms;
            let train_set = load_training_examples(&root, &manifest, Split::Train, &features, frame_ms)?;
            let val_set = load_training_examples(&root, &manifest, Split::Val, &features, frame_ms)?;
            log::info!("training on {} examples, validating on {}", train_set.len(), val_set.len());
            let (model, history) = train(model, &train_set, &val_set, &cfg.train)?;
            let out = out.unwrap_or_else(|| PathBuf::from("model.ckpt"));
            save_checkpoint(&model, &out)?;
            std::fs::write(out.with_extension("history.csv"), history.to_csv())?;
            println!(
                "{}",
                serde_json::json!({
                    "checkpoint": out,
                    "epochs": history.epochs.len(),
                    "best_epoch": history.best_epoch,
                    "best_val_loss": history.best_epoch.checked_sub(1).and_then(|i| history.epochs.get(i)).map(|r| r.val_loss),
                })
            );
        }
        Command::Eval { method, data, checkpoint, heatmaps, heatmap_count } => {
            let cfg: LocalizeConfig = config_or_default(config)?;
            let manifest = DatasetManifest::load(&data)?;
            let models = checkpoint.iter().map(|p| load_checkpoint(p)).collect::<Result<Vec<_>>>()?;
            let options = EvalOptions { heatmap_dir: heatmaps, heatmap_count };
            let report: EvalReport = evaluate(method.into(), &data, &manifest, &cfg, &models, &options)?;
            emit(out.as_deref(), &report.to_csv())?;
        }
        Command::Localize { method, input, grid_n, emit_heatmap, checkpoint } => {
            let mut cfg: LocalizeConfig = config_or_default(config)?;
            if let Some(n) = grid_n {
                cfg.grid_n = n;
            }
            let model = checkpoint.as_deref().map(load_checkpoint).transpose()?;
            let method = Method::from(method);
            if let (Some(m), Some(n)) = (&model, grid_n) {
                if m.spec.features.grid_n != n {
                    return Err(Error::InvalidConfig(format!(
                        "--grid-n {n} differs from the checkpoint's grid of {}",
                        m.spec.features.grid_n
                    )));
                }
            }
            let (scene, signals) = read_example(&input)?;
            let (frame, meta) = prepare(&scene, &signals, cfg.frame_ms)?;
            let result = localize(method, &frame, &meta, &cfg, model.as_ref())?;
            if let Some(path) = emit_heatmap {
                result.heatmap.write(&path)?;
            }
            let output = LocalizeOutput { estimate_xy: result.estimate, method, grid_n: result.heatmap.n };
            emit(out.as_deref(), &format!("{}\n", serde_json::to_string(&output)?))?;
        }
        Command::RenderHeatmap { input } => {
            let out = out.ok_or_else(|| Error::InvalidConfig("render-heatmap needs --out <file.pgm|file.csv>".into()))?;
            let heatmap = Heatmap::from_csv(&adhoc_ssl::error::read_text(&input)?)?;
            heatmap.write(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut report = serde_json::json!({ "error": e.to_string() });
            if let Error::ConfigSchema { pointer, .. } = &e {
                report["pointer"] = pointer.clone().into();
            }
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
