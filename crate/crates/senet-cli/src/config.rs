//! Experiment configuration: a key = value file plus flag overrides.
//! Unknown keys are rejected with the offending key in the message.

use clap::Args;
use senet::harness::{AugmentMode, Geometry};
use senet::{DistanceVariant, Result, SenetError};
use std::path::PathBuf;

/// Flags shared by every subcommand. Flags override config-file values.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Configuration file, one `key = value` per line, `#` comments.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; echoed into every output row.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path (dataset, model, or CSV depending on the command).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated lambda list for sweep-lambda.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// Distance variant: s1 or s2.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub way: Option<usize>,
    #[arg(long)]
    pub shot: Option<usize>,
    #[arg(long)]
    pub query: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Senet,
    Exemplar,
    Prototype,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackboneKind {
    Identity,
    Linear,
    OneHidden,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    // Dataset.
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    pub geometry: Geometry,
    pub noise_sigma: f64,
    pub data_seed: Option<u64>,
    // Paths.
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub loss_out: Option<PathBuf>,
    pub identity_backbone: bool,
    // Task.
    pub alpha: f64,
    pub variant: DistanceVariant,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    pub rank_epsilon_rel: f64,
    pub predictor: PredictorKind,
    pub augment: AugmentMode,
    // Episode protocol.
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    pub episodes: usize,
    // Training.
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub episodes_per_batch: usize,
    pub lr: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub backbone: BackboneKind,
    pub train_shot: Option<usize>,
    // Studies.
    pub variances: Vec<f64>,
    pub ways: Vec<usize>,
    pub shots: Vec<usize>,
    // Seeding.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            num_classes: 10,
            samples_per_class: 200,
            input_dim: 16,
            geometry: Geometry::IsotropicGaussian,
            noise_sigma: 0.5,
            data_seed: None,
            dataset: None,
            model: None,
            out: None,
            loss_out: None,
            identity_backbone: false,
            alpha: 1.0,
            variant: DistanceVariant::S2,
            lambda: 10.0,
            lambda_grid: vec![0.0, 1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e12],
            rank_epsilon_rel: 1e-10,
            predictor: PredictorKind::Senet,
            augment: AugmentMode::Flip,
            way: 5,
            shot: 5,
            query: 10,
            episodes: 1000,
            epochs: 5,
            batches_per_epoch: 50,
            episodes_per_batch: 4,
            lr: 0.01,
            embed_dim: 16,
            hidden_dim: 32,
            backbone: BackboneKind::OneHidden,
            train_shot: None,
            variances: vec![0.0, 1.0, 2.0, 4.0, 8.0],
            ways: vec![5, 10, 15, 20],
            shots: vec![10, 20],
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Load the config file (when given) and apply flag overrides.
    pub fn resolve(args: &CommonArgs) -> Result<ExperimentConfig> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path)?;
            config.apply_file(&text)?;
        }
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(out) = &args.out {
            config.out = Some(out.clone());
        }
        if let Some(lambda) = &args.lambda {
            config.lambda_grid = lambda.clone();
            if lambda.len() == 1 {
                config.lambda = lambda[0];
            }
        }
        if let Some(variant) = &args.variant {
            config.variant = variant.parse()?;
        }
        if let Some(way) = args.way {
            config.way = way;
        }
        if let Some(shot) = args.shot {
            config.shot = shot;
        }
        if let Some(query) = args.query {
            config.query = query;
        }
        if let Some(episodes) = args.episodes {
            config.episodes = episodes;
        }
        Ok(config)
    }

    fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SenetError::InvalidConfig(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                ))
            })?;
            self.apply_key(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "num_classes" => self.num_classes = parse(key, value)?,
            "samples_per_class" => self.samples_per_class = parse(key, value)?,
            "input_dim" => self.input_dim = parse(key, value)?,
            "geometry" => self.geometry = value.parse()?,
            "noise_sigma" => self.noise_sigma = parse(key, value)?,
            "data_seed" => self.data_seed = Some(parse(key, value)?),
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "model" => self.model = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "loss_out" => self.loss_out = Some(PathBuf::from(value)),
            "identity_backbone" => self.identity_backbone = parse_bool(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "variant" => self.variant = value.parse()?,
            "lambda" => self.lambda = parse(key, value)?,
            "lambda_grid" => self.lambda_grid = parse_list(key, value)?,
            "rank_epsilon_rel" => self.rank_epsilon_rel = parse(key, value)?,
            "predictor" => {
                self.predictor = match value {
                    "senet" => PredictorKind::Senet,
                    "exemplar" => PredictorKind::Exemplar,
                    "prototype" => PredictorKind::Prototype,
                    other => {
                        return Err(SenetError::InvalidConfig(format!(
                            "predictor must be senet, exemplar or prototype, got '{other}'"
                        )))
                    }
                }
            }
            "augment" => self.augment = value.parse()?,
            "way" => self.way = parse(key, value)?,
            "shot" => self.shot = parse(key, value)?,
            "query" => self.query = parse(key, value)?,
            "episodes" => self.episodes = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batches_per_epoch" => self.batches_per_epoch = parse(key, value)?,
            "episodes_per_batch" => self.episodes_per_batch = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "backbone" => {
                self.backbone = match value {
                    "identity" => BackboneKind::Identity,
                    "linear" => BackboneKind::Linear,
                    "one_hidden" => BackboneKind::OneHidden,
                    other => {
                        return Err(SenetError::InvalidConfig(format!(
                            "backbone must be identity, linear or one_hidden, got '{other}'"
                        )))
                    }
                }
            }
            "train_shot" => self.train_shot = Some(parse(key, value)?),
            "variances" => self.variances = parse_list(key, value)?,
            "ways" => self.ways = parse_list(key, value)?,
            "shots" => self.shots = parse_list(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => {
                return Err(SenetError::InvalidConfig(format!(
                    "unknown config key '{other}'"
                )))
            }
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| SenetError::InvalidConfig(format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(SenetError::InvalidConfig(format!(
            "cannot parse '{other}' as bool for key '{key}'"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}
