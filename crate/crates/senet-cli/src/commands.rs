//! Subcommand implementations.

use crate::config::{BackboneKind, CommonArgs, ExperimentConfig, PredictorKind};
use crate::report::{write_rows, ResultRow};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use senet::harness::{
    add_gaussian_noise, evaluate, generate_dataset, train as train_backbone, Backbone, Dataset,
    DatasetSpec, EpisodeShape, EvalResult, Predictor, TrainConfig,
};
use senet::{DistanceVariant, Result, SenetError, ShrinkageConfig, TaskConfig};
use std::path::Path;
use std::time::Instant;

fn dataset_spec(config: &ExperimentConfig) -> DatasetSpec {
    DatasetSpec {
        num_classes: config.num_classes,
        samples_per_class: config.samples_per_class,
        input_dim: config.input_dim,
        geometry: config.geometry,
        noise_sigma: config.noise_sigma,
        seed: config.data_seed.unwrap_or(config.seed),
    }
}

fn load_or_generate_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.dataset {
        Some(path) => Dataset::load(path),
        None => generate_dataset(&dataset_spec(config)),
    }
}

fn load_backbone(config: &ExperimentConfig, dataset: &Dataset) -> Result<Backbone> {
    if config.identity_backbone {
        return Ok(Backbone::identity(dataset.input_dim()));
    }
    match &config.model {
        Some(path) => {
            let backbone = Backbone::load(path)?;
            if backbone.input_dim() != dataset.input_dim() {
                return Err(SenetError::DimensionMismatch {
                    expected: dataset.input_dim(),
                    got: backbone.input_dim(),
                });
            }
            Ok(backbone)
        }
        None => Err(SenetError::InvalidConfig(
            "set 'model = PATH' or 'identity_backbone = true'".into(),
        )),
    }
}

fn task_config(config: &ExperimentConfig, lambda: f64) -> TaskConfig {
    TaskConfig {
        alpha: config.alpha,
        variant: config.variant,
        shrinkage: ShrinkageConfig {
            lambda,
            rank_epsilon_rel: config.rank_epsilon_rel,
        },
    }
}

fn episode_shape(config: &ExperimentConfig, way: usize, shot: usize) -> EpisodeShape {
    EpisodeShape {
        way,
        shot,
        query: config.query,
        augment: config.augment,
    }
}

/// Evaluate one cell and package it as a row.
#[allow(clippy::too_many_arguments)]
fn run_cell(
    experiment: String,
    dataset: &Dataset,
    backbone: &Backbone,
    predictor: &Predictor,
    lambda: f64,
    shape: &EpisodeShape,
    config: &ExperimentConfig,
) -> Result<ResultRow> {
    let start = Instant::now();
    let result: EvalResult = evaluate(
        dataset,
        backbone,
        predictor,
        shape,
        config.episodes,
        config.seed,
    )?;
    Ok(ResultRow {
        experiment,
        variant: config.variant.as_str(),
        lambda,
        way: shape.way,
        shot: shape.shot,
        episodes: config.episodes,
        accuracy: result.mean_accuracy,
        ci95: result.ci95_halfwidth,
        seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
    })
}

pub fn gen_data(args: &CommonArgs) -> Result<()> {
    let config = ExperimentConfig::resolve(args)?;
    let out = config
        .out
        .clone()
        .ok_or_else(|| SenetError::InvalidConfig("gen-data needs 'out = PATH'".into()))?;
    let dataset = generate_dataset(&dataset_spec(&config))?;
    dataset.save(&out)?;
    eprintln!(
        "wrote {} samples to {}",
        config.num_classes * config.samples_per_class,
        out.display()
    );
    Ok(())
}

pub fn train(args: &CommonArgs) -> Result<()> {
    let config = ExperimentConfig::resolve(args)?;
    let out = config
        .out
        .clone()
        .ok_or_else(|| SenetError::InvalidConfig("train needs 'out = PATH'".into()))?;
    let dataset = load_or_generate_dataset(&config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let backbone = match config.backbone {
        BackboneKind::Identity => {
            return Err(SenetError::InvalidConfig(
                "identity backbone has no trainable parameters".into(),
            ))
        }
        BackboneKind::Linear => {
            Backbone::linear_random(dataset.input_dim(), config.embed_dim, &mut rng)
        }
        BackboneKind::OneHidden => Backbone::one_hidden_random(
            dataset.input_dim(),
            config.hidden_dim,
            config.embed_dim,
            &mut rng,
        ),
    };

    let train_config = TrainConfig {
        way: config.way,
        shot: config.train_shot.unwrap_or(config.shot),
        query: config.query,
        epochs: config.epochs,
        batches_per_epoch: config.batches_per_epoch,
        episodes_per_batch: config.episodes_per_batch,
        learning_rate: config.lr,
        task: task_config(&config, config.lambda),
        augment: config.augment,
        seed: config.seed,
    };
    let outcome = train_backbone(&dataset, &backbone, &train_config)?;
    outcome.backbone.save(&out)?;

    let loss_path = config
        .loss_out
        .clone()
        .unwrap_or_else(|| append_extension(&out, "loss.csv"));
    let mut csv = String::from("batch,epoch,loss\n");
    for (i, loss) in outcome.loss_history.iter().enumerate() {
        let epoch = i / config.batches_per_epoch;
        csv.push_str(&format!("{i},{epoch},{loss}\n"));
    }
    std::fs::write(&loss_path, csv)?;
    eprintln!(
        "wrote model to {} and loss history to {}",
        out.display(),
        loss_path.display()
    );
    Ok(())
}

fn append_extension(path: &Path, ext: &str) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    std::path::PathBuf::from(s)
}

pub fn eval(args: &CommonArgs) -> Result<()> {
    let config = ExperimentConfig::resolve(args)?;
    let dataset = load_or_generate_dataset(&config)?;
    let backbone = load_backbone(&config, &dataset)?;
    let shape = episode_shape(&config, config.way, config.shot);
    let (predictor, lambda) = match config.predictor {
        PredictorKind::Senet => (
            Predictor::Shrinkage(task_config(&config, config.lambda)),
            config.lambda,
        ),
        PredictorKind::Exemplar => (
            Predictor::Exemplar {
                alpha: config.alpha,
            },
            0.0,
        ),
        PredictorKind::Prototype => (
            Predictor::Prototype {
                alpha: config.alpha,
            },
            1e12,
        ),
    };
    let row = run_cell(
        "eval".into(),
        &dataset,
        &backbone,
        &predictor,
        lambda,
        &shape,
        &config,
    )?;
    write_rows(&[row], config.out.as_deref())
}

pub fn sweep_lambda(args: &CommonArgs) -> Result<()> {
    let config = ExperimentConfig::resolve(args)?;
    let dataset = load_or_generate_dataset(&config)?;
    let backbone = load_backbone(&config, &dataset)?;
    let shape = episode_shape(&config, config.way, config.shot);

    let mut lambdas = config.lambda_grid.clone();
    lambdas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rows = Vec::new();
    for variant in [DistanceVariant::S1, DistanceVariant::S2] {
        let mut arm_config = config.clone();
        arm_config.variant = variant;
        for &lambda in &lambdas {
            let predictor = Predictor::Shrinkage(task_config(&arm_config, lambda));
            rows.push(run_cell(
                "sweep-lambda".into(),
                &dataset,
                &backbone,
                &predictor,
                lambda,
                &shape,
                &arm_config,
            )?);
        }
    }
    write_rows(&rows, config.out.as_deref())
}

/// The three comparison arms: the lambda endpoints and the configured value.
fn arms(config: &ExperimentConfig) -> [(&'static str, f64); 3] {
    [
        ("exemplar", 0.0),
        ("prototype", 1e12),
        ("senet", config.lambda),
    ]
}

pub fn robustness(args: &CommonArgs) -> Result<()> {
    let config = ExperimentConfig::resolve(args)?;
    let dataset = load_or_generate_dataset(&config)?;
    let backbone = load_backbone(&config, &dataset)?;
    let shape = episode_shape(&config, config.way, config.shot);

    let mut rows = Vec::new();
    for (i, &variance) in config.variances.iter().enumerate() {
        let noise_seed = config.seed.wrapping_add(1_000_003).wrapping_add(i as u64);
        let noisy = add_gaussian_noise(&dataset, variance, noise_seed)?;
        for (arm, lambda) in arms(&config) {
            let predictor = Predictor::Shrinkage(task_config(&config, lambda));
            rows.push(run_cell(
                format!("robustness:variance={variance}:arm={arm}"),
                &noisy,
                &backbone,
                &predictor,
                lambda,
                &shape,
                &config,
            )?);
        }
    }
    write_rows(&rows, config.out.as_deref())
}

pub fn scaling(args: &CommonArgs) -> Result<()> {
    let config = ExperimentConfig::resolve(args)?;
    let dataset = load_or_generate_dataset(&config)?;
    let backbone = load_backbone(&config, &dataset)?;

    let mut rows = Vec::new();
    for (arm, lambda) in arms(&config) {
        for &way in &config.ways {
            for &shot in &config.shots {
                let shape = episode_shape(&config, way, shot);
                let predictor = Predictor::Shrinkage(task_config(&config, lambda));
                rows.push(run_cell(
                    format!("scaling:arm={arm}"),
                    &dataset,
                    &backbone,
                    &predictor,
                    lambda,
                    &shape,
                    &config,
                )?);
            }
        }
    }
    write_rows(&rows, config.out.as_deref())
}
