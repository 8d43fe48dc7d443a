//! Synthetic dataset generation and the text import/export format.
//!
//! Four geometries are provided. Isotropic gaussians put class means on a
//! scaled simplex; anisotropic gaussians stretch each class along a few
//! random directions; ring classes lie on a circle in the first two
//! coordinates, so the class mean sits far from every sample; mixed datasets
//! split classes between gaussian and ring.

use crate::error::{Result, SenetError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Separation scale of gaussian class means.
const MEAN_SCALE: f64 = 2.0;
/// Ring radius range and center jitter.
const RING_RADIUS_MIN: f64 = 1.0;
const RING_RADIUS_MAX: f64 = 3.0;
const RING_CENTER_JITTER: f64 = 0.5;
/// Number of stretched directions in the anisotropic geometry.
const ANISO_RANK: usize = 3;
const ANISO_SIGMA_MIN: f64 = 0.5;
const ANISO_SIGMA_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    IsotropicGaussian,
    AnisotropicGaussian,
    Ring,
    Mixed,
}

impl Geometry {
    pub fn as_str(&self) -> &'static str {
        match self {
            Geometry::IsotropicGaussian => "isotropic_gaussian",
            Geometry::AnisotropicGaussian => "anisotropic_gaussian",
            Geometry::Ring => "ring",
            Geometry::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for Geometry {
    type Err = SenetError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isotropic_gaussian" => Ok(Geometry::IsotropicGaussian),
            "anisotropic_gaussian" => Ok(Geometry::AnisotropicGaussian),
            "ring" => Ok(Geometry::Ring),
            "mixed" => Ok(Geometry::Mixed),
            other => Err(SenetError::Parse(format!("unknown geometry '{other}'"))),
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    pub geometry: Geometry,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(SenetError::InvalidConfig(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.samples_per_class == 0 {
            return Err(SenetError::InvalidConfig(
                "samples_per_class must be >= 1".into(),
            ));
        }
        if self.input_dim == 0 {
            return Err(SenetError::InvalidConfig("input_dim must be >= 1".into()));
        }
        if matches!(self.geometry, Geometry::Ring | Geometry::Mixed) && self.input_dim < 2 {
            return Err(SenetError::InvalidConfig(
                "ring geometry requires input_dim >= 2".into(),
            ));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(SenetError::InvalidConfig(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Labeled dataset, samples grouped per class (labels 0..num_classes).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    /// `class_samples[c][i]` is the i-th sample of class c.
    pub class_samples: Vec<Vec<Vec<f64>>>,
}

/// Per-class generator parameters, returned for oracle checks.
#[derive(Debug, Clone)]
pub enum ClassShape {
    Gaussian { mean: Vec<f64> },
    Ring { center: [f64; 2], radius: f64 },
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_samples.len()
    }

    pub fn samples_per_class(&self) -> usize {
        self.class_samples.first().map_or(0, |c| c.len())
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Class means on a centered simplex when the dimension allows, random unit
/// directions otherwise.
fn gaussian_means(rng: &mut ChaCha8Rng, num_classes: usize, dim: usize) -> Vec<Vec<f64>> {
    if num_classes <= dim {
        (0..num_classes)
            .map(|c| {
                (0..dim)
                    .map(|k| {
                        let e = if k == c { 1.0 } else { 0.0 };
                        MEAN_SCALE * (e - 1.0 / num_classes as f64)
                    })
                    .collect()
            })
            .collect()
    } else {
        (0..num_classes)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|x| MEAN_SCALE * x / n).collect()
            })
            .collect()
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Deterministic synthetic dataset plus the per-class shapes it was drawn
/// from.
pub fn generate_dataset_with_shapes(spec: &DatasetSpec) -> Result<(Dataset, Vec<ClassShape>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.input_dim;
    let c = spec.num_classes;

    let ring_class = |class: usize| match spec.geometry {
        Geometry::Ring => true,
        Geometry::Mixed => class >= c / 2,
        _ => false,
    };

    let means = gaussian_means(&mut rng, c, dim);
    let mut shapes = Vec::with_capacity(c);
    let mut class_samples = Vec::with_capacity(c);

    for class in 0..c {
        let shape = if ring_class(class) {
            let center = [
                RING_CENTER_JITTER * standard_normal(&mut rng),
                RING_CENTER_JITTER * standard_normal(&mut rng),
            ];
            let radius = rng.gen_range(RING_RADIUS_MIN..RING_RADIUS_MAX);
            ClassShape::Ring { center, radius }
        } else {
            ClassShape::Gaussian {
                mean: means[class].clone(),
            }
        };

        // Anisotropic classes stretch along a few random directions.
        let stretch: Option<Vec<(Vec<f64>, f64)>> =
            if spec.geometry == Geometry::AnisotropicGaussian {
                Some(
                    (0..ANISO_RANK.min(dim))
                        .map(|_| {
                            let dir = unit_direction(&mut rng, dim);
                            let sigma = rng.gen_range(ANISO_SIGMA_MIN..ANISO_SIGMA_MAX);
                            (dir, sigma)
                        })
                        .collect(),
                )
            } else {
                None
            };

        let mut samples = Vec::with_capacity(spec.samples_per_class);
        for _ in 0..spec.samples_per_class {
            let mut x = vec![0.0; dim];
            match &shape {
                ClassShape::Gaussian { mean } => {
                    x.copy_from_slice(mean);
                    if let Some(dirs) = &stretch {
                        for (dir, sigma) in dirs {
                            let z = sigma * standard_normal(&mut rng);
                            for (xi, di) in x.iter_mut().zip(dir) {
                                *xi += z * di;
                            }
                        }
                    }
                }
                ClassShape::Ring { center, radius } => {
                    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
                    x[0] = center[0] + radius * theta.cos();
                    x[1] = center[1] + radius * theta.sin();
                }
            }
            if spec.noise_sigma > 0.0 {
                for xi in x.iter_mut() {
                    *xi += spec.noise_sigma * standard_normal(&mut rng);
                }
            }
            samples.push(x);
        }
        shapes.push(shape);
        class_samples.push(samples);
    }

    Ok((
        Dataset {
            spec: spec.clone(),
            class_samples,
        },
        shapes,
    ))
}

/// Deterministic synthetic dataset for the given spec.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    generate_dataset_with_shapes(spec).map(|(d, _)| d)
}

/// Copy of the dataset with zero-mean gaussian noise of the given variance
/// added to every coordinate. Variance 0 returns the dataset unchanged.
pub fn add_gaussian_noise(dataset: &Dataset, variance: f64, seed: u64) -> Result<Dataset> {
    if !variance.is_finite() || variance < 0.0 {
        return Err(SenetError::InvalidConfig(format!(
            "noise variance must be >= 0, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(dataset.clone());
    }
    let sigma = variance.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_samples = dataset
        .class_samples
        .iter()
        .map(|samples| {
            samples
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|x| x + sigma * standard_normal(&mut rng))
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(Dataset {
        spec: dataset.spec.clone(),
        class_samples,
    })
}

impl Dataset {
    /// Write the text format: one header line with the spec fields, then one
    /// `label,v1,...,vd` line per sample.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            out,
            "num_classes={},samples_per_class={},input_dim={},geometry={},noise_sigma={},seed={}",
            self.spec.num_classes,
            self.spec.samples_per_class,
            self.spec.input_dim,
            self.spec.geometry,
            self.spec.noise_sigma,
            self.spec.seed
        )?;
        for (label, samples) in self.class_samples.iter().enumerate() {
            for sample in samples {
                let mut line = label.to_string();
                for v in sample {
                    line.push(',');
                    line.push_str(&format!("{v}"));
                }
                writeln!(out, "{line}")?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| SenetError::Parse("empty dataset file".into()))??;

        let mut spec = DatasetSpec {
            num_classes: 0,
            samples_per_class: 0,
            input_dim: 0,
            geometry: Geometry::IsotropicGaussian,
            noise_sigma: 0.0,
            seed: 0,
        };
        for field in header.split(',') {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| SenetError::Parse(format!("bad header field '{field}'")))?;
            match key {
                "num_classes" => spec.num_classes = parse(key, value)?,
                "samples_per_class" => spec.samples_per_class = parse(key, value)?,
                "input_dim" => spec.input_dim = parse(key, value)?,
                "geometry" => spec.geometry = value.parse()?,
                "noise_sigma" => spec.noise_sigma = parse(key, value)?,
                "seed" => spec.seed = parse(key, value)?,
                other => return Err(SenetError::Parse(format!("unknown header field '{other}'"))),
            }
        }
        spec.validate()?;

        let mut class_samples: Vec<Vec<Vec<f64>>> = vec![Vec::new(); spec.num_classes];
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let label: usize = parse(
                "label",
                parts
                    .next()
                    .ok_or_else(|| SenetError::Parse("missing label".into()))?,
            )?;
            if label >= spec.num_classes {
                return Err(SenetError::Parse(format!(
                    "label {label} out of range for {} classes",
                    spec.num_classes
                )));
            }
            let sample: Vec<f64> = parts
                .map(|p| parse("sample value", p))
                .collect::<Result<_>>()?;
            if sample.len() != spec.input_dim {
                return Err(SenetError::Parse(format!(
                    "sample has {} values, expected {}",
                    sample.len(),
                    spec.input_dim
                )));
            }
            if sample.iter().any(|v| !v.is_finite()) {
                return Err(SenetError::NonFinite("dataset sample".into()));
            }
            class_samples[label].push(sample);
        }
        for (label, samples) in class_samples.iter().enumerate() {
            if samples.len() != spec.samples_per_class {
                return Err(SenetError::Parse(format!(
                    "class {label} has {} samples, expected {}",
                    samples.len(),
                    spec.samples_per_class
                )));
            }
        }
        Ok(Dataset {
            spec,
            class_samples,
        })
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| SenetError::Parse(format!("cannot parse '{value}' for {key}")))
}
