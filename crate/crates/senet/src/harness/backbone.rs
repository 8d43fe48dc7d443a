//! Small trainable embedding backbones: identity, one affine map, or an
//! affine-relu-affine stack. Gradients are hand-derived so the whole system
//! stays checkable by finite differences.

use crate::error::{Result, SenetError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Dense row-major matrix for backbone weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let row = &self.data[i * self.cols..(i + 1) * self.cols];
                row.iter().zip(v).map(|(w, x)| w * x).sum()
            })
            .collect()
    }

    /// Transposed product: v^T self, i.e. `out[j] = sum_i v[i] * self[i][j]`.
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += vi * w;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backbone {
    /// Embeddings are the raw inputs.
    Identity { dim: usize },
    /// One affine map.
    Linear { w: DenseMatrix, b: Vec<f64> },
    /// Affine, elementwise max(x, 0), affine.
    OneHidden {
        w1: DenseMatrix,
        b1: Vec<f64>,
        w2: DenseMatrix,
        b2: Vec<f64>,
    },
}

/// Parameter gradients matching the backbone layout.
#[derive(Debug, Clone)]
pub enum BackboneGradients {
    Identity,
    Linear {
        w: DenseMatrix,
        b: Vec<f64>,
    },
    OneHidden {
        w1: DenseMatrix,
        b1: Vec<f64>,
        w2: DenseMatrix,
        b2: Vec<f64>,
    },
}

impl Backbone {
    pub fn identity(dim: usize) -> Self {
        Backbone::Identity { dim }
    }

    /// Square affine map initialized at the identity.
    pub fn linear_identity(dim: usize) -> Self {
        Backbone::Linear {
            w: DenseMatrix::identity(dim),
            b: vec![0.0; dim],
        }
    }

    /// Seeded uniform init scaled by fan-in.
    pub fn linear_random(input_dim: usize, embed_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Backbone::Linear {
            w: random_matrix(embed_dim, input_dim, rng),
            b: vec![0.0; embed_dim],
        }
    }

    /// Seeded one-hidden-layer init.
    pub fn one_hidden_random(
        input_dim: usize,
        hidden_dim: usize,
        embed_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Backbone::OneHidden {
            w1: random_matrix(hidden_dim, input_dim, rng),
            b1: vec![0.0; hidden_dim],
            w2: random_matrix(embed_dim, hidden_dim, rng),
            b2: vec![0.0; embed_dim],
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Backbone::Identity { dim } => *dim,
            Backbone::Linear { w, .. } => w.cols,
            Backbone::OneHidden { w1, .. } => w1.cols,
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self {
            Backbone::Identity { dim } => *dim,
            Backbone::Linear { w, .. } => w.rows,
            Backbone::OneHidden { w2, .. } => w2.rows,
        }
    }

    pub fn num_parameters(&self) -> usize {
        match self {
            Backbone::Identity { .. } => 0,
            Backbone::Linear { w, b } => w.data.len() + b.len(),
            Backbone::OneHidden { w1, b1, w2, b2 } => {
                w1.data.len() + b1.len() + w2.data.len() + b2.len()
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        let all = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            Backbone::Identity { .. } => true,
            Backbone::Linear { w, b } => all(&w.data) && all(b),
            Backbone::OneHidden { w1, b1, w2, b2 } => {
                all(&w1.data) && all(b1) && all(&w2.data) && all(b2)
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Backbone::Identity { .. } => x.to_vec(),
            Backbone::Linear { w, b } => {
                let mut z = w.matvec(x);
                for (zi, bi) in z.iter_mut().zip(b) {
                    *zi += bi;
                }
                z
            }
            Backbone::OneHidden { w1, b1, w2, b2 } => {
                let mut h = w1.matvec(x);
                for (hi, bi) in h.iter_mut().zip(b1) {
                    *hi = (*hi + bi).max(0.0);
                }
                let mut z = w2.matvec(&h);
                for (zi, bi) in z.iter_mut().zip(b2) {
                    *zi += bi;
                }
                z
            }
        }
    }

    pub fn zero_gradients(&self) -> BackboneGradients {
        match self {
            Backbone::Identity { .. } => BackboneGradients::Identity,
            Backbone::Linear { w, b } => BackboneGradients::Linear {
                w: DenseMatrix::zeros(w.rows, w.cols),
                b: vec![0.0; b.len()],
            },
            Backbone::OneHidden { w1, b1, w2, b2 } => BackboneGradients::OneHidden {
                w1: DenseMatrix::zeros(w1.rows, w1.cols),
                b1: vec![0.0; b1.len()],
                w2: DenseMatrix::zeros(w2.rows, w2.cols),
                b2: vec![0.0; b2.len()],
            },
        }
    }

    /// Accumulate parameter gradients for one input given the gradient of
    /// the loss with respect to its embedding.
    pub fn accumulate_gradients(
        &self,
        x: &[f64],
        embed_grad: &[f64],
        grads: &mut BackboneGradients,
    ) {
        match (self, grads) {
            (Backbone::Identity { .. }, BackboneGradients::Identity) => {}
            (Backbone::Linear { .. }, BackboneGradients::Linear { w, b }) => {
                for (i, &g) in embed_grad.iter().enumerate() {
                    b[i] += g;
                    let row = &mut w.data[i * w.cols..(i + 1) * w.cols];
                    for (wij, xj) in row.iter_mut().zip(x) {
                        *wij += g * xj;
                    }
                }
            }
            (
                Backbone::OneHidden { w1, b1, w2, .. },
                BackboneGradients::OneHidden {
                    w1: gw1,
                    b1: gb1,
                    w2: gw2,
                    b2: gb2,
                },
            ) => {
                let mut z1 = w1.matvec(x);
                for (zi, bi) in z1.iter_mut().zip(b1) {
                    *zi += bi;
                }
                let h: Vec<f64> = z1.iter().map(|&z| z.max(0.0)).collect();
                for (i, &g) in embed_grad.iter().enumerate() {
                    gb2[i] += g;
                    let row = &mut gw2.data[i * gw2.cols..(i + 1) * gw2.cols];
                    for (wij, hj) in row.iter_mut().zip(&h) {
                        *wij += g * hj;
                    }
                }
                let mut gh = w2.matvec_t(embed_grad);
                for (g, &z) in gh.iter_mut().zip(&z1) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
                for (i, &g) in gh.iter().enumerate() {
                    gb1[i] += g;
                    let row = &mut gw1.data[i * gw1.cols..(i + 1) * gw1.cols];
                    for (wij, xj) in row.iter_mut().zip(x) {
                        *wij += g * xj;
                    }
                }
            }
            _ => unreachable!("gradient layout must match backbone layout"),
        }
    }

    /// SGD step: parameters -= lr * gradients.
    pub fn apply_gradients(&mut self, grads: &BackboneGradients, lr: f64) {
        match (self, grads) {
            (Backbone::Identity { .. }, BackboneGradients::Identity) => {}
            (Backbone::Linear { w, b }, BackboneGradients::Linear { w: gw, b: gb }) => {
                for (p, g) in w.data.iter_mut().zip(&gw.data) {
                    *p -= lr * g;
                }
                for (p, g) in b.iter_mut().zip(gb) {
                    *p -= lr * g;
                }
            }
            (
                Backbone::OneHidden { w1, b1, w2, b2 },
                BackboneGradients::OneHidden {
                    w1: gw1,
                    b1: gb1,
                    w2: gw2,
                    b2: gb2,
                },
            ) => {
                for (p, g) in w1.data.iter_mut().zip(&gw1.data) {
                    *p -= lr * g;
                }
                for (p, g) in b1.iter_mut().zip(gb1) {
                    *p -= lr * g;
                }
                for (p, g) in w2.data.iter_mut().zip(&gw2.data) {
                    *p -= lr * g;
                }
                for (p, g) in b2.iter_mut().zip(gb2) {
                    *p -= lr * g;
                }
            }
            _ => unreachable!("gradient layout must match backbone layout"),
        }
    }

    /// Model text format: a kind line, then each tensor as a shape line
    /// followed by row-major values one row per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        match self {
            Backbone::Identity { dim } => {
                writeln!(out, "backbone=identity")?;
                writeln!(out, "dim {dim}")?;
            }
            Backbone::Linear { w, b } => {
                writeln!(out, "backbone=linear")?;
                write_matrix(&mut out, "w", w)?;
                write_vector(&mut out, "b", b)?;
            }
            Backbone::OneHidden { w1, b1, w2, b2 } => {
                writeln!(out, "backbone=one_hidden")?;
                write_matrix(&mut out, "w1", w1)?;
                write_vector(&mut out, "b1", b1)?;
                write_matrix(&mut out, "w2", w2)?;
                write_vector(&mut out, "b2", b2)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Backbone> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let mut next_line = move || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| SenetError::Parse("model file ended early".into()))?
                .map_err(SenetError::Io)
        };
        let kind = next_line()?;
        let backbone = match kind.as_str() {
            "backbone=identity" => {
                let dim_line = next_line()?;
                let dim = dim_line
                    .strip_prefix("dim ")
                    .ok_or_else(|| SenetError::Parse(format!("bad dim line '{dim_line}'")))?
                    .parse()
                    .map_err(|_| SenetError::Parse(format!("bad dim line '{dim_line}'")))?;
                Backbone::Identity { dim }
            }
            "backbone=linear" => {
                let w = read_matrix(&mut next_line, "w")?;
                let b = read_vector(&mut next_line, "b")?;
                Backbone::Linear { w, b }
            }
            "backbone=one_hidden" => {
                let w1 = read_matrix(&mut next_line, "w1")?;
                let b1 = read_vector(&mut next_line, "b1")?;
                let w2 = read_matrix(&mut next_line, "w2")?;
                let b2 = read_vector(&mut next_line, "b2")?;
                Backbone::OneHidden { w1, b1, w2, b2 }
            }
            other => {
                return Err(SenetError::Parse(format!(
                    "unknown backbone kind '{other}'"
                )))
            }
        };
        if !backbone.is_finite() {
            return Err(SenetError::NonFinite("backbone parameters".into()));
        }
        Ok(backbone)
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let scale = (1.0 / cols as f64).sqrt();
    DenseMatrix {
        rows,
        cols,
        data: (0..rows * cols)
            .map(|_| rng.gen_range(-scale..scale))
            .collect(),
    }
}

fn write_matrix(out: &mut impl Write, name: &str, m: &DenseMatrix) -> Result<()> {
    writeln!(out, "{name} {}x{}", m.rows, m.cols)?;
    for i in 0..m.rows {
        let row: Vec<String> = (0..m.cols).map(|j| format!("{}", m.get(i, j))).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

fn write_vector(out: &mut impl Write, name: &str, v: &[f64]) -> Result<()> {
    writeln!(out, "{name} {}", v.len())?;
    let row: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    writeln!(out, "{}", row.join(" "))?;
    Ok(())
}

fn read_matrix(next_line: &mut impl FnMut() -> Result<String>, name: &str) -> Result<DenseMatrix> {
    let header = next_line()?;
    let shape = header
        .strip_prefix(&format!("{name} "))
        .ok_or_else(|| SenetError::Parse(format!("expected {name} header, got '{header}'")))?;
    let (rows, cols) = shape
        .split_once('x')
        .ok_or_else(|| SenetError::Parse(format!("bad shape '{shape}'")))?;
    let rows: usize = rows
        .parse()
        .map_err(|_| SenetError::Parse(format!("bad shape '{shape}'")))?;
    let cols: usize = cols
        .parse()
        .map_err(|_| SenetError::Parse(format!("bad shape '{shape}'")))?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let line = next_line()?;
        for tok in line.split_whitespace() {
            data.push(
                tok.parse()
                    .map_err(|_| SenetError::Parse(format!("bad value '{tok}' in {name}")))?,
            );
        }
    }
    if data.len() != rows * cols {
        return Err(SenetError::Parse(format!(
            "{name} has {} values, expected {}",
            data.len(),
            rows * cols
        )));
    }
    Ok(DenseMatrix { rows, cols, data })
}

fn read_vector(next_line: &mut impl FnMut() -> Result<String>, name: &str) -> Result<Vec<f64>> {
    let header = next_line()?;
    let len_str = header
        .strip_prefix(&format!("{name} "))
        .ok_or_else(|| SenetError::Parse(format!("expected {name} header, got '{header}'")))?;
    let len: usize = len_str
        .parse()
        .map_err(|_| SenetError::Parse(format!("bad length '{len_str}'")))?;
    let line = next_line()?;
    let v: Vec<f64> = line
        .split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| SenetError::Parse(format!("bad value '{tok}' in {name}")))
        })
        .collect::<Result<_>>()?;
    if v.len() != len {
        return Err(SenetError::Parse(format!(
            "{name} has {} values, expected {len}",
            v.len()
        )));
    }
    Ok(v)
}
