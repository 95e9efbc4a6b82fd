//! Gradient-weighted attention relevance.
//!
//! A relevance map `sigma` over the joint `[regions | text]` token sequence
//! starts as the identity and absorbs one interpreter matrix per layer:
//! `sigma <- sigma + psi * sigma`, where `psi` is the head-mean of the
//! positive part of `grad ⊙ attn`. Region scores are read from the text rows
//! of the final map, over the region columns.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-sum tolerance applied to attention maps on ingest.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelevanceError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid attention dump: {0}")]
    Validation(String),
    #[error("token layout error: {0}")]
    Layout(String),
}

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, RelevanceError> {
        if data.len() != rows * cols {
            return Err(RelevanceError::Dimension(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, RelevanceError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(RelevanceError::Dimension("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix, RelevanceError> {
        if self.cols != rhs.rows {
            return Err(RelevanceError::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = rhs.row(k);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// Largest absolute elementwise difference; `inf` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Scaled dot-product attention probabilities, `softmax(q kᵀ / sqrt(d_h))` per row.
pub fn attention_forward(q: &Matrix, k: &Matrix, d_h: usize) -> Result<Matrix, RelevanceError> {
    if d_h == 0 {
        return Err(RelevanceError::Dimension(
            "head dimension must be >= 1".into(),
        ));
    }
    if q.rows != k.rows || q.cols != k.cols {
        return Err(RelevanceError::Dimension(format!(
            "query is {}x{} but key is {}x{}",
            q.rows, q.cols, k.rows, k.cols
        )));
    }
    if q.cols != d_h {
        return Err(RelevanceError::Dimension(format!(
            "matrices have {} columns, head dimension is {d_h}",
            q.cols
        )));
    }
    let scale = (d_h as f64).sqrt();
    let mut scores = q.matmul(&k.transpose())?;
    for i in 0..scores.rows {
        let n = scores.cols;
        let row = &mut scores.data[i * n..(i + 1) * n];
        softmax_in_place(row, scale);
    }
    Ok(scores)
}

fn softmax_in_place(row: &mut [f64], scale: f64) {
    let max = row
        .iter()
        .map(|v| v / scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v / scale - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Gradient with respect to the pre-softmax scores, given the softmax output
/// `a` and the upstream gradient `da`: `a ⊙ (da - <da, a> 1)` per row.
pub fn softmax_backward(a: &Matrix, da: &Matrix) -> Result<Matrix, RelevanceError> {
    if a.rows != da.rows || a.cols != da.cols {
        return Err(RelevanceError::Dimension(format!(
            "attention is {}x{} but its gradient is {}x{}",
            a.rows, a.cols, da.rows, da.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, a.cols);
    for i in 0..a.rows {
        let (ar, dr) = (a.row(i), da.row(i));
        let dot: f64 = ar.iter().zip(dr).map(|(x, y)| x * y).sum();
        for j in 0..a.cols {
            out[(i, j)] = ar[j] * (dr[j] - dot);
        }
    }
    Ok(out)
}

/// How the per-head `grad ⊙ attn` product is filtered before averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpreterMode {
    /// `(grad ⊙ attn)₊`; keeps `psi` nonnegative.
    #[default]
    ClampProduct,
    /// `grad ⊙ 1[attn > 0]` taken literally. Softmax outputs are strictly
    /// positive, so this is the raw gradient and `psi` may be negative.
    IndicatorMask,
}

/// Head-averaged interpreter matrix for one layer.
pub fn attention_interpreter(
    attn: &[Matrix],
    grad: &[Matrix],
    mode: InterpreterMode,
) -> Result<Matrix, RelevanceError> {
    if attn.is_empty() || attn.len() != grad.len() {
        return Err(RelevanceError::Dimension(format!(
            "{} attention heads but {} gradient heads",
            attn.len(),
            grad.len()
        )));
    }
    let (rows, cols) = (attn[0].rows, attn[0].cols);
    let mut psi = Matrix::zeros(rows, cols);
    for (a, g) in attn.iter().zip(grad) {
        if a.rows != rows || a.cols != cols || g.rows != rows || g.cols != cols {
            return Err(RelevanceError::Dimension(
                "heads within a layer must share one shape".into(),
            ));
        }
        for ((p, &av), &gv) in psi.data.iter_mut().zip(&a.data).zip(&g.data) {
            *p += match mode {
                InterpreterMode::ClampProduct => (gv * av).max(0.0),
                InterpreterMode::IndicatorMask => {
                    if av > 0.0 {
                        gv
                    } else {
                        0.0
                    }
                }
            };
        }
    }
    let heads = attn.len() as f64;
    psi.data.iter_mut().for_each(|p| *p /= heads);
    Ok(psi)
}

/// Where region and text tokens sit in the joint sequence: `[0, R)` are
/// regions, `[R, R + T)` are text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub n_regions: usize,
    pub n_text: usize,
}

impl TokenLayout {
    pub fn seq_len(&self) -> usize {
        self.n_regions + self.n_text
    }
}

/// Free-form identification carried alongside the tensors.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DumpMeta {
    pub image_id: String,
    pub question_id: String,
    pub d_h: usize,
    /// Which scalar was backpropagated to produce the gradients.
    pub grad_target: String,
}

/// One layer's attention probabilities and their gradients, each laid out
/// `[head][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMaps {
    pub attn: Vec<f32>,
    pub grad: Vec<f32>,
}

/// Per-layer, per-head attention maps and gradients over the joint sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub meta: DumpMeta,
    pub layout: TokenLayout,
    pub n_heads: usize,
    pub layers: Vec<LayerMaps>,
}

impl AttentionDump {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn seq_len(&self) -> usize {
        self.layout.seq_len()
    }

    /// Checks every structural and numerical invariant, naming the first
    /// violation found.
    pub fn validate(&self) -> Result<(), RelevanceError> {
        let n = self.seq_len();
        if n < 2 {
            return Err(RelevanceError::Validation(format!(
                "sequence length {n} is below 2"
            )));
        }
        if self.layers.is_empty() {
            return Err(RelevanceError::Validation("no layers".into()));
        }
        if self.n_heads == 0 {
            return Err(RelevanceError::Validation("no heads".into()));
        }
        let expected = self.n_heads * n * n;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.attn.len() != expected || layer.grad.len() != expected {
                return Err(RelevanceError::Validation(format!(
                    "layer {l}: expected {expected} values per tensor, found attn {} grad {}",
                    layer.attn.len(),
                    layer.grad.len()
                )));
            }
            for h in 0..self.n_heads {
                for r in 0..n {
                    let start = (h * n + r) * n;
                    let row = &layer.attn[start..start + n];
                    let mut sum = 0.0f64;
                    for (c, &v) in row.iter().enumerate() {
                        let v = f64::from(v);
                        if !v.is_finite()
                            || !(-ROW_SUM_TOLERANCE..=1.0 + ROW_SUM_TOLERANCE).contains(&v)
                        {
                            return Err(RelevanceError::Validation(format!(
                                "layer {l} head {h} row {r} col {c}: attention value {v} outside [0, 1]"
                            )));
                        }
                        sum += v;
                    }
                    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(RelevanceError::Validation(format!(
                            "layer {l} head {h} row {r}: attention row sums to {sum}"
                        )));
                    }
                    if let Some(c) = layer.grad[start..start + n]
                        .iter()
                        .position(|g| !g.is_finite())
                    {
                        return Err(RelevanceError::Validation(format!(
                            "layer {l} head {h} row {r} col {c}: gradient is not finite"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Attention and gradient matrices of one layer, one entry per head.
    pub fn layer_matrices(&self, layer: usize) -> (Vec<Matrix>, Vec<Matrix>) {
        let n = self.seq_len();
        let split = |values: &[f32]| -> Vec<Matrix> {
            values
                .chunks_exact(n * n)
                .map(|c| Matrix {
                    rows: n,
                    cols: n,
                    data: c.iter().map(|&v| f64::from(v)).collect(),
                })
                .collect()
        };
        let maps = &self.layers[layer];
        (split(&maps.attn), split(&maps.grad))
    }
}

/// Accumulated token-to-token relevance over the joint sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    pub sigma: Matrix,
    pub layout: TokenLayout,
}

/// Runs the layer-by-layer update `sigma <- sigma + psi * sigma` from an
/// identity start, in forward layer order.
pub fn propagate_relevance(
    dump: &AttentionDump,
    mode: InterpreterMode,
) -> Result<RelevanceMap, RelevanceError> {
    dump.validate()?;
    let mut sigma = Matrix::identity(dump.seq_len());
    for layer in 0..dump.n_layers() {
        let (attn, grad) = dump.layer_matrices(layer);
        let psi = attention_interpreter(&attn, &grad, mode)?;
        let update = psi.matmul(&sigma)?;
        for (s, u) in sigma.data.iter_mut().zip(&update.data) {
            *s += u;
        }
    }
    Ok(RelevanceMap {
        sigma,
        layout: dump.layout,
    })
}

/// How text rows are combined into one score per region column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
        })
    }
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            other => Err(format!(
                "unknown aggregation `{other}` (expected mean or max)"
            )),
        }
    }
}

/// Max-normalized per-region relevance.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionScores {
    pub scores: Vec<f64>,
    pub aggregation: Aggregation,
}

/// Reads text rows × region columns of `map` and normalizes by the maximum.
/// An all-zero readout stays all zero.
pub fn region_scores(
    map: &RelevanceMap,
    aggregation: Aggregation,
) -> Result<RegionScores, RelevanceError> {
    let TokenLayout { n_regions, n_text } = map.layout;
    if n_regions == 0 || n_text == 0 {
        return Err(RelevanceError::Layout(format!(
            "need at least one region and one text token, got {n_regions} and {n_text}"
        )));
    }
    if map.sigma.rows != n_regions + n_text || !map.sigma.is_square() {
        return Err(RelevanceError::Dimension(format!(
            "relevance map is {}x{} for a sequence of {}",
            map.sigma.rows,
            map.sigma.cols,
            n_regions + n_text
        )));
    }
    let text_rows = n_regions..n_regions + n_text;
    let raw: Vec<f64> = (0..n_regions)
        .map(|j| {
            let column = text_rows.clone().map(|i| map.sigma[(i, j)]);
            match aggregation {
                Aggregation::Mean => column.sum::<f64>() / n_text as f64,
                Aggregation::Max => column.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scores = if max > 0.0 {
        raw.iter().map(|v| (v / max).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; n_regions]
    };
    Ok(RegionScores {
        scores,
        aggregation,
    })
}
