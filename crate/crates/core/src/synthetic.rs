//! Seeded synthetic attention dumps for fixtures, property tests and fuzz
//! seeds. Attention comes from real scaled dot-product softmax over random
//! queries and keys, so every dump satisfies the ingest invariants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::relevance::{
    attention_forward, softmax_backward, AttentionDump, DumpMeta, LayerMaps, Matrix,
    RelevanceError, TokenLayout,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpShape {
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_regions: usize,
    pub n_text: usize,
    pub d_h: usize,
}

impl DumpShape {
    pub fn seq_len(&self) -> usize {
        self.n_regions + self.n_text
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..=scale))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized to fit")
}

fn random_attention(rng: &mut ChaCha8Rng, shape: &DumpShape) -> Vec<f32> {
    let n = shape.seq_len();
    let mut out = Vec::with_capacity(shape.n_heads * n * n);
    for _ in 0..shape.n_heads {
        let q = random_matrix(rng, n, shape.d_h, 2.0);
        let k = random_matrix(rng, n, shape.d_h, 2.0);
        let a = attention_forward(&q, &k, shape.d_h).expect("shapes agree");
        out.extend(a.as_slice().iter().map(|&v| v as f32));
    }
    out
}

fn dump_with(shape: DumpShape, grad_target: &str, layers: Vec<LayerMaps>) -> AttentionDump {
    AttentionDump {
        meta: DumpMeta {
            image_id: String::new(),
            question_id: String::new(),
            d_h: shape.d_h,
            grad_target: grad_target.to_owned(),
        },
        layout: TokenLayout {
            n_regions: shape.n_regions,
            n_text: shape.n_text,
        },
        n_heads: shape.n_heads,
        layers,
    }
}

/// Softmax attention with gradients drawn uniformly from `[-1, 1]`.
pub fn random_dump(seed: u64, shape: DumpShape) -> AttentionDump {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.seq_len();
    let layers = (0..shape.n_layers)
        .map(|_| {
            let attn = random_attention(&mut rng, &shape);
            let grad = (0..shape.n_heads * n * n)
                .map(|_| rng.random_range(-1.0f32..=1.0))
                .collect();
            LayerMaps { attn, grad }
        })
        .collect();
    dump_with(shape, "random uniform gradients", layers)
}

/// Softmax attention whose gradient is that of the scalar
/// `sum_{text i} sum_{region j} weights[j] * attn[i][j]`: `weights[j]` on
/// text rows over region columns, zero elsewhere. Raising one weight makes
/// that region dominate the readout.
pub fn weighted_target_dump(seed: u64, shape: DumpShape, weights: &[f64]) -> AttentionDump {
    assert_eq!(weights.len(), shape.n_regions, "one weight per region");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.seq_len();
    let mut grad_head = vec![0.0f32; n * n];
    for i in shape.n_regions..n {
        for (j, w) in weights.iter().enumerate() {
            grad_head[i * n + j] = *w as f32;
        }
    }
    let layers = (0..shape.n_layers)
        .map(|_| LayerMaps {
            attn: random_attention(&mut rng, &shape),
            grad: grad_head.repeat(shape.n_heads),
        })
        .collect();
    dump_with(shape, "region-weighted text-to-region attention", layers)
}

/// Gradients with respect to the pre-softmax scores of every head in
/// `layer`, derived from the stored attention gradients.
pub fn score_gradients(dump: &AttentionDump, layer: usize) -> Result<Vec<Matrix>, RelevanceError> {
    let (attn, grad) = dump.layer_matrices(layer);
    attn.iter()
        .zip(&grad)
        .map(|(a, g)| softmax_backward(a, g))
        .collect()
}
