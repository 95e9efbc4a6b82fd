//! Reference computations written independently of the library code paths
//! they check. They only read library types, never call library math.

#![allow(dead_code, clippy::needless_range_loop)]

use cos_core::geometry::Raster;
use cos_core::relevance::AttentionDump;
use cos_core::roi::RoiBox;

pub type Dense = Vec<Vec<f64>>;

pub fn softmax_row(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Central finite differences of `S -> sum(upstream ⊙ softmax_rows(S))`.
pub fn fd_score_gradient(scores: &Dense, upstream: &Dense, step: f64) -> Dense {
    let objective = |s: &Dense| -> f64 {
        s.iter()
            .zip(upstream)
            .map(|(row, up)| {
                softmax_row(row)
                    .iter()
                    .zip(up)
                    .map(|(a, u)| a * u)
                    .sum::<f64>()
            })
            .sum()
    };
    let mut grad = vec![vec![0.0; scores[0].len()]; scores.len()];
    for i in 0..scores.len() {
        for j in 0..scores[0].len() {
            let mut plus = scores.clone();
            let mut minus = scores.clone();
            plus[i][j] += step;
            minus[i][j] -= step;
            grad[i][j] = (objective(&plus) - objective(&minus)) / (2.0 * step);
        }
    }
    grad
}

fn mat_mul(a: &Dense, b: &Dense) -> Dense {
    let n = a.len();
    let m = b[0].len();
    let inner = b.len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..inner).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn eye(n: usize) -> Dense {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Head-mean of `max(grad * attn, 0)` for one layer, from raw tensors.
pub fn interpreter(dump: &AttentionDump, layer: usize) -> Dense {
    let n = dump.layout.n_regions + dump.layout.n_text;
    let maps = &dump.layers[layer];
    let mut psi = vec![vec![0.0; n]; n];
    for h in 0..dump.n_heads {
        for i in 0..n {
            for j in 0..n {
                let at = h * n * n + i * n + j;
                let prod = f64::from(maps.grad[at]) * f64::from(maps.attn[at]);
                if prod > 0.0 {
                    psi[i][j] += prod;
                }
            }
        }
    }
    for row in &mut psi {
        for v in row.iter_mut() {
            *v /= dump.n_heads as f64;
        }
    }
    psi
}

/// Closed form `(I + psi_L) ··· (I + psi_1)`, associated left to right
/// starting from the last layer.
pub fn product_form_sigma(dump: &AttentionDump) -> Dense {
    let n = dump.layout.n_regions + dump.layout.n_text;
    let mut acc: Option<Dense> = None;
    for layer in (0..dump.layers.len()).rev() {
        let mut factor = interpreter(dump, layer);
        for (i, row) in factor.iter_mut().enumerate() {
            row[i] += 1.0;
        }
        acc = Some(match acc {
            None => factor,
            Some(p) => mat_mul(&p, &factor),
        });
    }
    acc.unwrap_or_else(|| eye(n))
}

fn sample(img: &Raster, x: isize, y: isize, c: usize, fill: u8) -> f64 {
    if x < 0 || y < 0 || x as usize >= img.width() || y as usize >= img.height() {
        return f64::from(fill);
    }
    f64::from(img.pixel(x as usize, y as usize)[c])
}

/// Straight-line crop-and-zoom: centred padding expressed as coordinate
/// offsets, pixel bounds by round-half-up with a 1-pixel minimum, then a
/// separable two-pass bilinear resample with half-pixel centres.
pub fn crop_zoom_reference(img: &Raster, b: &RoiBox, out: usize, fill: u8) -> Vec<u8> {
    let side = img.width().max(img.height());
    let off_x = ((side - img.width()) / 2) as isize;
    let off_y = ((side - img.height()) / 2) as isize;
    let bound = |v: f64| ((v * side as f64 + 0.5).floor() as usize).min(side);
    let span = |lo: f64, hi: f64| {
        let (mut a, mut z) = (bound(lo), bound(hi));
        if z <= a {
            if a < side {
                z = a + 1;
            } else {
                a = side - 1;
                z = side;
            }
        }
        (a, z)
    };
    let (x0, x1) = span(b.w0(), b.w1());
    let (y0, y1) = span(b.h0(), b.h1());
    let (cw, chh) = (x1 - x0, y1 - y0);
    let cs = cw.max(chh);
    let (cx, cy) = (((cs - cw) / 2) as isize, ((cs - chh) / 2) as isize);
    let ch = img.channels();

    // Value of the padded crop square at integer coordinates.
    let square = |u: isize, v: isize, c: usize| -> f64 {
        let (ux, vy) = (u - cx, v - cy);
        if ux < 0 || vy < 0 || ux as usize >= cw || vy as usize >= chh {
            return f64::from(fill);
        }
        sample(
            img,
            x0 as isize + ux - off_x,
            y0 as isize + vy - off_y,
            c,
            fill,
        )
    };

    let coord = |i: usize| -> (isize, isize, f64) {
        let s = ((i as f64 + 0.5) * cs as f64 / out as f64 - 0.5).clamp(0.0, (cs - 1) as f64);
        let lo = s.floor();
        let hi = (lo + 1.0).min((cs - 1) as f64);
        (lo as isize, hi as isize, s - lo)
    };

    // Horizontal pass over every source row, then vertical.
    let mut horizontal = vec![0.0f64; cs * out * ch];
    for v in 0..cs {
        for x in 0..out {
            let (l, r, f) = coord(x);
            for c in 0..ch {
                horizontal[(v * out + x) * ch + c] =
                    square(l, v as isize, c) * (1.0 - f) + square(r, v as isize, c) * f;
            }
        }
    }
    let mut result = vec![0u8; out * out * ch];
    for y in 0..out {
        let (t, bt, f) = coord(y);
        for x in 0..out {
            for c in 0..ch {
                let top = horizontal[(t as usize * out + x) * ch + c];
                let bottom = horizontal[(bt as usize * out + x) * ch + c];
                let v = top * (1.0 - f) + bottom * f;
                result[(y * out + x) * ch + c] = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    result
}

/// 8×8 single-channel checkerboard of 0/255 pixels.
pub fn checkerboard(side: usize) -> Raster {
    let data = (0..side * side)
        .map(|i| {
            if (i / side + i % side).is_multiple_of(2) {
                255
            } else {
                0
            }
        })
        .collect();
    Raster::new(side, side, 1, data).unwrap()
}
