//! Per-epoch choice of one QA pair per image.
//!
//! Draws come from SHA-256 over `(seed, epoch, counter, image_id)`, so the
//! same key selects the same pair on every platform and in any processing
//! order. Rejection sampling keeps the choice exactly uniform.

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::inputs::QaPair;

const DOMAIN: &[u8] = b"cos-qa-sampler-v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("no question-answer pairs to sample from")]
    Empty,
}

fn draw(seed: u64, image_id: &str, epoch: u64, counter: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(seed.to_le_bytes());
    h.update(epoch.to_le_bytes());
    h.update(counter.to_le_bytes());
    h.update(image_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Uniform index in `0..n` keyed on `(seed, image_id, epoch)`.
pub fn sample_index(
    n: usize,
    seed: u64,
    image_id: &str,
    epoch: u64,
) -> Result<usize, SamplerError> {
    if n == 0 {
        return Err(SamplerError::Empty);
    }
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    let mut counter = 0;
    loop {
        let x = draw(seed, image_id, epoch, counter);
        if x < zone {
            return Ok((x % n) as usize);
        }
        counter += 1;
    }
}

/// Picks one pair from the pairs of a single image.
pub fn sample_one_qa(pairs: &[QaPair], epoch: u64, seed: u64) -> Result<&QaPair, SamplerError> {
    let first = pairs.first().ok_or(SamplerError::Empty)?;
    let i = sample_index(pairs.len(), seed, &first.image_id, epoch)?;
    Ok(&pairs[i])
}
