//! Deterministic text conditioning: every token hashes to a fixed
//! pseudo-random unit vector, and a label embeds as their renormalized mean.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbedding {
    pub vector: Vec<f64>,
    pub null_flag: bool,
}

impl TextEmbedding {
    pub fn null(dim: usize) -> Self {
        Self { vector: vec![0.0; dim], null_flag: true }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn to_null(&self) -> Self {
        Self::null(self.dim())
    }
}

pub fn tokenize(label: &str) -> Vec<String> {
    label
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn token_vector(token: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()));
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn embed_text(label: &str, dim: usize) -> TextEmbedding {
    let tokens = tokenize(label);
    if tokens.is_empty() || dim == 0 {
        return TextEmbedding::null(dim);
    }
    let mut acc = vec![0.0; dim];
    for t in &tokens {
        for (a, v) in acc.iter_mut().zip(token_vector(t, dim)) {
            *a += v;
        }
    }
    let n = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        return TextEmbedding::null(dim);
    }
    TextEmbedding { vector: acc.into_iter().map(|x| x / n).collect(), null_flag: false }
}
