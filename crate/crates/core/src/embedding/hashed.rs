use super::{EmbeddingError, EmbeddingProvider, ProviderKind, Token, WordVector};

pub const DEFAULT_HASH_DIMENSION: usize = 64;

pub(crate) const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Deterministic provider for tests and model-free runs.
///
/// Component `i` of a token's vector is the FNV-1a hash of
/// `seed (8 bytes LE) || token (UTF-8) || 0xFF || i (8 bytes LE)`, passed
/// through the SplitMix64 finalizer, read as a signed 64-bit integer and
/// divided by 2^63. The vector is then scaled to unit length. Only integer
/// arithmetic, one division per component and one square root are involved,
/// so the output is identical on every platform.
#[derive(Debug, Clone)]
pub struct HashEmbeddings {
    seed: u64,
    dimension: usize,
    name: String,
}

impl HashEmbeddings {
    pub fn new(seed: u64, dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self {
            seed,
            dimension,
            name: format!("test:{seed}:{dimension}"),
        }
    }

    pub fn vector(&self, token: &str) -> WordVector {
        let prefix = fnv1a(FNV_OFFSET, &self.seed.to_le_bytes());
        let prefix = fnv1a(prefix, token.as_bytes());
        let prefix = fnv1a(prefix, &[0xff]);
        let mut values: Vec<f64> = (0..self.dimension as u64)
            .map(|i| {
                let h = splitmix64_finalize(fnv1a(prefix, &i.to_le_bytes()));
                (h as i64) as f64 / 9_223_372_036_854_775_808.0
            })
            .collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        } else {
            values[0] = 1.0;
        }
        WordVector::new(values).expect("finite by construction")
    }
}

pub(crate) fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

pub(crate) fn splitmix64_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl EmbeddingProvider for HashEmbeddings {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn kind(&self) -> ProviderKind {
        ProviderKind::DeterministicTest
    }

    fn embed_tokens(&self, tokens: &[Token]) -> Result<Vec<WordVector>, EmbeddingError> {
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptyTokens);
        }
        Ok(tokens.iter().map(|t| self.vector(t.as_str())).collect())
    }
}
