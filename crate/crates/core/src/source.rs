//! i.i.d. Bernoulli source sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{invalid, Result};

/// Longest source the posting table can address with 32-bit positions.
pub const MAX_SOURCE_LEN: u64 = u32::MAX as u64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    /// Probability of symbol 1.
    pub p: f64,
    pub n: u64,
    pub seed: u64,
}

impl SourceSpec {
    pub fn new(p: f64, n: u64, seed: u64) -> Result<Self> {
        let spec = Self { p, n, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        validate_probability("p", self.p)?;
        if self.n == 0 {
            return Err(invalid("source length N must be at least 1"));
        }
        Ok(())
    }
}

pub(crate) fn validate_probability(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "{name} must lie strictly between 0 and 1, got {v}"
        )))
    }
}

#[derive(Clone, Debug)]
pub struct SourceSequence {
    bits: BitString,
    spec: Option<SourceSpec>,
}

impl SourceSequence {
    /// Wraps an externally supplied sequence (e.g. read from a file).
    pub fn from_bits(bits: BitString) -> Result<Self> {
        if bits.is_empty() {
            return Err(invalid("source sequence must be nonempty"));
        }
        if bits.len() as u64 > MAX_SOURCE_LEN {
            return Err(invalid("source sequence too long"));
        }
        Ok(Self { bits, spec: None })
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn spec(&self) -> Option<&SourceSpec> {
        self.spec.as_ref()
    }
}

/// Draws `N` independent Bernoulli(`p`) symbols; identical specs give
/// identical sequences.
pub fn sample_source(spec: &SourceSpec) -> Result<SourceSequence> {
    spec.validate()?;
    if spec.n > MAX_SOURCE_LEN {
        return Err(invalid(format!(
            "N = {} exceeds the materializable limit {MAX_SOURCE_LEN}",
            spec.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bits = (0..spec.n).map(|_| rng.random_bool(spec.p) as u8).collect();
    Ok(SourceSequence {
        bits: BitString::from_bits_unchecked(bits),
        spec: Some(*spec),
    })
}
