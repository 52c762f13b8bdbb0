//! Binary sequences used for sources, queries and codewords.
//!
//! Positions are 0-indexed. The external form is an ASCII string of `'0'`
//! and `'1'` characters.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A finite sequence over `{0, 1}`. Every stored byte is either 0 or 1.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    bits: Vec<u8>,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from raw symbols, rejecting anything other than 0 or 1.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidSymbol(char::from(b'0'.wrapping_add(b))));
        }
        Ok(Self { bits })
    }

    pub(crate) fn from_bits_unchecked(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![0; len] }
    }

    /// The `width` low bits of `value`, most significant first.
    pub fn from_value(value: u64, width: usize) -> Self {
        let bits = (0..width)
            .rev()
            .map(|i| if i < 64 { ((value >> i) & 1) as u8 } else { 0 })
            .collect();
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        self.bits.get(i).copied()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit as u8);
    }

    pub fn hamming_weight(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// True iff `self` equals the first `self.len()` symbols of `other`.
    pub fn is_prefix_of(&self, other: &BitString) -> bool {
        other.bits.starts_with(&self.bits)
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut bits = Vec::with_capacity(self.len() + other.len());
        bits.extend_from_slice(&self.bits);
        bits.extend_from_slice(&other.bits);
        Self { bits }
    }

    /// `len` symbols starting at `start`, wrapping modulo `self.len()` as many
    /// times as needed.
    pub fn circular_window(&self, start: usize, len: usize) -> Result<BitString> {
        let n = self.bits.len();
        if n == 0 {
            return Err(Error::EmptySequence);
        }
        if start >= n {
            return Err(Error::WindowStart { start, len: n });
        }
        let bits = (0..len).map(|j| self.bits[(start + j) % n]).collect();
        Ok(Self { bits })
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> BitString {
        Self {
            bits: self.bits[range].to_vec(),
        }
    }

    /// Big-endian integer value, for strings of at most 64 symbols.
    pub fn value(&self) -> u64 {
        self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }
}

pub fn hamming_weight(b: &BitString) -> usize {
    b.hamming_weight()
}

pub fn is_prefix(a: &BitString, b: &BitString) -> bool {
    a.is_prefix_of(b)
}

pub fn circular_window(x: &BitString, start: usize, len: usize) -> Result<BitString> {
    x.circular_window(start, len)
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::InvalidSymbol(other)),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(Self { bits })
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            f.write_str("ε")
        } else {
            fmt::Display::fmt(self, f)
        }
    }
}

impl From<&[bool]> for BitString {
    fn from(bits: &[bool]) -> Self {
        Self {
            bits: bits.iter().map(|&b| b as u8).collect(),
        }
    }
}
