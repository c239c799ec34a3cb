//! Bit-exact construction and parsing of variable-length codewords.
//!
//! A [`BitString`] is an ordered, explicitly sized sequence of bits. Bits are
//! stored most-significant-first in the order they are written, so the
//! literal `"010011"` is six bits with `0` first on the wire.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BitError {
    #[error("cannot take {requested} bits from a stream of {available}")]
    Underflow { requested: usize, available: usize },
    #[error("invalid bit character {0:?}")]
    InvalidChar(char),
    #[error("bit string of {0} bits does not fit in a 64-bit value")]
    TooWide(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        Self {
            bits: bits.into_iter().collect(),
        }
    }

    /// The low `width` bits of `value`, most significant first.
    pub fn from_value(value: u64, width: usize) -> Result<Self, BitError> {
        if width > 64 {
            return Err(BitError::TooWide(width));
        }
        Ok(Self {
            bits: (0..width).rev().map(|i| (value >> i) & 1 == 1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.bits.get(index).copied()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.bits.extend_from_slice(&other.bits);
    }

    /// Concatenation `self` then `code`.
    pub fn append(&self, code: &BitString) -> BitString {
        let mut bits = Vec::with_capacity(self.len() + code.len());
        bits.extend_from_slice(&self.bits);
        bits.extend_from_slice(&code.bits);
        BitString { bits }
    }

    /// Splits off the first `n` bits, returning `(head, rest)`.
    pub fn take_prefix(&self, n: usize) -> Result<(BitString, BitString), BitError> {
        if n > self.len() {
            return Err(BitError::Underflow {
                requested: n,
                available: self.len(),
            });
        }
        let (head, rest) = self.bits.split_at(n);
        Ok((Self::from_bits(head.iter().copied()), Self::from_bits(rest.iter().copied())))
    }

    pub fn starts_with(&self, prefix: &BitString) -> bool {
        self.bits.starts_with(&prefix.bits)
    }

    /// Interprets the bits as an unsigned big-endian integer.
    pub fn to_value(&self) -> Result<u64, BitError> {
        if self.len() > 64 {
            return Err(BitError::TooWide(self.len()));
        }
        Ok(self
            .bits
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | u64::from(b)))
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Number of bits needed to write `value`; zero still occupies one bit.
pub fn bit_length(value: u64) -> u32 {
    if value == 0 {
        1
    } else {
        u64::BITS - value.leading_zeros()
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitString {
    type Err = BitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(BitError::InvalidChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|bits| BitString { bits })
    }
}
