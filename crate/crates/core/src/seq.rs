//! Vocabularies, fixed-length sequences, and state encodings.
//!
//! A sequence holds `L` tokens drawn from `{0, .., V-1}` plus the reserved
//! absorbing `MASK` token, whose id is always `V`. A sequence with no masked
//! position is *terminal*: it is a possible sample of the data distribution
//! and a valid endpoint of any sampler.
//!
//! Two integer encodings are used:
//!
//! - the *canonical index* treats a sequence as an `L`-digit base-`(V+1)`
//!   number with position `0` as the least significant digit; it enumerates
//!   the full partially-masked state space and is the index used in CSV dumps
//!   and oracle tables;
//! - the *terminal index* is the analogous base-`V` number defined only for
//!   terminal sequences; it indexes dense data-distribution tables.

use crate::error::{Error, Result};

/// Token id. Ordinary tokens are `0..V`; the MASK sentinel is `V`.
pub type Token = u32;

/// A vocabulary of `size` ordinary tokens plus the absorbing MASK token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    /// Number of ordinary (non-mask) tokens, `V >= 2`.
    pub size: u32,
    /// Reserved MASK id; always equal to `size`.
    pub mask_id: Token,
}

impl Vocab {
    /// Creates a vocabulary of `size >= 2` ordinary tokens; MASK gets id
    /// `size`.
    pub fn new(size: u32) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidParameter(format!(
                "vocabulary needs at least 2 tokens, got {size}"
            )));
        }
        Ok(Self {
            size,
            mask_id: size,
        })
    }

    /// True if `tok` is an ordinary token or the MASK sentinel.
    pub fn contains(&self, tok: Token) -> bool {
        tok <= self.mask_id
    }
}

/// A fixed-length sequence of tokens, possibly containing MASKs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sequence {
    tokens: Vec<Token>,
}

impl Sequence {
    /// Wraps raw tokens after validating them against `vocab`.
    pub fn new(tokens: Vec<Token>, vocab: Vocab) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidParameter(
                "sequence length must be positive".into(),
            ));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| !vocab.contains(t)) {
            return Err(Error::InvalidParameter(format!(
                "token id {bad} out of range for vocabulary of size {} (mask id {})",
                vocab.size, vocab.mask_id
            )));
        }
        Ok(Self { tokens })
    }

    /// The all-MASK sequence of length `len`: the unique state at the
    /// terminal noise level.
    pub fn all_mask(len: usize, vocab: Vocab) -> Self {
        Self {
            tokens: vec![vocab.mask_id; len],
        }
    }

    /// Sequence length `L`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when `len() == 0`; never true for validated sequences.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Raw token slice.
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Token at `pos`.
    pub fn get(&self, pos: usize) -> Token {
        self.tokens[pos]
    }

    /// Overwrites the token at `pos` (no vocabulary re-check; callers write
    /// tokens they obtained from the same vocabulary).
    pub fn set(&mut self, pos: usize, tok: Token) {
        self.tokens[pos] = tok;
    }

    /// Number of masked positions.
    pub fn mask_count(&self, vocab: Vocab) -> usize {
        self.tokens
            .iter()
            .filter(|&&t| t == vocab.mask_id)
            .count()
    }

    /// Indices of masked positions, ascending.
    pub fn masked_positions(&self, vocab: Vocab) -> Vec<usize> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == vocab.mask_id)
            .map(|(i, _)| i)
            .collect()
    }

    /// True when no position is masked.
    pub fn is_terminal(&self, vocab: Vocab) -> bool {
        self.tokens.iter().all(|&t| t != vocab.mask_id)
    }

    /// Canonical base-`(V+1)` index over the full partially-masked state
    /// space; position 0 is the least significant digit and MASK is digit
    /// `V`.
    pub fn canonical_index(&self, vocab: Vocab) -> u64 {
        let base = u64::from(vocab.size) + 1;
        self.tokens
            .iter()
            .rev()
            .fold(0u64, |acc, &t| acc * base + u64::from(t))
    }

    /// Inverse of [`Sequence::canonical_index`].
    pub fn from_canonical_index(mut index: u64, len: usize, vocab: Vocab) -> Self {
        let base = u64::from(vocab.size) + 1;
        let mut tokens = Vec::with_capacity(len);
        for _ in 0..len {
            tokens.push((index % base) as Token);
            index /= base;
        }
        Self { tokens }
    }

    /// Base-`V` index over terminal sequences only; errors if any position is
    /// masked.
    pub fn terminal_index(&self, vocab: Vocab) -> Result<u64> {
        if !self.is_terminal(vocab) {
            return Err(Error::NotTerminal {
                masked: self.mask_count(vocab),
            });
        }
        let base = u64::from(vocab.size);
        Ok(self
            .tokens
            .iter()
            .rev()
            .fold(0u64, |acc, &t| acc * base + u64::from(t)))
    }

    /// Inverse of [`Sequence::terminal_index`].
    pub fn from_terminal_index(mut index: u64, len: usize, vocab: Vocab) -> Self {
        let base = u64::from(vocab.size);
        let mut tokens = Vec::with_capacity(len);
        for _ in 0..len {
            tokens.push((index % base) as Token);
            index /= base;
        }
        Self { tokens }
    }
}

/// `(V+1)^L` with overflow detection: the number of partially-masked states.
pub fn state_space_size(length: usize, vocab: Vocab) -> Result<u64> {
    let base = u64::from(vocab.size) + 1;
    let mut size: u64 = 1;
    for _ in 0..length {
        size = size.checked_mul(base).ok_or(Error::Overflow {
            length,
            vocab: vocab.size,
        })?;
    }
    Ok(size)
}

/// `V^L` with overflow detection: the number of terminal sequences.
pub fn terminal_space_size(length: usize, vocab: Vocab) -> Result<u64> {
    let base = u64::from(vocab.size);
    let mut size: u64 = 1;
    for _ in 0..length {
        size = size.checked_mul(base).ok_or(Error::Overflow {
            length,
            vocab: vocab.size,
        })?;
    }
    Ok(size)
}
