//! Dense data distributions over terminal sequences.
//!
//! A [`DataDistribution`] is an explicit probability table over all `V^L`
//! terminal sequences, indexed by terminal index. Three seeded generator
//! families cover the experiment space:
//!
//! - `random`: i.i.d. exponential weights, normalized — unstructured but
//!   full-support;
//! - `markov`: a random first-order Markov chain over token ids — correlated
//!   positions, the regime where a per-position factorized denoiser is
//!   systematically wrong;
//! - `pattern`: most of the mass split evenly over a few designated
//!   sequences, the rest spread uniformly — strongly multi-modal.
//!
//! Every generator produces strictly positive tables, so each partially
//! masked state has at least one completion with positive probability and
//! posterior queries never hit the zero-support error path. (Hand-built
//! tables may still contain zeros; the error path exists for them.)
//!
//! Tables serialize to a plain text format: a `L V` header line followed by
//! one `state_index probability` line per terminal sequence, where
//! `state_index` is the canonical base-`(V+1)` index.

use std::sync::Arc;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::seq::{terminal_space_size, Sequence, Token, Vocab};

/// Tolerance for "probabilities sum to one" validation.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Fraction of mass placed on the designated sequences by
/// [`DataDistribution::pattern`] unless overridden.
pub const DEFAULT_PATTERN_MASS: f64 = 0.9;

/// A dense distribution over terminal sequences of fixed length.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDistribution {
    length: usize,
    vocab: Vocab,
    /// `probs[terminal_index]`, summing to one.
    probs: Vec<f64>,
}

impl DataDistribution {
    /// Validates and wraps an explicit probability table indexed by terminal
    /// index.
    pub fn from_probs(length: usize, vocab: Vocab, probs: Vec<f64>) -> Result<Self> {
        let expect = terminal_space_size(length, vocab)?;
        if expect > usize::MAX as u64 {
            return Err(Error::Overflow {
                length,
                vocab: vocab.size,
            });
        }
        if probs.len() as u64 != expect {
            return Err(Error::InvalidDistribution(format!(
                "expected {expect} entries for L={length}, V={}, got {}",
                vocab.size,
                probs.len()
            )));
        }
        if let Some(&bad) = probs.iter().find(|&&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "probabilities must be finite and non-negative, found {bad}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, off by more than {NORMALIZATION_TOL}"
            )));
        }
        Ok(Self {
            length,
            vocab,
            probs,
        })
    }

    /// Unstructured full-support table: i.i.d. exponential weights,
    /// normalized.
    pub fn random(length: usize, vocab: Vocab, stream: RngStream) -> Result<Self> {
        let n = checked_table_len(length, vocab)?;
        let mut rng = stream.rng();
        let mut probs: Vec<f64> = (0..n)
            .map(|_| {
                // -ln(1-u) is Exp(1); u in [0,1) keeps the argument positive.
                let u: f64 = rng.gen();
                -(1.0 - u).ln()
            })
            .collect();
        normalize(&mut probs);
        Self::from_probs(length, vocab, probs)
    }

    /// First-order Markov chain with random strictly positive initial and
    /// transition probabilities. Adjacent positions are correlated, so the
    /// joint does not factorize over positions.
    pub fn markov(length: usize, vocab: Vocab, stream: RngStream) -> Result<Self> {
        let n = checked_table_len(length, vocab)?;
        let v = vocab.size as usize;
        let mut rng = stream.rng();
        let mut draw_row = |len: usize| -> Vec<f64> {
            let mut row: Vec<f64> = (0..len)
                .map(|_| {
                    let u: f64 = rng.gen();
                    -(1.0 - u).ln()
                })
                .collect();
            normalize(&mut row);
            row
        };
        let initial = draw_row(v);
        let transitions: Vec<Vec<f64>> = (0..v).map(|_| draw_row(v)).collect();

        let mut probs = vec![0.0; n];
        for (idx, p) in probs.iter_mut().enumerate() {
            let seq = Sequence::from_terminal_index(idx as u64, length, vocab);
            let toks = seq.tokens();
            let mut prob = initial[toks[0] as usize];
            for w in toks.windows(2) {
                prob *= transitions[w[0] as usize][w[1] as usize];
            }
            *p = prob;
        }
        normalize(&mut probs);
        Self::from_probs(length, vocab, probs)
    }

    /// Places `pattern_mass` split evenly over `patterns` and spreads the
    /// remaining mass uniformly over all terminal sequences (so the table
    /// stays strictly positive). Patterns must be terminal, of matching
    /// length, and distinct.
    pub fn pattern(
        length: usize,
        vocab: Vocab,
        patterns: &[Sequence],
        pattern_mass: f64,
    ) -> Result<Self> {
        let n = checked_table_len(length, vocab)?;
        if patterns.is_empty() {
            return Err(Error::InvalidParameter(
                "pattern distribution needs at least one pattern".into(),
            ));
        }
        if !(pattern_mass > 0.0 && pattern_mass < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "pattern mass must lie strictly in (0, 1), got {pattern_mass}"
            )));
        }
        let mut probs = vec![(1.0 - pattern_mass) / n as f64; n];
        let per_pattern = pattern_mass / patterns.len() as f64;
        let mut seen = std::collections::BTreeSet::new();
        for p in patterns {
            if p.len() != length {
                return Err(Error::InvalidParameter(format!(
                    "pattern length {} does not match L={length}",
                    p.len()
                )));
            }
            let idx = p.terminal_index(vocab)?;
            if !seen.insert(idx) {
                return Err(Error::InvalidParameter(
                    "duplicate pattern in pattern distribution".into(),
                ));
            }
            probs[idx as usize] += per_pattern;
        }
        Self::from_probs(length, vocab, probs)
    }

    /// Sequence length `L`.
    pub fn length(&self) -> usize {
        self.length
    }

    /// Vocabulary.
    pub fn vocab(&self) -> Vocab {
        self.vocab
    }

    /// Probability table indexed by terminal index.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of a terminal sequence.
    pub fn prob(&self, x: &Sequence) -> Result<f64> {
        let idx = x.terminal_index(self.vocab)?;
        Ok(self.probs[idx as usize])
    }

    /// Natural-log probability of a terminal sequence (`-inf` on zero mass).
    pub fn log_prob(&self, x: &Sequence) -> Result<f64> {
        Ok(self.prob(x)?.ln())
    }

    /// Serializes to the text table format (`L V` header, then
    /// `canonical_index probability` lines in ascending index order).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.length, self.vocab.size));
        for (idx, p) in self.probs.iter().enumerate() {
            let seq = Sequence::from_terminal_index(idx as u64, self.length, self.vocab);
            out.push_str(&format!("{} {}\n", seq.canonical_index(self.vocab), p));
        }
        out
    }

    /// Parses the text table format produced by [`DataDistribution::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty distribution table".into()))?;
        let mut parts = header.split_whitespace();
        let length: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad header line: {header:?}")))?;
        let vsize: u32 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad header line: {header:?}")))?;
        if parts.next().is_some() {
            return Err(Error::Parse(format!(
                "header must be exactly 'L V', got {header:?}"
            )));
        }
        let vocab = Vocab::new(vsize)?;
        let n = checked_table_len(length, vocab)?;
        let mut probs = vec![f64::NAN; n];
        for line in lines {
            let mut parts = line.split_whitespace();
            let canonical: u64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad table line: {line:?}")))?;
            let p: f64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad table line: {line:?}")))?;
            if parts.next().is_some() {
                return Err(Error::Parse(format!(
                    "table lines must be 'state_index probability', got {line:?}"
                )));
            }
            let seq = Sequence::from_canonical_index(canonical, length, vocab);
            if !seq.is_terminal(vocab) || seq.canonical_index(vocab) != canonical {
                return Err(Error::Parse(format!(
                    "state index {canonical} is not a terminal state of L={length}, V={vsize}"
                )));
            }
            let tidx = seq.terminal_index(vocab)? as usize;
            if !probs[tidx].is_nan() {
                return Err(Error::Parse(format!(
                    "duplicate entry for state index {canonical}"
                )));
            }
            probs[tidx] = p;
        }
        if let Some(missing) = probs.iter().position(|p| p.is_nan()) {
            let seq = Sequence::from_terminal_index(missing as u64, length, vocab);
            return Err(Error::Parse(format!(
                "missing entry for state index {}",
                seq.canonical_index(vocab)
            )));
        }
        Self::from_probs(length, vocab, probs)
    }

    /// Shared-ownership handle used by denoisers and rewards.
    pub fn into_arc(self) -> Arc<Self> {
        Arc::new(self)
    }
}

/// Enumerates `(sequence, probability)` in ascending terminal-index order.
pub fn terminal_states(data: &DataDistribution) -> impl Iterator<Item = (Sequence, f64)> + '_ {
    data.probs().iter().enumerate().map(|(idx, &p)| {
        (
            Sequence::from_terminal_index(idx as u64, data.length(), data.vocab()),
            p,
        )
    })
}

fn checked_table_len(length: usize, vocab: Vocab) -> Result<usize> {
    if length == 0 {
        return Err(Error::InvalidParameter(
            "sequence length must be positive".into(),
        ));
    }
    let n = terminal_space_size(length, vocab)?;
    usize::try_from(n).map_err(|_| Error::Overflow {
        length,
        vocab: vocab.size,
    })
}

fn normalize(probs: &mut [f64]) {
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    // Nudge the largest entry so the table sums to one within tolerance even
    // after rounding; keeps from_probs validation exact.
    let total: f64 = probs.iter().sum();
    let imax = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    probs[imax] += 1.0 - total;
}

/// Parses a single token letter (`a` = 0, `b` = 1, ...) against `vocab`.
pub fn token_from_letter(ch: char, vocab: Vocab) -> Result<Token> {
    let ch = ch.to_ascii_lowercase();
    if !ch.is_ascii_lowercase() {
        return Err(Error::Parse(format!("expected a token letter, got {ch:?}")));
    }
    let tok = (ch as u32) - ('a' as u32);
    if tok >= vocab.size {
        return Err(Error::Parse(format!(
            "token letter {ch:?} maps to id {tok}, out of range for V={}",
            vocab.size
        )));
    }
    Ok(tok)
}

/// Parses a letter string (`"abba"`) into a terminal sequence.
pub fn sequence_from_letters(s: &str, length: usize, vocab: Vocab) -> Result<Sequence> {
    let tokens: Result<Vec<Token>> = s.chars().map(|c| token_from_letter(c, vocab)).collect();
    let tokens = tokens?;
    if tokens.len() != length {
        return Err(Error::Parse(format!(
            "pattern {s:?} has length {}, expected {length}",
            tokens.len()
        )));
    }
    Sequence::new(tokens, vocab)
}
