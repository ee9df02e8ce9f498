//! Building runnable instances (denoiser + reward) from configuration.
//!
//! Data kinds: `uniform`, `random`, `markov` (both seeded by `data_seed`),
//! `pattern:<letters>@<mass>` (one favored sequence), and
//! `cluster:<letters>@<mass>` (a favored sequence plus all of its
//! one-substitution neighbors, sharing the mass). Tokens are written as
//! letters: `a` is token 0, `b` token 1, and so on.
//!
//! Reward names: `token_count:<letter>`, `neg_token_count:<letter>`,
//! `pattern:<letters>`, `hamming:<letters>`, `loglik` (log-probability under
//! the instance's data distribution), `constant:<value>`.

use std::sync::Arc;

use maskref::dist::{sequence_from_letters, token_from_letter, DataDistribution};
use maskref::reward::DEFAULT_ALPHA;
use maskref::{
    Denoiser, DenoiserKind, RewardMode, RewardSpec, RngStream, Schedule, Sequence, TerminalReward,
    Vocab,
};

use crate::config::fmt_float;
use crate::{CliError, CliResult};

/// Dense tables over the `V^L` terminal sequences back every instance; cap
/// the table size so misconfigured instances fail fast instead of thrashing.
pub const MAX_TERMINAL_STATES: u64 = 1 << 22;

/// `[instance]` section: the generative model under study.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSection {
    /// Sequence length `L`.
    pub length: usize,
    /// Ordinary vocabulary size `V` (MASK is implicit).
    pub vocab: u32,
    /// Schedule steps `T`.
    pub steps: u32,
    /// Data distribution kind.
    pub data: DataKind,
    /// Seed for the `random` and `markov` data kinds.
    pub data_seed: u64,
    /// Posterior approximation.
    pub denoiser: DenoiserKind,
}

impl Default for InstanceSection {
    fn default() -> Self {
        Self {
            length: 6,
            vocab: 4,
            steps: 24,
            data: DataKind::Cluster {
                letters: "aaaaaa".into(),
                mass: 0.9,
            },
            data_seed: 0,
            denoiser: DenoiserKind::MeanField,
        }
    }
}

/// `[reward]` section prior to name resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardSection {
    /// Reward name with parameters (see module docs).
    pub name: String,
    /// Guidance temperature.
    pub alpha: f64,
    /// Intermediate-reward estimator.
    pub mode: RewardMode,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self {
            name: "pattern:aaaaaa".into(),
            alpha: DEFAULT_ALPHA,
            mode: RewardMode::Exact,
        }
    }
}

/// How the data distribution is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum DataKind {
    /// Uniform over all terminal sequences.
    Uniform,
    /// Unstructured random full-support table.
    Random,
    /// First-order Markov chain with random parameters.
    Markov,
    /// One favored sequence at the given mass; the rest uniform.
    Pattern {
        /// Favored sequence, as letters.
        letters: String,
        /// Total mass on the favored sequence, in (0, 1).
        mass: f64,
    },
    /// A favored sequence and its one-substitution neighbors share the mass;
    /// the rest uniform.
    Cluster {
        /// Cluster center, as letters.
        letters: String,
        /// Total mass on the cluster, in (0, 1).
        mass: f64,
    },
}

impl DataKind {
    /// Parses `uniform | random | markov | pattern:<letters>@<mass> |
    /// cluster:<letters>@<mass>`; the `@<mass>` suffix defaults to 0.9.
    pub fn parse(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            None => match s {
                "uniform" => Ok(DataKind::Uniform),
                "random" => Ok(DataKind::Random),
                "markov" => Ok(DataKind::Markov),
                other => Err(format!(
                    "unknown data kind `{other}` (expected uniform, random, markov, pattern:<letters>@<mass>, or cluster:<letters>@<mass>)"
                )),
            },
            Some((head, rest)) => {
                let (letters, mass) = match rest.split_once('@') {
                    Some((l, m)) => (
                        l.to_string(),
                        m.parse::<f64>()
                            .map_err(|e| format!("cannot parse mass `{m}`: {e}"))?,
                    ),
                    None => (rest.to_string(), 0.9),
                };
                if letters.is_empty() {
                    return Err(format!("data kind `{s}` needs a sequence of letters"));
                }
                match head {
                    "pattern" => Ok(DataKind::Pattern { letters, mass }),
                    "cluster" => Ok(DataKind::Cluster { letters, mass }),
                    other => Err(format!("unknown data kind `{other}`")),
                }
            }
        }
    }
}

impl std::fmt::Display for DataKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DataKind::Uniform => write!(f, "uniform"),
            DataKind::Random => write!(f, "random"),
            DataKind::Markov => write!(f, "markov"),
            DataKind::Pattern { letters, mass } => {
                write!(f, "pattern:{letters}@{}", fmt_float(*mass))
            }
            DataKind::Cluster { letters, mass } => {
                write!(f, "cluster:{letters}@{}", fmt_float(*mass))
            }
        }
    }
}

/// Parses `exact | meanfield`.
pub fn parse_denoiser(s: &str) -> Result<DenoiserKind, String> {
    match s {
        "exact" => Ok(DenoiserKind::ExactPosterior),
        "meanfield" => Ok(DenoiserKind::MeanField),
        other => Err(format!(
            "unknown denoiser `{other}` (expected exact or meanfield)"
        )),
    }
}

/// Stable name for a denoiser kind; inverse of [`parse_denoiser`].
pub fn denoiser_name(kind: DenoiserKind) -> &'static str {
    match kind {
        DenoiserKind::ExactPosterior => "exact",
        DenoiserKind::MeanField => "meanfield",
    }
}

/// Parses `exact | mc:<m> | x0pred`.
pub fn parse_mode(s: &str) -> Result<RewardMode, String> {
    if let Some(m) = s.strip_prefix("mc:") {
        let m: u32 = m
            .parse()
            .map_err(|e| format!("cannot parse sample count `{m}`: {e}"))?;
        return Ok(RewardMode::MonteCarlo(m));
    }
    match s {
        "exact" => Ok(RewardMode::Exact),
        "x0pred" => Ok(RewardMode::X0Prediction),
        other => Err(format!(
            "unknown reward mode `{other}` (expected exact, mc:<m>, or x0pred)"
        )),
    }
}

/// The cluster member set: the center plus every sequence differing from it
/// in exactly one position.
pub fn cluster_patterns(center: &Sequence, vocab: Vocab) -> Vec<Sequence> {
    let mut out = vec![center.clone()];
    for pos in 0..center.len() {
        for tok in 0..vocab.size {
            if tok != center.get(pos) {
                let mut neighbor = center.clone();
                neighbor.set(pos, tok);
                out.push(neighbor);
            }
        }
    }
    out
}

/// Builds the denoiser (and the data table behind it) for an instance.
pub fn build_instance(inst: &InstanceSection) -> CliResult<(Denoiser, Arc<DataDistribution>)> {
    let vocab = Vocab::new(inst.vocab).map_err(CliError::usage)?;
    (inst.vocab as u64)
        .checked_pow(inst.length as u32)
        .filter(|&n| n <= MAX_TERMINAL_STATES)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "instance with V={} and L={} needs more than {MAX_TERMINAL_STATES} dense table entries",
                inst.vocab, inst.length
            ))
        })?;
    let schedule = Arc::new(Schedule::linear(inst.steps).map_err(CliError::usage)?);
    let stream = RngStream::new(inst.data_seed, 0);
    let data = match &inst.data {
        DataKind::Uniform => {
            let n = (inst.vocab as u64).pow(inst.length as u32) as usize;
            DataDistribution::from_probs(inst.length, vocab, vec![1.0 / n as f64; n])
        }
        DataKind::Random => DataDistribution::random(inst.length, vocab, stream),
        DataKind::Markov => DataDistribution::markov(inst.length, vocab, stream),
        DataKind::Pattern { letters, mass } => {
            let seq = sequence_from_letters(letters, inst.length, vocab)
                .map_err(CliError::usage)?;
            DataDistribution::pattern(inst.length, vocab, std::slice::from_ref(&seq), *mass)
        }
        DataKind::Cluster { letters, mass } => {
            let center = sequence_from_letters(letters, inst.length, vocab)
                .map_err(CliError::usage)?;
            let members = cluster_patterns(&center, vocab);
            DataDistribution::pattern(inst.length, vocab, &members, *mass)
        }
    }
    .map_err(CliError::usage)?;
    let data = Arc::new(data);
    let denoiser = Denoiser::new(inst.denoiser, Arc::clone(&data), schedule);
    Ok((denoiser, data))
}

/// Resolves a reward name against the instance and wraps it in a spec.
pub fn build_reward(
    reward: &RewardSection,
    length: usize,
    vocab: Vocab,
    data: &Arc<DataDistribution>,
) -> CliResult<RewardSpec> {
    let terminal = parse_terminal_reward(&reward.name, length, vocab, data)
        .map_err(CliError::Usage)?;
    RewardSpec::new(terminal, reward.alpha, reward.mode).map_err(CliError::usage)
}

fn parse_terminal_reward(
    name: &str,
    length: usize,
    vocab: Vocab,
    data: &Arc<DataDistribution>,
) -> Result<TerminalReward, String> {
    let (head, rest) = match name.split_once(':') {
        Some((h, r)) => (h, r),
        None => (name, ""),
    };
    let one_letter = |s: &str| -> Result<_, String> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(ch), None) => token_from_letter(ch, vocab).map_err(|e| e.to_string()),
            _ => Err(format!("expected a single token letter, got `{s}`")),
        }
    };
    match head {
        "token_count" => Ok(TerminalReward::TokenCount(one_letter(rest)?)),
        "neg_token_count" => Ok(TerminalReward::NegTokenCount(one_letter(rest)?)),
        "pattern" => Ok(TerminalReward::PatternMatch(
            sequence_from_letters(rest, length, vocab).map_err(|e| e.to_string())?,
        )),
        "hamming" => Ok(TerminalReward::HammingProximity(
            sequence_from_letters(rest, length, vocab).map_err(|e| e.to_string())?,
        )),
        "loglik" => {
            if rest.is_empty() {
                Ok(TerminalReward::LogLikelihood(Arc::clone(data)))
            } else {
                Err("reward `loglik` takes no parameters".into())
            }
        }
        "constant" => Ok(TerminalReward::Constant(
            rest.parse()
                .map_err(|e| format!("cannot parse constant `{rest}`: {e}"))?,
        )),
        other => Err(format!(
            "unknown reward `{other}` (expected token_count:<letter>, neg_token_count:<letter>, pattern:<letters>, hamming:<letters>, loglik, or constant:<value>)"
        )),
    }
}
