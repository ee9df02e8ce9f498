//! Desk-scale engine for reward-guided sampling in absorbing-state discrete
//! diffusion.
//!
//! The model family is masked diffusion over fixed-length sequences: a forward
//! process independently replaces tokens with an absorbing `MASK` symbol
//! according to a survival schedule `alpha`, and a learned-free reverse process
//! denoises by drawing completions from the posterior over clean sequences.
//! On top of that sit reward-guided samplers (best-of-n, value-based
//! resampling, particle steering, search-over-paths, and a Metropolised
//! noising–denoising refinement chain) together with exact enumeration
//! oracles that audit the stationary-distribution claims those samplers rely
//! on.
//!
//! Everything is small enough to verify: instances are a few positions over a
//! few tokens, distributions are dense tables, kernels are dense matrices, and
//! every randomized routine consumes an explicit [`RngStream`] so runs replay
//! bit-identically.
//!
//! Module map:
//!
//! - [`seq`]: vocabularies, sequences, mask bookkeeping, state encodings.
//! - [`schedule`]: survival schedules `alpha[0..=T]`.
//! - [`rng`]: seeded, stream-keyed deterministic randomness.
//! - [`dist`]: dense data distributions over clean sequences + generators.
//! - [`model`]: forward noising, posteriors over clean sequences, reverse
//!   denoising steps, and their exact dense kernels.
//! - [`reward`]: terminal rewards and soft-value intermediate rewards.
//! - [`samplers`]: baseline and refinement samplers with NFE accounting.
//! - [`oracle`]: exact marginals, tilted targets, balance audits, total
//!   variation, and chain-convergence studies.

pub mod dist;
pub mod error;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod reward;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod seq;

pub use dist::DataDistribution;
pub use error::{Error, Result};
pub use model::{Denoiser, DenoiserKind, X0Posterior};
pub use reward::{RewardMode, RewardSpec, RewardValue, TerminalReward};
pub use rng::RngStream;
pub use samplers::{NfeLedger, RunOutcome, SamplerConfig};
pub use schedule::Schedule;
pub use seq::{Sequence, Token, Vocab};
