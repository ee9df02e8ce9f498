//! Samplers: unguided ancestral denoising, reward-guided baselines, and the
//! Metropolised noising–denoising refinement chain.
//!
//! Every sampler starts from the all-MASK state at level `T`, ends with a
//! terminal sequence at level 0, and accounts its work in an [`NfeLedger`]:
//! one denoiser evaluation per reverse-step call, reward evaluations as
//! charged by the reward mode. Forward noising is free. The closed-form cost
//! of each sampler is collected in [`cost`], which also plans configurations
//! that fit a total-evaluation budget.
//!
//! Randomness enters only through the [`RngStream`] argument, so any run
//! replays bit-identically.

mod baselines;
pub mod cost;
pub mod generic;
pub mod refine;

pub use baselines::{ancestral, best_of_n, fk_steering, sop, svdd, SopConfig};
pub use refine::{
    accept_probability, iterref, kernel_propose, mtm_refine_step, IterRefConfig, KernelDraw,
    RefinePool, RefineStepOutcome,
};

use crate::error::Result;
use crate::model::Denoiser;
use crate::reward::RewardSpec;
use crate::rng::RngStream;
use crate::seq::Sequence;

/// Monotone counters for function evaluations (NFEs). Denoiser and reward
/// evaluations count equally toward the total; forward noising is free.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NfeLedger {
    denoiser_evals: u64,
    reward_evals: u64,
}

impl NfeLedger {
    /// Fresh ledger with zero counts.
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds denoiser evaluations.
    pub fn charge_denoiser(&mut self, n: u64) {
        self.denoiser_evals += n;
    }

    /// Adds reward evaluations.
    pub fn charge_reward(&mut self, n: u64) {
        self.reward_evals += n;
    }

    /// Denoiser evaluations so far.
    pub fn denoiser_evals(&self) -> u64 {
        self.denoiser_evals
    }

    /// Reward evaluations so far.
    pub fn reward_evals(&self) -> u64 {
        self.reward_evals
    }

    /// Total evaluations, both kinds weighted equally.
    pub fn total(&self) -> u64 {
        self.denoiser_evals + self.reward_evals
    }
}

/// One resampling event recorded by particle-based samplers.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleEvent {
    /// Noise level the resampled states live at.
    pub t: u32,
    /// Effective sample size of the normalized weights before resampling.
    pub ess_before: f64,
    /// Effective sample size after resampling (uniform weights).
    pub ess_after: f64,
    /// True if the weights degenerated and a uniform fallback was used.
    pub degenerate: bool,
}

/// Diagnostics accumulated over one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    /// Times a weight vector degenerated (all zero or non-finite) and a
    /// uniform fallback was substituted.
    pub degenerate_weight_events: u64,
    /// Times a refinement jump `t + jump` was clamped to `T`.
    pub clamped_jumps: u64,
    /// Resampling events from particle samplers.
    pub resample_events: Vec<ResampleEvent>,
}

/// One refinement iteration as recorded in a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// Noise level being refined.
    pub t: u32,
    /// Iteration index within this level, starting at 1.
    pub iter: u32,
    /// Index of the selected candidate within the pool at selection time.
    pub candidate_idx: u32,
    /// Whether the proposal was accepted.
    pub accepted: bool,
    /// Current-state soft value before the iteration.
    pub reward_before: f64,
    /// Soft value of the retained state after the iteration.
    pub reward_after: f64,
    /// Cumulative denoiser evaluations after the iteration.
    pub denoiser_evals: u64,
    /// Cumulative reward evaluations after the iteration.
    pub reward_evals: u64,
}

/// Result of one sampler run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Terminal sequence produced at level 0.
    pub terminal: Sequence,
    /// Evaluation counts for the whole run.
    pub ledger: NfeLedger,
    /// Diagnostics.
    pub log: RunLog,
    /// Per-iteration refinement trace (empty for samplers that do not
    /// refine).
    pub trace: Vec<TraceRow>,
}

impl RunOutcome {
    fn new(terminal: Sequence, ledger: NfeLedger, log: RunLog) -> Self {
        Self {
            terminal,
            ledger,
            log,
            trace: Vec::new(),
        }
    }
}

/// A concrete, runnable sampler configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerConfig {
    /// Unguided reverse diffusion.
    Ancestral,
    /// `n` independent ancestral runs, keep the best terminal reward.
    BestOfN {
        /// Number of independent runs.
        n: u32,
    },
    /// Per-step soft-value resampling over `n` one-step candidates.
    Svdd {
        /// Candidates per step.
        n: u32,
    },
    /// Particle steering: `n` particles, periodic multinomial resampling by
    /// the change in soft value.
    FkSteering {
        /// Number of particles.
        n: u32,
        /// Steps between resampling events.
        resample_every: u32,
    },
    /// Search over paths: perturb, denoise, keep the best.
    Sop(SopConfig),
    /// Metropolised noising–denoising refinement.
    IterRef(IterRefConfig),
}

impl SamplerConfig {
    /// Stable lowercase name used in configs and CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            SamplerConfig::Ancestral => "ancestral",
            SamplerConfig::BestOfN { .. } => "bon",
            SamplerConfig::Svdd { .. } => "svdd",
            SamplerConfig::FkSteering { .. } => "fk",
            SamplerConfig::Sop(_) => "sop",
            SamplerConfig::IterRef(_) => "iterref",
        }
    }

    /// Runs the configured sampler. `spec` guides every sampler except
    /// `Ancestral`, which ignores it.
    pub fn run(
        &self,
        denoiser: &Denoiser,
        spec: &RewardSpec,
        stream: RngStream,
    ) -> Result<RunOutcome> {
        match self {
            SamplerConfig::Ancestral => ancestral(denoiser, stream),
            SamplerConfig::BestOfN { n } => best_of_n(denoiser, spec, *n, stream),
            SamplerConfig::Svdd { n } => svdd(denoiser, spec, *n, stream),
            SamplerConfig::FkSteering { n, resample_every } => {
                fk_steering(denoiser, spec, *n, *resample_every, stream)
            }
            SamplerConfig::Sop(cfg) => sop(denoiser, spec, cfg, stream),
            SamplerConfig::IterRef(cfg) => iterref(denoiser, spec, cfg, stream),
        }
    }
}

/// Effective sample size `(sum w)^2 / sum w^2` of unnormalized non-negative
/// weights; `n` for uniform weights, 1 for a single atom.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}
