//! Metropolised noising–denoising refinement.
//!
//! At a refined level `t` the chain repeatedly proposes replacements for the
//! current state by *noising up* to `k = min(t + jump, T)` (free) and
//! *denoising back* to `t` (one denoiser evaluation), scoring each proposal
//! with the intermediate reward. Proposals are drawn in pools of `N`; because
//! the multiple-try selection weights for this kernel are provably constant
//! across candidates, selection is uniform, and the acceptance probability
//! collapses to the closed form
//!
//! ```text
//! beta = min(1, exp((r(proposal) - r(current)) / alpha)).
//! ```
//!
//! A rejected candidate is removed from the pool and the remainder is reused
//! (the pool only refills when empty); an acceptance invalidates the pool,
//! since remaining candidates were proposed from the replaced state. The
//! current state's soft value is cached and re-charged only when the state
//! actually changes by a reverse step — an accepted proposal hands over its
//! already-scored value.
//!
//! Cost model (per refined level, unit reward cost `c`): pool refills charge
//! `N` denoiser + `N * c` reward; entering the level charges `c` once for the
//! current state. With every iteration rejecting, `ceil(k / N)` refills
//! happen; with every iteration accepting, `k` refills. Disabling pool reuse
//! forces exactly `k` refills regardless of acceptance, making the realized
//! cost deterministic.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::{forward_noise, Denoiser};
use crate::reward::{intermediate_reward, RewardSpec, RewardValue};
use crate::rng::{Rng, RngStream};
use crate::seq::Sequence;

use super::{NfeLedger, RunLog, RunOutcome, TraceRow};

/// Configuration of the refinement sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRefConfig {
    /// Pool size `N >= 1`.
    pub n_candidates: u32,
    /// Refinement iterations `k >= 1` per refined level.
    pub k_iters: u32,
    /// Upward jump of the proposal kernel (`t -> min(t + jump, T)`).
    pub jump: u32,
    /// Levels to refine, each in `1..=T`. Refinement happens before the
    /// reverse step that leaves the level.
    pub refine_steps: Vec<u32>,
    /// Reuse un-selected candidates after a rejection.
    pub pool_reuse: bool,
}

impl IterRefConfig {
    /// Validates against a schedule length.
    pub fn validate(&self, t_max: u32) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(Error::InvalidParameter("pool size N must be >= 1".into()));
        }
        if self.k_iters == 0 {
            return Err(Error::InvalidParameter(
                "refinement needs k >= 1 iterations".into(),
            ));
        }
        if self.jump == 0 {
            return Err(Error::InvalidParameter("jump must be >= 1".into()));
        }
        if self.refine_steps.is_empty() {
            return Err(Error::InvalidParameter(
                "refine_steps must name at least one level".into(),
            ));
        }
        let mut prev = 0u32;
        for &t in &self.refine_steps {
            if t == 0 || t > t_max {
                return Err(Error::InvalidParameter(format!(
                    "refined level {t} outside 1..={t_max}"
                )));
            }
            if t <= prev && prev != 0 {
                return Err(Error::InvalidParameter(
                    "refine_steps must be strictly increasing".into(),
                ));
            }
            prev = t;
        }
        Ok(())
    }

    /// Levels `{1, 1 + every, 1 + 2*every, ...} <= t_max`: evenly spaced
    /// refinement anchored at the last (least noisy) level.
    pub fn every(t_max: u32, every: u32) -> Vec<u32> {
        (1..=t_max).step_by(every.max(1) as usize).collect()
    }

    /// Default jump `ceil(T / 10)`, at least 1.
    pub fn default_jump(t_max: u32) -> u32 {
        t_max.div_ceil(10).max(1)
    }
}

/// One draw from the noising–denoising proposal kernel.
#[derive(Debug, Clone)]
pub struct KernelDraw {
    /// Proposed replacement state at level `t`.
    pub proposal: Sequence,
    /// Intermediate waypoint at level `min(t + jump, T)`.
    pub waypoint: Sequence,
    /// Soft value of the proposal.
    pub reward: RewardValue,
    /// True if `t + jump` exceeded `T` and was clamped.
    pub clamped: bool,
}

/// Draws one proposal for `x_t`: noise up to `k = min(t + jump, T)` (free),
/// denoise back to `t` (one denoiser evaluation), score (one reward call).
///
/// At `t = T` the clamp makes the kernel degenerate to the identity: the
/// all-MASK state noises to itself and a zero-level denoise leg changes
/// nothing, so the proposal equals the input (still charged, for uniform
/// accounting).
pub fn kernel_propose(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    x_t: &Sequence,
    t: u32,
    jump: u32,
    ledger: &mut NfeLedger,
    rng: &mut Rng,
) -> Result<KernelDraw> {
    let t_max = denoiser.schedule().t_max();
    if t == 0 || t > t_max {
        return Err(Error::InvalidParameter(format!(
            "refinement level must lie in 1..={t_max}, got {t}"
        )));
    }
    if jump == 0 {
        return Err(Error::InvalidParameter("jump must be >= 1".into()));
    }
    let k = t.saturating_add(jump).min(t_max);
    let clamped = k < t.saturating_add(jump);
    let (waypoint, proposal) = if k == t {
        // Only possible at t = T: the identity kernel.
        (x_t.clone(), x_t.clone())
    } else {
        let waypoint = forward_noise(
            denoiser.schedule(),
            denoiser.vocab(),
            x_t,
            t,
            k,
            rng,
        )?;
        let proposal = denoiser.reverse_step(&waypoint, k, t, rng)?;
        (waypoint, proposal)
    };
    ledger.charge_denoiser(1);
    let reward = intermediate_reward(spec, denoiser, &proposal, rng)?;
    ledger.charge_reward(reward.evals_used);
    Ok(KernelDraw {
        proposal,
        waypoint,
        reward,
        clamped,
    })
}

/// Candidate pool plus the cached soft value of the current state.
#[derive(Debug, Clone, Default)]
pub struct RefinePool {
    candidates: Vec<(Sequence, f64)>,
    current_reward: Option<f64>,
}

impl RefinePool {
    /// Fresh empty pool; use when arriving at a new level or state.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Candidates currently available.
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    /// True when the next refinement iteration will refill the pool.
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Result of one refinement iteration.
#[derive(Debug, Clone)]
pub struct RefineStepOutcome {
    /// Retained state (the proposal if accepted, the input otherwise).
    pub state: Sequence,
    /// Whether the proposal was accepted.
    pub accepted: bool,
    /// Index of the selected candidate within the pool at selection time.
    pub candidate_idx: u32,
    /// Cached soft value of the input state.
    pub reward_before: f64,
    /// Soft value of the retained state.
    pub reward_after: f64,
}

/// Closed-form acceptance probability `min(1, exp(delta_reward / alpha))`.
pub fn accept_probability(delta_reward: f64, alpha: f64) -> f64 {
    (delta_reward / alpha).exp().min(1.0)
}

fn accept_decision(delta_reward: f64, alpha: f64, rng: &mut Rng) -> bool {
    // NaN deltas (both values -inf) compare false and reject.
    rng.gen::<f64>() < accept_probability(delta_reward, alpha)
}

/// One multiple-try refinement iteration at level `t`.
///
/// Refills the pool with `n_candidates` fresh proposals when it is empty (or
/// when pool reuse is disabled), selects a candidate uniformly, and accepts
/// with the closed-form probability. Rejection removes the candidate from
/// the pool; acceptance clears it and hands the candidate's soft value to the
/// cache.
pub fn mtm_refine_step(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    x_t: &Sequence,
    t: u32,
    cfg: &IterRefConfig,
    pool: &mut RefinePool,
    ledger: &mut NfeLedger,
    log: &mut RunLog,
    rng: &mut Rng,
) -> Result<RefineStepOutcome> {
    if !cfg.pool_reuse || pool.candidates.is_empty() {
        pool.candidates.clear();
        for _ in 0..cfg.n_candidates {
            let draw = kernel_propose(denoiser, spec, x_t, t, cfg.jump, ledger, rng)?;
            if draw.clamped {
                log.clamped_jumps += 1;
            }
            pool.candidates.push((draw.proposal, draw.reward.value));
        }
    }
    let reward_before = match pool.current_reward {
        Some(r) => r,
        None => {
            let r = intermediate_reward(spec, denoiser, x_t, rng)?;
            ledger.charge_reward(r.evals_used);
            pool.current_reward = Some(r.value);
            r.value
        }
    };

    let idx = rng.gen_range(0..pool.candidates.len());
    let (proposal, proposal_reward) = pool.candidates[idx].clone();
    let accepted = accept_decision(proposal_reward - reward_before, spec.alpha(), rng);
    if accepted {
        pool.candidates.clear();
        pool.current_reward = Some(proposal_reward);
        Ok(RefineStepOutcome {
            state: proposal,
            accepted: true,
            candidate_idx: idx as u32,
            reward_before,
            reward_after: proposal_reward,
        })
    } else {
        pool.candidates.remove(idx);
        Ok(RefineStepOutcome {
            state: x_t.clone(),
            accepted: false,
            candidate_idx: idx as u32,
            reward_before,
            reward_after: reward_before,
        })
    }
}

/// The full refinement sampler: an ancestral chain that pauses at each level
/// in `refine_steps` for `k_iters` refinement iterations.
///
/// The trace records one row per refinement iteration with cumulative ledger
/// counts, which is enough to replay the cost accounting exactly.
pub fn iterref(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    cfg: &IterRefConfig,
    stream: RngStream,
) -> Result<RunOutcome> {
    let t_max = denoiser.schedule().t_max();
    cfg.validate(t_max)?;
    let mut rng = stream.rng();
    let mut ledger = NfeLedger::new();
    let mut log = RunLog::default();
    let mut trace = Vec::new();
    let mut refine_at = vec![false; t_max as usize + 1];
    for &t in &cfg.refine_steps {
        refine_at[t as usize] = true;
    }

    let mut x = Sequence::all_mask(denoiser.length(), denoiser.vocab());
    for t in (1..=t_max).rev() {
        if refine_at[t as usize] {
            let mut pool = RefinePool::empty();
            for iter in 1..=cfg.k_iters {
                let step =
                    mtm_refine_step(denoiser, spec, &x, t, cfg, &mut pool, &mut ledger, &mut log, &mut rng)?;
                trace.push(TraceRow {
                    t,
                    iter,
                    candidate_idx: step.candidate_idx,
                    accepted: step.accepted,
                    reward_before: step.reward_before,
                    reward_after: step.reward_after,
                    denoiser_evals: ledger.denoiser_evals(),
                    reward_evals: ledger.reward_evals(),
                });
                x = step.state;
            }
        }
        x = denoiser.reverse_step(&x, t, t - 1, &mut rng)?;
        ledger.charge_denoiser(1);
    }
    let mut outcome = RunOutcome::new(x, ledger, log);
    outcome.trace = trace;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{sequence_from_letters, DataDistribution};
    use crate::model::DenoiserKind;
    use crate::reward::{RewardMode, TerminalReward};
    use crate::schedule::Schedule;
    use std::sync::Arc;

    fn setup() -> (Denoiser, RewardSpec) {
        let vocab = crate::seq::Vocab::new(2).unwrap();
        let target = sequence_from_letters("aa", 2, vocab).unwrap();
        let data = Arc::new(
            DataDistribution::pattern(2, vocab, std::slice::from_ref(&target), 0.9).unwrap(),
        );
        let schedule = Arc::new(Schedule::linear(8).unwrap());
        let denoiser = Denoiser::new(DenoiserKind::ExactPosterior, data, schedule);
        let spec = RewardSpec::new(TerminalReward::PatternMatch(target), 0.1, RewardMode::Exact)
            .unwrap();
        (denoiser, spec)
    }

    fn config() -> IterRefConfig {
        IterRefConfig {
            n_candidates: 3,
            k_iters: 2,
            jump: 2,
            refine_steps: vec![2, 4, 6],
            pool_reuse: true,
        }
    }

    #[test]
    fn acceptance_probability_clamps_at_one() {
        assert_eq!(accept_probability(0.5, 0.1), 1.0);
        assert_eq!(accept_probability(0.0, 0.1), 1.0);
        let down = accept_probability(-0.1, 0.1);
        assert!((down - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn config_validation_catches_bad_levels() {
        let t_max = 8;
        assert!(config().validate(t_max).is_ok());
        let mut bad = config();
        bad.refine_steps = vec![0];
        assert!(bad.validate(t_max).is_err());
        bad.refine_steps = vec![9];
        assert!(bad.validate(t_max).is_err());
        bad.refine_steps = vec![4, 2];
        assert!(bad.validate(t_max).is_err());
        bad.refine_steps = vec![2, 4];
        bad.n_candidates = 0;
        assert!(bad.validate(t_max).is_err());
    }

    #[test]
    fn level_ladder_and_default_jump() {
        assert_eq!(IterRefConfig::every(8, 1), vec![1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(IterRefConfig::every(8, 3), vec![1, 4, 7]);
        assert_eq!(IterRefConfig::every(8, 100), vec![1]);
        assert_eq!(IterRefConfig::default_jump(8), 1);
        assert_eq!(IterRefConfig::default_jump(25), 3);
    }

    #[test]
    fn proposal_at_top_level_is_identity_and_clamped() {
        let (denoiser, spec) = setup();
        let x = Sequence::all_mask(2, denoiser.vocab());
        let mut ledger = NfeLedger::new();
        let mut rng = RngStream::new(5, 0).rng();
        let draw = kernel_propose(&denoiser, &spec, &x, 8, 3, &mut ledger, &mut rng).unwrap();
        assert!(draw.clamped);
        assert_eq!(draw.proposal, x);
        assert_eq!(draw.waypoint, x);
        assert_eq!(ledger.denoiser_evals(), 1);
        assert_eq!(ledger.reward_evals(), 1);
    }

    #[test]
    fn rejection_shrinks_the_pool_and_keeps_the_state() {
        let (denoiser, spec) = setup();
        // Incumbent at the reward ceiling with a sharp temperature: every
        // strictly-worse candidate is rejected (probability exp(-10)).
        let x = sequence_from_letters("aa", 2, denoiser.vocab()).unwrap();
        let worse = sequence_from_letters("ab", 2, denoiser.vocab()).unwrap();
        let mut pool = RefinePool::empty();
        pool.candidates = vec![(worse.clone(), 0.0), (worse.clone(), 0.0), (worse, 0.0)];
        pool.current_reward = Some(1.0);
        let mut ledger = NfeLedger::new();
        let mut log = RunLog::default();
        let mut rng = RngStream::new(6, 0).rng();
        let step = mtm_refine_step(
            &denoiser, &spec, &x, 4, &config(), &mut pool, &mut ledger, &mut log, &mut rng,
        )
        .unwrap();
        assert!(!step.accepted);
        assert_eq!(step.state, x);
        assert_eq!(step.reward_after, 1.0);
        assert_eq!(pool.len(), 2);
        // Nothing was recomputed: pool was full and the incumbent cached.
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn acceptance_clears_the_pool_and_adopts_the_candidate_reward() {
        let (denoiser, spec) = setup();
        let x = sequence_from_letters("ab", 2, denoiser.vocab()).unwrap();
        let better = sequence_from_letters("aa", 2, denoiser.vocab()).unwrap();
        let mut pool = RefinePool::empty();
        pool.candidates = vec![(better.clone(), 1.0), (better.clone(), 1.0)];
        pool.current_reward = Some(0.0);
        let mut ledger = NfeLedger::new();
        let mut log = RunLog::default();
        let mut rng = RngStream::new(7, 0).rng();
        let step = mtm_refine_step(
            &denoiser, &spec, &x, 4, &config(), &mut pool, &mut ledger, &mut log, &mut rng,
        )
        .unwrap();
        assert!(step.accepted);
        assert_eq!(step.state, better);
        assert_eq!(step.reward_before, 0.0);
        assert_eq!(step.reward_after, 1.0);
        assert!(pool.is_empty());
        assert_eq!(pool.current_reward, Some(1.0));
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn incumbent_value_is_computed_once_per_pool() {
        let (denoiser, spec) = setup();
        let x = Sequence::all_mask(2, denoiser.vocab());
        let mut pool = RefinePool::empty();
        let mut ledger = NfeLedger::new();
        let mut log = RunLog::default();
        let mut rng = RngStream::new(8, 0).rng();
        let cfg = config();
        mtm_refine_step(
            &denoiser, &spec, &x, 4, &cfg, &mut pool, &mut ledger, &mut log, &mut rng,
        )
        .unwrap();
        // First iteration: one refill (N denoiser + N reward) plus the
        // incumbent's single reward evaluation.
        assert_eq!(ledger.denoiser_evals(), cfg.n_candidates as u64);
        assert_eq!(ledger.reward_evals(), cfg.n_candidates as u64 + 1);
    }

    #[test]
    fn sampler_reaches_a_terminal_state_and_replays() {
        let (denoiser, spec) = setup();
        let cfg = config();
        let a = iterref(&denoiser, &spec, &cfg, RngStream::new(9, 3)).unwrap();
        let b = iterref(&denoiser, &spec, &cfg, RngStream::new(9, 3)).unwrap();
        assert!(a.terminal.is_terminal(denoiser.vocab()));
        assert_eq!(a, b);
        // One trace row per refinement iteration.
        assert_eq!(a.trace.len(), (cfg.refine_steps.len() * cfg.k_iters as usize));
        // Ledger counts are cumulative along the trace.
        for pair in a.trace.windows(2) {
            assert!(pair[1].denoiser_evals >= pair[0].denoiser_evals);
            assert!(pair[1].reward_evals >= pair[0].reward_evals);
        }
    }

    #[test]
    fn distinct_streams_decorrelate_runs() {
        let (denoiser, spec) = setup();
        let cfg = config();
        let a = iterref(&denoiser, &spec, &cfg, RngStream::new(9, 0)).unwrap();
        let b = iterref(&denoiser, &spec, &cfg, RngStream::new(9, 1)).unwrap();
        assert_ne!(a.trace, b.trace);
    }
}
