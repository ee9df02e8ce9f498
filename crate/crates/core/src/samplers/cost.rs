//! Closed-form evaluation budgets and budget-matched planning.
//!
//! Every sampler's worst-case evaluation count has a closed form in its
//! configuration, the schedule length `T`, and the per-call cost `c` of the
//! intermediate-reward mode. The planner inverts those forms: given a total
//! budget expressed as a multiple of the unguided cost `T`, it picks the
//! largest configuration of the requested sampler family whose worst case
//! fits within `budget + BUDGET_SLACK`. A family whose *minimal* guided
//! configuration still does not fit degenerates to plain ancestral sampling.

use crate::error::{Error, Result};
use crate::reward::RewardMode;

use super::{IterRefConfig, SamplerConfig, SopConfig};

/// Tolerated overshoot (in total evaluations) when fitting a configuration
/// to a budget.
pub const BUDGET_SLACK: u64 = 2;

/// Worst-case `(denoiser_evals, reward_evals)` of one ancestral run.
pub fn ancestral_cost(t_max: u32) -> (u64, u64) {
    (t_max as u64, 0)
}

/// Worst-case cost of best-of-`n`: `n` ancestral runs plus one terminal
/// reward evaluation each.
pub fn best_of_n_cost(n: u32, t_max: u32) -> (u64, u64) {
    let n = n as u64;
    (n * t_max as u64, n)
}

/// Worst-case cost of per-step resampling with `n` candidates: every one of
/// the `T` steps denoises and scores all `n` candidates.
pub fn svdd_cost(n: u32, t_max: u32, unit_reward_cost: u64) -> (u64, u64) {
    let n = n as u64;
    let t = t_max as u64;
    (n * t, n * t * unit_reward_cost)
}

/// Number of resampling events for particle steering: one at each level
/// `s > 0` with `(T - s)` divisible by `resample_every`.
pub fn fk_event_count(t_max: u32, resample_every: u32) -> u64 {
    if resample_every == 0 {
        return 0;
    }
    ((t_max.saturating_sub(1)) / resample_every) as u64
}

/// Worst-case cost of particle steering: `n` particles through `T` steps,
/// `n` soft values per resampling event, and `n` terminal rewards at the
/// end.
pub fn fk_cost(n: u32, t_max: u32, resample_every: u32, unit_reward_cost: u64) -> (u64, u64) {
    let n = n as u64;
    let events = fk_event_count(t_max, resample_every);
    (n * t_max as u64, n * events * unit_reward_cost + n)
}

/// Number of perturbation rounds for search over paths with block size `b`.
pub fn sop_round_count(t_max: u32, block: u32) -> u64 {
    (t_max as u64).div_ceil(block.max(1) as u64)
}

/// Worst-case cost of search over paths: each of `ceil(T / b)` rounds
/// denoises and scores `n * m` variants.
pub fn sop_cost(cfg: &SopConfig, t_max: u32, unit_reward_cost: u64) -> (u64, u64) {
    let per_round = cfg.n as u64 * cfg.m as u64;
    let rounds = sop_round_count(t_max, cfg.b);
    (rounds * per_round, rounds * per_round * unit_reward_cost)
}

/// Worst-case cost of refinement: `T` reverse steps, plus per refined level
/// up to `k * N` proposals (each one denoiser call and one soft value) and
/// one cached soft value for the incumbent state. The worst case is realized
/// when every iteration accepts, and always when pool reuse is off.
pub fn iterref_cost_worst(cfg: &IterRefConfig, t_max: u32, unit_reward_cost: u64) -> (u64, u64) {
    let levels = cfg.refine_steps.len() as u64;
    let proposals = cfg.k_iters as u64 * cfg.n_candidates as u64;
    (
        t_max as u64 + levels * proposals,
        levels * unit_reward_cost * (proposals + 1),
    )
}

/// Cost of refinement when every iteration rejects and pool reuse is on:
/// only `ceil(k / N)` refills happen per refined level.
pub fn iterref_cost_all_reject(
    cfg: &IterRefConfig,
    t_max: u32,
    unit_reward_cost: u64,
) -> (u64, u64) {
    let levels = cfg.refine_steps.len() as u64;
    let refills = (cfg.k_iters as u64).div_ceil(cfg.n_candidates as u64);
    let proposals = refills * cfg.n_candidates as u64;
    (
        t_max as u64 + levels * proposals,
        levels * unit_reward_cost * (proposals + 1),
    )
}

/// Worst-case `(denoiser_evals, reward_evals)` of an arbitrary
/// configuration.
pub fn worst_case_cost(
    config: &SamplerConfig,
    t_max: u32,
    unit_reward_cost: u64,
) -> (u64, u64) {
    match config {
        SamplerConfig::Ancestral => ancestral_cost(t_max),
        SamplerConfig::BestOfN { n } => best_of_n_cost(*n, t_max),
        SamplerConfig::Svdd { n } => svdd_cost(*n, t_max, unit_reward_cost),
        SamplerConfig::FkSteering { n, resample_every } => {
            fk_cost(*n, t_max, *resample_every, unit_reward_cost)
        }
        SamplerConfig::Sop(cfg) => sop_cost(cfg, t_max, unit_reward_cost),
        SamplerConfig::IterRef(cfg) => iterref_cost_worst(cfg, t_max, unit_reward_cost),
    }
}

/// Sampler family to fit to a budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerAxis {
    /// Unguided reverse diffusion (ignores the budget beyond `T`).
    Ancestral,
    /// Best of `n` independent runs.
    BestOfN,
    /// Per-step soft-value resampling.
    Svdd,
    /// Particle steering with periodic resampling.
    FkSteering,
    /// Search over paths.
    Sop,
    /// Metropolised refinement.
    IterRef,
}

impl SamplerAxis {
    /// Stable lowercase name, matching [`SamplerConfig::name`].
    pub fn name(&self) -> &'static str {
        match self {
            SamplerAxis::Ancestral => "ancestral",
            SamplerAxis::BestOfN => "bon",
            SamplerAxis::Svdd => "svdd",
            SamplerAxis::FkSteering => "fk",
            SamplerAxis::Sop => "sop",
            SamplerAxis::IterRef => "iterref",
        }
    }

    /// Parses the stable lowercase name.
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "ancestral" => SamplerAxis::Ancestral,
            "bon" => SamplerAxis::BestOfN,
            "svdd" => SamplerAxis::Svdd,
            "fk" => SamplerAxis::FkSteering,
            "sop" => SamplerAxis::Sop,
            "iterref" => SamplerAxis::IterRef,
            other => {
                return Err(Error::Parse(format!(
                    "unknown sampler '{other}' (expected ancestral, bon, svdd, fk, sop, or iterref)"
                )))
            }
        })
    }

    /// All families, in reporting order.
    pub fn all() -> [SamplerAxis; 6] {
        [
            SamplerAxis::Ancestral,
            SamplerAxis::BestOfN,
            SamplerAxis::Svdd,
            SamplerAxis::FkSteering,
            SamplerAxis::Sop,
            SamplerAxis::IterRef,
        ]
    }
}

/// Structural preferences the planner cannot infer from the budget alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanPrefs {
    /// Steps between particle-steering resampling events.
    pub fk_every: u32,
    /// Remasking fraction for search over paths.
    pub sop_remask: f64,
    /// Block size (levels per denoise leg) for search over paths.
    pub sop_block: u32,
    /// Particle count preference for search over paths.
    pub sop_particles: u32,
    /// Pool size `N` for refinement. Pools larger than one draw candidates
    /// in batches without changing the per-iteration chain law, so plans
    /// favor iterations and default to a pool of one.
    pub iterref_pool: u32,
    /// Proposal jump for refinement; 0 means `ceil(T / 2)`.
    pub iterref_jump: u32,
    /// Preferred number of refined levels, taken from the low-noise end
    /// `{1, ..., u}` where accepted improvements survive to the output.
    pub iterref_levels: u32,
    /// Reuse un-selected refinement candidates after rejections.
    pub iterref_pool_reuse: bool,
}

impl Default for PlanPrefs {
    fn default() -> Self {
        Self {
            fk_every: 2,
            sop_remask: 0.5,
            sop_block: 2,
            sop_particles: 2,
            iterref_pool: 1,
            iterref_jump: 0,
            iterref_levels: 2,
            iterref_pool_reuse: true,
        }
    }
}

/// A budget-matched sampler configuration.
#[derive(Debug, Clone)]
pub struct BudgetPlan {
    /// The configuration to run.
    pub config: SamplerConfig,
    /// Worst-case total evaluations (denoiser + reward) of `config`.
    pub worst_total: u64,
    /// The requested budget in total evaluations (`multiplier * T`).
    pub budget_total: u64,
    /// How far the family's minimal guided configuration exceeded the
    /// allowance when the plan degenerated; 0 otherwise.
    pub shortfall: u64,
    /// True when the requested family could not fit and the plan fell back
    /// to ancestral sampling.
    pub degenerated: bool,
}

fn fit_linear(allowance: u64, per_unit: u64) -> u64 {
    if per_unit == 0 {
        0
    } else {
        allowance / per_unit
    }
}

/// Picks the largest configuration of `axis` whose worst-case total cost
/// fits within `multiplier * T + BUDGET_SLACK` evaluations.
///
/// Families scaling linearly in one count (`bon`, `svdd`, `fk`) maximize
/// that count. Search over paths keeps the preferred particle count when
/// possible (dropping to one particle before giving up) and maximizes the
/// variants per particle. Refinement fixes the preferred pool size and
/// refined levels (the `u` lowest) and puts the remaining budget into
/// iterations per level; when even one iteration does not fit it shrinks
/// the pool to one, then halves the level count, before giving up.
pub fn plan_for_budget(
    axis: SamplerAxis,
    multiplier: u32,
    t_max: u32,
    mode: RewardMode,
    prefs: &PlanPrefs,
) -> Result<BudgetPlan> {
    if multiplier == 0 {
        return Err(Error::InvalidParameter(
            "budget multiplier must be >= 1".into(),
        ));
    }
    if t_max == 0 {
        return Err(Error::InvalidParameter("schedule has no steps".into()));
    }
    let c = mode.unit_cost();
    let t = t_max as u64;
    let budget_total = multiplier as u64 * t;
    let allowance = budget_total + BUDGET_SLACK;

    let finish = |config: SamplerConfig| {
        let (d, r) = worst_case_cost(&config, t_max, c);
        BudgetPlan {
            config,
            worst_total: d + r,
            budget_total,
            shortfall: 0,
            degenerated: false,
        }
    };
    let degenerate = |minimal_cost: u64| BudgetPlan {
        config: SamplerConfig::Ancestral,
        worst_total: t,
        budget_total,
        shortfall: minimal_cost.saturating_sub(allowance),
        degenerated: true,
    };

    let plan = match axis {
        SamplerAxis::Ancestral => finish(SamplerConfig::Ancestral),
        SamplerAxis::BestOfN => {
            let per_run = t + 1;
            let n = fit_linear(allowance, per_run);
            if n < 2 {
                degenerate(2 * per_run)
            } else {
                finish(SamplerConfig::BestOfN { n: clamp_u32(n) })
            }
        }
        SamplerAxis::Svdd => {
            let per_candidate = t * (1 + c);
            let n = fit_linear(allowance, per_candidate);
            if n < 2 {
                degenerate(2 * per_candidate)
            } else {
                finish(SamplerConfig::Svdd { n: clamp_u32(n) })
            }
        }
        SamplerAxis::FkSteering => {
            let events = fk_event_count(t_max, prefs.fk_every);
            let per_particle = t + events * c + 1;
            let n = fit_linear(allowance, per_particle);
            if n < 2 {
                degenerate(2 * per_particle)
            } else {
                finish(SamplerConfig::FkSteering {
                    n: clamp_u32(n),
                    resample_every: prefs.fk_every,
                })
            }
        }
        SamplerAxis::Sop => {
            let rounds = sop_round_count(t_max, prefs.sop_block);
            let per_variant = rounds * (1 + c);
            let mut n = prefs.sop_particles.max(1);
            let mut m = fit_linear(allowance, per_variant * n as u64);
            if m < 2 && n > 1 {
                n = 1;
                m = fit_linear(allowance, per_variant);
            }
            if m < 2 {
                degenerate(2 * per_variant)
            } else {
                finish(SamplerConfig::Sop(SopConfig {
                    n,
                    m: clamp_u32(m),
                    f: prefs.sop_remask,
                    b: prefs.sop_block,
                }))
            }
        }
        SamplerAxis::IterRef => {
            let jump = if prefs.iterref_jump == 0 {
                t_max.div_ceil(2)
            } else {
                prefs.iterref_jump
            };
            let mut pool = prefs.iterref_pool.max(1) as u64;
            let mut u = (prefs.iterref_levels.max(1) as u64).min(t);
            loop {
                // worst total = T + u*k*N*(1 + c) + u*c  <=  allowance
                let spare = allowance.saturating_sub(t + u * c);
                let k = spare / (u * pool * (1 + c));
                if k >= 1 {
                    break finish(SamplerConfig::IterRef(IterRefConfig {
                        n_candidates: clamp_u32(pool),
                        k_iters: clamp_u32(k),
                        jump,
                        refine_steps: (1..=u as u32).collect(),
                        pool_reuse: prefs.iterref_pool_reuse,
                    }));
                }
                if pool > 1 {
                    pool = 1;
                } else if u > 1 {
                    u /= 2;
                } else {
                    // Even a single refined level with one proposal does not
                    // fit: T + (1 + c) + c.
                    break degenerate(t + 1 + 2 * c);
                }
            }
        }
    };
    Ok(plan)
}

fn clamp_u32(x: u64) -> u32 {
    x.min(u32::MAX as u64) as u32
}
