//! Exact enumeration oracles over the full state space.
//!
//! For instances small enough to enumerate all `(V + 1)^L` partially-masked
//! states, these routines compute forward marginals, soft values, tilted
//! target distributions, dense transition kernels, and the balance
//! identities that make the refinement chain correct:
//!
//! * the noising–denoising proposal kernel `K_t` is reversible with respect
//!   to the forward marginal `p_t`:  `p_t(x) K_t(x, y) = p_t(y) K_t(y, x)`;
//! * the multiple-try selection weights `w(y | x) = pi_t(y) K_t(y, x)
//!   lambda(y, x)` are constant across candidates `y`, so selection is
//!   uniform and acceptance collapses to `min(1, exp((r(y) - r(x)) /
//!   alpha))`;
//! * the resulting chain kernel `M_t` is in detailed balance with the
//!   reward-tilted target `pi_t(x) ∝ p_t(x) exp(r(x) / alpha)`;
//! * pushing `pi_t` through the soft-value-tilted reverse kernel yields
//!   `pi_{t-1}`, with a level-independent partition function.
//!
//! All oracles take the denoiser they should describe; handing them an
//! exact-posterior denoiser makes every identity hold to numerical
//! precision, while a mean-field denoiser exposes its model error as
//! nonzero residuals.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::StochMatrix;
use crate::model::{sample_index, Denoiser, ENUM_CAP};
use crate::reward::{intermediate_reward, RewardMode, RewardSpec};
use crate::rng::RngStream;
use crate::samplers::{
    accept_probability, mtm_refine_step, IterRefConfig, NfeLedger, RefinePool, RunLog,
};
use crate::schedule::Schedule;
use crate::seq::{state_space_size, Sequence, Vocab};

/// A dense probability vector over all `(V + 1)^L` states at one noise
/// level, indexed by canonical state index.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTable {
    /// Noise level the table describes.
    pub t: u32,
    /// `probs[i]` is the probability of the state with canonical index `i`.
    pub probs: Vec<f64>,
}

impl StateTable {
    /// Number of states.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    /// True for an empty table (never produced by the oracles).
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Pushes the table through a transition kernel, relabeling to level
    /// `t_new`.
    pub fn push_through(&self, kernel: &StochMatrix, t_new: u32) -> Result<StateTable> {
        Ok(StateTable {
            t: t_new,
            probs: kernel.push(&self.probs)?,
        })
    }
}

/// Total variation distance `0.5 * sum |p_i - q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p
        .iter()
        .zip(q)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

fn checked_state_count(length: usize, vocab: Vocab) -> Result<usize> {
    let states = state_space_size(length, vocab)?;
    if states > ENUM_CAP {
        return Err(Error::CapExceeded {
            states,
            cap: ENUM_CAP,
        });
    }
    Ok(states as usize)
}

/// Exact forward marginal `p_t` over all states: each clean sequence is
/// scattered over its `2^L` mask patterns with weight `(1 - alpha_t)^m *
/// alpha_t^(L - m)` for `m` masked positions.
pub fn exact_marginal(denoiser: &Denoiser, t: u32) -> Result<StateTable> {
    let vocab = denoiser.vocab();
    let length = denoiser.length();
    let schedule = denoiser.schedule();
    if t > schedule.t_max() {
        return Err(Error::InvalidParameter(format!(
            "level {t} beyond schedule end {}",
            schedule.t_max()
        )));
    }
    let alpha = schedule.alpha(t);
    let n = checked_state_count(length, vocab)?;
    let mut probs = vec![0.0; n];
    // Weight of masking exactly the positions in a subset of size m.
    let mut pattern_weight = vec![0.0; length + 1];
    for (m, w) in pattern_weight.iter_mut().enumerate() {
        *w = (1.0 - alpha).powi(m as i32) * alpha.powi((length - m) as i32);
    }
    for (x0, p0) in crate::dist::terminal_states(denoiser.data()) {
        if p0 == 0.0 {
            continue;
        }
        for subset in 0u64..(1u64 << length) {
            let mut masked = x0.clone();
            let mut m = 0usize;
            for pos in 0..length {
                if subset & (1 << pos) != 0 {
                    masked.set(pos, vocab.mask_id);
                    m += 1;
                }
            }
            probs[masked.canonical_index(vocab) as usize] += p0 * pattern_weight[m];
        }
    }
    Ok(StateTable { t, probs })
}

/// Soft value of every state under the denoiser's own posterior, indexed by
/// canonical state index; `None` where the posterior has no support (such
/// states also carry zero forward-marginal mass).
///
/// Masking is value-blind, so the posterior — and with it the soft value —
/// depends only on the mask pattern, not on the noise level.
pub fn exact_soft_values(denoiser: &Denoiser, spec: &RewardSpec) -> Result<Vec<Option<f64>>> {
    let vocab = denoiser.vocab();
    let length = denoiser.length();
    let n = checked_state_count(length, vocab)?;
    let exact = spec.with_mode(RewardMode::Exact);
    // Exact-mode soft values are deterministic; the stream is never drawn.
    let mut rng = RngStream::new(0, 0).rng();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let x = Sequence::from_canonical_index(i as u64, length, vocab);
        match intermediate_reward(&exact, denoiser, &x, &mut rng) {
            Ok(v) => values.push(Some(v.value)),
            Err(Error::ZeroSupport { .. }) => values.push(None),
            Err(e) => return Err(e),
        }
    }
    Ok(values)
}

/// Reward-tilted target at level `t`:
/// `pi_t(x) = p_t(x) exp(r(x) / alpha) / Z_t`.
///
/// Returns the normalized table and `ln Z_t`. The log-partition is
/// level-independent: summing the tower property of soft values over `p_t`
/// shows `Z_t = E_{p_t}[exp(r(x) / alpha)]` takes the same value at every
/// level.
pub fn exact_target(denoiser: &Denoiser, spec: &RewardSpec, t: u32) -> Result<(StateTable, f64)> {
    let marginal = exact_marginal(denoiser, t)?;
    let values = exact_soft_values(denoiser, spec)?;
    let alpha = spec.alpha();
    // log p_t(x) + r(x) / alpha, normalized by log-sum-exp.
    let mut logits = vec![f64::NEG_INFINITY; marginal.len()];
    for (i, (&p, r)) in marginal.probs.iter().zip(&values).enumerate() {
        if p > 0.0 {
            let r = r.ok_or(Error::ZeroSupport {
                canonical_index: i as u64,
            })?;
            logits[i] = p.ln() + r / alpha;
        }
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InvalidDistribution(
            "tilted target has no finite mass".into(),
        ));
    }
    let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    let log_z = max + sum.ln();
    let probs = logits.iter().map(|&l| (l - log_z).exp()).collect();
    Ok((StateTable { t, probs }, log_z))
}

/// Dense forward-noising kernel from level `t_from` to `t_to > t_from`:
/// positions mask independently with probability `1 - alpha_to / alpha_from`
/// and masked positions stay masked.
pub fn forward_kernel(
    schedule: &Schedule,
    vocab: Vocab,
    length: usize,
    t_from: u32,
    t_to: u32,
) -> Result<StochMatrix> {
    let mu = schedule.mask_prob(t_from, t_to)?;
    let n = checked_state_count(length, vocab)?;
    let mut kernel = StochMatrix::zeros(n);
    for row in 0..n {
        let x = Sequence::from_canonical_index(row as u64, length, vocab);
        // Enumerate subsets of currently-unmasked positions to mask.
        let unmasked: Vec<usize> = (0..length)
            .filter(|&pos| x.get(pos) != vocab.mask_id)
            .collect();
        let u = unmasked.len();
        for subset in 0u64..(1u64 << u) {
            let mut y = x.clone();
            let mut masked_now = 0usize;
            for (j, &pos) in unmasked.iter().enumerate() {
                if subset & (1 << j) != 0 {
                    y.set(pos, vocab.mask_id);
                    masked_now += 1;
                }
            }
            let w = mu.powi(masked_now as i32) * (1.0 - mu).powi((u - masked_now) as i32);
            *kernel.get_mut(row, y.canonical_index(vocab) as usize) += w;
        }
    }
    Ok(kernel)
}

/// Dense refinement proposal kernel at level `t`: noise up to
/// `k = min(t + jump, T)`, then denoise back to `t`. Degenerates to the
/// identity when the clamp makes `k = t` (only at `t = T`).
pub fn exact_refine_kernel(denoiser: &Denoiser, t: u32, jump: u32) -> Result<StochMatrix> {
    let t_max = denoiser.schedule().t_max();
    if t == 0 || t > t_max {
        return Err(Error::InvalidParameter(format!(
            "refinement level must lie in 1..={t_max}, got {t}"
        )));
    }
    let k = t.saturating_add(jump).min(t_max);
    if k == t {
        let n = checked_state_count(denoiser.length(), denoiser.vocab())?;
        return Ok(StochMatrix::identity(n));
    }
    let up = forward_kernel(denoiser.schedule(), denoiser.vocab(), denoiser.length(), t, k)?;
    let down = denoiser.reverse_kernel(k, t)?;
    up.matmul(&down)
}

/// Soft-value-tilted reverse kernel from level `t` to `s`:
/// `K*(x, y) ∝ P(x, y) exp(r(y) / alpha)`, rows normalized. Rows with no
/// mass (unreachable states) fall back to the identity.
///
/// Pushing the tilted target `pi_t` through this kernel yields `pi_s`
/// exactly when the denoiser is exact.
pub fn exact_optimal_kernel(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    t: u32,
    s: u32,
) -> Result<StochMatrix> {
    let base = denoiser.reverse_kernel(t, s)?;
    let values = exact_soft_values(denoiser, spec)?;
    let alpha = spec.alpha();
    let n = base.n();
    let mut tilted = StochMatrix::zeros(n);
    for row in 0..n {
        // Tilt in log space: exp(ln P(x, y) + r(y) / alpha - max) per row.
        let mut logits = vec![f64::NEG_INFINITY; n];
        for (col, logit) in logits.iter_mut().enumerate() {
            let p = base.get(row, col);
            if p > 0.0 {
                if let Some(r) = values[col] {
                    *logit = p.ln() + r / alpha;
                }
            }
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            *tilted.get_mut(row, row) = 1.0;
            continue;
        }
        let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
        for (col, &l) in logits.iter().enumerate() {
            if l.is_finite() {
                *tilted.get_mut(row, col) = (l - max).exp() / sum;
            }
        }
    }
    Ok(tilted)
}

/// Markov kernel of one refinement iteration at level `t`:
/// `M(x, y) = K(x, y) min(1, exp((r(y) - r(x)) / alpha))` off the diagonal,
/// with all rejection mass on the diagonal.
///
/// Selecting uniformly among any number of candidates drawn independently
/// from `K(x, ·)` leaves this one-try kernel unchanged, so the pool size
/// does not appear.
pub fn mtm_chain_kernel(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    t: u32,
    jump: u32,
) -> Result<StochMatrix> {
    let proposal = exact_refine_kernel(denoiser, t, jump)?;
    let values = exact_soft_values(denoiser, spec)?;
    let alpha = spec.alpha();
    let n = proposal.n();
    let mut chain = StochMatrix::zeros(n);
    for row in 0..n {
        let r_x = match values[row] {
            Some(r) => r,
            None => {
                *chain.get_mut(row, row) = 1.0;
                continue;
            }
        };
        let mut stay = 1.0;
        for col in 0..n {
            if col == row {
                continue;
            }
            let k = proposal.get(row, col);
            if k == 0.0 {
                continue;
            }
            // Proposals without support are rejected outright.
            let beta = match values[col] {
                Some(r_y) => accept_probability(r_y - r_x, alpha),
                None => 0.0,
            };
            let flow = k * beta;
            *chain.get_mut(row, col) = flow;
            stay -= flow;
        }
        *chain.get_mut(row, row) = stay.max(0.0);
    }
    Ok(chain)
}

/// Numerical residuals of the balance identities at one refined level.
///
/// With an exact-posterior denoiser every field is at numerical-noise
/// scale; a mean-field denoiser shows its model error in the kernel
/// reversibility (and consequently the detailed-balance) residual.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    /// Refined level audited.
    pub t: u32,
    /// Largest log-scale asymmetry of the selection-weight function
    /// `lambda(x, y) = exp(-(r(x) + r(y)) / alpha) / (p_t(x) K(x, y))` over
    /// state pairs with flow in both directions.
    pub max_lambda_asymmetry: f64,
    /// Largest residual of `p_t(x) K(x, y) = p_t(y) K(y, x)` over all
    /// pairs.
    pub max_kernel_reversibility_residual: f64,
    /// Largest residual of `pi_t(x) M(x, y) = pi_t(y) M(y, x)` over all
    /// off-diagonal pairs of the chain kernel.
    pub max_detailed_balance_residual: f64,
    /// Largest log-scale spread of the multiple-try selection weights
    /// `w(y | x) = pi_t(y) K(y, x) lambda(y, x)` across candidates `y` of
    /// any state `x`; a uniform-selection certificate when zero.
    pub weight_spread: f64,
}

impl std::fmt::Display for BalanceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "balance audit at level {}", self.t)?;
        writeln!(f, "  lambda_asymmetry            {:.3e}", self.max_lambda_asymmetry)?;
        writeln!(
            f,
            "  kernel_reversibility        {:.3e}",
            self.max_kernel_reversibility_residual
        )?;
        writeln!(
            f,
            "  detailed_balance            {:.3e}",
            self.max_detailed_balance_residual
        )?;
        write!(f, "  selection_weight_spread     {:.3e}", self.weight_spread)
    }
}

/// Audits the balance identities of the refinement chain at level `t`.
pub fn balance_audit(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    t: u32,
    jump: u32,
) -> Result<BalanceReport> {
    let marginal = exact_marginal(denoiser, t)?;
    let (target, _) = exact_target(denoiser, spec, t)?;
    let values = exact_soft_values(denoiser, spec)?;
    let proposal = exact_refine_kernel(denoiser, t, jump)?;
    let chain = mtm_chain_kernel(denoiser, spec, t, jump)?;
    let alpha = spec.alpha();
    let n = proposal.n();

    let mut max_rev = 0.0f64;
    let mut max_db = 0.0f64;
    let mut max_lambda = 0.0f64;
    let mut max_spread = 0.0f64;

    // ln lambda(x, y); NAN where undefined (no flow x -> y).
    let log_lambda = |x: usize, y: usize| -> f64 {
        let flow = marginal.probs[x] * proposal.get(x, y);
        match (values[x], values[y]) {
            (Some(rx), Some(ry)) if flow > 0.0 => -(rx + ry) / alpha - flow.ln(),
            _ => f64::NAN,
        }
    };

    for x in 0..n {
        for y in (x + 1)..n {
            let fwd = marginal.probs[x] * proposal.get(x, y);
            let bwd = marginal.probs[y] * proposal.get(y, x);
            max_rev = max_rev.max((fwd - bwd).abs());

            let db_fwd = target.probs[x] * chain.get(x, y);
            let db_bwd = target.probs[y] * chain.get(y, x);
            max_db = max_db.max((db_fwd - db_bwd).abs());

            let lam_xy = log_lambda(x, y);
            let lam_yx = log_lambda(y, x);
            if lam_xy.is_finite() && lam_yx.is_finite() {
                max_lambda = max_lambda.max((lam_xy - lam_yx).abs());
            }
        }
    }

    // Selection-weight spread: ln w(y | x) over candidates y with flow from
    // x, for every state x the chain can occupy.
    for x in 0..n {
        if marginal.probs[x] == 0.0 {
            continue;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for y in 0..n {
            if proposal.get(x, y) == 0.0 || target.probs[y] == 0.0 {
                continue;
            }
            let lam = log_lambda(y, x);
            if !lam.is_finite() {
                continue;
            }
            let w = target.probs[y].ln() + proposal.get(y, x).ln() + lam;
            lo = lo.min(w);
            hi = hi.max(w);
        }
        if hi.is_finite() && lo.is_finite() {
            max_spread = max_spread.max(hi - lo);
        }
    }

    Ok(BalanceReport {
        t,
        max_lambda_asymmetry: max_lambda,
        max_kernel_reversibility_residual: max_rev,
        max_detailed_balance_residual: max_db,
        weight_spread: max_spread,
    })
}

/// Empirical convergence of the refinement chain at level `t` toward the
/// tilted target.
///
/// Runs `n_chains` independent refinement chains — the production
/// multiple-try step with pool size `n_candidates` and the given reuse
/// policy — each started from the exact forward marginal `p_t`, and reports
/// the total variation distance between the empirical state distribution
/// and `pi_t` at each checkpoint (iteration counts, ascending; 0 measures
/// the initial draw). Chains run in parallel with one deterministic
/// substream each, aggregating integer counts, so results are independent
/// of thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn chain_convergence(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    t: u32,
    jump: u32,
    n_candidates: u32,
    pool_reuse: bool,
    n_chains: u64,
    checkpoints: &[u64],
    stream: RngStream,
) -> Result<Vec<(u64, f64)>> {
    if n_chains == 0 {
        return Err(Error::InvalidParameter("need at least one chain".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "checkpoints must be strictly increasing".into(),
        ));
    }
    let marginal = exact_marginal(denoiser, t)?;
    let (target, _) = exact_target(denoiser, spec, t)?;
    let vocab = denoiser.vocab();
    let n_states = marginal.len();
    let cfg = IterRefConfig {
        n_candidates,
        k_iters: 1,
        jump,
        refine_steps: vec![t],
        pool_reuse,
    };
    cfg.validate(denoiser.schedule().t_max())?;

    let zero = || vec![vec![0u64; n_states]; checkpoints.len()];
    let counts = (0..n_chains)
        .into_par_iter()
        .fold(zero, |mut acc, chain| {
            let mut rng = stream.substream(chain).rng();
            let start = sample_index(&marginal.probs, &mut rng);
            let mut x =
                Sequence::from_canonical_index(start as u64, denoiser.length(), vocab);
            let mut ledger = NfeLedger::new();
            let mut log = RunLog::default();
            let mut pool = RefinePool::empty();
            let mut iter = 0u64;
            for (ci, &checkpoint) in checkpoints.iter().enumerate() {
                while iter < checkpoint {
                    let step = mtm_refine_step(
                        denoiser, spec, &x, t, &cfg, &mut pool, &mut ledger, &mut log,
                        &mut rng,
                    )
                    .expect("refinement from a supported state");
                    x = step.state;
                    iter += 1;
                }
                acc[ci][x.canonical_index(vocab) as usize] += 1;
            }
            acc
        })
        .reduce(zero, |mut a, b| {
            for (ra, rb) in a.iter_mut().zip(&b) {
                for (ca, cb) in ra.iter_mut().zip(rb) {
                    *ca += cb;
                }
            }
            a
        });

    let mut out = Vec::with_capacity(checkpoints.len());
    for (ci, &checkpoint) in checkpoints.iter().enumerate() {
        let empirical: Vec<f64> = counts[ci]
            .iter()
            .map(|&c| c as f64 / n_chains as f64)
            .collect();
        out.push((checkpoint, tv_distance(&empirical, &target.probs)));
    }
    Ok(out)
}
