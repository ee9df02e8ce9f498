//! Generic multiple-try Metropolis with literal selection weights.
//!
//! The production refinement step ([`super::mtm_refine_step`]) exploits two
//! identities: the selection weights `w(y | x) = pi(y) K(y, x) lambda(y, x)`
//! are constant across candidates (so selection is uniform), and the
//! ratio-of-sums acceptance collapses to
//! `min(1, exp((r(y) - r(x)) / alpha))`. This module implements the
//! textbook multiple-try step *without* those shortcuts, computing every
//! weight from enumerated tables, so tests can confirm the identities
//! numerically instead of trusting the algebra.
//!
//! Weights are handled in log space throughout; the tilting factors
//! `exp(r / alpha)` that cancel analytically can be far outside double
//! range individually.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::matrix::StochMatrix;
use crate::model::{sample_index, Denoiser};
use crate::oracle::{exact_marginal, exact_refine_kernel, exact_soft_values, exact_target, StateTable};
use crate::reward::RewardSpec;
use crate::rng::Rng;
use crate::seq::{Sequence, Vocab};

use super::accept_probability;

/// Enumerated tables for one refined level, everything a literal
/// multiple-try step needs.
#[derive(Debug, Clone)]
pub struct GenericMtmTables {
    /// Refined level.
    pub t: u32,
    /// Proposal jump.
    pub jump: u32,
    /// Reward temperature.
    pub alpha: f64,
    /// Forward marginal `p_t`.
    pub marginal: StateTable,
    /// Tilted target `pi_t`.
    pub target: StateTable,
    /// Refinement proposal kernel `K_t`.
    pub kernel: StochMatrix,
    /// Soft values by canonical state index.
    pub soft_values: Vec<Option<f64>>,
    vocab: Vocab,
    length: usize,
}

impl GenericMtmTables {
    /// Enumerates all tables for level `t` of the given denoiser.
    pub fn build(denoiser: &Denoiser, spec: &RewardSpec, t: u32, jump: u32) -> Result<Self> {
        let marginal = exact_marginal(denoiser, t)?;
        let (target, _) = exact_target(denoiser, spec, t)?;
        let kernel = exact_refine_kernel(denoiser, t, jump)?;
        let soft_values = exact_soft_values(denoiser, spec)?;
        Ok(Self {
            t,
            jump,
            alpha: spec.alpha(),
            marginal,
            target,
            kernel,
            soft_values,
            vocab: denoiser.vocab(),
            length: denoiser.length(),
        })
    }

    fn index(&self, x: &Sequence) -> usize {
        x.canonical_index(self.vocab) as usize
    }

    fn state(&self, idx: usize) -> Sequence {
        Sequence::from_canonical_index(idx as u64, self.length, self.vocab)
    }

    /// `ln lambda(a, b) = -(r(a) + r(b)) / alpha - ln(p_t(a) K(a, b))`;
    /// `-inf` where the flow `a -> b` vanishes. The defining symmetry
    /// `lambda(a, b) = lambda(b, a)` holds because the proposal kernel is
    /// reversible with respect to `p_t`.
    pub fn log_lambda(&self, a: usize, b: usize) -> f64 {
        let flow = self.marginal.probs[a] * self.kernel.get(a, b);
        match (self.soft_values[a], self.soft_values[b]) {
            (Some(ra), Some(rb)) if flow > 0.0 => -(ra + rb) / self.alpha - flow.ln(),
            _ => f64::NEG_INFINITY,
        }
    }

    /// `ln w(y | x) = ln pi(y) + ln K(y, x) + ln lambda(y, x)`, the literal
    /// selection weight of candidate `y` proposed from `x`.
    pub fn log_weight(&self, y: usize, x: usize) -> f64 {
        let pi = self.target.probs[y];
        let back = self.kernel.get(y, x);
        if pi == 0.0 || back == 0.0 {
            return f64::NEG_INFINITY;
        }
        pi.ln() + back.ln() + self.log_lambda(y, x)
    }
}

/// Everything one literal multiple-try step computed, for comparison
/// against the closed form.
#[derive(Debug, Clone)]
pub struct GenericMtmDiag {
    /// Literal log selection weights of the candidates.
    pub log_forward_weights: Vec<f64>,
    /// Normalized selection probabilities (uniform when the constant-weight
    /// identity holds).
    pub selection_probs: Vec<f64>,
    /// Index of the selected candidate.
    pub selected: usize,
    /// Log of the ratio-of-sums acceptance ratio.
    pub log_ratio: f64,
    /// `min(1, exp(log_ratio))`, the generic acceptance probability.
    pub acceptance_generic: f64,
    /// `min(1, exp((r(y) - r(x)) / alpha))`, the closed form the production
    /// sampler uses.
    pub acceptance_closed_form: f64,
    /// Whether the proposal was accepted.
    pub accepted: bool,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// One literal multiple-try Metropolis step at the tables' level.
///
/// Draws `n_candidates` proposals from the kernel row of `x`, selects one
/// in proportion to its literal weight, draws `n_candidates - 1` auxiliary
/// states from the kernel row of the selection (the current state standing
/// in for the last), and accepts by the ratio of summed weights.
pub fn generic_mtm_step(
    tables: &GenericMtmTables,
    x: &Sequence,
    n_candidates: u32,
    rng: &mut Rng,
) -> Result<(Sequence, GenericMtmDiag)> {
    if n_candidates == 0 {
        return Err(Error::InvalidParameter(
            "multiple-try step needs at least one candidate".into(),
        ));
    }
    let x_idx = tables.index(x);
    if tables.marginal.probs[x_idx] == 0.0 {
        return Err(Error::InvalidParameter(
            "current state has zero forward-marginal mass".into(),
        ));
    }
    let r_x = tables.soft_values[x_idx].ok_or(Error::ZeroSupport {
        canonical_index: x_idx as u64,
    })?;

    let n = n_candidates as usize;
    let candidates: Vec<usize> = (0..n)
        .map(|_| sample_index(tables.kernel.row(x_idx), rng))
        .collect();
    let log_forward_weights: Vec<f64> = candidates
        .iter()
        .map(|&y| tables.log_weight(y, x_idx))
        .collect();
    let log_fwd_sum = log_sum_exp(&log_forward_weights);
    if !log_fwd_sum.is_finite() {
        return Err(Error::InvalidDistribution(
            "all candidate selection weights vanished".into(),
        ));
    }
    let selection_probs: Vec<f64> = log_forward_weights
        .iter()
        .map(|&lw| (lw - log_fwd_sum).exp())
        .collect();
    let selected = sample_index(&selection_probs, rng);
    let y_idx = candidates[selected];
    let r_y = tables.soft_values[y_idx].ok_or(Error::ZeroSupport {
        canonical_index: y_idx as u64,
    })?;

    // Auxiliary set: n - 1 fresh draws from the selected state, plus the
    // current state itself.
    let mut log_backward_weights: Vec<f64> = (0..n - 1)
        .map(|_| {
            let z = sample_index(tables.kernel.row(y_idx), rng);
            tables.log_weight(z, y_idx)
        })
        .collect();
    log_backward_weights.push(tables.log_weight(x_idx, y_idx));
    let log_bwd_sum = log_sum_exp(&log_backward_weights);

    let log_ratio = log_fwd_sum - log_bwd_sum;
    let acceptance_generic = log_ratio.exp().min(1.0);
    let acceptance_closed_form = accept_probability(r_y - r_x, tables.alpha);
    let accepted = rng.gen::<f64>() < acceptance_generic;

    let state = if accepted { tables.state(y_idx) } else { x.clone() };
    Ok((
        state,
        GenericMtmDiag {
            log_forward_weights,
            selection_probs,
            selected,
            log_ratio,
            acceptance_generic,
            acceptance_closed_form,
            accepted,
        },
    ))
}
