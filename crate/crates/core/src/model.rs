//! Forward noising, posteriors over clean sequences, and reverse denoising.
//!
//! The forward process is absorbing masking: between levels `t_from < t_to`
//! each still-unmasked position is masked independently with probability
//! `1 - alpha[t_to] / alpha[t_from]`, and masks never revert. Because masking
//! ignores token values, the posterior over clean sequences given a partially
//! masked state does not depend on the noise level: it is the data
//! distribution conditioned on agreement at the unmasked positions.
//!
//! Two denoisers expose that posterior:
//!
//! - [`DenoiserKind::ExactPosterior`] uses the joint conditional — reverse
//!   steps under it are the exact reversal of the forward process;
//! - [`DenoiserKind::MeanField`] replaces the joint by the product of its
//!   per-position marginals. Marginals are identical to the exact ones by
//!   construction, but correlations between positions are dropped — a
//!   controllable stand-in for model error.
//!
//! A reverse step from level `t` to `s < t` draws a clean completion from the
//! posterior and reveals each masked position independently with probability
//! `(alpha[s] - alpha[t]) / (1 - alpha[t])`; unmasked positions are never
//! altered (carry-over). [`Denoiser::reverse_kernel`] materializes the exact
//! law of that step as a dense matrix for oracle-scale audits.

use std::sync::Arc;

use rand::Rng as _;

use crate::dist::DataDistribution;
use crate::error::{Error, Result};
use crate::matrix::StochMatrix;
use crate::rng::Rng;
use crate::schedule::Schedule;
use crate::seq::{state_space_size, Sequence, Token, Vocab};

/// Cap on dense enumeration: posterior supports, state tables, and kernels
/// all refuse to materialize more than this many entries.
pub const ENUM_CAP: u64 = 2_000_000;

/// Which posterior approximation a denoiser uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserKind {
    /// The exact joint conditional of the data distribution.
    ExactPosterior,
    /// Product of the exact per-position marginals (correlations dropped).
    MeanField,
}

impl DenoiserKind {
    /// Stable lowercase name used in configs and CSV output.
    pub fn name(&self) -> &'static str {
        match self {
            DenoiserKind::ExactPosterior => "exact",
            DenoiserKind::MeanField => "meanfield",
        }
    }
}

/// A denoiser: posterior kind plus the data distribution and schedule it is
/// defined against.
#[derive(Debug, Clone)]
pub struct Denoiser {
    kind: DenoiserKind,
    data: Arc<DataDistribution>,
    schedule: Arc<Schedule>,
}

/// Posterior over clean completions of a partially masked state.
///
/// Marginals are stored per masked position for both kinds; the exact kind
/// additionally stores the joint support (assignments to the masked
/// positions with their probabilities).
#[derive(Debug, Clone)]
pub struct X0Posterior {
    kind: DenoiserKind,
    base: Sequence,
    vocab: Vocab,
    masked: Vec<usize>,
    /// `marginals[i][v]` = posterior probability that masked position
    /// `masked[i]` holds token `v`. Identical between kinds.
    marginals: Vec<Vec<f64>>,
    /// Exact kind only: `(assignment to masked positions, probability)`.
    joint: Option<Vec<(Vec<Token>, f64)>>,
}

impl Denoiser {
    /// Binds a posterior kind to a data distribution and schedule.
    pub fn new(
        kind: DenoiserKind,
        data: Arc<DataDistribution>,
        schedule: Arc<Schedule>,
    ) -> Self {
        Self {
            kind,
            data,
            schedule,
        }
    }

    /// Posterior kind.
    pub fn kind(&self) -> DenoiserKind {
        self.kind
    }

    /// Underlying data distribution.
    pub fn data(&self) -> &Arc<DataDistribution> {
        &self.data
    }

    /// Underlying schedule.
    pub fn schedule(&self) -> &Arc<Schedule> {
        &self.schedule
    }

    /// Vocabulary of the bound data distribution.
    pub fn vocab(&self) -> Vocab {
        self.data.vocab()
    }

    /// Sequence length of the bound data distribution.
    pub fn length(&self) -> usize {
        self.data.length()
    }

    /// Posterior over clean completions of `x_t`.
    ///
    /// The result depends on `x_t`'s mask pattern only (absorbing masking is
    /// value-blind), so no noise level is needed. Errors with
    /// [`Error::ZeroSupport`] if no compatible completion has positive
    /// probability.
    pub fn x0_posterior(&self, x_t: &Sequence) -> Result<X0Posterior> {
        let vocab = self.vocab();
        self.check_state(x_t)?;
        let masked = x_t.masked_positions(vocab);
        let v = vocab.size as usize;

        // Enumerate completions: assignments of tokens to masked positions.
        let combos = crate::seq::terminal_space_size(masked.len(), vocab)?;
        if combos > ENUM_CAP {
            return Err(Error::CapExceeded {
                states: combos,
                cap: ENUM_CAP,
            });
        }

        let mut joint: Vec<(Vec<Token>, f64)> = Vec::new();
        let mut marginals = vec![vec![0.0; v]; masked.len()];
        let mut total = 0.0;
        let mut work = x_t.clone();
        let mut assignment = vec![0 as Token; masked.len()];
        for combo in 0..combos {
            let mut rem = combo;
            for (slot, &pos) in masked.iter().enumerate() {
                let tok = (rem % vocab.size as u64) as Token;
                rem /= vocab.size as u64;
                assignment[slot] = tok;
                work.set(pos, tok);
            }
            let p = self.data.prob(&work)?;
            if p > 0.0 {
                total += p;
                for (slot, &tok) in assignment.iter().enumerate() {
                    marginals[slot][tok as usize] += p;
                }
                joint.push((assignment.clone(), p));
            }
        }
        if total <= 0.0 {
            return Err(Error::ZeroSupport {
                canonical_index: x_t.canonical_index(vocab),
            });
        }
        for (_, p) in joint.iter_mut() {
            *p /= total;
        }
        for row in marginals.iter_mut() {
            for p in row.iter_mut() {
                *p /= total;
            }
        }
        Ok(X0Posterior {
            kind: self.kind,
            base: x_t.clone(),
            vocab,
            masked,
            marginals,
            joint: match self.kind {
                DenoiserKind::ExactPosterior => Some(joint),
                DenoiserKind::MeanField => None,
            },
        })
    }

    /// One reverse step `t -> s` (`s < t <= T`): draws a clean completion
    /// from the posterior, then reveals each masked position independently
    /// with probability `(alpha[s] - alpha[t]) / (1 - alpha[t])`.
    ///
    /// Unmasked positions of `x_t` are carried over unchanged. A terminal
    /// `x_t` is returned as-is.
    pub fn reverse_step(&self, x_t: &Sequence, t: u32, s: u32, rng: &mut Rng) -> Result<Sequence> {
        let rho = self.schedule.unmask_prob(t, s)?;
        self.check_state(x_t)?;
        if x_t.is_terminal(self.vocab()) {
            return Ok(x_t.clone());
        }
        let posterior = self.x0_posterior(x_t)?;
        let x0 = posterior.sample(rng);
        let mut out = x_t.clone();
        for &pos in &posterior.masked {
            if rng.gen::<f64>() < rho {
                out.set(pos, x0.get(pos));
            }
        }
        Ok(out)
    }

    /// Exact dense law of [`Denoiser::reverse_step`] over the full canonical
    /// state space (oracle scale only; guarded by [`ENUM_CAP`]).
    ///
    /// Rows are *from* states at level `t`, columns *to* states at level `s`.
    /// States with no positively-weighted completion cannot be denoised; they
    /// receive an identity row, which keeps the matrix row-stochastic and
    /// contributes nothing when such states carry zero probability.
    pub fn reverse_kernel(&self, t: u32, s: u32) -> Result<StochMatrix> {
        let rho = self.schedule.unmask_prob(t, s)?;
        let vocab = self.vocab();
        let length = self.length();
        let n = checked_enum(length, vocab)?;
        let mut kernel = StochMatrix::zeros(n);

        for row in 0..n {
            let x_t = Sequence::from_canonical_index(row as u64, length, vocab);
            let posterior = match self.x0_posterior(&x_t) {
                Ok(p) => p,
                Err(Error::ZeroSupport { .. }) => {
                    *kernel.get_mut(row, row) = 1.0;
                    continue;
                }
                Err(e) => return Err(e),
            };
            scatter_reverse_row(&posterior, rho, |to, p| {
                *kernel.get_mut(row, to.canonical_index(vocab) as usize) += p;
            });
        }
        Ok(kernel)
    }

    fn check_state(&self, x: &Sequence) -> Result<()> {
        if x.len() != self.length() {
            return Err(Error::InvalidParameter(format!(
                "sequence length {} does not match model length {}",
                x.len(),
                self.length()
            )));
        }
        Ok(())
    }
}

/// Applies forward noising `t_from -> t_to` to `x`: each unmasked position is
/// masked independently with probability `1 - alpha[t_to] / alpha[t_from]`.
/// Masked positions stay masked (absorbing).
pub fn forward_noise(
    schedule: &Schedule,
    vocab: Vocab,
    x: &Sequence,
    t_from: u32,
    t_to: u32,
    rng: &mut Rng,
) -> Result<Sequence> {
    let mu = schedule.mask_prob(t_from, t_to)?;
    let mut out = x.clone();
    for pos in 0..x.len() {
        if out.get(pos) != vocab.mask_id && rng.gen::<f64>() < mu {
            out.set(pos, vocab.mask_id);
        }
    }
    Ok(out)
}

impl X0Posterior {
    /// Posterior kind this object realizes.
    pub fn kind(&self) -> DenoiserKind {
        self.kind
    }

    /// The conditioned state `x_t`.
    pub fn base(&self) -> &Sequence {
        &self.base
    }

    /// Masked positions of the conditioned state, ascending.
    pub fn masked_positions(&self) -> &[usize] {
        &self.masked
    }

    /// True when the conditioned state is terminal (point-mass posterior).
    pub fn is_point_mass(&self) -> bool {
        self.masked.is_empty()
    }

    /// Per-position marginals, aligned with [`X0Posterior::masked_positions`].
    /// Identical between the exact and mean-field kinds.
    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    /// Number of terms a full support enumeration visits.
    pub fn support_size(&self) -> u64 {
        match &self.joint {
            Some(j) => j.len() as u64,
            None => (self.vocab.size as u64).pow(self.masked.len() as u32),
        }
    }

    /// Draws one clean completion.
    pub fn sample(&self, rng: &mut Rng) -> Sequence {
        let mut out = self.base.clone();
        match &self.joint {
            Some(joint) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut chosen = &joint[joint.len() - 1].0;
                for (assignment, p) in joint {
                    acc += p;
                    if u < acc {
                        chosen = assignment;
                        break;
                    }
                }
                for (slot, &pos) in self.masked.iter().enumerate() {
                    out.set(pos, chosen[slot]);
                }
            }
            None => {
                for (slot, &pos) in self.masked.iter().enumerate() {
                    out.set(pos, sample_categorical(&self.marginals[slot], rng));
                }
            }
        }
        out
    }

    /// Greedy per-position completion: each masked position takes the token
    /// with the largest marginal, ties broken toward the smaller token id.
    pub fn greedy(&self) -> Sequence {
        let mut out = self.base.clone();
        for (slot, &pos) in self.masked.iter().enumerate() {
            let row = &self.marginals[slot];
            let mut best = 0usize;
            for (tok, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = tok;
                }
            }
            out.set(pos, best as Token);
        }
        out
    }

    /// Enumerates the full support as `(completion, probability)`.
    ///
    /// For the exact kind this is the stored joint; for the mean-field kind
    /// it is the cartesian product of the marginals (entries with zero
    /// probability are skipped).
    pub fn support(&self) -> Vec<(Sequence, f64)> {
        match &self.joint {
            Some(joint) => joint
                .iter()
                .map(|(assignment, p)| {
                    let mut s = self.base.clone();
                    for (slot, &pos) in self.masked.iter().enumerate() {
                        s.set(pos, assignment[slot]);
                    }
                    (s, *p)
                })
                .collect(),
            None => {
                let mut out = Vec::new();
                let combos = self.support_size();
                let v = u64::from(self.vocab.size);
                let mut work = self.base.clone();
                for combo in 0..combos {
                    let mut rem = combo;
                    let mut p = 1.0;
                    for (slot, &pos) in self.masked.iter().enumerate() {
                        let tok = (rem % v) as Token;
                        rem /= v;
                        p *= self.marginals[slot][tok as usize];
                        work.set(pos, tok);
                    }
                    if p > 0.0 {
                        out.push((work.clone(), p));
                    }
                }
                out
            }
        }
    }
}

/// Draws an index from an explicit (already normalized) categorical table by
/// inverse CDF; the final index absorbs any rounding slack.
pub fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// [`sample_index`] returning a token id.
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> Token {
    sample_index(probs, rng) as Token
}

/// Enumerates the exact law of one reverse step from the state behind
/// `posterior` with reveal probability `rho`, invoking `emit(to_state, prob)`
/// for each outcome (with repeats; callers accumulate).
///
/// For the exact kind the law is `sum_{x0} P(x0) * prod_masked(reveal -> x0,
/// keep mask)`; for the mean-field kind it factorizes per position.
fn scatter_reverse_row<F: FnMut(&Sequence, f64)>(posterior: &X0Posterior, rho: f64, mut emit: F) {
    let masked = &posterior.masked;
    match &posterior.joint {
        Some(joint) => {
            // For each completion and each reveal subset: accumulate.
            let subsets: u64 = 1 << masked.len();
            let mut work = posterior.base.clone();
            for (assignment, p0) in joint {
                for subset in 0..subsets {
                    let mut p = *p0;
                    for (slot, &pos) in masked.iter().enumerate() {
                        if subset >> slot & 1 == 1 {
                            p *= rho;
                            work.set(pos, assignment[slot]);
                        } else {
                            p *= 1.0 - rho;
                            work.set(pos, posterior.vocab.mask_id);
                        }
                    }
                    emit(&work, p);
                }
            }
        }
        None => {
            // Per-position law: stay masked w.p. (1-rho), reveal token v w.p.
            // rho * marginal[v]. Enumerate the product over masked slots.
            let v = posterior.vocab.size as u64;
            let outcomes_per_slot = v + 1; // v tokens + "stay masked"
            let combos = outcomes_per_slot.pow(masked.len() as u32);
            let mut work = posterior.base.clone();
            for combo in 0..combos {
                let mut rem = combo;
                let mut p = 1.0;
                for (slot, &pos) in masked.iter().enumerate() {
                    let outcome = rem % outcomes_per_slot;
                    rem /= outcomes_per_slot;
                    if outcome == v {
                        p *= 1.0 - rho;
                        work.set(pos, posterior.vocab.mask_id);
                    } else {
                        p *= rho * posterior.marginals[slot][outcome as usize];
                        work.set(pos, outcome as Token);
                    }
                }
                emit(&work, p);
            }
        }
    }
}

fn checked_enum(length: usize, vocab: Vocab) -> Result<usize> {
    let n = state_space_size(length, vocab)?;
    if n > ENUM_CAP {
        return Err(Error::CapExceeded {
            states: n,
            cap: ENUM_CAP,
        });
    }
    Ok(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn uniform2() -> Arc<DataDistribution> {
        let v = Vocab::new(2).unwrap();
        DataDistribution::from_probs(2, v, vec![0.25; 4])
            .unwrap()
            .into_arc()
    }

    fn denoiser(kind: DenoiserKind, data: Arc<DataDistribution>, t_max: u32) -> Denoiser {
        let schedule = Arc::new(Schedule::linear(t_max).unwrap());
        Denoiser::new(kind, data, schedule)
    }

    #[test]
    fn forward_noise_is_absorbing_and_monotone() {
        let v = Vocab::new(2).unwrap();
        let sched = Schedule::linear(8).unwrap();
        let mut rng = RngStream::new(3, 0).rng();
        let x = Sequence::new(vec![0, 1, 2, 0], v).unwrap();
        for _ in 0..200 {
            let y = forward_noise(&sched, v, &x, 2, 5, &mut rng).unwrap();
            // Mask set only grows; unmasked survivors keep their tokens.
            for pos in 0..x.len() {
                if x.get(pos) == v.mask_id {
                    assert_eq!(y.get(pos), v.mask_id);
                } else {
                    assert!(y.get(pos) == x.get(pos) || y.get(pos) == v.mask_id);
                }
            }
            assert!(y.mask_count(v) >= x.mask_count(v));
        }
        // Noising to T masks everything.
        let y = forward_noise(&sched, v, &x, 2, 8, &mut rng).unwrap();
        assert_eq!(y.mask_count(v), 4);
    }

    #[test]
    fn forward_noise_rejects_bad_time_order() {
        let v = Vocab::new(2).unwrap();
        let sched = Schedule::linear(4).unwrap();
        let mut rng = RngStream::new(0, 0).rng();
        let x = Sequence::all_mask(2, v);
        assert!(forward_noise(&sched, v, &x, 3, 3, &mut rng).is_err());
        assert!(forward_noise(&sched, v, &x, 3, 2, &mut rng).is_err());
    }

    #[test]
    fn posterior_conditions_on_unmasked_positions() {
        // p_data uniform on {(a,a),(a,b)} only; conditioning on first token a
        // leaves both, conditioning on second token a leaves (a,a).
        let v = Vocab::new(2).unwrap();
        let d = DataDistribution::from_probs(2, v, vec![0.5, 0.0, 0.5, 0.0]).unwrap();
        let den = denoiser(DenoiserKind::ExactPosterior, d.into_arc(), 4);

        let x = Sequence::new(vec![0, v.mask_id], v).unwrap();
        let post = den.x0_posterior(&x).unwrap();
        let support = post.support();
        assert_eq!(support.len(), 2);
        for (s, p) in &support {
            assert_eq!(s.get(0), 0);
            assert!((p - 0.5).abs() < 1e-15);
        }

        let x = Sequence::new(vec![v.mask_id, 0], v).unwrap();
        let post = den.x0_posterior(&x).unwrap();
        let support = post.support();
        assert_eq!(support.len(), 1);
        assert_eq!(support[0].0.tokens(), &[0, 0]);
        assert!((support[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_support_is_an_explicit_error() {
        let v = Vocab::new(2).unwrap();
        // Mass only on (a,a) and (a,b): first token b is impossible.
        let d = DataDistribution::from_probs(2, v, vec![0.5, 0.0, 0.5, 0.0]).unwrap();
        let den = denoiser(DenoiserKind::ExactPosterior, d.into_arc(), 4);
        let x = Sequence::new(vec![1, v.mask_id], v).unwrap();
        match den.x0_posterior(&x) {
            Err(Error::ZeroSupport { canonical_index }) => {
                assert_eq!(canonical_index, x.canonical_index(v));
            }
            other => panic!("expected ZeroSupport, got {other:?}"),
        }
    }

    #[test]
    fn mean_field_marginals_match_exact_but_joint_differs() {
        // Perfectly correlated data: uniform on {(a,a),(b,b)}.
        let v = Vocab::new(2).unwrap();
        let d = DataDistribution::from_probs(2, v, vec![0.5, 0.0, 0.0, 0.5])
            .unwrap()
            .into_arc();
        let exact = denoiser(DenoiserKind::ExactPosterior, d.clone(), 4);
        let mf = denoiser(DenoiserKind::MeanField, d, 4);
        let x = Sequence::all_mask(2, v);

        let pe = exact.x0_posterior(&x).unwrap();
        let pm = mf.x0_posterior(&x).unwrap();
        for (me, mm) in pe.marginals().iter().zip(pm.marginals()) {
            for (a, b) in me.iter().zip(mm) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        // Exact joint: two support points, each 1/2. Mean-field: four, each 1/4.
        assert_eq!(pe.support().len(), 2);
        let sm = pm.support();
        assert_eq!(sm.len(), 4);
        for (_, p) in sm {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn greedy_breaks_ties_toward_smaller_token() {
        let v = Vocab::new(2).unwrap();
        let den = denoiser(DenoiserKind::ExactPosterior, uniform2(), 4);
        let x = Sequence::all_mask(2, v);
        let g = den.x0_posterior(&x).unwrap().greedy();
        assert_eq!(g.tokens(), &[0, 0]);
    }

    #[test]
    fn reverse_step_carries_over_unmasked_positions() {
        let v = Vocab::new(2).unwrap();
        let den = denoiser(DenoiserKind::ExactPosterior, uniform2(), 8);
        let mut rng = RngStream::new(9, 0).rng();
        let x = Sequence::new(vec![1, v.mask_id], v).unwrap();
        for _ in 0..100 {
            let y = den.reverse_step(&x, 5, 2, &mut rng).unwrap();
            assert_eq!(y.get(0), 1);
            assert!(y.mask_count(v) <= x.mask_count(v));
        }
        // Terminal input: unchanged for any s < t.
        let terminal = Sequence::new(vec![0, 1], v).unwrap();
        let y = den.reverse_step(&terminal, 5, 2, &mut rng).unwrap();
        assert_eq!(y, terminal);
        // Stepping to level 0 always terminates.
        let y = den.reverse_step(&x, 5, 0, &mut rng).unwrap();
        assert!(y.is_terminal(v));
    }

    #[test]
    fn reverse_kernel_rows_are_stochastic_and_match_masks() {
        let v = Vocab::new(2).unwrap();
        for kind in [DenoiserKind::ExactPosterior, DenoiserKind::MeanField] {
            let den = denoiser(kind, uniform2(), 8);
            let k = den.reverse_kernel(5, 2).unwrap();
            assert_eq!(k.n(), 9);
            assert!(k.max_row_sum_error() < 1e-12);
            // Transitions never add masks and never change unmasked tokens.
            for row in 0..k.n() {
                let from = Sequence::from_canonical_index(row as u64, 2, v);
                for col in 0..k.n() {
                    if k.get(row, col) == 0.0 {
                        continue;
                    }
                    let to = Sequence::from_canonical_index(col as u64, 2, v);
                    for pos in 0..2 {
                        if from.get(pos) != v.mask_id {
                            assert_eq!(from.get(pos), to.get(pos));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn reverse_kernel_matches_simulated_reverse_steps() {
        // Monte-Carlo check that the dense row agrees with reverse_step.
        let v = Vocab::new(2).unwrap();
        let d = DataDistribution::from_probs(2, v, vec![0.4, 0.3, 0.2, 0.1])
            .unwrap()
            .into_arc();
        for kind in [DenoiserKind::ExactPosterior, DenoiserKind::MeanField] {
            let den = denoiser(kind, d.clone(), 8);
            let kernel = den.reverse_kernel(6, 3).unwrap();
            let x = Sequence::all_mask(2, v);
            let row = x.canonical_index(v) as usize;
            let mut rng = RngStream::new(17, 1).rng();
            let n = 200_000;
            let mut counts = vec![0u64; kernel.n()];
            for _ in 0..n {
                let y = den.reverse_step(&x, 6, 3, &mut rng).unwrap();
                counts[y.canonical_index(v) as usize] += 1;
            }
            for col in 0..kernel.n() {
                let expect = kernel.get(row, col);
                let got = counts[col] as f64 / n as f64;
                // 5 sigma of a binomial proportion.
                let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
                assert!(
                    (got - expect).abs() <= 5.0 * sigma + 1e-9,
                    "{kind:?} col {col}: empirical {got} vs exact {expect}"
                );
            }
        }
    }

    #[test]
    fn zero_support_rows_fall_back_to_identity() {
        let v = Vocab::new(2).unwrap();
        // Only (a,a) and (a,b) possible; any state with first token b has no
        // completion.
        let d = DataDistribution::from_probs(2, v, vec![0.5, 0.0, 0.5, 0.0]).unwrap();
        let den = denoiser(DenoiserKind::ExactPosterior, d.into_arc(), 8);
        let k = den.reverse_kernel(4, 2).unwrap();
        let bad = Sequence::new(vec![1, v.mask_id], v).unwrap();
        let row = bad.canonical_index(v) as usize;
        for col in 0..k.n() {
            let expect = if col == row { 1.0 } else { 0.0 };
            assert_eq!(k.get(row, col), expect);
        }
        assert!(k.max_row_sum_error() < 1e-12);
    }
}
