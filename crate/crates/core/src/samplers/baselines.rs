//! Ancestral sampling and the reward-guided baseline samplers.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::{sample_index, Denoiser};
use crate::reward::{intermediate_reward, terminal_reward, RewardSpec};
use crate::rng::{Rng, RngStream};
use crate::seq::Sequence;

use super::{effective_sample_size, NfeLedger, ResampleEvent, RunLog, RunOutcome};

/// Unguided reverse diffusion: `T` reverse steps from the all-MASK state.
///
/// Ledger: `T` denoiser evaluations, no reward evaluations.
pub fn ancestral(denoiser: &Denoiser, stream: RngStream) -> Result<RunOutcome> {
    let mut rng = stream.rng();
    let mut ledger = NfeLedger::new();
    let x = ancestral_chain(denoiser, &mut ledger, &mut rng)?;
    Ok(RunOutcome::new(x, ledger, RunLog::default()))
}

/// One full reverse chain `T -> 0`, charging one denoiser evaluation per
/// step. Shared by several samplers.
pub(crate) fn ancestral_chain(
    denoiser: &Denoiser,
    ledger: &mut NfeLedger,
    rng: &mut Rng,
) -> Result<Sequence> {
    let t_max = denoiser.schedule().t_max();
    let mut x = Sequence::all_mask(denoiser.length(), denoiser.vocab());
    for t in (1..=t_max).rev() {
        x = denoiser.reverse_step(&x, t, t - 1, rng)?;
        ledger.charge_denoiser(1);
    }
    Ok(x)
}

/// Best-of-`n`: `n` independent ancestral runs; returns the one with the
/// highest terminal reward, ties broken toward the earliest run.
///
/// Ledger: `n * T` denoiser + `n` reward evaluations.
pub fn best_of_n(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    n: u32,
    stream: RngStream,
) -> Result<RunOutcome> {
    if n == 0 {
        return Err(Error::InvalidParameter("best-of-n needs n >= 1".into()));
    }
    let vocab = denoiser.vocab();
    let mut ledger = NfeLedger::new();
    let mut best: Option<(Sequence, f64)> = None;
    for run in 0..n {
        let mut rng = stream.substream(u64::from(run)).rng();
        let x = ancestral_chain(denoiser, &mut ledger, &mut rng)?;
        let r = terminal_reward(spec, &x, vocab)?;
        ledger.charge_reward(1);
        let better = match &best {
            Some((_, best_r)) => r > *best_r,
            None => true,
        };
        if better {
            best = Some((x, r));
        }
    }
    let (x, _) = best.expect("n >= 1 guarantees at least one run");
    Ok(RunOutcome::new(x, ledger, RunLog::default()))
}

/// Soft-value resampling: at each step draw `n` one-step candidates, score
/// them with the intermediate reward, and keep one by multinomial resampling
/// with weights `exp(r / alpha)`.
///
/// Degenerate weight vectors (all candidates at `-inf`) fall back to uniform
/// and are counted in the run log. With `n = 1` the selection is vacuous and
/// the terminal law equals ancestral sampling.
///
/// Ledger per step: `n` denoiser + `n` intermediate-reward evaluations.
pub fn svdd(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    n: u32,
    stream: RngStream,
) -> Result<RunOutcome> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "soft-value resampling needs n >= 1".into(),
        ));
    }
    let t_max = denoiser.schedule().t_max();
    let mut rng = stream.rng();
    let mut ledger = NfeLedger::new();
    let mut log = RunLog::default();
    let mut x = Sequence::all_mask(denoiser.length(), denoiser.vocab());
    let mut candidates: Vec<Sequence> = Vec::with_capacity(n as usize);
    let mut scaled: Vec<f64> = Vec::with_capacity(n as usize);
    for t in (1..=t_max).rev() {
        candidates.clear();
        scaled.clear();
        for _ in 0..n {
            let cand = denoiser.reverse_step(&x, t, t - 1, &mut rng)?;
            ledger.charge_denoiser(1);
            let r = intermediate_reward(spec, denoiser, &cand, &mut rng)?;
            ledger.charge_reward(r.evals_used);
            scaled.push(r.value / spec.alpha());
            candidates.push(cand);
        }
        let (weights, degenerate) = shifted_exp_weights(&scaled);
        if degenerate {
            log.degenerate_weight_events += 1;
        }
        let idx = sample_index(&normalized(&weights), &mut rng);
        x = candidates.swap_remove(idx);
    }
    Ok(RunOutcome::new(x, ledger, log))
}

/// Particle steering: `n` particles propagate in lockstep; every
/// `resample_every` steps their indices are multinomially resampled with
/// weights `exp((r_now - r_prev) / alpha)`, where `r_prev` is the particle's
/// soft value at the previous resampling event. Returns the terminal particle
/// with the highest terminal reward (earliest index on ties).
///
/// All particles share the same all-MASK starting state, so the first event's
/// baseline (zero for every particle) cancels in the normalization.
/// Resampling never fires at level 0; the final argmax plays that role.
///
/// Ledger: `n * T` denoiser + `n` intermediate rewards per event + `n`
/// terminal rewards.
pub fn fk_steering(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    n: u32,
    resample_every: u32,
    stream: RngStream,
) -> Result<RunOutcome> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "particle steering needs n >= 1".into(),
        ));
    }
    if resample_every == 0 {
        return Err(Error::InvalidParameter(
            "resample_every must be >= 1".into(),
        ));
    }
    let t_max = denoiser.schedule().t_max();
    let vocab = denoiser.vocab();
    let mut rng = stream.rng();
    let mut ledger = NfeLedger::new();
    let mut log = RunLog::default();
    let mut particles = vec![Sequence::all_mask(denoiser.length(), vocab); n as usize];
    let mut prev_reward = vec![0.0f64; n as usize];

    for t in (1..=t_max).rev() {
        for p in particles.iter_mut() {
            *p = denoiser.reverse_step(p, t, t - 1, &mut rng)?;
            ledger.charge_denoiser(1);
        }
        let s = t - 1;
        if s > 0 && (t_max - s) % resample_every == 0 {
            let mut now = Vec::with_capacity(n as usize);
            for p in particles.iter() {
                let r = intermediate_reward(spec, denoiser, p, &mut rng)?;
                ledger.charge_reward(r.evals_used);
                now.push(r.value);
            }
            let scaled: Vec<f64> = now
                .iter()
                .zip(&prev_reward)
                .map(|(r, prev)| (r - prev) / spec.alpha())
                .collect();
            let (weights, degenerate) = shifted_exp_weights(&scaled);
            if degenerate {
                log.degenerate_weight_events += 1;
            }
            let probs = normalized(&weights);
            let ess_before = effective_sample_size(&probs);
            let sources: Vec<usize> = (0..n).map(|_| sample_index(&probs, &mut rng)).collect();
            particles = sources.iter().map(|&i| particles[i].clone()).collect();
            prev_reward = sources.iter().map(|&i| now[i]).collect();
            log.resample_events.push(ResampleEvent {
                t: s,
                ess_before,
                ess_after: f64::from(n),
                degenerate,
            });
        }
    }

    let mut best = 0usize;
    let mut best_r = f64::NEG_INFINITY;
    for (i, p) in particles.iter().enumerate() {
        let r = terminal_reward(spec, p, vocab)?;
        ledger.charge_reward(1);
        if r > best_r {
            best_r = r;
            best = i;
        }
    }
    Ok(RunOutcome::new(
        particles.swap_remove(best),
        ledger,
        log,
    ))
}

/// Parameters for search over paths.
#[derive(Debug, Clone, PartialEq)]
pub struct SopConfig {
    /// Particles kept between rounds.
    pub n: u32,
    /// Perturbed variants spawned per particle per round.
    pub m: u32,
    /// Probability of re-masking each unmasked position on the perturb leg.
    pub f: f64,
    /// Levels advanced by each denoise leg.
    pub b: u32,
}

impl SopConfig {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidParameter(
                "search over paths needs n >= 1 and m >= 1".into(),
            ));
        }
        if !(self.f > 0.0 && self.f <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "remask fraction must lie in (0, 1], got {}",
                self.f
            )));
        }
        if self.b == 0 {
            return Err(Error::InvalidParameter(
                "denoise leg must advance at least one level".into(),
            ));
        }
        Ok(())
    }
}

/// Search over paths: keep `n` particles; each round every particle spawns
/// `m` variants by re-masking unmasked positions with probability `f` (free)
/// and denoising `b` levels in one leg (one denoiser evaluation), all `n * m`
/// variants are scored with the intermediate reward, and the top `n` survive
/// (ties toward earlier variants). Rounds repeat until level 0, where the
/// best-scoring particle is returned.
///
/// With `m = 1` and `f -> 0` the selection is vacuous and the procedure
/// degenerates to `n` independent coarse ancestral chains.
///
/// Ledger per round: `n * m` denoiser + `n * m` intermediate rewards.
pub fn sop(
    denoiser: &Denoiser,
    spec: &RewardSpec,
    cfg: &SopConfig,
    stream: RngStream,
) -> Result<RunOutcome> {
    cfg.validate()?;
    let t_max = denoiser.schedule().t_max();
    let vocab = denoiser.vocab();
    let mut rng = stream.rng();
    let mut ledger = NfeLedger::new();
    let mut particles: Vec<(Sequence, f64)> = vec![
        (Sequence::all_mask(denoiser.length(), vocab), f64::NEG_INFINITY);
        cfg.n as usize
    ];
    let mut t = t_max;
    while t > 0 {
        let t_next = t.saturating_sub(cfg.b);
        let mut variants: Vec<(Sequence, f64)> = Vec::with_capacity((cfg.n * cfg.m) as usize);
        for (p, _) in particles.iter() {
            for _ in 0..cfg.m {
                let perturbed = remask(p, cfg.f, vocab, &mut rng);
                let z = denoiser.reverse_step(&perturbed, t, t_next, &mut rng)?;
                ledger.charge_denoiser(1);
                let r = intermediate_reward(spec, denoiser, &z, &mut rng)?;
                ledger.charge_reward(r.evals_used);
                variants.push((z, r.value));
            }
        }
        // Stable selection of the top n by score (ties keep earlier variants).
        let mut order: Vec<usize> = (0..variants.len()).collect();
        order.sort_by(|&a, &b| variants[b].1.total_cmp(&variants[a].1).then(a.cmp(&b)));
        order.truncate(cfg.n as usize);
        order.sort_unstable();
        particles = order.into_iter().map(|i| variants[i].clone()).collect();
        t = t_next;
    }
    let best = particles
        .iter()
        .enumerate()
        .max_by(|(ia, (_, ra)), (ib, (_, rb))| ra.total_cmp(rb).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("n >= 1 guarantees at least one particle");
    Ok(RunOutcome::new(
        particles.swap_remove(best).0,
        ledger,
        RunLog::default(),
    ))
}

/// Re-masks each unmasked position independently with probability `f`.
/// Like forward noising this costs nothing on the ledger.
fn remask(x: &Sequence, f: f64, vocab: crate::seq::Vocab, rng: &mut Rng) -> Sequence {
    let mut out = x.clone();
    for pos in 0..x.len() {
        if out.get(pos) != vocab.mask_id && rng.gen::<f64>() < f {
            out.set(pos, vocab.mask_id);
        }
    }
    out
}

/// Max-shifted `exp` weights from scaled log-values. Returns the weights and
/// whether they degenerated (no finite maximum), in which case the caller
/// gets uniform weights.
fn shifted_exp_weights(scaled: &[f64]) -> (Vec<f64>, bool) {
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return (vec![1.0; scaled.len()], true);
    }
    (scaled.iter().map(|&d| (d - m).exp()).collect(), false)
}

fn normalized(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}
