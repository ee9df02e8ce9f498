//! Terminal rewards and soft-value intermediate rewards.
//!
//! Terminal rewards score clean sequences. Intermediate rewards extend a
//! terminal reward to partially masked states through the soft value
//!
//! ```text
//! r(x_t) = alpha * ln E_{x0 ~ posterior(. | x_t)} [ exp(r(x0) / alpha) ]
//! ```
//!
//! where `alpha` is the guidance temperature. Three estimators are provided:
//!
//! - `Exact`: enumerate the posterior support and take the exact
//!   log-sum-exp (charged as one reward evaluation);
//! - `MonteCarlo(m)`: log-mean-exp over `m` posterior samples (charged as
//!   `m` evaluations);
//! - `X0Prediction`: score the greedy per-position completion (one
//!   evaluation) — the cheap point estimate.
//!
//! All log-domain reductions are max-shifted, so any `|r|/alpha` up to ~700
//! is safe from overflow. On a terminal state every estimator returns the
//! terminal reward exactly (the posterior is a point mass), still charged at
//! the mode's nominal cost so ledger accounting stays analytic.

use std::sync::Arc;

use crate::dist::DataDistribution;
use crate::error::{Error, Result};
use crate::model::Denoiser;
use crate::rng::Rng;
use crate::seq::{Sequence, Token, Vocab};

/// Default guidance temperature.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// A reward over terminal sequences.
#[derive(Debug, Clone)]
pub enum TerminalReward {
    /// Fraction of positions equal to the given token.
    TokenCount(Token),
    /// `1 -` fraction of positions equal to the given token.
    NegTokenCount(Token),
    /// 1 if the sequence equals the pattern, else 0.
    PatternMatch(Sequence),
    /// `1 -` normalized Hamming distance to the pattern.
    HammingProximity(Sequence),
    /// Natural-log probability under the data distribution (`-inf` on zero
    /// mass).
    LogLikelihood(Arc<DataDistribution>),
    /// Constant reward; `Constant(0.0)` turns guidance off, which makes the
    /// tilted target collapse to the unguided law.
    Constant(f64),
}

impl TerminalReward {
    /// Scores a terminal sequence. Errors if any position is masked.
    pub fn eval(&self, x: &Sequence, vocab: Vocab) -> Result<f64> {
        if !x.is_terminal(vocab) {
            return Err(Error::NotTerminal {
                masked: x.mask_count(vocab),
            });
        }
        Ok(match self {
            TerminalReward::TokenCount(tok) => fraction_equal_to(x, *tok),
            TerminalReward::NegTokenCount(tok) => 1.0 - fraction_equal_to(x, *tok),
            TerminalReward::PatternMatch(p) => {
                if x == p {
                    1.0
                } else {
                    0.0
                }
            }
            TerminalReward::HammingProximity(p) => {
                let matches = x
                    .tokens()
                    .iter()
                    .zip(p.tokens())
                    .filter(|(a, b)| a == b)
                    .count();
                matches as f64 / x.len() as f64
            }
            TerminalReward::LogLikelihood(data) => data.log_prob(x)?,
            TerminalReward::Constant(c) => *c,
        })
    }

    /// Stable name used in configs and CSV output.
    pub fn name(&self) -> String {
        match self {
            TerminalReward::TokenCount(t) => format!("token_count:{}", letter(*t)),
            TerminalReward::NegTokenCount(t) => format!("neg_token_count:{}", letter(*t)),
            TerminalReward::PatternMatch(p) => format!("pattern:{}", letters(p)),
            TerminalReward::HammingProximity(p) => format!("hamming:{}", letters(p)),
            TerminalReward::LogLikelihood(_) => "loglik".to_string(),
            TerminalReward::Constant(c) => format!("constant:{c}"),
        }
    }
}

fn fraction_equal_to(x: &Sequence, tok: Token) -> f64 {
    let hits = x.tokens().iter().filter(|&&t| t == tok).count();
    hits as f64 / x.len() as f64
}

fn letter(tok: Token) -> char {
    char::from_u32('a' as u32 + tok).unwrap_or('?')
}

fn letters(s: &Sequence) -> String {
    s.tokens().iter().map(|&t| letter(t)).collect()
}

/// How intermediate rewards are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// Exact log-sum-exp over the posterior support.
    Exact,
    /// Log-mean-exp over this many posterior samples.
    MonteCarlo(u32),
    /// Score the greedy per-position completion.
    X0Prediction,
}

impl RewardMode {
    /// Reward evaluations charged per intermediate-reward call.
    pub fn unit_cost(&self) -> u64 {
        match self {
            RewardMode::Exact => 1,
            RewardMode::MonteCarlo(m) => u64::from(*m),
            RewardMode::X0Prediction => 1,
        }
    }

    /// Stable name used in configs (`exact`, `mc:<m>`, `x0pred`).
    pub fn name(&self) -> String {
        match self {
            RewardMode::Exact => "exact".into(),
            RewardMode::MonteCarlo(m) => format!("mc:{m}"),
            RewardMode::X0Prediction => "x0pred".into(),
        }
    }
}

/// A terminal reward with guidance temperature and estimator mode.
#[derive(Debug, Clone)]
pub struct RewardSpec {
    terminal: TerminalReward,
    alpha: f64,
    mode: RewardMode,
}

impl RewardSpec {
    /// Validates `alpha > 0` (finite) and `m >= 1` for Monte-Carlo modes.
    pub fn new(terminal: TerminalReward, alpha: f64, mode: RewardMode) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "guidance temperature alpha must be positive and finite, got {alpha}"
            )));
        }
        if let RewardMode::MonteCarlo(m) = mode {
            if m == 0 {
                return Err(Error::InvalidParameter(
                    "MonteCarlo mode needs at least one sample".into(),
                ));
            }
        }
        Ok(Self {
            terminal,
            alpha,
            mode,
        })
    }

    /// The terminal reward.
    pub fn terminal(&self) -> &TerminalReward {
        &self.terminal
    }

    /// Guidance temperature.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Estimator mode.
    pub fn mode(&self) -> RewardMode {
        self.mode
    }

    /// Copy with a different estimator mode (temperature and reward shared).
    pub fn with_mode(&self, mode: RewardMode) -> Self {
        Self {
            terminal: self.terminal.clone(),
            alpha: self.alpha,
            mode,
        }
    }
}

/// An intermediate-reward estimate plus the number of reward-model
/// evaluations it consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardValue {
    /// Estimated soft value.
    pub value: f64,
    /// Reward evaluations to charge to the ledger.
    pub evals_used: u64,
}

/// Scores a terminal sequence under `spec`'s terminal reward.
pub fn terminal_reward(spec: &RewardSpec, x: &Sequence, vocab: Vocab) -> Result<f64> {
    spec.terminal.eval(x, vocab)
}

/// Estimates the soft value of `x_t` under `spec` and the given denoiser's
/// posterior.
///
/// `rng` is consumed only by the Monte-Carlo mode; terminal inputs return the
/// terminal reward exactly in every mode.
pub fn intermediate_reward(
    spec: &RewardSpec,
    denoiser: &Denoiser,
    x_t: &Sequence,
    rng: &mut Rng,
) -> Result<RewardValue> {
    let vocab = denoiser.vocab();
    let evals_used = spec.mode.unit_cost();
    if x_t.is_terminal(vocab) {
        return Ok(RewardValue {
            value: terminal_reward(spec, x_t, vocab)?,
            evals_used,
        });
    }
    let posterior = denoiser.x0_posterior(x_t)?;
    let alpha = spec.alpha;
    let value = match spec.mode {
        RewardMode::Exact => {
            let support = posterior.support();
            let mut scaled = Vec::with_capacity(support.len());
            let mut weights = Vec::with_capacity(support.len());
            for (x0, p) in &support {
                scaled.push(terminal_reward(spec, x0, vocab)? / alpha);
                weights.push(*p);
            }
            alpha * log_sum_exp_weighted(&scaled, &weights)
        }
        RewardMode::MonteCarlo(m) => {
            let mut scaled = Vec::with_capacity(m as usize);
            for _ in 0..m {
                let x0 = posterior.sample(rng);
                scaled.push(terminal_reward(spec, &x0, vocab)? / alpha);
            }
            alpha * (log_sum_exp(&scaled) - (f64::from(m)).ln())
        }
        RewardMode::X0Prediction => terminal_reward(spec, &posterior.greedy(), vocab)?,
    };
    Ok(RewardValue { value, evals_used })
}

/// Max-shifted `ln(sum_i exp(x_i))`; `-inf` for an empty slice or all-`-inf`
/// inputs.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + sum.ln()
}

/// Max-shifted `ln(sum_i w_i exp(x_i))` for non-negative weights.
pub fn log_sum_exp_weighted(xs: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), weights.len());
    let m = xs
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&x, &w)| w * (x - m).exp())
        .sum();
    m + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::schedule::Schedule;
    use std::sync::Arc;

    fn vocab2() -> Vocab {
        Vocab::new(2).unwrap()
    }

    fn uniform(length: usize) -> Arc<DataDistribution> {
        let v = vocab2();
        let n = v.size.pow(length as u32) as usize;
        DataDistribution::from_probs(length, v, vec![1.0 / n as f64; n])
            .unwrap()
            .into_arc()
    }

    fn exact_denoiser(length: usize) -> Denoiser {
        Denoiser::new(
            crate::model::DenoiserKind::ExactPosterior,
            uniform(length),
            Arc::new(Schedule::linear(4).unwrap()),
        )
    }

    #[test]
    fn terminal_rewards_match_hand_values() {
        let v = vocab2();
        let x = Sequence::new(vec![0, 1, 0, 0], v).unwrap();
        let p = Sequence::new(vec![0, 0, 0, 0], v).unwrap();
        assert_eq!(TerminalReward::TokenCount(0).eval(&x, v).unwrap(), 0.75);
        assert_eq!(TerminalReward::NegTokenCount(0).eval(&x, v).unwrap(), 0.25);
        assert_eq!(
            TerminalReward::PatternMatch(p.clone()).eval(&x, v).unwrap(),
            0.0
        );
        assert_eq!(
            TerminalReward::PatternMatch(p.clone()).eval(&p, v).unwrap(),
            1.0
        );
        assert_eq!(
            TerminalReward::HammingProximity(p).eval(&x, v).unwrap(),
            0.75
        );
        assert_eq!(TerminalReward::Constant(0.0).eval(&x, v).unwrap(), 0.0);
    }

    #[test]
    fn log_likelihood_reward_reads_the_table() {
        let v = vocab2();
        let d = DataDistribution::from_probs(1, v, vec![0.75, 0.25])
            .unwrap()
            .into_arc();
        let r = TerminalReward::LogLikelihood(d);
        let a = Sequence::new(vec![0], v).unwrap();
        let b = Sequence::new(vec![1], v).unwrap();
        assert!((r.eval(&a, v).unwrap() - 0.75f64.ln()).abs() < 1e-15);
        assert!((r.eval(&b, v).unwrap() - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn masked_input_is_rejected() {
        let v = vocab2();
        let x = Sequence::new(vec![0, v.mask_id], v).unwrap();
        assert!(matches!(
            TerminalReward::TokenCount(0).eval(&x, v),
            Err(Error::NotTerminal { masked: 1 })
        ));
    }

    #[test]
    fn exact_soft_value_matches_closed_form() {
        // L=1, x_t = MASK, uniform over {a, b}, r(a)=1, r(b)=0, alpha=1:
        // r = ln((e + 1) / 2).
        let v = vocab2();
        let den = exact_denoiser(1);
        let spec = RewardSpec::new(TerminalReward::TokenCount(0), 1.0, RewardMode::Exact).unwrap();
        let x = Sequence::all_mask(1, v);
        let mut rng = RngStream::new(0, 0).rng();
        let got = intermediate_reward(&spec, &den, &x, &mut rng).unwrap();
        let expect = ((std::f64::consts::E + 1.0) / 2.0).ln();
        assert!((got.value - expect).abs() < 1e-12);
        assert!((got.value - 0.620115).abs() < 1e-6);
        assert_eq!(got.evals_used, 1);
    }

    #[test]
    fn terminal_state_short_circuits_every_mode() {
        let v = vocab2();
        let den = exact_denoiser(2);
        let x = Sequence::new(vec![0, 1], v).unwrap();
        let mut rng = RngStream::new(1, 0).rng();
        for (mode, cost) in [
            (RewardMode::Exact, 1),
            (RewardMode::MonteCarlo(16), 16),
            (RewardMode::X0Prediction, 1),
        ] {
            let spec = RewardSpec::new(TerminalReward::TokenCount(0), 0.5, mode).unwrap();
            let got = intermediate_reward(&spec, &den, &x, &mut rng).unwrap();
            assert_eq!(got.value, 0.5);
            assert_eq!(got.evals_used, cost);
        }
    }

    #[test]
    fn monte_carlo_converges_to_exact() {
        // 95% of seeds within 0.02 of the exact soft value at m = 10^4 on the
        // L=2 uniform instance.
        let v = vocab2();
        let den = exact_denoiser(2);
        let exact_spec =
            RewardSpec::new(TerminalReward::TokenCount(0), 1.0, RewardMode::Exact).unwrap();
        let mc_spec = exact_spec.with_mode(RewardMode::MonteCarlo(10_000));
        let x = Sequence::all_mask(2, v);
        let mut rng = RngStream::new(2, 0).rng();
        let exact = intermediate_reward(&exact_spec, &den, &x, &mut rng)
            .unwrap()
            .value;
        let mut hits = 0;
        let seeds = 40;
        for seed in 0..seeds {
            let mut rng = RngStream::new(1000 + seed, 0).rng();
            let mc = intermediate_reward(&mc_spec, &den, &x, &mut rng).unwrap();
            assert_eq!(mc.evals_used, 10_000);
            if (mc.value - exact).abs() <= 0.02 {
                hits += 1;
            }
        }
        assert!(
            hits * 100 >= seeds * 95,
            "only {hits}/{seeds} seeds within 0.02 of exact"
        );
    }

    #[test]
    fn x0_prediction_scores_greedy_completion() {
        let v = vocab2();
        // Marginals favor token 1 at both positions.
        let d = DataDistribution::from_probs(2, v, vec![0.1, 0.2, 0.2, 0.5])
            .unwrap()
            .into_arc();
        let den = Denoiser::new(
            crate::model::DenoiserKind::ExactPosterior,
            d,
            Arc::new(Schedule::linear(4).unwrap()),
        );
        let spec =
            RewardSpec::new(TerminalReward::TokenCount(1), 0.1, RewardMode::X0Prediction).unwrap();
        let x = Sequence::all_mask(2, v);
        let mut rng = RngStream::new(3, 0).rng();
        let got = intermediate_reward(&spec, &den, &x, &mut rng).unwrap();
        assert_eq!(got.value, 1.0); // greedy completion is (b, b)
        assert_eq!(got.evals_used, 1);
    }

    #[test]
    fn large_alpha_limit_recovers_posterior_mean() {
        // As alpha -> inf the soft value tends to E[r(x0)]; relative error
        // within 1e-6 at alpha = 1e6 on the L=2 uniform instance.
        let v = vocab2();
        let den = exact_denoiser(2);
        let spec =
            RewardSpec::new(TerminalReward::TokenCount(0), 1e6, RewardMode::Exact).unwrap();
        let x = Sequence::all_mask(2, v);
        let mut rng = RngStream::new(4, 0).rng();
        let got = intermediate_reward(&spec, &den, &x, &mut rng).unwrap().value;
        let mean = 0.5; // E[fraction of token a] under uniform
        assert!(
            ((got - mean) / mean).abs() <= 1e-6,
            "soft value {got} vs mean {mean}"
        );
    }

    #[test]
    fn small_alpha_approaches_max_reward() {
        // As alpha -> 0 the soft value tends to max r over the support.
        let v = vocab2();
        let den = exact_denoiser(2);
        let spec =
            RewardSpec::new(TerminalReward::TokenCount(0), 1e-3, RewardMode::Exact).unwrap();
        let x = Sequence::all_mask(2, v);
        let mut rng = RngStream::new(5, 0).rng();
        let got = intermediate_reward(&spec, &den, &x, &mut rng).unwrap().value;
        assert!((got - 1.0).abs() < 0.01, "soft value {got} should near max 1");
    }

    #[test]
    fn log_sum_exp_is_overflow_safe() {
        // Values around 700 would overflow a naive exp; the shifted reduction
        // must not.
        let got = log_sum_exp(&[700.0, 700.0]);
        assert!((got - (700.0 + 2.0f64.ln())).abs() < 1e-9);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        let w = log_sum_exp_weighted(&[700.0, 0.0], &[1.0, 0.0]);
        assert!((w - 700.0).abs() < 1e-9);
    }

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        assert!(RewardSpec::new(TerminalReward::Constant(0.0), 0.0, RewardMode::Exact).is_err());
        assert!(RewardSpec::new(TerminalReward::Constant(0.0), -1.0, RewardMode::Exact).is_err());
        assert!(
            RewardSpec::new(TerminalReward::Constant(0.0), f64::NAN, RewardMode::Exact).is_err()
        );
        assert!(RewardSpec::new(
            TerminalReward::Constant(0.0),
            1.0,
            RewardMode::MonteCarlo(0)
        )
        .is_err());
    }

    #[test]
    fn revealing_a_pattern_token_never_decreases_the_exact_soft_value() {
        // For pattern rewards the soft value is monotone in the posterior
        // mass of the pattern; conditioning on one of the pattern's own
        // tokens can only concentrate that mass. Checked by enumeration on
        // L=3.
        let v = vocab2();
        let length = 3;
        let d = DataDistribution::random(length, v, RngStream::new(77, 0)).unwrap();
        let den = Denoiser::new(
            crate::model::DenoiserKind::ExactPosterior,
            d.into_arc(),
            Arc::new(Schedule::linear(4).unwrap()),
        );
        let pattern = Sequence::new(vec![0, 1, 0], v).unwrap();
        let spec = RewardSpec::new(
            TerminalReward::PatternMatch(pattern.clone()),
            0.25,
            RewardMode::Exact,
        )
        .unwrap();
        let mut rng = RngStream::new(0, 0).rng();
        let n = crate::seq::state_space_size(length, v).unwrap();
        for idx in 0..n {
            let x = Sequence::from_canonical_index(idx, length, v);
            let base = intermediate_reward(&spec, &den, &x, &mut rng).unwrap().value;
            for pos in x.masked_positions(v) {
                let mut revealed = x.clone();
                revealed.set(pos, pattern.get(pos));
                let after = intermediate_reward(&spec, &den, &revealed, &mut rng)
                    .unwrap()
                    .value;
                assert!(
                    after >= base - 1e-12,
                    "reveal at {pos} dropped soft value {base} -> {after} (state {idx})"
                );
            }
        }
    }
}
