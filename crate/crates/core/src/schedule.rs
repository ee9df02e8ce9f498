//! Survival schedules for the absorbing forward process.
//!
//! A schedule fixes `T` discrete noise levels and a survival probability
//! `alpha[t]` for each level: the probability that any given position is
//! still unmasked at level `t`. Level 0 is clean data (`alpha[0] = 1`),
//! level `T` is fully masked (`alpha[T] = 0`), and `alpha` is strictly
//! decreasing in between. All forward and reverse probabilities are ratios
//! and differences of these values:
//!
//! - noising `t_from -> t_to` masks each surviving token with probability
//!   `1 - alpha[t_to] / alpha[t_from]`;
//! - denoising `t -> s` unmasks each masked position with probability
//!   `(alpha[s] - alpha[t]) / (1 - alpha[t])`.

use crate::error::{Error, Result};

/// A validated survival schedule `alpha[0..=T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    alphas: Vec<f64>,
}

impl Schedule {
    /// Validates and wraps an explicit table `alpha[0..=T]`.
    ///
    /// Requires `alpha[0] == 1` and `alpha[T] == 0` exactly, strict decrease,
    /// and at least one interior level (`T >= 1`).
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::InvalidSchedule(format!(
                "need at least levels 0 and T, got {} entries",
                alphas.len()
            )));
        }
        if alphas[0] != 1.0 {
            return Err(Error::InvalidSchedule(format!(
                "alpha[0] must be exactly 1, got {}",
                alphas[0]
            )));
        }
        if *alphas.last().unwrap() != 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "alpha[T] must be exactly 0, got {}",
                alphas.last().unwrap()
            )));
        }
        for (t, pair) in alphas.windows(2).enumerate() {
            if !(pair[1] < pair[0]) || !pair[1].is_finite() {
                return Err(Error::InvalidSchedule(format!(
                    "alpha must strictly decrease: alpha[{}]={} !> alpha[{}]={}",
                    t,
                    pair[0],
                    t + 1,
                    pair[1]
                )));
            }
        }
        Ok(Self { alphas })
    }

    /// The linear schedule `alpha[t] = (T - t) / T`.
    pub fn linear(t_max: u32) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::InvalidSchedule(
                "linear schedule needs T >= 1".into(),
            ));
        }
        let tf = f64::from(t_max);
        let alphas = (0..=t_max).map(|t| f64::from(t_max - t) / tf).collect();
        Self::new(alphas)
    }

    /// Number of noise levels `T`.
    pub fn t_max(&self) -> u32 {
        (self.alphas.len() - 1) as u32
    }

    /// Survival probability at level `t <= T`.
    pub fn alpha(&self, t: u32) -> f64 {
        self.alphas[t as usize]
    }

    /// Probability that a token unmasked at `t_from` is masked by `t_to`:
    /// `1 - alpha[t_to] / alpha[t_from]`, requiring `t_from < t_to <= T`.
    pub fn mask_prob(&self, t_from: u32, t_to: u32) -> Result<f64> {
        if !(t_from < t_to && t_to <= self.t_max()) {
            return Err(Error::TimeOrder(format!(
                "noising requires t_from < t_to <= T, got t_from={t_from}, t_to={}, T={}",
                t_to,
                self.t_max()
            )));
        }
        Ok(1.0 - self.alpha(t_to) / self.alpha(t_from))
    }

    /// Probability that a position masked at `t` is revealed when stepping to
    /// `s < t`: `(alpha[s] - alpha[t]) / (1 - alpha[t])`.
    pub fn unmask_prob(&self, t: u32, s: u32) -> Result<f64> {
        if !(s < t && t <= self.t_max()) {
            return Err(Error::TimeOrder(format!(
                "denoising requires s < t <= T, got s={s}, t={t}, T={}",
                self.t_max()
            )));
        }
        Ok((self.alpha(s) - self.alpha(t)) / (1.0 - self.alpha(t)))
    }
}
