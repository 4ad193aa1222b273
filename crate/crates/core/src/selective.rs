//! Selective sampling: rejection sampling from the model's globally tempered,
//! likelihood-capped distribution, using the model itself as the proposal.
//!
//! Target: `p(x)^(1/tau)` restricted to `log p(x) <= alpha`. Envelope:
//! `M p(x)` with `log M = alpha (1/tau - 1)`, which is tight at the cutoff, so
//! an admissible proposal is accepted with probability
//! `exp((1/tau - 1) (log p(x) - alpha))`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::decoders::{sample_sequence, DecoderConfig};
use crate::error::{input, Error, Result};
use crate::lm::{enumerate_sequences, Context, LanguageModel, TokenSequence};
use crate::oracle::DistributionTable;
use crate::rng::Streams;
use crate::scalar::{log_sum_exp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectiveConfig {
    /// Global temperature in `(0, 1]`; 1 means plain sampling with a cutoff.
    pub tau: f64,
    /// Log-likelihood cutoff in nats.
    pub alpha: f64,
    pub max_attempts: u64,
}

impl SelectiveConfig {
    pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000;

    pub fn new(tau: f64, alpha: f64, max_attempts: u64) -> Result<Self> {
        let cfg = Self { tau, alpha, max_attempts };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return input(format!("global temperature {} outside (0, 1]", self.tau));
        }
        if self.alpha.is_nan() {
            return input("cutoff is NaN");
        }
        if self.max_attempts == 0 {
            return input("max_attempts must be at least 1");
        }
        Ok(())
    }

    /// `log M = alpha (1/tau - 1)`.
    pub fn log_envelope(&self) -> f64 {
        self.alpha * (1.0 / self.tau - 1.0)
    }

    /// Log acceptance probability of a proposal, or `None` when the cutoff
    /// rejects it outright.
    pub fn log_acceptance<F: Scalar>(&self, log_p: F) -> Option<F> {
        let alpha = F::lit(self.alpha);
        if log_p > alpha {
            return None;
        }
        let exponent = F::lit(1.0 / self.tau - 1.0);
        if exponent == F::zero() {
            return Some(F::zero());
        }
        Some(exponent * (log_p - alpha))
    }
}

impl fmt::Display for SelectiveConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "selective:tau={},alpha={},max={}", self.tau, self.alpha, self.max_attempts)
    }
}

impl FromStr for SelectiveConfig {
    type Err = Error;

    /// `selective:tau=0.5,alpha=-58.09[,max=10000]`
    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .trim()
            .strip_prefix("selective:")
            .ok_or_else(|| Error::Input(format!("`{s}` is not a selective config")))?;
        let (mut tau, mut alpha, mut max) = (None, None, Self::DEFAULT_MAX_ATTEMPTS);
        for part in body.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Input(format!("expected key=value, found `{part}`")))?;
            let bad = |e: &dyn fmt::Display| Error::Input(format!("bad `{key}` in `{s}`: {e}"));
            match key.trim() {
                "tau" => tau = Some(value.trim().parse::<f64>().map_err(|e| bad(&e))?),
                "alpha" => alpha = Some(value.trim().parse::<f64>().map_err(|e| bad(&e))?),
                "max" => max = value.trim().parse::<u64>().map_err(|e| bad(&e))?,
                other => return input(format!("unknown selective parameter `{other}`")),
            }
        }
        Self::new(
            tau.ok_or_else(|| Error::Input("selective config needs tau".into()))?,
            alpha.ok_or_else(|| Error::Input("selective config needs alpha".into()))?,
            max,
        )
    }
}

/// An accepted selective sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveSample<F> {
    pub sequence: TokenSequence,
    pub model_log_likelihood: F,
    /// Unnormalized `(1/tau) log p(x)`.
    pub log_energy: F,
    /// `log_energy - log Z` when a partition estimate was supplied.
    pub decoder_log_prob: Option<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectiveOutcome<F> {
    pub sample: Option<SelectiveSample<F>>,
    pub attempts: u64,
    pub rejections_by_cutoff: u64,
    pub rejections_by_coin: u64,
}

impl<F> SelectiveOutcome<F> {
    pub fn accepted(&self) -> bool {
        self.sample.is_some()
    }
}

/// Proposes from the model until one proposal is accepted or
/// `max_attempts` run out (reported as an absent sample, not an error).
pub fn selective_sample<F, M, R>(
    model: &M,
    context: &Context,
    cfg: &SelectiveConfig,
    n: usize,
    log_partition: Option<F>,
    rng: &mut R,
) -> Result<SelectiveOutcome<F>>
where
    F: Scalar,
    M: LanguageModel<F> + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let mut outcome = SelectiveOutcome {
        sample: None,
        attempts: 0,
        rejections_by_cutoff: 0,
        rejections_by_coin: 0,
    };
    while outcome.attempts < cfg.max_attempts {
        outcome.attempts += 1;
        let proposal = sample_sequence(model, context, &DecoderConfig::Random, n, rng)?;
        let log_p = proposal.model_log_likelihood;
        let Some(log_accept) = cfg.log_acceptance(log_p) else {
            outcome.rejections_by_cutoff += 1;
            continue;
        };
        debug_assert!(log_accept <= F::zero());
        // u < exp(a)  <=>  ln u < a, for u in (0, 1]
        let u: f64 = 1.0 - rng.gen::<f64>();
        if F::lit(u.ln()) < log_accept || log_accept == F::zero() {
            let log_energy = log_p / F::lit(cfg.tau);
            outcome.sample = Some(SelectiveSample {
                sequence: proposal.sequence,
                model_log_likelihood: log_p,
                log_energy,
                decoder_log_prob: log_partition.map(|lz| log_energy - lz),
            });
            return Ok(outcome);
        }
        outcome.rejections_by_coin += 1;
    }
    Ok(outcome)
}

/// Exact global tempering over all admissible length-`n` sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTemperature<F> {
    /// Includes excluded sequences with probability 0.
    pub table: DistributionTable<F>,
    /// `log sum_{log p <= alpha} p^(1/tau)`.
    pub log_z: F,
}

impl<F: Scalar> GlobalTemperature<F> {
    pub fn partition(&self) -> F {
        self.log_z.exp()
    }
}

pub fn global_temperature_exact<F: Scalar, M: LanguageModel<F> + ?Sized>(
    model: &M,
    context: &Context,
    tau: f64,
    alpha: f64,
    n: usize,
    limit: u64,
) -> Result<GlobalTemperature<F>> {
    SelectiveConfig::new(tau, alpha, 1)?;
    let inv_tau = F::lit(1.0 / tau);
    let alpha = F::lit(alpha);
    let all = enumerate_sequences(model, context, n, limit)?;
    let energies: Vec<F> = all
        .iter()
        .map(|(_, lp)| {
            if *lp <= alpha && *lp > F::neg_infinity() {
                *lp * inv_tau
            } else {
                F::neg_infinity()
            }
        })
        .collect();
    let log_z = log_sum_exp(energies.iter().copied());
    if log_z == F::neg_infinity() {
        return Err(Error::EmptySupport);
    }
    let entries = all
        .into_iter()
        .zip(energies)
        .map(|((seq, _), e)| (seq, (e - log_z).exp()))
        .collect();
    Ok(GlobalTemperature {
        table: DistributionTable::new(entries)?,
        log_z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionEstimate<F> {
    pub z: F,
    pub std_error: F,
    pub log_z: F,
    pub samples: usize,
}

/// Importance estimate of `Z = E_p[p(x)^(1/tau - 1) 1{log p(x) <= alpha}]`
/// from `samples` plain model samples (sample `i` uses `streams.rng(i)`).
///
/// Weights are accumulated relative to the envelope `M`, so each lies in
/// `[0, 1]`, then rescaled.
pub fn estimate_partition<F: Scalar, M: LanguageModel<F> + ?Sized>(
    model: &M,
    context: &Context,
    cfg: &SelectiveConfig,
    n: usize,
    samples: usize,
    streams: &Streams,
) -> Result<PartitionEstimate<F>> {
    cfg.validate()?;
    if samples == 0 {
        return input("need at least one sample");
    }
    let scaled: Vec<F> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = sample_sequence(model, context, &DecoderConfig::Random, n, &mut streams.rng(i))?;
            Ok(cfg
                .log_acceptance(s.model_log_likelihood)
                .map_or(F::zero(), |la| la.exp()))
        })
        .collect::<Result<_>>()?;
    let (mean, se) = crate::frontier::mean_and_se(&scaled);
    let log_m = F::lit(cfg.log_envelope());
    Ok(PartitionEstimate {
        z: mean * log_m.exp(),
        std_error: se * log_m.exp(),
        log_z: mean.ln() + log_m,
        samples,
    })
}

/// Nearest-rank `q`-th percentile: the `ceil(q/100 * N)`-th smallest value.
pub fn choose_alpha_percentile<F: Scalar>(logps: &[F], q: f64) -> Result<F> {
    if logps.is_empty() {
        return input("no log-likelihoods to take a percentile of");
    }
    if !(q > 0.0 && q < 100.0) {
        return input(format!("percentile {q} outside (0, 100)"));
    }
    if logps.iter().any(|x| x.is_nan()) {
        return input("NaN log-likelihood");
    }
    let mut sorted = logps.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}
