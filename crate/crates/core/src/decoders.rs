//! Local decoding rules: each step's conditional is warped, then sampled.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{input, Error, Result};
use crate::lm::{enumerate_paths, ConditionalDistribution, Context, LanguageModel, TokenSequence};
use crate::oracle::DistributionTable;
use crate::rng::Streams;
use crate::scalar::Scalar;

/// Local decoding rule and its hyperparameter.
///
/// String form: `random`, `greedy`, `temperature:0.7`, `topk:40`, `topp:0.9`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecoderConfig {
    Random,
    Greedy,
    /// `t` in `(0, 1]`.
    Temperature(f64),
    /// `k >= 1`; must not exceed the vocabulary size when applied.
    TopK(usize),
    /// `p` in `(0, 1]`.
    TopP(f64),
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Temperature(t) if !(t > 0.0 && t <= 1.0) => input(format!("temperature {t} outside (0, 1]")),
            Self::TopK(0) => input("top-k needs k >= 1"),
            Self::TopP(p) if !(p > 0.0 && p <= 1.0) => input(format!("top-p {p} outside (0, 1]")),
            _ => Ok(()),
        }
    }

    /// Method name without the hyperparameter.
    pub fn method(&self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Greedy => "greedy",
            Self::Temperature(_) => "temperature",
            Self::TopK(_) => "topk",
            Self::TopP(_) => "topp",
        }
    }

    /// Hyperparameter as a real, if the method has one.
    pub fn hyperparameter(&self) -> Option<f64> {
        match *self {
            Self::Temperature(x) | Self::TopP(x) => Some(x),
            Self::TopK(k) => Some(k as f64),
            Self::Random | Self::Greedy => None,
        }
    }
}

impl fmt::Display for DecoderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Random => f.write_str("random"),
            Self::Greedy => f.write_str("greedy"),
            Self::Temperature(t) => write!(f, "temperature:{t}"),
            Self::TopK(k) => write!(f, "topk:{k}"),
            Self::TopP(p) => write!(f, "topp:{p}"),
        }
    }
}

impl FromStr for DecoderConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let real = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| Error::Input(format!("`{name}` needs a value, e.g. `{name}:0.9`")))?
                .parse::<f64>()
                .map_err(|e| Error::Input(format!("bad value in `{s}`: {e}")))
        };
        let config = match (name.to_ascii_lowercase().as_str(), arg) {
            ("random", None) => Self::Random,
            ("greedy", None) => Self::Greedy,
            ("temperature", a) => Self::Temperature(real(a)?),
            ("topk", a) => Self::TopK(
                a.ok_or_else(|| Error::Input("`topk` needs a value, e.g. `topk:40`".into()))?
                    .parse()
                    .map_err(|e| Error::Input(format!("bad value in `{s}`: {e}")))?,
            ),
            ("topp", a) => Self::TopP(real(a)?),
            _ => return input(format!("unknown decoder `{s}`")),
        };
        config.validate()?;
        Ok(config)
    }
}

/// `p^(1/t)` renormalized, for any `t > 0`. Zero entries stay zero.
///
/// Computed relative to the largest entry so small `t` does not underflow the
/// whole vector.
pub fn apply_temperature<F: Scalar>(dist: &ConditionalDistribution<F>, t: F) -> Result<ConditionalDistribution<F>> {
    if !(t > F::zero() && t.is_finite()) {
        return input(format!("temperature {t} must be positive"));
    }
    let max = dist.probs().iter().copied().fold(F::zero(), F::max);
    let log_max = max.ln();
    let weights = dist
        .probs()
        .iter()
        .map(|&p| {
            if p > F::zero() {
                ((p.ln() - log_max) / t).exp()
            } else {
                F::zero()
            }
        })
        .collect();
    ConditionalDistribution::from_weights(weights)
}

fn keep_tokens<F: Scalar>(dist: &ConditionalDistribution<F>, keep: &[usize]) -> Result<ConditionalDistribution<F>> {
    let mut weights = vec![F::zero(); dist.len()];
    for &i in keep {
        weights[i] = dist.prob(i);
    }
    ConditionalDistribution::from_weights(weights)
}

/// Applies a decoding rule to one step's conditional.
pub fn warp<F: Scalar>(dist: &ConditionalDistribution<F>, config: &DecoderConfig) -> Result<ConditionalDistribution<F>> {
    config.validate()?;
    match *config {
        DecoderConfig::Random => Ok(dist.clone()),
        DecoderConfig::Greedy => Ok(ConditionalDistribution::point(dist.len(), dist.argmax())),
        DecoderConfig::Temperature(t) => apply_temperature(dist, F::lit(t)),
        DecoderConfig::TopK(k) => {
            if k > dist.len() {
                return input(format!("top-k {k} exceeds vocabulary size {}", dist.len()));
            }
            let ranked = dist.ranked();
            keep_tokens(dist, &ranked[..k])
        }
        DecoderConfig::TopP(p) => {
            let ranked = dist.ranked();
            let p = F::lit(p);
            let mut cumulative = F::zero();
            let mut cut = ranked.len();
            for (i, &t) in ranked.iter().enumerate() {
                cumulative = cumulative + dist.prob(t);
                if cumulative >= p {
                    cut = i + 1;
                    break;
                }
            }
            keep_tokens(dist, &ranked[..cut])
        }
    }
}

/// A generated sequence with its log-likelihood under the model and under the
/// decoder that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSample<F> {
    pub sequence: TokenSequence,
    pub model_log_likelihood: F,
    pub decoder_log_prob: F,
}

/// Draws one length-`n` sequence token by token from the warped conditionals.
pub fn sample_sequence<F, M, R>(
    model: &M,
    context: &Context,
    config: &DecoderConfig,
    n: usize,
    rng: &mut R,
) -> Result<DecodedSample<F>>
where
    F: Scalar,
    M: LanguageModel<F> + ?Sized,
    R: Rng + ?Sized,
{
    if n == 0 {
        return input("sequence length must be at least 1");
    }
    config.validate()?;
    let mut ids = Vec::with_capacity(n);
    let mut model_lp = F::zero();
    let mut decoder_lp = F::zero();
    for _ in 0..n {
        let base = model.next(context, &ids)?;
        let warped = warp(&base, config)?;
        let t = warped.sample(rng);
        model_lp = model_lp + base.log_prob(t);
        decoder_lp = decoder_lp + warped.log_prob(t);
        ids.push(t);
    }
    Ok(DecodedSample {
        sequence: TokenSequence(ids),
        model_log_likelihood: model_lp,
        decoder_log_prob: decoder_lp,
    })
}

/// `count` samples, sample `i` drawn from `streams.rng(i)`. Runs in parallel;
/// the result does not depend on thread count.
pub fn sample_many<F, M>(
    model: &M,
    context: &Context,
    config: &DecoderConfig,
    n: usize,
    count: usize,
    streams: &Streams,
) -> Result<Vec<DecodedSample<F>>>
where
    F: Scalar,
    M: LanguageModel<F> + ?Sized,
{
    (0..count as u64)
        .into_par_iter()
        .map(|i| sample_sequence(model, context, config, n, &mut streams.rng(i)))
        .collect()
}

/// Log-probability the decoder assigns to `seq`; `-inf` if some step excluded
/// the chosen token.
pub fn decoder_sequence_log_prob<F: Scalar, M: LanguageModel<F> + ?Sized>(
    model: &M,
    context: &Context,
    config: &DecoderConfig,
    seq: &TokenSequence,
) -> Result<F> {
    seq.check_vocab(model.vocab_size())?;
    let ids = seq.ids();
    let mut total = F::zero();
    for i in 0..ids.len() {
        let p = warp(&model.next(context, &ids[..i])?, config)?.prob(ids[i]);
        if p <= F::zero() {
            return Ok(F::neg_infinity());
        }
        total = total + p.ln();
    }
    Ok(total)
}

/// Exact distribution the decoder induces over all `V^n` sequences.
pub fn induced_distribution_exact<F: Scalar, M: LanguageModel<F> + ?Sized>(
    model: &M,
    context: &Context,
    config: &DecoderConfig,
    n: usize,
    limit: u64,
) -> Result<DistributionTable<F>> {
    config.validate()?;
    let paths = enumerate_paths(model, context, n, limit, |_, d| warp(d, config))?;
    DistributionTable::new(paths.into_iter().map(|p| (p.sequence, p.step_log_prob.exp())).collect())
}
