use super::{ConditionalDistribution, Context, LanguageModel, TokenId, TokenSequence};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default cap on the number of sequences an exhaustive walk may visit.
pub const DEFAULT_ENUMERATION_LIMIT: u64 = 1_000_000;

/// One leaf of an exhaustive walk.
#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedPath<F> {
    pub sequence: TokenSequence,
    /// Log-likelihood under the model itself.
    pub model_log_prob: F,
    /// Log-probability under the per-step transformed conditionals.
    pub step_log_prob: F,
}

pub(crate) fn check_limit(vocab_size: usize, n: usize, limit: u64) -> Result<()> {
    let requested = (vocab_size as f64).powi(n as i32);
    if requested > limit as f64 {
        return Err(Error::EnumerationLimit { requested, limit });
    }
    Ok(())
}

/// Visits all `V^n` sequences in lexicographic id order, accumulating the
/// model log-likelihood and the log-probability under `transform` applied to
/// each step's conditional. Prefixes unreachable under the model are not
/// queried; their leaves get `-inf` for both values.
pub(crate) fn enumerate_paths<F, M, T>(
    model: &M,
    context: &Context,
    n: usize,
    limit: u64,
    transform: T,
) -> Result<Vec<EnumeratedPath<F>>>
where
    F: Scalar,
    M: LanguageModel<F> + ?Sized,
    T: Fn(&[TokenId], &ConditionalDistribution<F>) -> Result<ConditionalDistribution<F>>,
{
    let v = model.vocab_size();
    check_limit(v, n, limit)?;
    let mut out = Vec::with_capacity(v.pow(n as u32));
    let mut prefix = Vec::with_capacity(n);
    walk(model, context, n, &transform, &mut prefix, F::zero(), F::zero(), &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk<F, M, T>(
    model: &M,
    context: &Context,
    n: usize,
    transform: &T,
    prefix: &mut Vec<TokenId>,
    model_lp: F,
    step_lp: F,
    out: &mut Vec<EnumeratedPath<F>>,
) -> Result<()>
where
    F: Scalar,
    M: LanguageModel<F> + ?Sized,
    T: Fn(&[TokenId], &ConditionalDistribution<F>) -> Result<ConditionalDistribution<F>>,
{
    if prefix.len() == n {
        out.push(EnumeratedPath {
            sequence: TokenSequence(prefix.clone()),
            model_log_prob: model_lp,
            step_log_prob: step_lp,
        });
        return Ok(());
    }
    let v = model.vocab_size();
    let dists = if model_lp == F::neg_infinity() {
        None
    } else {
        let base = model.next(context, prefix)?;
        let warped = transform(prefix, &base)?;
        Some((base, warped))
    };
    for t in 0..v {
        let (m, s) = match &dists {
            Some((base, warped)) => (model_lp + base.log_prob(t), step_lp + warped.log_prob(t)),
            None => (F::neg_infinity(), F::neg_infinity()),
        };
        prefix.push(t);
        walk(model, context, n, transform, prefix, m, s, out)?;
        prefix.pop();
    }
    Ok(())
}

/// Every length-`n` sequence with its model log-likelihood (nats).
///
/// Refuses when `V^n` exceeds `limit`.
pub fn enumerate_sequences<F: Scalar, M: LanguageModel<F> + ?Sized>(
    model: &M,
    context: &Context,
    n: usize,
    limit: u64,
) -> Result<Vec<(TokenSequence, F)>> {
    Ok(enumerate_paths(model, context, n, limit, |_, d| Ok(d.clone()))?
        .into_iter()
        .map(|p| (p.sequence, p.model_log_prob))
        .collect())
}
