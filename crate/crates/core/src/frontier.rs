//! Quality–diversity measurements: entropy (exact and Monte Carlo), proxy
//! quality, the combined goal, the temperature-for-entropy solver, likelihood
//! stratification, and decoder sweeps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::decoders::{sample_sequence, DecoderConfig};
use crate::error::{input, Error, Result};
use crate::lm::{Context, LanguageModel, TokenSequence};
use crate::oracle::DistributionTable;
use crate::rng::{StreamRng, Streams};
use crate::scalar::Scalar;
use crate::selective::{estimate_partition, selective_sample, SelectiveConfig};

/// Smallest temperature the entropy solver searches.
pub const TAU_MIN: f64 = 1e-3;

/// Log-likelihood at which human quality ratings were reported to turn
/// downward for 30-token news continuations. Recorded, not reproduced here;
/// useful only as a starting cutoff for models of that scale.
pub const INFLECTION_LOG_LIKELIHOOD: f64 = -58.09;

/// Shannon entropy in nats, with `0 log 0 = 0`.
pub fn entropy_of<F: Scalar>(probs: &[F]) -> F {
    let h: F = probs
        .iter()
        .filter(|&&p| p > F::zero())
        .map(|&p| p * p.ln())
        .sum();
    F::zero() - h
}

pub fn entropy_exact<F: Scalar>(table: &DistributionTable<F>) -> F {
    let probs: Vec<F> = table.iter().map(|(_, p)| p).collect();
    entropy_of(&probs)
}

/// Global tempering of a finite distribution: `p^(1/tau)` renormalized.
pub fn tempered<F: Scalar>(p: &[F], tau: F) -> Vec<F> {
    let log_max = p.iter().copied().fold(F::zero(), F::max).ln();
    let w: Vec<F> = p
        .iter()
        .map(|&x| if x > F::zero() { ((x.ln() - log_max) / tau).exp() } else { F::zero() })
        .collect();
    let total: F = w.iter().copied().sum();
    w.into_iter().map(|x| x / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureSolution<F> {
    pub tau: F,
    /// Entropy of the tempered distribution at `tau`.
    pub entropy: F,
    /// Entropy does not vary with temperature (uniform input).
    pub degenerate: bool,
}

/// Finds `tau` in `[TAU_MIN, 1]` whose global tempering of `p` has entropy
/// `target`, by bisection on the increasing map `tau -> H(p^(1/tau))`.
pub fn solve_temperature_for_entropy<F: Scalar>(p: &[F], target: F) -> Result<TemperatureSolution<F>> {
    if p.len() < 2 {
        return input("need at least two outcomes");
    }
    if p.iter().any(|&x| !(x > F::zero())) {
        return input("distribution must have full support");
    }
    let total: F = p.iter().copied().sum();
    if (total - F::one()).abs() > F::tol(1e-9) {
        return input(format!("distribution sums to {total}"));
    }
    let tol = F::tol(1e-9);
    let entropy_at = |tau: F| entropy_of(&tempered(p, tau));
    let tau_min = F::lit(TAU_MIN);
    let h_hi = entropy_of(p);
    let h_lo = entropy_at(tau_min);
    if h_hi - h_lo <= tol {
        if (target - h_hi).abs() <= tol {
            return Ok(TemperatureSolution {
                tau: F::one(),
                entropy: h_hi,
                degenerate: true,
            });
        }
        return input(format!("entropy is constant at {h_hi} for this distribution; target {target} unreachable"));
    }
    if target < h_lo - tol || target > h_hi + tol {
        return input(format!("target entropy {target} outside achievable range [{h_lo}, {h_hi}]"));
    }
    let (mut lo, mut hi) = (tau_min, F::one());
    let (mut best, mut best_h) = (F::one(), h_hi);
    for _ in 0..200 {
        if (best_h - target).abs() <= tol * F::lit(1e-3) {
            break;
        }
        let mid = (lo + hi) / F::lit(2.0);
        let h = entropy_at(mid);
        if (h - target).abs() < (best_h - target).abs() {
            best = mid;
            best_h = h;
        }
        if h < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for edge in [tau_min, F::one()] {
        let h = entropy_at(edge);
        if (h - target).abs() < (best_h - target).abs() {
            best = edge;
            best_h = h;
        }
    }
    Ok(TemperatureSolution {
        tau: best,
        entropy: best_h,
        degenerate: false,
    })
}

/// Sample mean and its standard error (`s / sqrt(n)`, unbiased variance);
/// the error is 0 for fewer than two values.
pub fn mean_and_se<F: Scalar>(values: &[F]) -> (F, F) {
    if values.is_empty() {
        return (F::nan(), F::nan());
    }
    let n = F::from_usize(values.len()).expect("length fits");
    let mean = values.iter().copied().sum::<F>() / n;
    if values.len() < 2 || !mean.is_finite() {
        return (mean, F::zero());
    }
    let ss: F = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
    let var = ss / (n - F::one());
    (mean, (var / n).sqrt())
}

/// A sample together with the log-density its own sampler assigns it.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityDraw<F> {
    pub sequence: TokenSequence,
    pub model_log_likelihood: F,
    pub log_density: F,
}

/// A sampler that can score its own samples.
pub trait OwnDensitySampler<F: Scalar>: Sync {
    /// `None` when the sampler gave up (selective exhaustion).
    fn draw(&self, rng: &mut StreamRng) -> Result<Option<DensityDraw<F>>>;
}

/// Local decoder as an [`OwnDensitySampler`].
pub struct LocalSampler<'a, M: ?Sized> {
    model: &'a M,
    context: Context,
    config: DecoderConfig,
    n: usize,
}

impl<'a, M: ?Sized> LocalSampler<'a, M> {
    pub fn new(model: &'a M, context: Context, config: DecoderConfig, n: usize) -> Self {
        Self {
            model,
            context,
            config,
            n,
        }
    }
}

impl<F: Scalar, M: LanguageModel<F> + ?Sized> OwnDensitySampler<F> for LocalSampler<'_, M> {
    fn draw(&self, rng: &mut StreamRng) -> Result<Option<DensityDraw<F>>> {
        let s = sample_sequence(self.model, &self.context, &self.config, self.n, rng)?;
        Ok(Some(DensityDraw {
            sequence: s.sequence,
            model_log_likelihood: s.model_log_likelihood,
            log_density: s.decoder_log_prob,
        }))
    }
}

/// Selective sampling with densities normalized by a partition estimate.
pub struct SelectiveSampler<'a, M: ?Sized, F> {
    model: &'a M,
    context: Context,
    config: SelectiveConfig,
    n: usize,
    log_z: F,
}

impl<'a, M: ?Sized, F> SelectiveSampler<'a, M, F> {
    pub fn new(model: &'a M, context: Context, config: SelectiveConfig, n: usize, log_z: F) -> Self {
        Self {
            model,
            context,
            config,
            n,
            log_z,
        }
    }
}

impl<F: Scalar, M: LanguageModel<F> + ?Sized> OwnDensitySampler<F> for SelectiveSampler<'_, M, F> {
    fn draw(&self, rng: &mut StreamRng) -> Result<Option<DensityDraw<F>>> {
        let o = selective_sample(self.model, &self.context, &self.config, self.n, Some(self.log_z), rng)?;
        Ok(o.sample.map(|s| DensityDraw {
            sequence: s.sequence,
            model_log_likelihood: s.model_log_likelihood,
            log_density: s.decoder_log_prob.expect("partition supplied"),
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate<F> {
    pub estimate: F,
    pub std_error: F,
    /// Draws that produced a sample.
    pub samples: usize,
}

/// `-(1/n) sum log q(x_i)` over `n` draws from `sampler`, draw `i` using
/// `streams.rng(i)`.
pub fn entropy_monte_carlo<F: Scalar, S: OwnDensitySampler<F> + ?Sized>(
    sampler: &S,
    n: usize,
    streams: &Streams,
) -> Result<MonteCarloEstimate<F>> {
    if n == 0 {
        return input("need at least one draw");
    }
    let draws: Vec<Option<DensityDraw<F>>> = (0..n as u64)
        .into_par_iter()
        .map(|i| sampler.draw(&mut streams.rng(i)))
        .collect::<Result<_>>()?;
    let neg_log: Vec<F> = draws.into_iter().flatten().map(|d| F::zero() - d.log_density).collect();
    entropy_from_surprisals(&neg_log)
}

fn entropy_from_surprisals<F: Scalar>(neg_log: &[F]) -> Result<MonteCarloEstimate<F>> {
    if let Some(x) = neg_log.iter().find(|x| !x.is_finite()) {
        return Err(Error::Consistency(format!("sampler produced a sample with own log-density {}", F::zero() - *x)));
    }
    let (estimate, std_error) = mean_and_se(neg_log);
    Ok(MonteCarloEstimate {
        estimate,
        std_error,
        samples: neg_log.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalWeights {
    lambda: f64,
}

impl GoalWeights {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return input(format!("diversity weight {lambda} must be nonnegative"));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// `quality + lambda * entropy`.
pub fn goal_score<F: Scalar>(quality: F, entropy: F, weights: GoalWeights) -> F {
    if quality == F::neg_infinity() {
        return quality;
    }
    quality + F::lit(weights.lambda) * entropy
}

/// Stand-in for human quality judgments.
pub trait ProxyQuality<F: Scalar>: Sync {
    /// May return `-inf`.
    fn score(&self, sequence: &TokenSequence, model_log_likelihood: F) -> F;
}

/// `log p(x)` below the cutoff, `-inf` at or above it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihoodProxy {
    pub alpha: f64,
}

impl Default for LogLikelihoodProxy {
    fn default() -> Self {
        Self {
            alpha: INFLECTION_LOG_LIKELIHOOD,
        }
    }
}

impl<F: Scalar> ProxyQuality<F> for LogLikelihoodProxy {
    fn score(&self, _sequence: &TokenSequence, model_log_likelihood: F) -> F {
        if model_log_likelihood < F::lit(self.alpha) {
            model_log_likelihood
        } else {
            F::neg_infinity()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BinMode {
    /// Equal-width log-likelihood intervals.
    #[default]
    Width,
    /// Equal-size groups of consecutive log-likelihoods.
    Count,
}

impl FromStr for BinMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "width" => Ok(Self::Width),
            "count" => Ok(Self::Count),
            _ => input(format!("unknown bin mode `{s}` (expected width or count)")),
        }
    }
}

/// Groups `(item, log p)` pairs by log-likelihood into `bins` groups, lowest
/// likelihoods first.
///
/// `Width`: equal intervals over `[min, max]`, the last one closed on the
/// right. `Count`: sorted and split into runs whose sizes differ by at most one
/// (earlier groups take the remainder). Groups may be empty in `Width` mode.
pub fn stratified_likelihood_bins<T: Clone, F: Scalar>(
    samples: &[(T, F)],
    bins: usize,
    mode: BinMode,
) -> Result<Vec<Vec<(T, F)>>> {
    if bins == 0 {
        return input("bin count must be at least 1");
    }
    if samples.is_empty() {
        return input("no samples to bin");
    }
    if samples.iter().any(|(_, lp)| lp.is_nan()) {
        return input("NaN log-likelihood");
    }
    let mut out = vec![Vec::new(); bins];
    match mode {
        BinMode::Width => {
            let lo = samples.iter().map(|s| s.1).fold(F::infinity(), F::min);
            let hi = samples.iter().map(|s| s.1).fold(F::neg_infinity(), F::max);
            let width = (hi - lo) / F::from_usize(bins).expect("fits");
            for s in samples {
                let idx = if width > F::zero() {
                    ((s.1 - lo) / width).floor().to_usize().unwrap_or(0).min(bins - 1)
                } else {
                    0
                };
                out[idx].push(s.clone());
            }
        }
        BinMode::Count => {
            let mut sorted = samples.to_vec();
            sorted.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN"));
            let (base, extra) = (sorted.len() / bins, sorted.len() % bins);
            let mut it = sorted.into_iter();
            for (i, bin) in out.iter_mut().enumerate() {
                let size = base + usize::from(i < extra);
                bin.extend(it.by_ref().take(size));
            }
        }
    }
    Ok(out)
}

/// Either kind of decoding configuration a sweep can run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepConfig {
    Local(DecoderConfig),
    Selective(SelectiveConfig),
}

impl SweepConfig {
    pub fn method(&self) -> &'static str {
        match self {
            Self::Local(c) => c.method(),
            Self::Selective(_) => "selective",
        }
    }

    /// Hyperparameter along which the method's frontier is traced.
    pub fn hyperparameter(&self) -> Option<f64> {
        match self {
            Self::Local(c) => c.hyperparameter(),
            Self::Selective(c) => Some(c.tau),
        }
    }
}

impl fmt::Display for SweepConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Local(c) => c.fmt(f),
            Self::Selective(c) => c.fmt(f),
        }
    }
}

impl FromStr for SweepConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.trim().starts_with("selective:") {
            s.parse().map(Self::Selective)
        } else {
            s.parse().map(Self::Local)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub config: String,
    /// `None` for the pooled summary over all prompts.
    pub prompt_id: Option<usize>,
    pub entropy: f64,
    pub entropy_se: f64,
    pub quality: f64,
    pub quality_se: f64,
    pub n_samples: usize,
    /// Accepted samples per proposal; 1 for local decoders.
    pub accept_rate: f64,
    /// Fewer than two samples, so standard errors are not informative.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub samples_per: usize,
    pub length: usize,
    /// Plain samples per prompt used to estimate the partition function for
    /// selective configurations.
    pub partition_samples: usize,
}

struct UnitResult {
    surprisals: Vec<f64>,
    qualities: Vec<f64>,
    accepted: u64,
    attempts: u64,
}

fn point(config: &str, prompt_id: Option<usize>, unit: &UnitResult) -> FrontierPoint {
    let (entropy, entropy_se) = mean_and_se(&unit.surprisals);
    let (quality, quality_se) = mean_and_se(&unit.qualities);
    FrontierPoint {
        config: config.to_owned(),
        prompt_id,
        entropy,
        entropy_se,
        quality,
        quality_se,
        n_samples: unit.surprisals.len(),
        accept_rate: if unit.attempts == 0 {
            0.0
        } else {
            unit.accepted as f64 / unit.attempts as f64
        },
        flagged: unit.surprisals.len() < 2,
    }
}

fn run_unit<M: LanguageModel<f64> + ?Sized>(
    model: &M,
    context: &Context,
    config: &SweepConfig,
    proxy: &dyn ProxyQuality<f64>,
    opts: &SweepOptions,
    streams: &Streams,
) -> Result<UnitResult> {
    let count = opts.samples_per as u64;
    let (draws, accepted, attempts): (Vec<DensityDraw<f64>>, u64, u64) = match config {
        SweepConfig::Local(c) => {
            let sampler = LocalSampler::new(model, context.clone(), *c, opts.length);
            let draws = (0..count)
                .into_par_iter()
                .map(|i| sampler.draw(&mut streams.rng(i)))
                .collect::<Result<Vec<_>>>()?;
            (draws.into_iter().flatten().collect(), count, count)
        }
        SweepConfig::Selective(c) => {
            let z = estimate_partition(model, context, c, opts.length, opts.partition_samples, &streams.child("partition", 0))?;
            let outcomes = (0..count)
                .into_par_iter()
                .map(|i| selective_sample(model, context, c, opts.length, Some(z.log_z), &mut streams.rng(i)))
                .collect::<Result<Vec<_>>>()?;
            let attempts = outcomes.iter().map(|o| o.attempts).sum();
            let draws: Vec<_> = outcomes
                .into_iter()
                .filter_map(|o| o.sample)
                .map(|s| DensityDraw {
                    sequence: s.sequence,
                    model_log_likelihood: s.model_log_likelihood,
                    log_density: s.decoder_log_prob.expect("partition supplied"),
                })
                .collect();
            let accepted = draws.len() as u64;
            (draws, accepted, attempts)
        }
    };
    let surprisals: Vec<f64> = draws.iter().map(|d| 0.0 - d.log_density).collect();
    entropy_from_surprisals(&surprisals)?;
    let qualities = draws
        .iter()
        .map(|d| proxy.score(&d.sequence, d.model_log_likelihood))
        .collect();
    Ok(UnitResult {
        surprisals,
        qualities,
        accepted,
        attempts,
    })
}

/// Runs every (prompt, config) unit and returns, per config in input order,
/// one point per prompt followed by the pooled summary point.
///
/// Unit `(p, c)` draws from `streams.task(p, c.to_string())`, so the output is
/// independent of scheduling.
pub fn sweep<M: LanguageModel<f64> + ?Sized>(
    model: &M,
    prompts: &[Context],
    configs: &[SweepConfig],
    proxy: &dyn ProxyQuality<f64>,
    opts: &SweepOptions,
    streams: &Streams,
) -> Result<Vec<FrontierPoint>> {
    if prompts.is_empty() || configs.is_empty() {
        return input("sweep needs at least one prompt and one config");
    }
    if opts.samples_per == 0 || opts.length == 0 {
        return input("samples per config and length must be positive");
    }
    let units: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..prompts.len()).map(move |p| (c, p)))
        .collect();
    let results: Vec<UnitResult> = units
        .par_iter()
        .map(|&(c, p)| {
            let label = configs[c].to_string();
            run_unit(model, &prompts[p], &configs[c], proxy, opts, &streams.task(p as u64, &label))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(configs.len() * (prompts.len() + 1));
    for (c, chunk) in results.chunks(prompts.len()).enumerate() {
        let label = configs[c].to_string();
        let mut pooled = UnitResult {
            surprisals: Vec::new(),
            qualities: Vec::new(),
            accepted: 0,
            attempts: 0,
        };
        for (p, unit) in chunk.iter().enumerate() {
            points.push(point(&label, Some(p), unit));
            pooled.surprisals.extend_from_slice(&unit.surprisals);
            pooled.qualities.extend_from_slice(&unit.qualities);
            pooled.accepted += unit.accepted;
            pooled.attempts += unit.attempts;
        }
        points.push(point(&label, None, &pooled));
    }
    Ok(points)
}

pub const FRONTIER_CSV_HEADER: [&str; 8] = [
    "config",
    "prompt_id",
    "entropy",
    "entropy_se",
    "quality",
    "quality_se",
    "n_samples",
    "accept_rate",
];

pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FRONTIER_CSV_HEADER)?;
    for p in points {
        w.write_record([
            p.config.clone(),
            p.prompt_id.map_or_else(|| "ALL".to_owned(), |i| i.to_string()),
            p.entropy.to_string(),
            p.entropy_se.to_string(),
            p.quality.to_string(),
            p.quality_se.to_string(),
            p.n_samples.to_string(),
            p.accept_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert!((entropy_of(&[0.25f64; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy_of(&[1.0f64, 0.0, 0.0]), 0.0);
        // Independent four-term sum: 0.1 ln 10 + 0.4 ln 2.5 + 0.5 ln 4.
        let oracle = 0.1 * 10f64.ln() + 0.4 * 2.5f64.ln() + 0.5 * 4f64.ln();
        let h = entropy_of(&[0.1f64, 0.4, 0.25, 0.25]);
        assert!((h - oracle).abs() < 1e-15);
        assert!((h - 1.2899).abs() < 1e-4);
    }

    #[test]
    fn goal_examples() {
        let w0 = GoalWeights::new(0.0).unwrap();
        let w3 = GoalWeights::new(3.0).unwrap();
        assert_eq!(goal_score(-50.0, 2.0, w0), -50.0);
        assert_eq!(goal_score(-50.0, 2.0, w3), -44.0);
        assert_eq!(goal_score(f64::NEG_INFINITY, f64::INFINITY, w3), f64::NEG_INFINITY);
        assert!(GoalWeights::new(-1.0).is_err());
    }

    #[test]
    fn solver_examples() {
        let p = [0.7f64, 0.2, 0.1];
        let h = entropy_of(&p);
        let at_one = solve_temperature_for_entropy(&p, h).unwrap();
        assert!((at_one.tau - 1.0).abs() < 1e-9 && !at_one.degenerate);

        let sol = solve_temperature_for_entropy(&p, 0.5 * h).unwrap();
        let recomputed: f64 = {
            // Recompute by hand rather than through `tempered`.
            let w: Vec<f64> = p.iter().map(|x: &f64| x.powf(1.0 / sol.tau)).collect();
            let z: f64 = w.iter().sum();
            -w.iter().map(|x| (x / z) * (x / z).ln()).sum::<f64>()
        };
        assert!((recomputed - 0.5 * h).abs() <= 1e-9, "{recomputed}");
        assert!(sol.tau > TAU_MIN && sol.tau < 1.0);

        let u = solve_temperature_for_entropy(&[0.25; 4], 4f64.ln()).unwrap();
        assert!(u.degenerate && u.tau == 1.0);
    }

    #[test]
    fn solver_rejects_unreachable_targets() {
        let err = solve_temperature_for_entropy(&[0.9, 0.1], 2f64.ln()).unwrap_err();
        assert!(err.to_string().contains("outside achievable range"), "{err}");
        assert!(solve_temperature_for_entropy(&[0.9, 0.1], -0.1).is_err());
        assert!(solve_temperature_for_entropy(&[1.0, 0.0], 0.0).is_err());
        assert!(solve_temperature_for_entropy(&[0.5, 0.5], 0.3).is_err());
    }

    #[test]
    fn proxy_cutoff_is_strict() {
        let proxy = LogLikelihoodProxy { alpha: -5.0 };
        let s = TokenSequence::empty();
        assert_eq!(proxy.score(&s, -6.0f64), -6.0);
        assert_eq!(proxy.score(&s, -5.0f64), f64::NEG_INFINITY);
        assert_eq!(LogLikelihoodProxy::default().alpha, -58.09);
    }

    #[test]
    fn width_bins() {
        let samples: Vec<(u8, f64)> = vec![(0, -10.0), (1, -20.0), (2, -30.0), (3, -40.0)];
        let bins = stratified_likelihood_bins(&samples, 2, BinMode::Width).unwrap();
        let mut lps: Vec<Vec<f64>> = bins.iter().map(|b| b.iter().map(|s| s.1).collect()).collect();
        for b in &mut lps {
            b.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        assert_eq!(lps, vec![vec![-40.0, -30.0], vec![-20.0, -10.0]]);
        let one = stratified_likelihood_bins(&samples, 1, BinMode::Width).unwrap();
        assert_eq!(one[0].len(), 4);
        assert!(stratified_likelihood_bins::<u8, f64>(&[], 2, BinMode::Width).is_err());
        assert!(stratified_likelihood_bins(&samples, 0, BinMode::Width).is_err());
    }

    #[test]
    fn count_bins_of_five() {
        let samples: Vec<(usize, f64)> = (0..100).map(|i| (i, -(i as f64) * 0.37)).collect();
        let bins = stratified_likelihood_bins(&samples, 20, BinMode::Count).unwrap();
        assert!(bins.iter().all(|b| b.len() == 5));
        assert!(bins.windows(2).all(|w| w[0].iter().map(|s| s.1).fold(f64::MIN, f64::max) <= w[1][0].1));
    }

    #[test]
    fn mean_and_se_small_cases() {
        assert_eq!(mean_and_se(&[2.0f64]), (2.0, 0.0));
        let (m, se) = mean_and_se(&[1.0f64, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_config_strings() {
        let a: SweepConfig = "topp:0.9".parse().unwrap();
        assert_eq!(a, SweepConfig::Local(DecoderConfig::TopP(0.9)));
        let b: SweepConfig = "selective:tau=0.5,alpha=-3".parse().unwrap();
        assert_eq!(b.method(), "selective");
        assert_eq!(b.to_string(), "selective:tau=0.5,alpha=-3,max=10000");
    }
}
