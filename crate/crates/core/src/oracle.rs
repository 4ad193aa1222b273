//! Brute-force verification: exact distribution tables, distances between
//! them, and the packaged checks run by tests and the `verify` command.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::decoders::{apply_temperature, induced_distribution_exact, sample_many, DecoderConfig};
use crate::error::{input, Result};
use crate::frontier::{entropy_exact, entropy_monte_carlo, entropy_of, solve_temperature_for_entropy, tempered, LocalSampler, TAU_MIN};
use crate::lm::{enumerate_paths, fig2_model, Context, LanguageModel, TokenSequence, DEFAULT_ENUMERATION_LIMIT};
use crate::rng::Streams;
use crate::scalar::Scalar;
use crate::selective::{choose_alpha_percentile, global_temperature_exact, selective_sample, SelectiveConfig};

/// Probability of each listed sequence. Missing sequences have probability 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionTable<F> {
    probs: BTreeMap<TokenSequence, F>,
}

impl<F: Scalar> DistributionTable<F> {
    /// Entries must be unique, nonnegative, and sum to one within `1e-9`.
    pub fn new(entries: Vec<(TokenSequence, F)>) -> Result<Self> {
        let mut probs = BTreeMap::new();
        let mut total = F::zero();
        for (seq, p) in entries {
            if !(p >= F::zero() && p.is_finite()) {
                return input(format!("probability {p} for sequence [{seq}]"));
            }
            total = total + p;
            if probs.insert(seq.clone(), p).is_some() {
                return input(format!("sequence [{seq}] listed twice"));
            }
        }
        if (total - F::one()).abs() > F::tol(1e-9) {
            return input(format!("table sums to {total}"));
        }
        Ok(Self { probs })
    }

    /// Relative frequencies of `sequences`.
    pub fn empirical<'a>(sequences: impl IntoIterator<Item = &'a TokenSequence>) -> Result<Self> {
        let mut counts: BTreeMap<TokenSequence, u64> = BTreeMap::new();
        let mut total = 0u64;
        for s in sequences {
            *counts.entry(s.clone()).or_default() += 1;
            total += 1;
        }
        if total == 0 {
            return input("no samples");
        }
        let n = F::from_u64(total).expect("count fits");
        Ok(Self {
            probs: counts
                .into_iter()
                .map(|(s, c)| (s, F::from_u64(c).expect("count fits") / n))
                .collect(),
        })
    }

    pub fn prob(&self, seq: &TokenSequence) -> F {
        self.probs.get(seq).copied().unwrap_or_else(F::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TokenSequence, F)> + '_ {
        self.probs.iter().map(|(s, &p)| (s, p))
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Total probability of sequences satisfying `pred`.
    pub fn mass_where(&self, mut pred: impl FnMut(&TokenSequence) -> bool) -> F {
        self.iter().filter(|(s, _)| pred(s)).map(|(_, p)| p).sum()
    }
}

/// Half the L1 distance.
pub fn tv_distance<F: Scalar>(p: &DistributionTable<F>, q: &DistributionTable<F>) -> F {
    let keys: BTreeSet<&TokenSequence> = p.probs.keys().chain(q.probs.keys()).collect();
    let l1: F = keys.into_iter().map(|s| (p.prob(s) - q.prob(s)).abs()).sum();
    l1 / F::lit(2.0)
}

/// `sum q log(q / p)`; requires `q` absolutely continuous with respect to `p`.
pub fn reverse_kl<F: Scalar>(q: &DistributionTable<F>, p: &DistributionTable<F>) -> Result<F> {
    let mut total = F::zero();
    for (s, qs) in q.iter() {
        if qs > F::zero() {
            let ps = p.prob(s);
            if ps <= F::zero() {
                return input(format!("sequence [{s}] has mass under q but not under p"));
            }
            total = total + qs * (qs / ps).ln();
        }
    }
    Ok(total)
}

/// [`reverse_kl`] for two probability vectors over the same outcomes.
pub fn reverse_kl_probs<F: Scalar>(q: &[F], p: &[F]) -> Result<F> {
    if q.len() != p.len() {
        return input("distributions over different outcome counts");
    }
    let mut total = F::zero();
    for (&qi, &pi) in q.iter().zip(p) {
        if qi > F::zero() {
            if pi <= F::zero() {
                return input("q puts mass outside the support of p");
            }
            total = total + qi * (qi / pi).ln();
        }
    }
    Ok(total)
}

/// Global-tempering branch masses quoted for the two-branch tree at `tau = 0.5`.
pub const REFERENCE_BRANCH_MASSES: [f64; 2] = [0.5763, 0.4237];

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_owned(),
            passed,
            detail,
        }
    }
}

fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop2Report {
    pub tau: f64,
    /// Global-tempering mass of the `A` and `B` subtrees.
    pub branch_masses: [f64; 2],
    /// Smallest and largest root mass on `A` over all local profiles.
    pub local_root_mass_range: [f64; 2],
    pub profiles: usize,
    pub min_tv: f64,
    pub best_profile: Vec<f64>,
    /// `|P(A) - 1/2|`, the distance forced by the root marginal alone.
    pub root_marginal_bound: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// `points` log-spaced temperatures over `[0.01, 100]`; an odd count includes 1.
pub fn local_temperature_grid(points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![1.0];
    }
    (0..points)
        .map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / (points - 1) as f64))
        .collect()
}

/// Smallest TV between `target` and local temperature sampling with one
/// temperature per step, over the product grid of `temperatures`.
/// Returns (min TV, minimizing profile, per-profile root distributions).
pub fn local_profile_search<F: Scalar, M: LanguageModel<F> + ?Sized>(
    model: &M,
    context: &Context,
    n: usize,
    temperatures: &[f64],
    target: &DistributionTable<F>,
) -> Result<(F, Vec<f64>, Vec<Vec<F>>)> {
    let profiles = temperatures.len().pow(n as u32);
    let results: Vec<(F, Vec<f64>, Vec<F>)> = (0..profiles)
        .into_par_iter()
        .map(|mut code| {
            let mut profile = Vec::with_capacity(n);
            for _ in 0..n {
                profile.push(temperatures[code % temperatures.len()]);
                code /= temperatures.len();
            }
            let paths = enumerate_paths(model, context, n, DEFAULT_ENUMERATION_LIMIT, |prefix, d| {
                apply_temperature(d, F::lit(profile[prefix.len()]))
            })?;
            let table = DistributionTable::new(paths.into_iter().map(|p| (p.sequence, p.step_log_prob.exp())).collect())?;
            let root = apply_temperature(&model.next(context, &[])?, F::lit(profile[0]))?.into_probs();
            Ok((tv_distance(&table, target), profile, root))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.0 < results[best].0 {
            best = i;
        }
    }
    let min = results[best].0;
    let profile = results[best].1.clone();
    Ok((min, profile, results.into_iter().map(|r| r.2).collect()))
}

/// Exact global tempering of the bundled two-branch tree against every local
/// per-step temperature profile on a 33 x 33 log-spaced grid.
pub fn verify_proposition2(tau: f64) -> Result<Prop2Report> {
    let model = fig2_model::<f64>();
    let ctx = Context::empty();
    let global = global_temperature_exact(&model, &ctx, tau, 0.0, 2, DEFAULT_ENUMERATION_LIMIT)?;
    let p_a = global.table.mass_where(|s| s.ids()[0] == 0);
    let p_b = global.table.mass_where(|s| s.ids()[0] == 1);
    let grid = local_temperature_grid(33);
    let (min_tv, best_profile, roots) = local_profile_search(&model, &ctx, 2, &grid, &global.table)?;
    let root_a = roots.iter().map(|r| r[0]);
    let lo = root_a.clone().fold(f64::INFINITY, f64::min);
    let hi = root_a.fold(f64::NEG_INFINITY, f64::max);
    let bound = (p_a - 0.5).abs();

    let mut checks = vec![
        Check::new(
            "local_root_masses_equal",
            (lo - 0.5).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12,
            format!("root mass on A ranges over [{lo}, {hi}]"),
        ),
        Check::new(
            "min_tv_at_least_root_bound",
            min_tv >= bound - 1e-6,
            format!("min TV {min_tv:.6} vs |P(A) - 0.5| = {bound:.6}"),
        ),
    ];
    if (tau - 0.5).abs() < 1e-12 {
        let [ra, rb] = REFERENCE_BRANCH_MASSES;
        checks.push(Check::new(
            "branch_masses_match_reference",
            (p_a - ra).abs() <= 1e-4 && (p_b - rb).abs() <= 1e-4,
            format!("P(A) = {p_a:.6}, P(B) = {p_b:.6}"),
        ));
        checks.push(Check::new(
            "local_sampling_separated",
            min_tv > 0.07,
            format!("min TV {min_tv:.6} > 0.07"),
        ));
    }
    let passed = all_passed(&checks);
    Ok(Prop2Report {
        tau,
        branch_masses: [p_a, p_b],
        local_root_mass_range: [lo, hi],
        profiles: roots.len(),
        min_tv,
        best_profile,
        root_marginal_bound: bound,
        checks,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop1Trial {
    pub p: Vec<f64>,
    pub target_entropy: f64,
    pub tau: f64,
    pub residual: f64,
    pub optimal_kl: f64,
    pub min_perturbed_kl: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop1Report {
    pub trials: Vec<Prop1Trial>,
    pub perturbations_per_trial: usize,
    pub total_violations: usize,
    pub max_residual: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Tempers `r` (exponent searched in log space) until its entropy is `target`.
/// Only ever used on non-uniform `r` whose entropy range covers `target`.
fn project_to_entropy(r: &[f64], target: f64) -> Vec<f64> {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    let mut q = r.to_vec();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        q = tempered(r, (-mid).exp());
        let h = entropy_of(&q);
        // Entropy falls as the exponent grows.
        if h > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (h - target).abs() < 1e-13 {
            break;
        }
    }
    q
}

fn random_simplex<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01f64..1.0).powi(3)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Reverse-KL optimality of global tempering under an entropy constraint,
/// checked against entropy-matched perturbations.
pub fn verify_proposition1(trials: usize, outcomes: usize, perturbations: usize, streams: &Streams) -> Result<Prop1Report> {
    if outcomes < 2 {
        return input("need at least two outcomes");
    }
    let results: Vec<Prop1Trial> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = streams.rng(i);
            let p = random_simplex(outcomes, &mut rng);
            let h_max = entropy_of(&p);
            let h_min = entropy_of(&tempered(&p, TAU_MIN));
            let target = h_min + rng.gen::<f64>() * (h_max - h_min);
            let sol = solve_temperature_for_entropy(&p, target)?;
            let q = tempered(&p, sol.tau);
            let residual = (entropy_of(&q) - target).abs();
            let optimal_kl = reverse_kl_probs(&q, &p)?;
            let mut min_perturbed = f64::INFINITY;
            let mut violations = 0;
            for j in 0..perturbations {
                let r = if j % 2 == 0 {
                    let sigma = 10f64.powf(rng.gen_range(-3.0..0.5));
                    let w: Vec<f64> = q.iter().map(|&x| x * (sigma * rng.gen_range(-1.0..1.0f64)).exp()).collect();
                    let s: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / s).collect()
                } else {
                    random_simplex(outcomes, &mut rng)
                };
                let candidate = project_to_entropy(&r, target);
                if (entropy_of(&candidate) - target).abs() > 1e-4 {
                    continue;
                }
                let kl = reverse_kl_probs(&candidate, &p)?;
                min_perturbed = min_perturbed.min(kl);
                if kl < optimal_kl - 1e-6 {
                    violations += 1;
                }
            }
            Ok(Prop1Trial {
                p,
                target_entropy: target,
                tau: sol.tau,
                residual,
                optimal_kl,
                min_perturbed_kl: min_perturbed,
                violations,
            })
        })
        .collect::<Result<_>>()?;
    let total_violations = results.iter().map(|t| t.violations).sum();
    let max_residual = results.iter().map(|t| t.residual).fold(0.0, f64::max);
    let checks = vec![
        Check::new("no_kl_violations", total_violations == 0, format!("{total_violations} violations")),
        Check::new("solver_residual", max_residual <= 1e-9, format!("max |H(Q) - K| = {max_residual:e}")),
    ];
    let passed = all_passed(&checks);
    Ok(Prop1Report {
        trials: results,
        perturbations_per_trial: perturbations,
        total_violations,
        max_residual,
        checks,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectionReport {
    pub tau: f64,
    pub alpha: f64,
    pub percentile: f64,
    pub accepted: usize,
    pub attempts: u64,
    pub acceptance_rate: f64,
    pub exact_partition: f64,
    pub tv: f64,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Selective sampling against exact global tempering on an enumerable model.
///
/// The cutoff is the `percentile`-th nearest-rank percentile of
/// `pilot` plain samples' log-likelihoods.
#[allow(clippy::too_many_arguments)]
pub fn verify_rejection<M: LanguageModel<f64> + ?Sized>(
    model: &M,
    context: &Context,
    n: usize,
    tau: f64,
    percentile: f64,
    pilot: usize,
    accepted: usize,
    streams: &Streams,
) -> Result<RejectionReport> {
    let pilot_samples = sample_many(model, context, &DecoderConfig::Random, n, pilot, &streams.child("pilot", 0))?;
    let logps: Vec<f64> = pilot_samples.iter().map(|s| s.model_log_likelihood).collect();
    let alpha = choose_alpha_percentile(&logps, percentile)?;
    let cfg = SelectiveConfig::new(tau, alpha, SelectiveConfig::DEFAULT_MAX_ATTEMPTS)?;
    let exact = global_temperature_exact(model, context, tau, alpha, n, DEFAULT_ENUMERATION_LIMIT)?;

    let draw_streams = streams.child("selective", 0);
    let mut sequences = Vec::with_capacity(accepted);
    let mut attempts = 0u64;
    let mut next_index = 0u64;
    while sequences.len() < accepted {
        let batch = ((accepted - sequences.len()) as u64).max(1024);
        let outcomes: Vec<_> = (next_index..next_index + batch)
            .into_par_iter()
            .map(|i| selective_sample(model, context, &cfg, n, None, &mut draw_streams.rng(i)))
            .collect::<Result<_>>()?;
        next_index += batch;
        for o in outcomes {
            if sequences.len() == accepted {
                break;
            }
            attempts += o.attempts;
            if let Some(s) = o.sample {
                sequences.push(s.sequence);
            }
        }
    }
    let empirical = DistributionTable::empirical(sequences.iter())?;
    let tv = tv_distance(&empirical, &exact.table);
    let checks = vec![Check::new("tv_within_0.01", tv <= 0.01, format!("TV {tv:.5}"))];
    let passed = all_passed(&checks);
    Ok(RejectionReport {
        tau,
        alpha,
        percentile,
        accepted,
        attempts,
        acceptance_rate: accepted as f64 / attempts as f64,
        exact_partition: exact.log_z.exp(),
        tv,
        checks,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyRow {
    pub config: String,
    pub exact: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub within_3se: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyReport {
    pub samples: usize,
    pub rows: Vec<EntropyRow>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Monte Carlo own-density entropy against the exact induced entropy for each
/// decoder. Also checks that greedy is exactly zero and plain sampling has the
/// strictly largest exact entropy.
pub fn verify_entropy<M: LanguageModel<f64> + ?Sized>(
    model: &M,
    context: &Context,
    n: usize,
    configs: &[DecoderConfig],
    samples: usize,
    streams: &Streams,
) -> Result<EntropyReport> {
    let mut rows = Vec::new();
    for config in configs {
        let exact = entropy_exact(&induced_distribution_exact(model, context, config, n, DEFAULT_ENUMERATION_LIMIT)?);
        let sampler = LocalSampler::new(model, context.clone(), *config, n);
        let est = entropy_monte_carlo(&sampler, samples, &streams.task(0, &config.to_string()))?;
        let within = if est.std_error == 0.0 {
            (est.estimate - exact).abs() <= 1e-12
        } else {
            (est.estimate - exact).abs() <= 3.0 * est.std_error
        };
        rows.push(EntropyRow {
            config: config.to_string(),
            exact,
            estimate: est.estimate,
            std_error: est.std_error,
            within_3se: within,
        });
    }
    let mut checks = vec![Check::new(
        "monte_carlo_within_3se",
        rows.iter().all(|r| r.within_3se),
        rows.iter()
            .map(|r| format!("{}: {:.5} vs {:.5} (se {:.5})", r.config, r.estimate, r.exact, r.std_error))
            .collect::<Vec<_>>()
            .join("; "),
    )];
    if let Some(g) = rows.iter().find(|r| r.config == "greedy") {
        checks.push(Check::new(
            "greedy_entropy_zero",
            g.exact == 0.0 && g.estimate == 0.0,
            format!("exact {} estimate {}", g.exact, g.estimate),
        ));
    }
    if let Some(r) = rows.iter().find(|r| r.config == "random") {
        let others_max = rows
            .iter()
            .filter(|o| o.config != "random")
            .map(|o| o.exact)
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::new(
            "random_entropy_greatest",
            r.exact > others_max,
            format!("random {:.5} vs next {:.5}", r.exact, others_max),
        ));
    }
    let passed = all_passed(&checks);
    Ok(EntropyReport {
        samples,
        rows,
        checks,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(entries: &[(&[usize], f64)]) -> DistributionTable<f64> {
        DistributionTable::new(entries.iter().map(|(s, p)| (TokenSequence::new(s.to_vec()), *p)).collect()).unwrap()
    }

    #[test]
    fn tv_examples() {
        let a = table(&[(&[0], 0.5763), (&[1], 0.4237)]);
        let b = table(&[(&[0], 0.5), (&[1], 0.5)]);
        assert!((tv_distance(&a, &b) - 0.0763).abs() < 1e-12);
        assert_eq!(tv_distance(&a, &a), 0.0);
        let c = table(&[(&[0, 0], 1.0)]);
        let d = table(&[(&[1, 1], 0.5), (&[0, 1], 0.5)]);
        assert_eq!(tv_distance(&c, &d), 1.0);
    }

    #[test]
    fn kl_examples() {
        let q = table(&[(&[0], 1.0), (&[1], 0.0)]);
        let p = table(&[(&[0], 0.5), (&[1], 0.5)]);
        assert!((reverse_kl(&q, &p).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(reverse_kl(&p, &p).unwrap(), 0.0);
        assert!(reverse_kl(&p, &q).is_err());
        assert!(reverse_kl_probs(&[0.5, 0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn table_validation() {
        assert!(DistributionTable::new(vec![(TokenSequence::new(vec![0]), 0.5f64)]).is_err());
        assert!(DistributionTable::new(vec![
            (TokenSequence::new(vec![0]), 0.5f64),
            (TokenSequence::new(vec![0]), 0.5)
        ])
        .is_err());
    }

    #[test]
    fn grid_contains_unit_temperature() {
        let g = local_temperature_grid(33);
        assert_eq!(g.len(), 33);
        assert_eq!(g[16], 1.0);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[32] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn prop2_identity_temperature() {
        let r = verify_proposition2(1.0).unwrap();
        assert!(r.min_tv < 1e-12, "{}", r.min_tv);
        assert!(r.passed);
    }
}
