//! Rating analysis: pairwise preferences from 5-point absolute labels, mean
//! preference with percentile-bootstrap intervals, Cohen's and Fleiss's kappa,
//! and equal-likelihood sample pairing.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hash;
use std::io::{Read, Write};

use num_rational::Ratio;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::rng::Streams;
use crate::scalar::Scalar;

pub const ITEMS_PER_TASK: usize = 5;
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 10_000;

/// One rater's label for one item, 1 (Terrible) to 5 (High Quality).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsoluteRating {
    pub task_id: String,
    /// Decoding configuration that produced the rated item.
    pub item_id: String,
    pub rater_id: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwisePreference {
    pub task_id: String,
    pub first: String,
    pub second: String,
    /// +1 when `first` was labelled higher, -1 lower, 0 equal.
    pub score: i8,
}

/// Expands one task's five ratings into the 20 ordered pairwise records.
pub fn pairwise_from_task(ratings: &[AbsoluteRating]) -> Result<Vec<PairwisePreference>> {
    if ratings.len() != ITEMS_PER_TASK {
        return input(format!("a task needs {ITEMS_PER_TASK} rated items, found {}", ratings.len()));
    }
    let task = &ratings[0].task_id;
    let mut seen = BTreeSet::new();
    for r in ratings {
        if &r.task_id != task {
            return input(format!("ratings span tasks `{task}` and `{}`", r.task_id));
        }
        if !(1..=5).contains(&r.label) {
            return input(format!("label {} outside 1..=5", r.label));
        }
        if !seen.insert(&r.item_id) {
            return input(format!("item `{}` rated twice in task `{task}`", r.item_id));
        }
    }
    let mut out = Vec::with_capacity(ITEMS_PER_TASK * (ITEMS_PER_TASK - 1));
    for a in ratings {
        for b in ratings {
            if a.item_id != b.item_id {
                out.push(PairwisePreference {
                    task_id: task.clone(),
                    first: a.item_id.clone(),
                    second: b.item_id.clone(),
                    score: (a.label.cmp(&b.label)) as i8,
                });
            }
        }
    }
    Ok(out)
}

/// Groups ratings by (task, rater) and expands each group.
pub fn pairwise_from_ratings(ratings: &[AbsoluteRating]) -> Result<Vec<PairwisePreference>> {
    let mut groups: BTreeMap<(&str, &str), Vec<AbsoluteRating>> = BTreeMap::new();
    for r in ratings {
        groups.entry((&r.task_id, &r.rater_id)).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    for group in groups.values() {
        out.extend(pairwise_from_task(group)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceSummary {
    pub item_id: String,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Records with the item in first position.
    pub n: usize,
}

/// Linear interpolation between closest ranks on sorted data.
fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile-bootstrap 95% interval for the mean of `values`; resample `b`
/// draws from `streams.rng(b)`.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, streams: &Streams) -> Result<(f64, f64, f64)> {
    if values.is_empty() {
        return input("no values to bootstrap");
    }
    if resamples == 0 {
        return input("need at least one bootstrap resample");
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut means: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = streams.rng(b);
            (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let lo = percentile_sorted(&means, 0.025).min(mean);
    let hi = percentile_sorted(&means, 0.975).max(mean);
    Ok((mean, lo, hi))
}

/// Mean score of records where `item_id` comes first, with a bootstrap CI
/// over those records.
pub fn mean_preference(
    prefs: &[PairwisePreference],
    item_id: &str,
    resamples: usize,
    streams: &Streams,
) -> Result<PreferenceSummary> {
    let scores: Vec<f64> = prefs
        .iter()
        .filter(|p| p.first == item_id)
        .map(|p| f64::from(p.score))
        .collect();
    if scores.is_empty() {
        return input(format!("no pairwise records for item `{item_id}`"));
    }
    let (mean, ci_lo, ci_hi) = bootstrap_mean_ci(&scores, resamples, streams)?;
    Ok(PreferenceSummary {
        item_id: item_id.to_owned(),
        mean,
        ci_lo,
        ci_hi,
        n: scores.len(),
    })
}

/// Agreement statistic kept as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa {
    pub exact: Ratio<i128>,
    /// Chance agreement is 1, so kappa is defined rather than computed.
    pub degenerate: bool,
}

impl Kappa {
    pub fn value(&self) -> f64 {
        *self.exact.numer() as f64 / *self.exact.denom() as f64
    }
}

/// `(p_o - p_e) / (1 - p_e)` for two raters labelling the same items.
pub fn cohens_kappa<T: Ord + Eq + Hash>(labels_a: &[T], labels_b: &[T]) -> Result<Kappa> {
    if labels_a.len() != labels_b.len() {
        return input("label lists differ in length");
    }
    if labels_a.is_empty() {
        return input("no labels");
    }
    let n = labels_a.len() as i128;
    let agree = labels_a.iter().zip(labels_b).filter(|(a, b)| a == b).count() as i128;
    let mut marginals: BTreeMap<&T, (i128, i128)> = BTreeMap::new();
    for (a, b) in labels_a.iter().zip(labels_b) {
        marginals.entry(a).or_default().0 += 1;
        marginals.entry(b).or_default().1 += 1;
    }
    // Scaled by n^2: p_o -> agree * n, p_e -> sum a_c b_c.
    let chance: i128 = marginals.values().map(|(a, b)| a * b).sum();
    let denom = n * n - chance;
    if denom == 0 {
        return Ok(Kappa {
            exact: Ratio::from_integer(1),
            degenerate: true,
        });
    }
    Ok(Kappa {
        exact: Ratio::new(agree * n - chance, denom),
        degenerate: false,
    })
}

/// Items x categories count matrix with the same number of raters per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgreementTable {
    counts: Vec<Vec<u64>>,
    raters: u64,
}

impl AgreementTable {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let Some(first) = counts.first() else {
            return input("agreement table has no items");
        };
        let width = first.len();
        let raters: u64 = first.iter().sum();
        if raters < 2 {
            return input("need at least two raters per item");
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != width {
                return input(format!("item {i} has {} categories, expected {width}", row.len()));
            }
            let s: u64 = row.iter().sum();
            if s != raters {
                return input(format!("item {i} has {s} ratings, expected {raters}"));
            }
        }
        Ok(Self { counts, raters })
    }

    /// One row per (task, item), columns are labels 1..=5.
    pub fn from_ratings(ratings: &[AbsoluteRating]) -> Result<Self> {
        let mut rows: BTreeMap<(&str, &str), Vec<u64>> = BTreeMap::new();
        for r in ratings {
            if !(1..=5).contains(&r.label) {
                return input(format!("label {} outside 1..=5", r.label));
            }
            rows.entry((&r.task_id, &r.item_id)).or_insert_with(|| vec![0; 5])[usize::from(r.label) - 1] += 1;
        }
        Self::new(rows.into_values().collect())
    }

    pub fn raters(&self) -> u64 {
        self.raters
    }

    pub fn items(&self) -> usize {
        self.counts.len()
    }
}

/// Fleiss's kappa: `(P - P_e) / (1 - P_e)` with per-item agreement
/// `P_i = (sum_c n_ic^2 - n) / (n (n - 1))`.
pub fn fleiss_kappa(table: &AgreementTable) -> Kappa {
    let n = i128::from(table.raters);
    let items = table.counts.len() as i128;
    let squares: i128 = table
        .counts
        .iter()
        .flatten()
        .map(|&c| i128::from(c) * i128::from(c))
        .sum();
    let observed = Ratio::new(squares - items * n, items * n * (n - 1));
    let total = items * n;
    let cols = table.counts[0].len();
    let chance_num: i128 = (0..cols)
        .map(|c| {
            let col: i128 = table.counts.iter().map(|row| i128::from(row[c])).sum();
            col * col
        })
        .sum();
    let chance = Ratio::new(chance_num, total * total);
    let one = Ratio::from_integer(1);
    if chance == one {
        return Kappa {
            exact: one,
            degenerate: true,
        };
    }
    Kappa {
        exact: (observed - chance) / (one - chance),
        degenerate: false,
    }
}

/// Pairs the two raters of every (task, item) for Cohen's kappa. Raters are
/// ordered by id within each item.
pub fn cohen_pairs_from_ratings(ratings: &[AbsoluteRating]) -> Result<(Vec<u8>, Vec<u8>)> {
    let mut items: BTreeMap<(&str, &str), Vec<(&str, u8)>> = BTreeMap::new();
    for r in ratings {
        items.entry((&r.task_id, &r.item_id)).or_default().push((&r.rater_id, r.label));
    }
    let mut a = Vec::with_capacity(items.len());
    let mut b = Vec::with_capacity(items.len());
    for ((task, item), mut labels) in items {
        if labels.len() != 2 {
            return input(format!("item `{item}` in task `{task}` has {} ratings; Cohen's kappa needs 2", labels.len()));
        }
        labels.sort();
        a.push(labels[0].1);
        b.push(labels[1].1);
    }
    Ok((a, b))
}

/// Greedy matching of two samples on sorted log-likelihood. Returns index
/// pairs `(i, j)` into `a` and `b` with `|logp_a - logp_b| <= tolerance`;
/// each index is used at most once.
pub fn equal_likelihood_pairs<T, F: Scalar>(a: &[(T, F)], b: &[(T, F)], tolerance: F) -> Result<Vec<(usize, usize)>> {
    if !(tolerance > F::zero()) {
        return input("tolerance must be positive");
    }
    let order = |xs: &[(T, F)]| {
        let mut idx: Vec<usize> = (0..xs.len()).filter(|&i| !xs[i].1.is_nan()).collect();
        idx.sort_by(|&i, &j| xs[i].1.partial_cmp(&xs[j].1).expect("no NaN").then(i.cmp(&j)));
        idx
    };
    let (ia, ib) = (order(a), order(b));
    let (mut i, mut j) = (0, 0);
    let mut pairs = Vec::new();
    while i < ia.len() && j < ib.len() {
        let (x, y) = (a[ia[i]].1, b[ib[j]].1);
        if (x - y).abs() <= tolerance {
            pairs.push((ia[i], ib[j]));
            i += 1;
            j += 1;
        } else if x < y {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(pairs)
}

pub const RATINGS_CSV_HEADER: [&str; 4] = ["task_id", "item_id", "rater_id", "label"];

pub fn read_ratings_csv<R: Read>(reader: R) -> Result<Vec<AbsoluteRating>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_owned()).collect();
    if header != RATINGS_CSV_HEADER {
        return input(format!("ratings header must be `{}`, found `{}`", RATINGS_CSV_HEADER.join(","), header.join(",")));
    }
    let mut out = Vec::new();
    let mut keys = BTreeSet::new();
    for rec in rdr.deserialize() {
        let r: AbsoluteRating = rec?;
        if !(1..=5).contains(&r.label) {
            return input(format!("label {} outside 1..=5", r.label));
        }
        if !keys.insert((r.task_id.clone(), r.item_id.clone(), r.rater_id.clone())) {
            return input(format!("duplicate rating for task `{}`, item `{}`, rater `{}`", r.task_id, r.item_id, r.rater_id));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn write_pairwise_csv<W: Write>(prefs: &[PairwisePreference], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in prefs {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_means_csv<W: Write>(rows: &[PreferenceSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["item_id", "mean", "ci_lo", "ci_hi", "n"])?;
    for r in rows {
        w.write_record([
            r.item_id.clone(),
            r.mean.to_string(),
            r.ci_lo.to_string(),
            r.ci_hi.to_string(),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(labels: [u8; 5]) -> Vec<AbsoluteRating> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| AbsoluteRating {
                task_id: "t".into(),
                item_id: format!("item{}", i + 1),
                rater_id: "r".into(),
                label: l,
            })
            .collect()
    }

    #[test]
    fn ties_score_zero() {
        let prefs = pairwise_from_task(&task([4, 4, 2, 3, 1])).unwrap();
        assert_eq!(prefs.len(), 20);
        let ab: Vec<_> = prefs
            .iter()
            .filter(|p| (p.first == "item1" && p.second == "item2") || (p.first == "item2" && p.second == "item1"))
            .collect();
        assert_eq!(ab.len(), 2);
        assert!(ab.iter().all(|p| p.score == 0));
    }

    #[test]
    fn distinct_labels_split_evenly() {
        let prefs = pairwise_from_task(&task([5, 4, 3, 2, 1])).unwrap();
        assert_eq!(prefs.iter().filter(|p| p.score == 1).count(), 10);
        assert_eq!(prefs.iter().filter(|p| p.score == -1).count(), 10);
    }

    #[test]
    fn single_winner() {
        let prefs = pairwise_from_task(&task([5, 1, 1, 1, 1])).unwrap();
        let wins: Vec<_> = prefs.iter().filter(|p| p.first == "item1").collect();
        assert_eq!(wins.len(), 4);
        assert!(wins.iter().all(|p| p.score == 1));
    }

    #[test]
    fn wrong_task_size() {
        assert!(pairwise_from_task(&task([1, 2, 3, 4, 5])[..4]).is_err());
        let mut dup = task([1, 2, 3, 4, 5]);
        dup[1].item_id = "item1".into();
        assert!(pairwise_from_task(&dup).is_err());
    }

    #[test]
    fn bootstrap_trivial_cases() {
        let s = Streams::new(1);
        let ones: Vec<PairwisePreference> = pairwise_from_task(&task([5, 1, 1, 1, 1]))
            .unwrap()
            .into_iter()
            .filter(|p| p.first == "item1")
            .collect();
        let r = mean_preference(&ones, "item1", 1000, &s).unwrap();
        assert_eq!((r.mean, r.ci_lo, r.ci_hi, r.n), (1.0, 1.0, 1.0, 4));
        let prefs = pairwise_from_task(&task([5, 4, 3, 2, 1])).unwrap();
        let mid = mean_preference(&prefs, "item3", 1000, &s).unwrap();
        assert_eq!(mid.mean, 0.0);
        assert!(mean_preference(&prefs, "nope", 10, &s).is_err());
    }

    #[test]
    fn cohen_examples() {
        let same = [1, 2, 3, 3, 2];
        assert_eq!(cohens_kappa(&same, &same).unwrap().value(), 1.0);
        // 20 items, 14 agreements, both raters split 10/10: p_o = 0.7, p_e = 0.5.
        let a: Vec<char> = "xxxxxxxxxxyyyyyyyyyy".chars().collect();
        let b: Vec<char> = "xxxxxxxyyyxxxyyyyyyy".chars().collect();
        let k = cohens_kappa(&a, &b).unwrap();
        assert_eq!(k.exact, Ratio::new(2, 5));
        assert_eq!(k.value(), 0.4);
        let constant = cohens_kappa(&[3, 3, 3], &[3, 3, 3]).unwrap();
        assert!(constant.degenerate && constant.value() == 1.0);
        assert!(cohens_kappa(&[1, 2], &[1]).is_err());
        assert!(cohens_kappa::<u8>(&[], &[]).is_err());
    }

    #[test]
    fn fleiss_examples() {
        let t = AgreementTable::new(vec![vec![2, 2], vec![2, 2]]).unwrap();
        let k = fleiss_kappa(&t);
        assert_eq!(k.exact, Ratio::new(-1, 3));
        assert_eq!(k.value(), -1.0 / 3.0);
        let unanimous = AgreementTable::new(vec![vec![3, 0, 0], vec![0, 3, 0], vec![0, 0, 3]]).unwrap();
        assert_eq!(fleiss_kappa(&unanimous).value(), 1.0);
        let one_category = AgreementTable::new(vec![vec![4, 0], vec![4, 0]]).unwrap();
        let k = fleiss_kappa(&one_category);
        assert!(k.degenerate && k.value() == 1.0);
        assert!(AgreementTable::new(vec![vec![2, 2], vec![3, 2]]).is_err());
        assert!(AgreementTable::new(vec![vec![1, 0]]).is_err());
    }

    #[test]
    fn likelihood_pairing() {
        let a = [("a0", -10.0), ("a1", -20.0)];
        let b = [("b0", -10.4), ("b1", -31.0)];
        assert_eq!(equal_likelihood_pairs(&a, &b, 0.5).unwrap(), vec![(0, 0)]);
        let same = [((), -1.0), ((), -2.0), ((), -3.0)];
        assert_eq!(equal_likelihood_pairs(&same, &same, 1e-9).unwrap().len(), 3);
        let far = [((), -100.0)];
        assert!(equal_likelihood_pairs(&same, &far, 0.5).unwrap().is_empty());
        assert!(equal_likelihood_pairs(&same, &far, 0.0).is_err());
    }

    #[test]
    fn csv_header_is_checked() {
        let good = "task_id,item_id,rater_id,label\nt,a,r,3\n";
        assert_eq!(read_ratings_csv(good.as_bytes()).unwrap().len(), 1);
        assert!(read_ratings_csv("task,item,rater,label\nt,a,r,3\n".as_bytes()).is_err());
        assert!(read_ratings_csv("task_id,item_id,rater_id,label\nt,a,r,7\n".as_bytes()).is_err());
        assert!(read_ratings_csv("task_id,item_id,rater_id,label\nt,a,r,3\nt,a,r,4\n".as_bytes()).is_err());
    }
}
