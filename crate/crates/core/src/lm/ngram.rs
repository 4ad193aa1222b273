use std::collections::{BTreeMap, HashMap};
use std::marker::PhantomData;

use serde::{Deserialize, Serialize};

use super::{ConditionalDistribution, Context, LanguageModel, TokenId, Vocabulary};
use crate::error::{input, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Default, PartialEq)]
struct Continuations {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Additively smoothed n-gram model.
///
/// `p(t | h) = (count(h t) + k) / (count(h ·) + k V)` where `h` is the last
/// `order - 1` tokens of prompt plus prefix. Histories shorter than that use
/// the counts of the matching lower order.
#[derive(Debug, Clone)]
pub struct NGramModel<F> {
    vocab: Vocabulary,
    order: usize,
    k: f64,
    /// `tables[j]` maps length-`j` histories to their continuation counts.
    tables: Vec<HashMap<Vec<TokenId>, Continuations>>,
    _scalar: PhantomData<F>,
}

#[derive(Serialize, Deserialize)]
struct NGramFile {
    kind: String,
    vocabulary: Vec<String>,
    order: usize,
    k: f64,
    counts: Vec<NGramCount>,
}

#[derive(Serialize, Deserialize)]
struct NGramCount {
    ngram: Vec<TokenId>,
    count: u64,
}

/// Counts every `j+1`-gram (`j < order`) in `corpus`.
///
/// When `vocabulary` is `None` the vocabulary is the sorted set of corpus
/// tokens.
pub fn train_ngram<F: Scalar, S: AsRef<str>>(
    corpus: &[S],
    vocabulary: Option<Vocabulary>,
    order: usize,
    k: f64,
) -> Result<NGramModel<F>> {
    if corpus.is_empty() {
        return input("corpus is empty");
    }
    let vocab = match vocabulary {
        Some(v) => v,
        None => {
            let mut tokens: Vec<String> = corpus.iter().map(|t| t.as_ref().to_owned()).collect();
            tokens.sort();
            tokens.dedup();
            Vocabulary::new(tokens)?
        }
    };
    let ids = vocab.encode(corpus)?;
    let ids = ids.ids();
    let mut counts = Vec::new();
    for len in 1..=order.max(1) {
        let mut grams: BTreeMap<Vec<TokenId>, u64> = BTreeMap::new();
        for w in ids.windows(len) {
            *grams.entry(w.to_vec()).or_default() += 1;
        }
        counts.extend(grams.into_iter().map(|(ngram, count)| NGramCount { ngram, count }));
    }
    NGramModel::build(vocab, order, k, counts)
}

impl<F: Scalar> NGramModel<F> {
    fn build(vocab: Vocabulary, order: usize, k: f64, counts: Vec<NGramCount>) -> Result<Self> {
        if order == 0 {
            return input("n-gram order must be at least 1");
        }
        if !(k > 0.0 && k.is_finite()) {
            return input(format!("smoothing constant must be positive and finite, got {k}"));
        }
        let mut tables = vec![HashMap::new(); order];
        for NGramCount { ngram, count } in counts {
            if ngram.is_empty() || ngram.len() > order {
                return input(format!("n-gram of length {} in an order-{order} model", ngram.len()));
            }
            if let Some(&bad) = ngram.iter().find(|&&t| t >= vocab.len()) {
                return input(format!("token id {bad} out of range"));
            }
            let (last, history) = ngram.split_last().expect("nonempty");
            let entry: &mut Continuations = tables[history.len()].entry(history.to_vec()).or_default();
            entry.total += count;
            *entry.next.entry(*last).or_default() += count;
        }
        Ok(Self {
            vocab,
            order,
            k,
            tables,
            _scalar: PhantomData,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NGramFile = serde_json::from_str(text)?;
        if file.kind != "ngram" {
            return input(format!("expected kind `ngram`, found `{}`", file.kind));
        }
        Self::build(Vocabulary::new(file.vocabulary)?, file.order, file.k, file.counts)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut counts = Vec::new();
        for table in &self.tables {
            let mut histories: Vec<_> = table.iter().collect();
            histories.sort_by(|a, b| a.0.cmp(b.0));
            for (history, cont) in histories {
                for (&t, &count) in &cont.next {
                    let mut ngram = history.clone();
                    ngram.push(t);
                    counts.push(NGramCount { ngram, count });
                }
            }
        }
        let file = NGramFile {
            kind: "ngram".into(),
            vocabulary: self.vocab.tokens().to_vec(),
            order: self.order,
            k: self.k,
            counts,
        };
        Ok(serde_json::to_string(&file)?)
    }
}

impl<F: Scalar> LanguageModel<F> for NGramModel<F> {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next(&self, context: &Context, prefix: &[TokenId]) -> Result<ConditionalDistribution<F>> {
        let history = context.history(prefix);
        let keep = history.len().min(self.order - 1);
        let history = &history[history.len() - keep..];
        let v = self.vocab.len();
        let k = F::lit(self.k);
        let cont = self.tables[keep].get(history);
        let total = cont.map_or(0, |c| c.total);
        let denom = F::from_u64(total).expect("count fits") + k * F::from_usize(v).expect("size fits");
        let probs = (0..v)
            .map(|t| {
                let c = cont.and_then(|c| c.next.get(&t)).copied().unwrap_or(0);
                (F::from_u64(c).expect("count fits") + k) / denom
            })
            .collect();
        ConditionalDistribution::new(probs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{enumerate_sequences, Tokenizer};

    fn corpus(text: &str) -> Vec<String> {
        Tokenizer::Whitespace.tokenize(text)
    }

    #[test]
    fn bigram_hand_counts() {
        let m: NGramModel<f64> = train_ngram(&corpus("a b a b"), None, 2, 1.0).unwrap();
        let d = m.next(&Context::empty(), &[0]).unwrap();
        assert_eq!(d.prob(1), 0.75);

        let m: NGramModel<f64> = train_ngram(&corpus("a b"), None, 2, 0.5).unwrap();
        assert_eq!(m.next(&Context::empty(), &[0]).unwrap().prob(1), 0.75);
    }

    #[test]
    fn unigram_with_unseen_vocabulary_entry() {
        let vocab = Vocabulary::new(vec!["a".into(), "b".into()]).unwrap();
        let m: NGramModel<f64> = train_ngram(&corpus("a a a"), Some(vocab), 1, 1.0).unwrap();
        let d = m.next(&Context::empty(), &[1, 1]).unwrap();
        assert!((d.prob(0) - 0.8).abs() < 1e-15);
        assert!((d.prob(1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn huge_smoothing_is_uniform() {
        let m: NGramModel<f64> = train_ngram(&corpus("a a a b c a"), None, 2, 1e9).unwrap();
        for prefix in [vec![], vec![0], vec![2, 1]] {
            let d = m.next(&Context::empty(), &prefix).unwrap();
            assert!(d.probs().iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-6));
        }
    }

    #[test]
    fn joint_is_normalized() {
        let m: NGramModel<f64> = train_ngram(&corpus("x y z x x y z z y x"), None, 2, 0.5).unwrap();
        let total: f64 = enumerate_sequences(&m, &Context::empty(), 2, 100)
            .unwrap()
            .iter()
            .map(|(_, lp)| lp.exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_training_input() {
        assert!(train_ngram::<f64, &str>(&[], None, 2, 1.0).is_err());
        assert!(train_ngram::<f64, _>(&corpus("a b"), None, 0, 1.0).is_err());
        assert!(train_ngram::<f64, _>(&corpus("a b"), None, 2, 0.0).is_err());
        let vocab = Vocabulary::new(vec!["a".into(), "b".into()]).unwrap();
        assert!(train_ngram::<f64, _>(&corpus("a c"), Some(vocab), 2, 1.0).is_err());
    }

    #[test]
    fn file_round_trip_preserves_conditionals() {
        let m: NGramModel<f64> = train_ngram(&corpus("the cat sat on the mat the end"), None, 3, 0.1).unwrap();
        let again: NGramModel<f64> = NGramModel::from_json(&m.to_json().unwrap()).unwrap();
        let ctx = Context::empty();
        for prefix in [vec![], vec![4], vec![4, 0], vec![1, 2, 3]] {
            assert_eq!(m.next(&ctx, &prefix).unwrap(), again.next(&ctx, &prefix).unwrap());
        }
    }
}
