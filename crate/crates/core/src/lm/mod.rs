//! Vocabulary, sequence and language-model abstractions.
//!
//! Every decoder in the crate consumes a [`LanguageModel`]: a deterministic map
//! from (context, partial sequence) to a [`ConditionalDistribution`]. The
//! concrete models here are small enough to enumerate exhaustively, which is
//! what the oracles rely on.

mod corpus;
mod enumerate;
mod ngram;
mod remote;
mod tree;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::scalar::Scalar;

pub use corpus::Tokenizer;
pub use enumerate::{enumerate_sequences, EnumeratedPath, DEFAULT_ENUMERATION_LIMIT};
pub(crate) use enumerate::enumerate_paths;
pub use ngram::{train_ngram, NGramModel};
pub use remote::{serve_model, RemoteModel};
pub use tree::{fig2_model, load_tree_model, TreeModel};

pub type TokenId = usize;

/// Ordered token alphabet; token ids are dense indices into `tokens`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return input("vocabulary is empty");
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return input(format!("duplicate vocabulary token `{t}`"));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Map token strings to ids, failing on the first unknown token.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<TokenSequence> {
        tokens
            .iter()
            .map(|t| {
                self.id(t.as_ref())
                    .ok_or_else(|| Error::Input(format!("token `{}` not in vocabulary", t.as_ref())))
            })
            .collect::<Result<Vec<_>>>()
            .map(TokenSequence)
    }

    /// Space-joined rendering of a sequence.
    pub fn decode(&self, seq: &[TokenId]) -> String {
        seq.iter()
            .map(|&id| self.token(id).unwrap_or("<?>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A finite list of token ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<TokenId>);

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_vocab(&self, vocab_size: usize) -> Result<()> {
        match self.0.iter().find(|&&id| id >= vocab_size) {
            Some(id) => input(format!("token id {id} out of range for vocabulary of size {vocab_size}")),
            None => Ok(()),
        }
    }
}

impl From<Vec<TokenId>> for TokenSequence {
    fn from(ids: Vec<TokenId>) -> Self {
        Self(ids)
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Conditioning prompt. It is a fixed prefix: it is fed to the model but is
/// not part of the generated tokens or their likelihood.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Context {
    pub prompt: TokenSequence,
}

impl Context {
    pub fn new(prompt: TokenSequence) -> Self {
        Self { prompt }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Prompt followed by `prefix`.
    pub fn history(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        let mut h = Vec::with_capacity(self.prompt.len() + prefix.len());
        h.extend_from_slice(self.prompt.ids());
        h.extend_from_slice(prefix);
        h
    }
}

/// Probability vector over the vocabulary at one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDistribution<F> {
    probs: Vec<F>,
}

impl<F: Scalar> ConditionalDistribution<F> {
    /// Validates entries in `[0, 1]` summing to one within `1e-9`.
    pub fn new(probs: Vec<F>) -> Result<Self> {
        if probs.is_empty() {
            return input("empty distribution");
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= F::zero() && **p <= F::one())) {
            return input(format!("probability {p} outside [0, 1]"));
        }
        let total: F = probs.iter().copied().sum();
        if (total - F::one()).abs() > F::tol(1e-9) {
            return input(format!("probabilities sum to {total}, not 1"));
        }
        Ok(Self { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: Vec<F>) -> Result<Self> {
        let total: F = weights.iter().copied().sum();
        if !(total > F::zero() && total.is_finite()) {
            return input("weights have no positive finite mass");
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(size: usize) -> Self {
        let p = F::one() / F::from_usize(size).expect("size fits scalar");
        Self { probs: vec![p; size] }
    }

    /// Point mass on `id`.
    pub fn point(size: usize, id: TokenId) -> Self {
        let mut probs = vec![F::zero(); size];
        probs[id] = F::one();
        Self { probs }
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<F> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, id: TokenId) -> F {
        self.probs[id]
    }

    pub fn log_prob(&self, id: TokenId) -> F {
        self.probs[id].ln()
    }

    /// Most probable token; ties go to the smallest id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Token ids ordered by decreasing probability, ties by ascending id.
    pub fn ranked(&self) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = (0..self.probs.len()).collect();
        ids.sort_by(|&a, &b| {
            self.probs[b]
                .partial_cmp(&self.probs[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        ids
    }

    pub fn support(&self) -> Vec<TokenId> {
        (0..self.probs.len()).filter(|&i| self.probs[i] > F::zero()).collect()
    }

    /// Inverse-CDF draw. Never returns a zero-probability token.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenId {
        let u = F::lit(rng.gen::<f64>());
        let mut cumulative = F::zero();
        let mut last_positive = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > F::zero() {
                cumulative = cumulative + p;
                last_positive = i;
                if u < cumulative {
                    return i;
                }
            }
        }
        last_positive
    }
}

/// Source of next-token distributions. Implementations are immutable and
/// deterministic.
pub trait LanguageModel<F: Scalar>: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    /// Conditional distribution of the token following `prefix` under `context`.
    fn next(&self, context: &Context, prefix: &[TokenId]) -> Result<ConditionalDistribution<F>>;

    /// Longest history (prompt plus generated tokens) the model can condition
    /// on, if bounded.
    fn max_depth(&self) -> Option<usize> {
        None
    }

    fn vocab_size(&self) -> usize {
        self.vocabulary().len()
    }
}

impl<F: Scalar, M: LanguageModel<F> + ?Sized> LanguageModel<F> for &M {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }
    fn next(&self, context: &Context, prefix: &[TokenId]) -> Result<ConditionalDistribution<F>> {
        (**self).next(context, prefix)
    }
    fn max_depth(&self) -> Option<usize> {
        (**self).max_depth()
    }
}

impl<F: Scalar, M: LanguageModel<F> + ?Sized> LanguageModel<F> for Box<M> {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }
    fn next(&self, context: &Context, prefix: &[TokenId]) -> Result<ConditionalDistribution<F>> {
        (**self).next(context, prefix)
    }
    fn max_depth(&self) -> Option<usize> {
        (**self).max_depth()
    }
}

/// Joint log-likelihood (nats) of `seq` given `context`: the sum of the
/// per-step conditional log-probabilities. `-inf` as soon as one step has
/// probability zero.
pub fn sequence_log_likelihood<F: Scalar, M: LanguageModel<F> + ?Sized>(
    model: &M,
    context: &Context,
    seq: &TokenSequence,
) -> Result<F> {
    seq.check_vocab(model.vocab_size())?;
    let ids = seq.ids();
    let mut total = F::zero();
    for i in 0..ids.len() {
        let p = model.next(context, &ids[..i])?.prob(ids[i]);
        if p <= F::zero() {
            return Ok(F::neg_infinity());
        }
        total = total + p.ln();
    }
    Ok(total)
}

/// Either of the file-backed model kinds.
#[derive(Debug, Clone)]
pub enum FileModel<F> {
    Tree(TreeModel<F>),
    NGram(NGramModel<F>),
}

impl<F: Scalar> FileModel<F> {
    /// Loads a tree or n-gram model file, dispatching on its `kind` field
    /// (absent means tree).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Probe {
            #[serde(default)]
            kind: Option<String>,
        }
        let probe: Probe = serde_json::from_str(text)?;
        match probe.kind.as_deref() {
            None | Some("tree") => TreeModel::from_json(text).map(Self::Tree),
            Some("ngram") => NGramModel::from_json(text).map(Self::NGram),
            Some(other) => input(format!("unknown model kind `{other}`")),
        }
    }
}

impl<F: Scalar> LanguageModel<F> for FileModel<F> {
    fn vocabulary(&self) -> &Vocabulary {
        match self {
            Self::Tree(m) => m.vocabulary(),
            Self::NGram(m) => m.vocabulary(),
        }
    }
    fn next(&self, context: &Context, prefix: &[TokenId]) -> Result<ConditionalDistribution<F>> {
        match self {
            Self::Tree(m) => m.next(context, prefix),
            Self::NGram(m) => m.next(context, prefix),
        }
    }
    fn max_depth(&self) -> Option<usize> {
        match self {
            Self::Tree(m) => m.max_depth(),
            Self::NGram(m) => LanguageModel::<F>::max_depth(m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vocabulary_rejects_duplicates() {
        assert!(Vocabulary::new(vec!["a".into(), "a".into()]).is_err());
        assert!(Vocabulary::new(vec![]).is_err());
        let v = Vocabulary::new(vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(v.encode(&["b", "a"]).unwrap().ids(), &[1, 0]);
        assert!(v.encode(&["c"]).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(ConditionalDistribution::new(vec![0.5f64, 0.5]).is_ok());
        assert!(ConditionalDistribution::new(vec![0.5f64, 0.4]).is_err());
        assert!(ConditionalDistribution::new(vec![1.5f64, -0.5]).is_err());
        assert!(ConditionalDistribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ConditionalDistribution::new(vec![0.5f32, 0.5]).is_ok());
    }

    #[test]
    fn ranking_breaks_ties_by_index() {
        let d = ConditionalDistribution::new(vec![0.2f64, 0.4, 0.2, 0.2]).unwrap();
        assert_eq!(d.ranked(), vec![1, 0, 2, 3]);
        let tie = ConditionalDistribution::new(vec![0.5f64, 0.5]).unwrap();
        assert_eq!(tie.argmax(), 0);
    }

    #[test]
    fn sampling_skips_zero_mass() {
        let d = ConditionalDistribution::new(vec![0.0f64, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| d.sample(&mut rng) == 1));
    }
}
