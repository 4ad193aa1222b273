use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::{ConditionalDistribution, Context, LanguageModel, TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Language model given by an explicit table of per-prefix conditionals up to
/// a fixed depth.
#[derive(Debug, Clone)]
pub struct TreeModel<F> {
    vocab: Vocabulary,
    depth: usize,
    nodes: HashMap<Vec<TokenId>, ConditionalDistribution<F>>,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<String>,
    vocabulary: Vec<String>,
    depth: usize,
    #[serde(deserialize_with = "ordered_entries", serialize_with = "entries_as_map")]
    nodes: Vec<(String, Vec<f64>)>,
}

// Keeps every key, so repeated prefixes can be reported instead of silently
// overwritten.
fn ordered_entries<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(String, Vec<f64>)>, D::Error> {
    struct Entries;
    impl<'de> Visitor<'de> for Entries {
        type Value = Vec<(String, Vec<f64>)>;
        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map from prefix strings to probability arrays")
        }
        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
            let mut out = Vec::new();
            while let Some(entry) = map.next_entry()? {
                out.push(entry);
            }
            Ok(out)
        }
    }
    d.deserialize_map(Entries)
}

fn entries_as_map<S: serde::Serializer>(entries: &[(String, Vec<f64>)], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_map(entries.iter().map(|(k, v)| (k, v)))
}

fn node_name(key: &str) -> String {
    if key.trim().is_empty() {
        "<root>".to_owned()
    } else {
        key.to_owned()
    }
}

fn bad(node: &str, message: impl Into<String>) -> Error {
    Error::ModelFile {
        node: node_name(node),
        message: message.into(),
    }
}

impl<F: Scalar> TreeModel<F> {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TreeFile = serde_json::from_str(text).map_err(|e| bad("", format!("malformed model file: {e}")))?;
        Self::from_file(file)
    }

    fn from_file(file: TreeFile) -> Result<Self> {
        let vocab = Vocabulary::new(file.vocabulary).map_err(|e| bad("", e.to_string()))?;
        let v = vocab.len();
        let mut nodes = HashMap::with_capacity(file.nodes.len());
        for (key, probs) in file.nodes {
            let prefix = key
                .split_whitespace()
                .map(|t| vocab.id(t).ok_or_else(|| bad(&key, format!("unknown token `{t}`"))))
                .collect::<Result<Vec<_>>>()?;
            if prefix.len() >= file.depth {
                return Err(bad(&key, format!("prefix length {} not below depth {}", prefix.len(), file.depth)));
            }
            if probs.len() != v {
                return Err(bad(&key, format!("{} probabilities for a vocabulary of {v}", probs.len())));
            }
            if let Some(p) = probs.iter().find(|p| !(p.is_finite() && (0.0..=1.0).contains(*p))) {
                return Err(bad(&key, format!("probability {p} outside [0, 1]")));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-6 {
                return Err(bad(&key, format!("probabilities sum to {total}")));
            }
            let scalars: Vec<F> = probs.iter().map(|&p| F::lit(p)).collect();
            // Rescale only what the stricter in-memory tolerance would reject.
            let dist = ConditionalDistribution::new(scalars.clone())
                .or_else(|_| ConditionalDistribution::from_weights(scalars))
                .map_err(|e| bad(&key, e.to_string()))?;
            if nodes.insert(prefix, dist).is_some() {
                return Err(bad(&key, "duplicate prefix"));
            }
        }
        let model = Self {
            vocab,
            depth: file.depth,
            nodes,
        };
        model.check_reachable()?;
        Ok(model)
    }

    fn check_reachable(&self) -> Result<()> {
        if self.depth == 0 {
            return Ok(());
        }
        let mut stack = vec![Vec::new()];
        while let Some(prefix) = stack.pop() {
            let Some(dist) = self.nodes.get(&prefix) else {
                return Err(bad(&self.vocab.decode(&prefix), "reachable prefix has no distribution"));
            };
            if prefix.len() + 1 < self.depth {
                for t in dist.support() {
                    let mut child = prefix.clone();
                    child.push(t);
                    stack.push(child);
                }
            }
        }
        Ok(())
    }

    /// Full-support tree with every conditional drawn as normalized squared
    /// `Uniform(0.05, 1)` weights. Tokens are named `t0`, `t1`, ...
    pub fn random<R: rand::Rng + ?Sized>(vocab_size: usize, depth: usize, rng: &mut R) -> Self {
        let vocab = Vocabulary::new((0..vocab_size).map(|i| format!("t{i}")).collect()).expect("distinct names");
        let mut nodes = HashMap::new();
        let mut frontier = vec![Vec::new()];
        for _ in 0..depth {
            let mut next_level = Vec::new();
            for prefix in frontier {
                let weights = (0..vocab_size).map(|_| F::lit(rng.gen_range(0.05f64..1.0).powi(2))).collect();
                nodes.insert(prefix.clone(), ConditionalDistribution::from_weights(weights).expect("positive weights"));
                for t in 0..vocab_size {
                    let mut child = prefix.clone();
                    child.push(t);
                    next_level.push(child);
                }
            }
            frontier = next_level;
        }
        Self { vocab, depth, nodes }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Serializes back to the model-file schema.
    pub fn to_json(&self) -> Result<String> {
        let mut nodes: BTreeMap<Vec<TokenId>, Vec<f64>> = BTreeMap::new();
        for (prefix, dist) in &self.nodes {
            nodes.insert(prefix.clone(), dist.probs().iter().map(|p| p.as_f64()).collect());
        }
        let file = TreeFile {
            kind: None,
            vocabulary: self.vocab.tokens().to_vec(),
            depth: self.depth,
            nodes: nodes.into_iter().map(|(k, v)| (self.vocab.decode(&k), v)).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

/// The two-step tree whose root splits evenly between `A` and `B`, with leaf
/// probabilities 0.1, 0.4 under `A` and 0.25, 0.25 under `B`. Local temperature
/// cannot reproduce its global tempering.
pub fn fig2_model<F: Scalar>() -> TreeModel<F> {
    TreeModel::from_json(include_str!("../../assets/fig2.model")).expect("bundled model is valid")
}

/// Reads a tree-model file.
pub fn load_tree_model<F: Scalar>(path: impl AsRef<Path>) -> Result<TreeModel<F>> {
    let text = std::fs::read_to_string(path)?;
    TreeModel::from_json(&text)
}

impl<F: Scalar> LanguageModel<F> for TreeModel<F> {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next(&self, context: &Context, prefix: &[TokenId]) -> Result<ConditionalDistribution<F>> {
        let history = context.history(prefix);
        self.nodes.get(&history).cloned().ok_or_else(|| {
            Error::Input(format!(
                "tree model has no distribution for prefix `{}` (depth {})",
                self.vocab.decode(&history),
                self.depth
            ))
        })
    }

    fn max_depth(&self) -> Option<usize> {
        Some(self.depth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{enumerate_sequences, sequence_log_likelihood, TokenSequence};

    const FIG2: &str = include_str!("../../assets/fig2.model");

    #[test]
    fn random_tree_is_complete() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m: TreeModel<f64> = TreeModel::random(3, 4, &mut rng);
        let all = enumerate_sequences(&m, &Context::empty(), 4, 1000).unwrap();
        assert_eq!(all.len(), 81);
        let total: f64 = all.iter().map(|(_, lp)| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(TreeModel::<f64>::from_json(&m.to_json().unwrap()).is_ok());
    }

    #[test]
    fn figure_two_leaves() {
        let m: TreeModel<f64> = TreeModel::from_json(FIG2).unwrap();
        let probs: Vec<f64> = enumerate_sequences(&m, &Context::empty(), 2, 100)
            .unwrap()
            .into_iter()
            .map(|(_, lp)| lp.exp())
            .collect();
        let expected = [0.1, 0.4, 0.25, 0.25];
        for (p, e) in probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12, "{probs:?}");
        }
        let a_y = TokenSequence::new(vec![0, 1]);
        let lp = sequence_log_likelihood(&m, &Context::empty(), &a_y).unwrap();
        assert!((lp - 0.4f64.ln()).abs() < 1e-12);
        assert_eq!(sequence_log_likelihood(&m, &Context::empty(), &TokenSequence::empty()).unwrap(), 0.0);
        assert!(sequence_log_likelihood(&m, &Context::empty(), &TokenSequence::new(vec![0, 7])).is_err());
    }

    #[test]
    fn degenerate_single_token() {
        let m: TreeModel<f64> =
            TreeModel::from_json(r#"{"vocabulary":["x"],"depth":1,"nodes":{"":[1.0]}}"#).unwrap();
        let all = enumerate_sequences(&m, &Context::empty(), 1, 10).unwrap();
        assert_eq!(all, vec![(TokenSequence::new(vec![0]), 0.0)]);
    }

    #[test]
    fn rejects_unnormalized_node() {
        let err = TreeModel::<f64>::from_json(
            r#"{"vocabulary":["a","b"],"depth":2,"nodes":{"":[0.5,0.5],"a":[0.5,0.4],"b":[0.5,0.5]}}"#,
        )
        .unwrap_err();
        assert!(matches!(&err, Error::ModelFile { node, .. } if node == "a"), "{err}");
    }

    #[test]
    fn rejects_duplicate_prefix() {
        let err = TreeModel::<f64>::from_json(
            r#"{"vocabulary":["a","b"],"depth":1,"nodes":{"":[0.5,0.5],"":[0.5,0.5]}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        // Two spellings of the same prefix are also duplicates.
        let err = TreeModel::<f64>::from_json(
            r#"{"vocabulary":["a","b"],"depth":2,"nodes":{"":[1.0,0.0],"a":[0.5,0.5]," a ":[0.5,0.5]}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn rejects_missing_reachable_node() {
        let err = TreeModel::<f64>::from_json(r#"{"vocabulary":["a","b"],"depth":2,"nodes":{"":[0.5,0.5],"a":[1,0]}}"#)
            .unwrap_err();
        assert!(matches!(&err, Error::ModelFile { node, .. } if node == "b"), "{err}");
        // Unreachable prefixes need no entry.
        assert!(TreeModel::<f64>::from_json(r#"{"vocabulary":["a","b"],"depth":2,"nodes":{"":[1,0],"a":[1,0]}}"#).is_ok());
    }

    #[test]
    fn rejects_malformed() {
        assert!(TreeModel::<f64>::from_json("{not json").is_err());
        assert!(TreeModel::<f64>::from_json(r#"{"vocabulary":["a","b"],"depth":1,"nodes":{"":[1.0]}}"#).is_err());
        assert!(TreeModel::<f64>::from_json(r#"{"vocabulary":["a","b"],"depth":1,"nodes":{"c":[1.0,0]}}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m: TreeModel<f64> = TreeModel::from_json(FIG2).unwrap();
        let again: TreeModel<f64> = TreeModel::from_json(&m.to_json().unwrap()).unwrap();
        for prefix in [vec![], vec![0], vec![1]] {
            assert_eq!(
                m.next(&Context::empty(), &prefix).unwrap(),
                again.next(&Context::empty(), &prefix).unwrap()
            );
        }
    }
}
