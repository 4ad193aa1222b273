use std::io::{BufReader, BufWriter};
use std::net::TcpListener;

use approx::assert_abs_diff_eq;
use decoding_lab::lm::{
    enumerate_sequences, fig2_model, sequence_log_likelihood, serve_model, train_ngram, Tokenizer, TreeModel,
    DEFAULT_ENUMERATION_LIMIT,
};
use decoding_lab::rng::Streams;
use decoding_lab::{Context, Distribution, FileModel, LanguageModel, NGram, Remote, TokenSequence, Tree, Vocabulary};
use proptest::prelude::*;
use rand::Rng;

fn check_tree(seed: u64) -> Tree {
    TreeModel::random(3, 4, &mut Streams::new(seed).child("tree", 0).rng(0))
}

fn demo_ngram() -> NGram {
    let corpus = Tokenizer::Whitespace.tokenize("the cat sat on the mat . the dog sat on the cat .");
    train_ngram(&corpus, None, 2, 0.5).unwrap()
}

#[test]
fn ngram_conditionals_normalize_over_random_prefixes() {
    let model = demo_ngram();
    let v = model.vocab_size();
    let mut rng = Streams::new(11).rng(0);
    for _ in 0..1000 {
        let len = rng.gen_range(0..8);
        let prefix: Vec<usize> = (0..len).map(|_| rng.gen_range(0..v)).collect();
        let d: Distribution = model.next(&Context::empty(), &prefix).unwrap();
        assert_abs_diff_eq!(d.probs().iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        assert!(d.probs().iter().all(|&p| p > 0.0));
    }
}

#[test]
fn next_is_deterministic() {
    let model = demo_ngram();
    let ctx = Context::new(TokenSequence::new(vec![0, 1]));
    let a: Distribution = model.next(&ctx, &[2]).unwrap();
    let b: Distribution = model.next(&ctx, &[2]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn enumeration_sums_to_one() {
    for model in [fig2_model::<f64>(), check_tree(3)] {
        let n = model.depth();
        let all = enumerate_sequences(&model, &Context::empty(), n, DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert_eq!(all.len(), model.vocab_size().pow(n as u32));
        assert_abs_diff_eq!(all.iter().map(|(_, p)| p.exp()).sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn enumeration_limit_is_enforced() {
    let model = check_tree(3);
    assert!(enumerate_sequences::<f64, _>(&model, &Context::empty(), 4, 80).is_err());
}

#[test]
fn fig2_leaf_likelihoods() {
    let model = fig2_model::<f64>();
    let aa = TokenSequence::new(vec![0, 0]);
    let lp: f64 = sequence_log_likelihood(&model, &Context::empty(), &aa).unwrap();
    assert_abs_diff_eq!(lp, 0.1f64.ln(), epsilon = 1e-12);
}

#[test]
fn single_precision_models_agree_with_double() {
    let m64 = fig2_model::<f64>();
    let m32 = fig2_model::<f32>();
    let seq = TokenSequence::new(vec![0, 1]);
    let a: f64 = sequence_log_likelihood(&m64, &Context::empty(), &seq).unwrap();
    let b: f32 = sequence_log_likelihood(&m32, &Context::empty(), &seq).unwrap();
    assert_abs_diff_eq!(a, f64::from(b), epsilon = 1e-6);
}

#[test]
fn tree_file_round_trip() {
    let model = check_tree(5);
    let back = Tree::from_json(&model.to_json().unwrap()).unwrap();
    for seq in enumerate_sequences::<f64, _>(&model, &Context::empty(), 3, 1000).unwrap() {
        let d1: Distribution = model.next(&Context::empty(), seq.0.ids()).unwrap();
        let d2: Distribution = back.next(&Context::empty(), seq.0.ids()).unwrap();
        for (x, y) in d1.probs().iter().zip(d2.probs()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-15);
        }
    }
}

#[test]
fn ngram_file_round_trip_through_loader() {
    let model = demo_ngram();
    let back = match FileModel::from_json(&model.to_json().unwrap()).unwrap() {
        FileModel::NGram(m) => m,
        FileModel::Tree(_) => panic!("loaded as a tree"),
    };
    for prefix in [vec![], vec![0], vec![3, 1]] {
        let a: Distribution = model.next(&Context::empty(), &prefix).unwrap();
        let b: Distribution = back.next(&Context::empty(), &prefix).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn vocabulary_rejects_duplicates_and_round_trips_text() {
    assert!(Vocabulary::new(vec!["a".into(), "a".into()]).is_err());
    let v = Vocabulary::new(vec!["x".into(), "y".into()]).unwrap();
    let seq = v.encode(&["y", "x", "y"]).unwrap();
    assert_eq!(v.decode(seq.ids()), "y x y");
    assert!(v.encode(&["z"]).is_err());
}

#[test]
fn remote_model_over_tcp_matches_local() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let reader = BufReader::new(stream.try_clone().unwrap());
        serve_model(&fig2_model::<f64>(), reader, BufWriter::new(stream)).unwrap();
    });
    let remote = Remote::connect(addr).unwrap();
    let local = fig2_model::<f64>();
    assert_eq!(remote.vocabulary().tokens(), local.vocabulary().tokens());
    for prefix in [vec![], vec![0], vec![1]] {
        let a: Distribution = remote.next(&Context::empty(), &prefix).unwrap();
        let b: Distribution = local.next(&Context::empty(), &prefix).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-12);
        }
    }
    drop(remote);
    server.join().unwrap();
}

proptest! {
    #[test]
    fn ngram_normalizes_for_any_smoothing(k in 1e-3f64..50.0, prefix in proptest::collection::vec(0usize..7, 0..6)) {
        let corpus = Tokenizer::Whitespace.tokenize("a b c a b d e f g a");
        let model: NGram = train_ngram(&corpus, None, 3, k).unwrap();
        let d: Distribution = model.next(&Context::empty(), &prefix).unwrap();
        prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(d.probs().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn random_trees_normalize(seed in any::<u64>(), v in 1usize..4, depth in 1usize..4) {
        let model: Tree = TreeModel::random(v, depth, &mut Streams::new(seed).rng(0));
        let all = enumerate_sequences(&model, &Context::empty(), depth, 1000).unwrap();
        let total: f64 = all.iter().map(|(_, lp)| lp.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
    }
}
