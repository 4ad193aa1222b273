use std::fs;
use std::io::Write;
use std::path::Path;

use decoding_lab::decoders::{sample_sequence, DecoderConfig};
use decoding_lab::frontier::{self, LogLikelihoodProxy, SweepConfig, SweepOptions, INFLECTION_LOG_LIKELIHOOD};
use decoding_lab::lm::{self, train_ngram, Tokenizer, TreeModel};
use decoding_lab::oracle;
use decoding_lab::ratings::{self, AgreementTable};
use decoding_lab::rng::Streams;
use decoding_lab::selective::{estimate_partition, selective_sample};
use decoding_lab::{Context, Error, LanguageModel};
use rayon::prelude::*;
use serde::Serialize;

use crate::{Analysis, Check, RatingsArgs, RunArgs, TrainArgs, VerifyArgs};

pub enum Failure {
    /// Bad flags, unreadable or malformed input. Exit 2.
    Input(String),
    /// A verification ran and did not pass. Exit 3.
    Verification,
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Protocol(_) | Error::Consistency(_) => Self::Runtime(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

const DEFAULT_LENGTH: usize = 10;
const DEFAULT_SAMPLES: usize = 10;
const DEFAULT_PARTITION_SAMPLES: usize = 10_000;

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CmdResult {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            }
            fs::write(path, bytes).map_err(|e| io_err(path, e))
        }
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Runtime(e.to_string())),
    }
}

fn tokenizer(name: Option<&str>) -> Result<Tokenizer, Failure> {
    Ok(name.unwrap_or("whitespace").parse()?)
}

fn read_corpus(path: &Path, tok: Tokenizer) -> Result<Vec<String>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(tok.tokenize(&text))
}

pub fn train(args: &TrainArgs) -> CmdResult {
    let tok = tokenizer(Some(&args.tokenizer))?;
    let corpus = read_corpus(&args.corpus, tok)?;
    let model = train_ngram::<f64, _>(&corpus, None, args.order as usize, args.k)?;
    let mut json = model.to_json()?;
    json.push('\n');
    emit(args.out.as_deref(), json.as_bytes())
}

fn load_model(args: &RunArgs) -> Result<Box<dyn LanguageModel<f64>>, Failure> {
    let sources = [args.model.is_some(), args.corpus.is_some(), args.remote.is_some()];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(Failure::Input("give exactly one of --model, --corpus, --remote".into()));
    }
    if let Some(path) = &args.model {
        return Ok(Box::new(lm::FileModel::<f64>::load(path)?));
    }
    if let Some(path) = &args.corpus {
        let corpus = read_corpus(path, tokenizer(args.tokenizer.as_deref())?)?;
        let order = args.order.unwrap_or(2) as usize;
        return Ok(Box::new(train_ngram::<f64, _>(&corpus, None, order, args.k.unwrap_or(1.0))?));
    }
    let addr = args.remote.as_deref().expect("checked above");
    Ok(Box::new(lm::RemoteModel::<f64>::connect(addr).map_err(|e| Failure::Input(format!("{addr}: {e}")))?))
}

fn encode_prompt(model: &dyn LanguageModel<f64>, tok: Tokenizer, text: &str) -> Result<Context, Failure> {
    let tokens = tok.tokenize(text);
    Ok(Context::new(model.vocabulary().encode(&tokens)?))
}

fn load_prompts(model: &dyn LanguageModel<f64>, args: &RunArgs) -> Result<Vec<Context>, Failure> {
    let tok = tokenizer(args.tokenizer.as_deref())?;
    if let Some(text) = &args.prompt {
        return Ok(vec![encode_prompt(model, tok, text)?]);
    }
    let Some(path) = &args.prompts else {
        return Ok(vec![Context::empty()]);
    };
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let prompts = text
        .lines()
        .map(|line| encode_prompt(model, tok, line))
        .collect::<Result<Vec<_>, _>>()?;
    if prompts.is_empty() {
        return Err(Failure::Input(format!("{}: no prompts", path.display())));
    }
    Ok(prompts)
}

fn fmt_f64(x: f64) -> String {
    x.to_string()
}

pub fn sample(args: RunArgs) -> CmdResult {
    let args = crate::config::merge(args)?;
    let model = load_model(&args)?;
    let prompts = load_prompts(model.as_ref(), &args)?;
    let context = &prompts[0];
    let [config] = args.configs.as_slice() else {
        return Err(Failure::Input("sample takes exactly one --config".into()));
    };
    let config: SweepConfig = config.parse()?;
    let n = args.length.unwrap_or(DEFAULT_LENGTH);
    let count = args.samples.unwrap_or(DEFAULT_SAMPLES);
    if n == 0 {
        return Err(Failure::Input("--length must be at least 1".into()));
    }
    let streams = Streams::new(args.seed.unwrap_or(0)).task(0, &config.to_string());
    let vocab = model.vocabulary();
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure::Runtime(e.to_string());
    match config {
        SweepConfig::Local(c) => {
            w.write_record(["sample_idx", "tokens", "model_logp", "decoder_logp"])
                .map_err(csv_err)?;
            let rows = par_map(count, |i| sample_sequence(model.as_ref(), context, &c, n, &mut streams.rng(i as u64)))?;
            for (i, s) in rows.into_iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    vocab.decode(s.sequence.ids()),
                    fmt_f64(s.model_log_likelihood),
                    fmt_f64(s.decoder_log_prob),
                ])
                .map_err(csv_err)?;
            }
        }
        SweepConfig::Selective(c) => {
            let z = estimate_partition(
                model.as_ref(),
                context,
                &c,
                n,
                args.partition_samples.unwrap_or(DEFAULT_PARTITION_SAMPLES),
                &streams.child("partition", 0),
            )?;
            w.write_record([
                "sample_idx",
                "tokens",
                "model_logp",
                "decoder_logp",
                "accepted",
                "attempts",
                "cutoff_rejections",
                "coin_rejections",
            ])
            .map_err(csv_err)?;
            let log_z = z.log_z.is_finite().then_some(z.log_z);
            let rows = par_map(count, |i| selective_sample(model.as_ref(), context, &c, n, log_z, &mut streams.rng(i as u64)))?;
            for (i, o) in rows.into_iter().enumerate() {
                let (tokens, model_lp, decoder_lp) = match &o.sample {
                    Some(s) => (
                        vocab.decode(s.sequence.ids()),
                        fmt_f64(s.model_log_likelihood),
                        s.decoder_log_prob.map(fmt_f64).unwrap_or_default(),
                    ),
                    None => Default::default(),
                };
                w.write_record([
                    i.to_string(),
                    tokens,
                    model_lp,
                    decoder_lp,
                    o.accepted().to_string(),
                    o.attempts.to_string(),
                    o.rejections_by_cutoff.to_string(),
                    o.rejections_by_coin.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    emit(args.out.as_deref(), &bytes)
}

pub fn sweep(args: RunArgs) -> CmdResult {
    let args = crate::config::merge(args)?;
    let model = load_model(&args)?;
    let prompts = load_prompts(model.as_ref(), &args)?;
    if args.configs.is_empty() {
        return Err(Failure::Input("sweep needs at least one --config".into()));
    }
    let configs = args
        .configs
        .iter()
        .map(|s| s.parse::<SweepConfig>())
        .collect::<Result<Vec<_>, _>>()?;
    let proxy = LogLikelihoodProxy {
        alpha: args.alpha.unwrap_or(INFLECTION_LOG_LIKELIHOOD),
    };
    let opts = SweepOptions {
        samples_per: args.samples.unwrap_or(DEFAULT_SAMPLES),
        length: args.length.unwrap_or(DEFAULT_LENGTH),
        partition_samples: args.partition_samples.unwrap_or(DEFAULT_PARTITION_SAMPLES),
    };
    let points = frontier::sweep(
        model.as_ref(),
        &prompts,
        &configs,
        &proxy,
        &opts,
        &Streams::new(args.seed.unwrap_or(0)),
    )?;
    let mut bytes = Vec::new();
    frontier::write_frontier_csv(&points, &mut bytes)?;
    for p in points.iter().filter(|p| p.prompt_id.is_none() && p.n_samples == 0) {
        eprintln!("warning: {} produced no accepted samples", p.config);
    }
    let out = args.out.map(|dir| dir.join("frontier.csv"));
    emit(out.as_deref(), &bytes)
}

#[derive(Serialize)]
struct RejectionPair {
    fig2: oracle::RejectionReport,
    random_tree: oracle::RejectionReport,
    passed: bool,
}

/// The random 3-token, depth-4 tree used by the `rejection` and `entropy`
/// checks.
pub fn check_tree(seed: u64) -> TreeModel<f64> {
    TreeModel::random(3, 4, &mut Streams::new(seed).child("tree", 0).rng(0))
}

pub const ENTROPY_CONFIGS: [DecoderConfig; 5] = [
    DecoderConfig::Random,
    DecoderConfig::Temperature(0.7),
    DecoderConfig::TopK(2),
    DecoderConfig::TopP(0.9),
    DecoderConfig::Greedy,
];

pub fn verify(args: &VerifyArgs) -> CmdResult {
    let streams = Streams::new(args.seed);
    let (json, passed) = match args.which {
        Check::Prop1 => {
            let r = oracle::verify_proposition1(args.trials, 5, 1000, &streams)?;
            (serde_json::to_string_pretty(&r), r.passed)
        }
        Check::Prop2 => {
            let r = oracle::verify_proposition2(args.tau)?;
            (serde_json::to_string_pretty(&r), r.passed)
        }
        Check::Rejection => {
            let accepted = args.samples.unwrap_or(1_000_000);
            let ctx = Context::empty();
            let fig2 = oracle::verify_rejection(&lm::fig2_model::<f64>(), &ctx, 2, args.tau, 99.5, 100_000, accepted, &streams.child("fig2", 0))?;
            let random_tree = oracle::verify_rejection(
                &check_tree(args.seed),
                &ctx,
                4,
                args.tau,
                99.5,
                100_000,
                accepted,
                &streams.child("random_tree", 0),
            )?;
            let passed = fig2.passed && random_tree.passed;
            let r = RejectionPair { fig2, random_tree, passed };
            (serde_json::to_string_pretty(&r), passed)
        }
        Check::Entropy => {
            let r = oracle::verify_entropy(
                &check_tree(args.seed),
                &Context::empty(),
                4,
                &ENTROPY_CONFIGS,
                args.samples.unwrap_or(100_000),
                &streams,
            )?;
            (serde_json::to_string_pretty(&r), r.passed)
        }
    };
    let mut json = json.map_err(|e| Failure::Runtime(e.to_string()))?;
    json.push('\n');
    emit(args.out.as_deref(), json.as_bytes())?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Verification)
    }
}

pub fn ratings(args: &RatingsArgs) -> CmdResult {
    let file = fs::File::open(&args.input).map_err(|e| io_err(&args.input, e))?;
    let rows = ratings::read_ratings_csv(file)?;
    let mut bytes = Vec::new();
    match args.analysis {
        Analysis::Pairwise => {
            let prefs = ratings::pairwise_from_ratings(&rows)?;
            ratings::write_pairwise_csv(&prefs, &mut bytes)?;
        }
        Analysis::Means => {
            let prefs = ratings::pairwise_from_ratings(&rows)?;
            let mut items: Vec<&str> = prefs.iter().map(|p| p.first.as_str()).collect();
            items.sort_unstable();
            items.dedup();
            let streams = Streams::new(args.seed);
            let summaries = items
                .iter()
                .map(|item| ratings::mean_preference(&prefs, item, args.resamples, &streams.child(item, 0)))
                .collect::<Result<Vec<_>, _>>()?;
            ratings::write_means_csv(&summaries, &mut bytes)?;
        }
        Analysis::Kappa => {
            let mut w = csv::Writer::from_writer(&mut bytes);
            let csv_err = |e: csv::Error| Failure::Runtime(e.to_string());
            w.write_record(["statistic", "value", "exact", "n", "degenerate"]).map_err(csv_err)?;
            let mut any = false;
            if let Ok(table) = AgreementTable::from_ratings(&rows) {
                let k = ratings::fleiss_kappa(&table);
                w.write_record(["fleiss", &k.value().to_string(), &k.exact.to_string(), &rows.len().to_string(), &k.degenerate.to_string()])
                    .map_err(csv_err)?;
                any = true;
            }
            if let Ok((a, b)) = ratings::cohen_pairs_from_ratings(&rows) {
                let k = ratings::cohens_kappa(&a, &b)?;
                w.write_record(["cohen", &k.value().to_string(), &k.exact.to_string(), &rows.len().to_string(), &k.degenerate.to_string()])
                    .map_err(csv_err)?;
                any = true;
            }
            w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
            drop(w);
            if !any {
                return Err(Failure::Input(
                    "ratings need a constant number (>= 2) of raters per item for kappa".into(),
                ));
            }
        }
    }
    emit(args.out.as_deref(), &bytes)
}

fn par_map<T: Send>(count: usize, f: impl Fn(usize) -> Result<T, Error> + Sync + Send) -> Result<Vec<T>, Error> {
    (0..count).into_par_iter().map(f).collect()
}
