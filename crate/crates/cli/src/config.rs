//! Merging of command-line flags over an optional JSON run-configuration file.

use std::path::PathBuf;

use serde::Deserialize;

use crate::commands::Failure;
use crate::RunArgs;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    model: Option<PathBuf>,
    corpus: Option<PathBuf>,
    order: Option<u64>,
    k: Option<f64>,
    tokenizer: Option<String>,
    remote: Option<String>,
    prompts: Option<PathBuf>,
    prompt: Option<String>,
    #[serde(default)]
    config: Vec<String>,
    length: Option<usize>,
    samples: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    alpha: Option<f64>,
    partition_samples: Option<usize>,
}

/// Fills every flag left unset from `--config-file`. Relative paths in the
/// file resolve against the file's directory.
pub fn merge(mut args: RunArgs) -> Result<RunArgs, Failure> {
    let Some(path) = args.config_file.clone() else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let file: RunFile =
        serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let rel = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

    args.model = args.model.or(rel(file.model));
    args.corpus = args.corpus.or(rel(file.corpus));
    args.order = args.order.or(file.order);
    args.k = args.k.or(file.k);
    args.tokenizer = args.tokenizer.or(file.tokenizer);
    args.remote = args.remote.or(file.remote);
    args.prompts = args.prompts.or(rel(file.prompts));
    args.prompt = args.prompt.or(file.prompt);
    if args.configs.is_empty() {
        args.configs = file.config;
    }
    args.length = args.length.or(file.length);
    args.samples = args.samples.or(file.samples);
    args.seed = args.seed.or(file.seed);
    args.out = args.out.or(rel(file.out));
    args.alpha = args.alpha.or(file.alpha);
    args.partition_samples = args.partition_samples.or(file.partition_samples);
    Ok(args)
}
