//! Command-line front end. Exit codes: 0 success, 1 data or runtime error,
//! 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser as ClapParser, Subcommand};
use log::{error, info, warn};

use crate::analysis::{analyze_corpus, emit_scatter, AnalysisConfig, Projection};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_corpora, mfs_baseline, EvalOptions, MacroMode};
use crate::model::Parser;
use crate::training::{seed_sweep, train, TrainConfig};
use crate::translation::{client_by_name, translate_corpus, TranslationCache};
use crate::treebank::{
    carve_per_language, default_treebank_name, ingest_file, read_corpus, write_corpus, Record, RelationMap,
    SourceFormat,
};

#[derive(Debug, ClapParser)]
#[command(name = "rstparse", version, about = "Multilingual RST discourse parsing toolkit")]
pub struct Cli {
    /// Flat `key = value` file with training settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert .dis / .rs3 files into a JSONL corpus.
    Ingest(IngestArgs),
    /// Translate every EDU of a corpus.
    Translate(TranslateArgs),
    /// Train a parser.
    Train(TrainArgs),
    /// Parse a corpus with a checkpoint (or the MFS baseline).
    Parse(ParseArgs),
    /// Score predicted trees against gold trees.
    Evaluate(EvaluateArgs),
    /// Topic-model the corpus and plot the documents.
    Analyze(AnalyzeArgs),
    /// Train one model per seed and average test scores.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Files or directories to read.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Language code; defaults to the `xx_` file-name prefix.
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long, value_parser = ["dis", "rs3"])]
    pub format: Option<String>,
    /// Treebank name used for relation mapping; defaults to `Xx-DT`.
    #[arg(long)]
    pub treebank: Option<String>,
    #[arg(long)]
    pub relation_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub target: String,
    /// identity, dictionary:<file> or external.
    #[arg(long, default_value = "identity")]
    pub client: String,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
}

#[derive(Debug, Args, Default)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub backbone: Option<String>,
    #[arg(long)]
    pub regime: Option<String>,
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Use the small toy dimensions.
    #[arg(long)]
    pub toy: bool,
    /// Any other setting, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Validation corpus; carved from the training corpus when absent.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// cross-lingual-representation or segment-translation.
    #[arg(long, default_value = "cross-lingual-representation")]
    pub strategy: String,
    /// Target language for segment translation.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub client: Option<String>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[arg(long, conflicts_with = "mfs", required_unless_present = "mfs")]
    pub checkpoint: Option<PathBuf>,
    /// Predict with the MFS baseline estimated from this training corpus.
    #[arg(long)]
    pub mfs: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave the whole-document span out of scoring.
    #[arg(long)]
    pub no_root: bool,
    #[arg(long, default_value = "document", value_parser = ["document", "class"])]
    pub macro_mode: String,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value = "tsne", value_parser = ["tsne", "pca"])]
    pub project: String,
    /// SVG output; `topics.json` is written next to it.
    #[arg(long, default_value = "topics.svg")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub min_count: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long)]
    pub valid: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Translate(a) => cmd_translate(a),
        Command::Train(a) => cmd_train(a, cli.config.as_deref()),
        Command::Parse(a) => cmd_parse(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Sweep(a) => cmd_sweep(a, cli.config.as_deref()),
    }
}

fn source_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| SourceFormat::from_path(f).is_some())
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn lang_from_name(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let (prefix, _) = stem.split_once('_')?;
    (prefix.len() >= 2 && prefix.len() <= 3 && prefix.chars().all(|c| c.is_ascii_alphabetic()))
        .then(|| prefix.to_ascii_lowercase())
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let map = match &a.relation_map {
        Some(p) => RelationMap::load(p)?,
        None => RelationMap::shipped(),
    };
    let format = a.format.as_deref().map(str::parse).transpose()?;
    let files = source_files(&a.inputs)?;
    if files.is_empty() {
        return Err(Error::Config("no .dis or .rs3 files found".into()));
    }
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for f in &files {
        let lang = a.lang.clone().or_else(|| lang_from_name(f));
        let Some(lang) = lang else {
            failed.push((f.clone(), Error::Config("no --lang and no xx_ file-name prefix".into())));
            continue;
        };
        let treebank = a.treebank.clone().unwrap_or_else(|| default_treebank_name(&lang));
        match ingest_file(f, format, &lang, &treebank, &map) {
            Ok(r) => records.push(r),
            Err(e) => failed.push((f.clone(), e)),
        }
    }
    write_corpus(&a.out, &records)?;
    info!("wrote {} documents to {}", records.len(), a.out.display());
    if failed.is_empty() {
        return Ok(());
    }
    for (f, e) in &failed {
        eprintln!("{}: {e}", f.display());
    }
    Err(Error::Document(format!("{} of {} files failed", failed.len(), files.len())))
}

pub fn cmd_translate(a: &TranslateArgs) -> Result<()> {
    let corpus = read_corpus(&a.input)?;
    let client = client_by_name(&a.client)?;
    let cache = match &a.cache {
        Some(p) => TranslationCache::open(p)?,
        None => TranslationCache::in_memory(),
    };
    let out = translate_corpus(&corpus, &a.target, client.as_ref(), &cache, a.parallelism)?;
    write_corpus(&a.out, &out.records)?;
    if out.failures.is_empty() {
        return Ok(());
    }
    for (id, e) in &out.failures {
        eprintln!("{id}: {e}");
    }
    Err(Error::Document(format!("{} documents failed to translate", out.failures.len())))
}

fn train_config(config: Option<&Path>, o: &TrainOverrides) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if o.toy {
        cfg.hp = crate::model::Hyperparams::toy();
    }
    if let Some(p) = config {
        cfg.apply_file(p)?;
    }
    if let Some(v) = o.epochs {
        cfg.hp.epochs = v;
    }
    if let Some(v) = o.lr {
        cfg.hp.lr = v;
    }
    if let Some(v) = o.batch_size {
        cfg.hp.batch_size = v;
    }
    if let Some(v) = &o.backbone {
        cfg.backbone = v.parse()?;
    }
    if let Some(v) = &o.regime {
        cfg.regime = v.parse()?;
    }
    if let Some(v) = &o.run_dir {
        cfg.run_dir = v.clone();
    }
    for kv in &o.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train_valid(train_path: &Path, valid: Option<&Path>, cfg: &TrainConfig, seed: u64) -> Result<(Vec<Record>, Vec<Record>)> {
    let corpus = cfg.regime.select(&read_corpus(train_path)?);
    if corpus.is_empty() {
        return Err(Error::Config("no training documents for the chosen regime".into()));
    }
    match valid {
        Some(p) => Ok((corpus, read_corpus(p)?)),
        None => carve_per_language(&corpus, cfg.valid_fraction, seed),
    }
}

pub fn cmd_train(a: &TrainArgs, config: Option<&Path>) -> Result<()> {
    let cfg = train_config(config, &a.overrides)?;
    let (mut tr, mut va) = train_valid(&a.train, a.valid.as_deref(), &cfg, a.seed)?;
    match a.strategy.as_str() {
        "cross-lingual-representation" => {}
        "segment-translation" => {
            let (Some(target), Some(client)) = (&a.target, &a.client) else {
                return Err(Error::Config("segment-translation needs --target and --client".into()));
            };
            let client = client_by_name(client)?;
            let cache = match &a.cache {
                Some(p) => TranslationCache::open(p)?,
                None => TranslationCache::in_memory(),
            };
            for set in [&mut tr, &mut va] {
                let out = translate_corpus(set, target, client.as_ref(), &cache, 4)?;
                for (id, e) in &out.failures {
                    warn!("{id}: dropped, {e}");
                }
                *set = out.records;
            }
        }
        other => return Err(Error::Config(format!("unknown strategy {other:?}"))),
    }
    std::fs::create_dir_all(&cfg.run_dir).map_err(|e| Error::io(&cfg.run_dir, e))?;
    let (parser, record) = train(&tr, &va, &cfg, a.seed, &cfg.run_dir)?;
    let best = cfg.run_dir.join("model.json");
    parser.save(&best)?;
    println!(
        "best epoch {} (validation {:.2}); model written to {}",
        record.best_epoch,
        record.best_metric,
        best.display()
    );
    Ok(())
}

pub fn cmd_parse(a: &ParseArgs) -> Result<()> {
    let corpus = read_corpus(&a.input)?;
    let mut out = Vec::with_capacity(corpus.len());
    enum Predictor {
        Model(Box<Parser>),
        Mfs(Vec<Record>),
    }
    let predictor = match (&a.checkpoint, &a.mfs) {
        (Some(c), _) => Predictor::Model(Box::new(Parser::load(c)?)),
        (None, Some(t)) => Predictor::Mfs(read_corpus(t)?),
        (None, None) => return Err(Error::Config("need --checkpoint or --mfs".into())),
    };
    for r in &corpus {
        if r.doc.edu_count() == 0 {
            warn!("{}: no EDUs, skipped", r.doc.doc_id);
            continue;
        }
        let tree = match &predictor {
            Predictor::Model(p) => p.parse(&r.doc)?,
            Predictor::Mfs(train) => mfs_baseline(train, &r.doc)?,
        };
        out.push(Record::new(r.doc.clone(), Some(tree)));
    }
    write_corpus(&a.out, &out)
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let gold = read_corpus(&a.gold)?;
    let pred = read_corpus(&a.pred)?;
    let opts = EvalOptions {
        include_root: !a.no_root,
        macro_mode: if a.macro_mode == "class" {
            MacroMode::Class
        } else {
            MacroMode::Document
        },
    };
    let report = evaluate_corpora(&gold, &pred, &opts)?;
    print!("{report}");
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let corpus = read_corpus(&a.input)?;
    let mut cfg = AnalysisConfig {
        projection: a.project.parse::<Projection>()?,
        min_count: a.min_count,
        ..AnalysisConfig::default()
    };
    cfg.lda.k = a.k;
    cfg.lda.iterations = a.iterations;
    cfg.lda.seed = a.seed;
    let result = analyze_corpus(&corpus, &cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    emit_scatter(&result.points(), &result.keywords, &a.out)?;
    write_json(&a.out.with_file_name("topics.json"), &result)?;
    for (t, words) in result.keywords.iter().enumerate() {
        println!("topic {}: {}", t + 1, words.join(" "));
    }
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs, config: Option<&Path>) -> Result<()> {
    let mut cfg = train_config(config, &a.overrides)?;
    if let Some(seeds) = &a.seeds {
        cfg.seeds = seeds.clone();
    }
    cfg.validate()?;
    let seed = cfg.seeds[0];
    let (tr, va) = train_valid(&a.train, a.valid.as_deref(), &cfg, seed)?;
    let test = read_corpus(&a.test)?;
    let report = seed_sweep(&tr, &va, &test, &cfg)?;
    write_json(&cfg.run_dir.join("sweep.json"), &report)?;
    for r in &report.runs {
        match (&r.report, &r.error) {
            (Some(s), _) => println!("seed {}: micro Sp/Nu/Rel {:.2}/{:.2}/{:.2}", r.seed, s.pooled.micro_f1.sp, s.pooled.micro_f1.nu, s.pooled.micro_f1.rel),
            (None, e) => println!("seed {}: FAILED {}", r.seed, e.as_deref().unwrap_or("")),
        }
    }
    if let Some(m) = &report.mean {
        print!("mean over seeds\n{m}");
    }
    if report.runs.iter().any(|r| r.error.is_some()) {
        return Err(Error::Sweep("some seeds failed; see sweep.json".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_prefix() {
        assert_eq!(lang_from_name(Path::new("x/pt_01.rs3")).as_deref(), Some("pt"));
        assert_eq!(lang_from_name(Path::new("wsj0601.dis")), None);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["rstparse", "ingest", "--format", "xml", "a", "--out", "b"]), 2);
        assert_eq!(run(["rstparse", "frobnicate"]), 2);
    }
}
