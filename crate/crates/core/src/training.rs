//! Mini-batch training, validation-based checkpoint selection and seed sweeps.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{score_report, EvalOptions, ScoreReport};
use crate::model::{
    EmbeddingBackbone, Gradients, Hyperparams, LabelVocab, ParamStore, Parser, PretrainedBackbone,
    ToyBackbone,
};
use crate::oracle::{tree_to_trace, SplitTrace};
use crate::treebank::{Record, RstTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackboneKind {
    Toy,
    PretrainedMultilingual,
}

impl std::str::FromStr for BackboneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(BackboneKind::Toy),
            "pretrained-multilingual" => Ok(BackboneKind::PretrainedMultilingual),
            other => Err(Error::Config(format!("unknown backbone {other:?}"))),
        }
    }
}

/// Which training documents are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// English documents only.
    En,
    /// Every language.
    Multi,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "en" => Ok(Regime::En),
            "multi" => Ok(Regime::Multi),
            other => Err(Error::Config(format!("unknown regime {other:?}"))),
        }
    }
}

impl Regime {
    pub fn select(&self, corpus: &[Record]) -> Vec<Record> {
        match self {
            Regime::En => corpus.iter().filter(|r| r.doc.lang == "en").cloned().collect(),
            Regime::Multi => corpus.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hp: Hyperparams,
    pub backbone: BackboneKind,
    pub regime: Regime,
    pub valid_fraction: f64,
    pub seeds: Vec<u64>,
    pub run_dir: PathBuf,
    pub eval: EvalOptions,
    /// Adam moment decay rates and epsilon.
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hp: Hyperparams::default(),
            backbone: BackboneKind::Toy,
            regime: Regime::Multi,
            valid_fraction: 0.1,
            seeds: vec![1],
            run_dir: PathBuf::from("runs/default"),
            eval: EvalOptions::default(),
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if !(self.valid_fraction > 0.0 && self.valid_fraction < 1.0) {
            return Err(Error::Config("valid_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if self.hp.set(key, value)? {
            return Ok(());
        }
        let value = value.trim();
        let bad = || Error::Config(format!("bad value {value:?} for {key}"));
        match key.replace('_', "-").as_str() {
            "backbone" => self.backbone = value.parse()?,
            "regime" => self.regime = value.parse()?,
            "valid-fraction" => self.valid_fraction = value.parse().map_err(|_| bad())?,
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| bad()))
                    .collect::<Result<_>>()?
            }
            "run-dir" => self.run_dir = PathBuf::from(value),
            "include-root" => self.eval.include_root = value.parse().map_err(|_| bad())?,
            "macro-mode" => {
                self.eval.macro_mode = match value {
                    "document" => crate::evaluation::MacroMode::Document,
                    "class" => crate::evaluation::MacroMode::Class,
                    _ => return Err(bad()),
                }
            }
            _ => return Err(Error::Config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, lr: f64, betas: (f64, f64), eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for id in 0..params.len() {
            let Some(g) = grads.get(id) else { continue };
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            let data = &mut params.get_mut(id).data;
            for k in 0..data.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                data[k] -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum of `L_total` over the epoch's batches.
    pub loss: f64,
    pub structure_loss: f64,
    pub label_loss: f64,
    pub valid: ScoreReport,
    /// Mean of pooled micro Sp/Nu/Rel on the validation set.
    pub monitored: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// 0 means the initial parameters were kept.
    pub best_epoch: usize,
    pub best_metric: f64,
    pub checkpoint: PathBuf,
}

/// Parses every document and scores it against its gold tree.
pub fn evaluate_parser(parser: &Parser, corpus: &[Record], opts: &EvalOptions) -> Result<ScoreReport> {
    let preds: Vec<RstTree> = corpus
        .par_iter()
        .map(|r| parser.parse(&r.doc))
        .collect::<Result<_>>()?;
    let items = corpus
        .iter()
        .zip(&preds)
        .map(|(r, p)| Ok((r.doc.lang.as_str(), r.gold()?, p)))
        .collect::<Result<Vec<_>>>()?;
    score_report(&items, opts)
}

/// Fresh backbone for the configured kind.
pub fn build_backbone(cfg: &TrainConfig, train: &[Record]) -> Result<Box<dyn EmbeddingBackbone>> {
    Ok(match cfg.backbone {
        BackboneKind::Toy => Box::new(ToyBackbone::from_corpus(train, cfg.hp.d_emb, 1)),
        BackboneKind::PretrainedMultilingual => {
            Box::new(PretrainedBackbone::from_env(cfg.hp.finetune_last_k_layers)?)
        }
    })
}

/// Trains one model and returns it with the best validation parameters
/// restored. Checkpoints and `record.json` go under `run_dir`.
pub fn train(
    corpus_train: &[Record],
    corpus_valid: &[Record],
    cfg: &TrainConfig,
    seed: u64,
    run_dir: &Path,
) -> Result<(Parser, RunRecord)> {
    cfg.hp.validate()?;
    if corpus_train.is_empty() || corpus_valid.is_empty() {
        return Err(Error::Config("training and validation corpora must be non-empty".into()));
    }
    let traces: Vec<SplitTrace> = corpus_train
        .iter()
        .map(|r| tree_to_trace(r.gold()?, &r.doc.doc_id))
        .collect::<Result<_>>()?;
    let labels = LabelVocab::from_corpus(corpus_train)?;
    let inventory = inventory_of(corpus_train);
    let backbone = build_backbone(cfg, corpus_train)?;
    let mut parser = Parser::new(cfg.hp.clone(), backbone, labels, inventory, seed)?;
    info!(
        "seed {seed}: {} parameters, {} labels, {} training documents",
        parser.params.scalar_count(),
        parser.label_count(),
        corpus_train.len()
    );

    let ckpt_dir = run_dir.join("checkpoints");
    let best_path = ckpt_dir.join("best.json");
    let mut adam = Adam::new(&parser.params, cfg.hp.lr, cfg.adam_betas, cfg.adam_eps);
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xd20f));

    let initial = evaluate_parser(&parser, corpus_valid, &cfg.eval)?;
    let mut best_metric = initial.pooled.micro_f1.mean();
    let mut best_epoch = 0;
    let mut best_params = parser.params.clone();
    parser.save(&best_path)?;

    let mut epochs = Vec::with_capacity(cfg.hp.epochs);
    let mut order: Vec<usize> = (0..corpus_train.len()).collect();
    for epoch in 1..=cfg.hp.epochs {
        order.shuffle(&mut order_rng);
        let (mut loss, mut ls, mut ll) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.hp.batch_size) {
            let mut grads = Gradients::for_store(&parser.params);
            for &d in batch {
                let rng = (cfg.hp.dropout > 0.0).then_some(&mut dropout_rng);
                let (s, l) = parser.document_loss(&corpus_train[d].doc, &traces[d], rng, &mut grads)?;
                ls += s;
                ll += l;
                loss += s + l;
            }
            loss += parser.add_regularizer(&mut grads);
            if !grads.all_finite() {
                return Err(Error::Numerical(format!("non-finite gradient in epoch {epoch}")));
            }
            let norm = grads.global_norm();
            if cfg.hp.grad_clip > 0.0 && norm > cfg.hp.grad_clip {
                grads.scale(cfg.hp.grad_clip / norm);
            }
            adam.step(&mut parser.params, &grads);
        }
        let valid = evaluate_parser(&parser, corpus_valid, &cfg.eval)?;
        let monitored = valid.pooled.micro_f1.mean();
        info!("seed {seed} epoch {epoch}: loss {loss:.4}, valid {monitored:.2}");
        if monitored > best_metric {
            best_metric = monitored;
            best_epoch = epoch;
            best_params = parser.params.clone();
            parser.save(&best_path)?;
        }
        epochs.push(EpochRecord {
            epoch,
            loss,
            structure_loss: ls,
            label_loss: ll,
            valid,
            monitored,
        });
    }
    parser.save(&ckpt_dir.join("last.json"))?;
    parser.params = best_params;

    let record = RunRecord {
        seed,
        epochs,
        best_epoch,
        best_metric,
        checkpoint: best_path,
    };
    let json = serde_json::to_string_pretty(&record)?;
    let path = run_dir.join("record.json");
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok((parser, record))
}

fn inventory_of(corpus: &[Record]) -> Vec<String> {
    let mut rels = std::collections::BTreeSet::new();
    for r in corpus {
        if let Some(t) = &r.tree {
            t.for_each_node(&mut |n| {
                rels.insert(n.rel.name().to_string());
            });
        }
    }
    rels.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub report: Option<ScoreReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<SeedResult>,
    /// Mean over the successful runs.
    pub mean: Option<ScoreReport>,
}

/// One training run per seed, each scored on `test`. Failed runs are
/// reported, not propagated.
pub fn seed_sweep(
    train_corpus: &[Record],
    valid: &[Record],
    test: &[Record],
    cfg: &TrainConfig,
) -> Result<SweepReport> {
    cfg.validate()?;
    let runs: Vec<SeedResult> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let dir = cfg.run_dir.join(format!("seed-{seed}"));
            let outcome = train(train_corpus, valid, cfg, seed, &dir)
                .and_then(|(parser, _)| evaluate_parser(&parser, test, &cfg.eval));
            match outcome {
                Ok(report) => SeedResult {
                    seed,
                    report: Some(report),
                    error: None,
                },
                Err(e) => {
                    warn!("seed {seed} failed: {e}");
                    SeedResult {
                        seed,
                        report: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let ok: Vec<ScoreReport> = runs.iter().filter_map(|r| r.report.clone()).collect();
    Ok(SweepReport {
        mean: ScoreReport::mean(&ok),
        runs,
    })
}
