//! Token embedding backbones.
//!
//! A backbone maps the tokens of one encoding window to per-token vectors.
//! Documents longer than the window are split by [`super::encode_tokens`].

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::{Record, Tokenizer, WhitespaceTokenizer};

use super::params::{Init, ParamId, ParamStore};
use super::tape::{Tape, Var};

/// Environment variable naming a word-vector file for the pretrained adapter.
pub const PRETRAINED_VECTORS_ENV: &str = "RSTPARSE_PRETRAINED_VECTORS";

/// Which layers of a backbone are updated during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerPolicy {
    pub total_layers: usize,
    pub trainable_last: usize,
}

/// Serializable description used to rebuild a backbone from a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackboneSpec {
    Toy {
        dim: usize,
        vocab: Vec<String>,
    },
    PretrainedMultilingual {
        dim: usize,
        vectors: PathBuf,
        adapter_layers: usize,
    },
}

pub trait EmbeddingBackbone: Send + Sync {
    fn kind(&self) -> &str;

    fn dim(&self) -> usize;

    fn tokenizer(&self) -> &dyn Tokenizer;

    fn layer_policy(&self) -> LayerPolicy;

    /// Registers the backbone's trainable tensors.
    fn init_params(&mut self, store: &mut ParamStore, hp_init: f64, rng: &mut ChaCha8Rng) -> Result<()>;

    /// Re-binds parameter ids after a checkpoint load.
    fn bind_params(&mut self, store: &ParamStore) -> Result<()>;

    /// Per-token vectors for one window, in input order.
    fn embed(&self, tape: &mut Tape, tokens: &[String]) -> Vec<Var>;

    /// `None` for backbones that cannot be checkpointed.
    fn spec(&self) -> Option<BackboneSpec>;
}

/// Rebuilds a checkpointable backbone. Parameters are bound separately.
pub fn from_spec(spec: &BackboneSpec) -> Result<Box<dyn EmbeddingBackbone>> {
    match spec {
        BackboneSpec::Toy { dim, vocab } => Ok(Box::new(ToyBackbone::new(vocab.clone(), *dim))),
        BackboneSpec::PretrainedMultilingual {
            dim,
            vectors,
            adapter_layers,
        } => {
            let b = PretrainedBackbone::load(vectors, *adapter_layers)?;
            if b.dim() != *dim {
                return Err(Error::Checkpoint(format!(
                    "vector file has dimension {}, checkpoint expects {dim}",
                    b.dim()
                )));
            }
            Ok(Box::new(b))
        }
    }
}

/// Trainable lookup table over a closed vocabulary; unknown tokens share
/// row 0. Lookup is case-insensitive.
#[derive(Debug, Clone)]
pub struct ToyBackbone {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    table: Option<ParamId>,
}

pub const UNK: &str = "<unk>";

impl ToyBackbone {
    /// `vocab[0]` must be the unknown token.
    pub fn new(vocab: Vec<String>, dim: usize) -> Self {
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        ToyBackbone {
            vocab,
            index,
            dim,
            table: None,
        }
    }

    /// Vocabulary of every token in `corpus` seen at least `min_count` times.
    pub fn from_corpus(corpus: &[Record], dim: usize, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for r in corpus {
            for t in &r.doc.tokens {
                *counts.entry(t.to_lowercase()).or_default() += 1;
            }
        }
        let mut words: Vec<String> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .map(|(w, _)| w)
            .collect();
        words.sort();
        let mut vocab = vec![UNK.to_string()];
        vocab.extend(words);
        Self::new(vocab, dim)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.index.get(&token.to_lowercase()).copied().unwrap_or(0)
    }
}

impl EmbeddingBackbone for ToyBackbone {
    fn kind(&self) -> &str {
        "toy"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &WhitespaceTokenizer
    }

    fn layer_policy(&self) -> LayerPolicy {
        LayerPolicy {
            total_layers: 1,
            trainable_last: 1,
        }
    }

    fn init_params(&mut self, store: &mut ParamStore, init: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        self.table = Some(store.register(
            "backbone.embedding",
            &[self.vocab.len(), self.dim],
            Init::Uniform(init),
            rng,
        )?);
        Ok(())
    }

    fn bind_params(&mut self, store: &ParamStore) -> Result<()> {
        let id = store.id("backbone.embedding")?;
        store.expect_shape(id, &[self.vocab.len(), self.dim])?;
        self.table = Some(id);
        Ok(())
    }

    fn embed(&self, tape: &mut Tape, tokens: &[String]) -> Vec<Var> {
        let table = self.table.expect("toy backbone parameters not initialized");
        tokens
            .iter()
            .map(|t| tape.row(table, self.token_id(t)))
            .collect()
    }

    fn spec(&self) -> Option<BackboneSpec> {
        Some(BackboneSpec::Toy {
            dim: self.dim,
            vocab: self.vocab.clone(),
        })
    }
}

/// Adapter over frozen pretrained multilingual word vectors with trainable
/// residual layers on top (`x ← x + tanh(W x + b)`, initialized to the
/// identity). Only the adapter layers are updated.
#[derive(Debug, Clone)]
pub struct PretrainedBackbone {
    path: PathBuf,
    vectors: HashMap<String, Vec<f64>>,
    dim: usize,
    adapter_layers: usize,
    adapter: Vec<(ParamId, ParamId)>,
}

impl PretrainedBackbone {
    /// Loads vectors from [`PRETRAINED_VECTORS_ENV`].
    pub fn from_env(adapter_layers: usize) -> Result<Self> {
        let path = std::env::var_os(PRETRAINED_VECTORS_ENV).ok_or_else(|| {
            Error::Config(format!(
                "pretrained-multilingual backbone needs {PRETRAINED_VECTORS_ENV}"
            ))
        })?;
        Self::load(Path::new(&path), adapter_layers)
    }

    /// Reads a text vector file: `word v1 .. vd` per line, with an optional
    /// `count dim` header line.
    pub fn load(path: &Path, adapter_layers: usize) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        let mut dim = 0;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() || (n == 0 && fields.len() == 2) {
                continue;
            }
            let vals = fields[1..]
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Config(format!("{}:{}: bad vector", path.display(), n + 1)))?;
            if dim == 0 {
                dim = vals.len();
            } else if vals.len() != dim {
                return Err(Error::Shape(format!(
                    "{}:{}: vector of length {}, expected {dim}",
                    path.display(),
                    n + 1,
                    vals.len()
                )));
            }
            vectors.insert(fields[0].to_lowercase(), vals);
        }
        if dim == 0 {
            return Err(Error::Config(format!("{}: no vectors", path.display())));
        }
        Ok(PretrainedBackbone {
            path: path.to_path_buf(),
            vectors,
            dim,
            adapter_layers,
            adapter: Vec::new(),
        })
    }
}

impl EmbeddingBackbone for PretrainedBackbone {
    fn kind(&self) -> &str {
        "pretrained-multilingual"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &WhitespaceTokenizer
    }

    fn layer_policy(&self) -> LayerPolicy {
        LayerPolicy {
            total_layers: 1 + self.adapter_layers,
            trainable_last: self.adapter_layers,
        }
    }

    fn init_params(&mut self, store: &mut ParamStore, _init: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        self.adapter.clear();
        for l in 0..self.adapter_layers {
            let w = store.register(&format!("backbone.adapter.{l}.w"), &[self.dim, self.dim], Init::Zeros, rng)?;
            let b = store.register(&format!("backbone.adapter.{l}.b"), &[self.dim], Init::Zeros, rng)?;
            self.adapter.push((w, b));
        }
        Ok(())
    }

    fn bind_params(&mut self, store: &ParamStore) -> Result<()> {
        self.adapter.clear();
        for l in 0..self.adapter_layers {
            let w = store.id(&format!("backbone.adapter.{l}.w"))?;
            let b = store.id(&format!("backbone.adapter.{l}.b"))?;
            store.expect_shape(w, &[self.dim, self.dim])?;
            self.adapter.push((w, b));
        }
        Ok(())
    }

    fn embed(&self, tape: &mut Tape, tokens: &[String]) -> Vec<Var> {
        tokens
            .iter()
            .map(|t| {
                let base = self
                    .vectors
                    .get(&t.to_lowercase())
                    .cloned()
                    .unwrap_or_else(|| vec![0.0; self.dim]);
                let mut x = tape.input(base);
                for &(w, b) in &self.adapter {
                    let h = tape.linear(w, b, x);
                    let h = tape.tanh(h);
                    x = tape.add(x, h);
                }
                x
            })
            .collect()
    }

    fn spec(&self) -> Option<BackboneSpec> {
        Some(BackboneSpec::PretrainedMultilingual {
            dim: self.dim,
            vectors: self.path.clone(),
            adapter_layers: self.adapter_layers,
        })
    }
}
