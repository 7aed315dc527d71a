//! Canonical JSONL corpus format and train/test splitting.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Document, Nuclearity, Relation, RstTree, WhitespaceTokenizer};

/// One corpus line: a document and, when annotated, its tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub doc: Document,
    pub tree: Option<RstTree>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TreeJson {
    Leaf {
        edu: usize,
    },
    Node {
        nuc: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rel: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw_rel: Option<String>,
        left: Box<TreeJson>,
        right: Box<TreeJson>,
    },
}

impl From<&RstTree> for TreeJson {
    fn from(t: &RstTree) -> Self {
        match t {
            RstTree::Leaf(i) => TreeJson::Leaf { edu: *i },
            RstTree::Node(n) => {
                let (rel, raw_rel) = match &n.rel {
                    Relation::Coarse(r) => (Some(r.clone()), None),
                    Relation::Raw(r) => (None, Some(r.clone())),
                };
                TreeJson::Node {
                    nuc: n.nuc.to_string(),
                    rel,
                    raw_rel,
                    left: Box::new((&n.left).into()),
                    right: Box::new((&n.right).into()),
                }
            }
        }
    }
}

impl TryFrom<TreeJson> for RstTree {
    type Error = Error;

    fn try_from(t: TreeJson) -> Result<Self> {
        match t {
            TreeJson::Leaf { edu } => Ok(RstTree::Leaf(edu)),
            TreeJson::Node {
                nuc,
                rel,
                raw_rel,
                left,
                right,
            } => {
                let nuc: Nuclearity = nuc.parse()?;
                let rel = match (rel, raw_rel) {
                    (Some(r), None) => Relation::Coarse(r),
                    (None, Some(r)) => Relation::Raw(r),
                    _ => return Err(Error::Tree("node needs exactly one of rel/raw_rel".into())),
                };
                Ok(RstTree::node(
                    RstTree::try_from(*left)?,
                    RstTree::try_from(*right)?,
                    nuc,
                    rel,
                ))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    doc_id: String,
    lang: String,
    edus: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tree: Option<TreeJson>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    source_treebank: String,
    #[serde(default = "default_tokenizer")]
    tokenizer: String,
}

fn default_tokenizer() -> String {
    "whitespace".into()
}

impl Record {
    pub fn new(doc: Document, tree: Option<RstTree>) -> Self {
        Record { doc, tree }
    }

    pub fn to_json_line(&self) -> String {
        let json = RecordJson {
            doc_id: self.doc.doc_id.clone(),
            lang: self.doc.lang.clone(),
            edus: self.doc.edu_texts(),
            tree: self.tree.as_ref().map(TreeJson::from),
            source_treebank: self.doc.source_treebank.clone(),
            tokenizer: self.doc.tokenizer.clone(),
        };
        serde_json::to_string(&json).expect("record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let json: RecordJson = serde_json::from_str(line)?;
        if json.tokenizer != "whitespace" {
            log::warn!(
                "{}: tokenizer {:?} unavailable, using whitespace",
                json.doc_id,
                json.tokenizer
            );
        }
        let doc = Document::from_edus(
            json.doc_id,
            json.lang,
            &json.edus,
            json.source_treebank,
            &WhitespaceTokenizer,
        )?;
        let tree = json.tree.map(RstTree::try_from).transpose()?;
        if let Some(t) = &tree {
            t.validate(doc.edu_count())?;
        }
        Ok(Record { doc, tree })
    }

    /// Requires the tree to be present.
    pub fn gold(&self) -> Result<&RstTree> {
        self.tree
            .as_ref()
            .ok_or_else(|| Error::Document(format!("{}: no tree", self.doc.doc_id)))
    }
}

/// Reads a corpus, failing on the first malformed line.
pub fn read_corpus(path: &Path) -> Result<Vec<Record>> {
    let (records, mut errors) = read_corpus_lenient(path)?;
    match errors.is_empty() {
        true => Ok(records),
        false => Err(errors.swap_remove(0).1),
    }
}

/// Malformed corpus lines as `(line number, error)`.
pub type LineErrors = Vec<(usize, Error)>;

/// Reads a corpus, returning malformed lines separately.
pub fn read_corpus_lenient(path: &Path) -> Result<(Vec<Record>, LineErrors)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match Record::from_json_line(&line) {
            Ok(r) => records.push(r),
            Err(e) => errors.push((n + 1, e)),
        }
    }
    Ok((records, errors))
}

pub fn write_corpus(path: &Path, records: &[Record]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

fn by_language<T>(corpus: &[T], lang: impl Fn(&T) -> &str) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in corpus.iter().enumerate() {
        groups.entry(lang(r).to_string()).or_default().push(i);
    }
    groups
}

fn take_per_language<T: Clone>(
    corpus: &[T],
    lang: impl Fn(&T) -> &str,
    seed: u64,
    count: impl Fn(&str, usize) -> Result<usize>,
) -> Result<(Vec<T>, Vec<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = vec![false; corpus.len()];
    let mut held_order = Vec::new();
    for (lang, mut idx) in by_language(corpus, &lang) {
        let k = count(&lang, idx.len())?;
        idx.shuffle(&mut rng);
        let mut chosen = idx[..k].to_vec();
        chosen.sort_unstable();
        for &i in &chosen {
            held[i] = true;
        }
        held_order.extend(chosen);
    }
    let rest = corpus
        .iter()
        .zip(&held)
        .filter(|(_, &h)| !h)
        .map(|(r, _)| r.clone())
        .collect();
    let taken = held_order.into_iter().map(|i| corpus[i].clone()).collect();
    Ok((rest, taken))
}

/// Holds out exactly `test_per_lang` randomly chosen documents per language.
/// Returns `(train, test)`; deterministic for a given seed.
pub fn split_dataset(
    corpus: &[Record],
    seed: u64,
    test_per_lang: usize,
) -> Result<(Vec<Record>, Vec<Record>)> {
    take_per_language(corpus, |r| r.doc.lang.as_str(), seed, |lang, n| {
        if n <= test_per_lang {
            Err(Error::Split(format!(
                "language {lang:?} has {n} samples, needs more than {test_per_lang}"
            )))
        } else {
            Ok(test_per_lang)
        }
    })
}

/// Carves a fraction of each language off as a validation set
/// (at least one document for languages with two or more).
pub fn carve_per_language(
    corpus: &[Record],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<Record>, Vec<Record>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "validation fraction {fraction} outside (0, 1)"
        )));
    }
    take_per_language(corpus, |r| r.doc.lang.as_str(), seed, |_, n| {
        let k = (n as f64 * fraction).round() as usize;
        Ok(if n >= 2 { k.clamp(1, n - 1) } else { 0 })
    })
}
