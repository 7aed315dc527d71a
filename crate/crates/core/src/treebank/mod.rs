//! Treebank ingestion and the canonical discourse-tree data model.
//!
//! Source files (`.dis` or `.rs3`) are read into a [`RawTree`], pruned of
//! unlinked units with [`remove_unlinked`], made binary with [`binarize`] and
//! finally relabelled with [`harmonize`] against a [`RelationMap`].

mod corpus;
mod dis;
mod ingest;
mod raw;
mod relmap;
mod rs3;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use corpus::{
    carve_per_language, read_corpus, read_corpus_lenient, split_dataset, write_corpus, Record,
};
pub use dis::parse_dis;
pub use ingest::{default_treebank_name, ingest_file, ingest_text, SourceFormat};
pub use raw::{binarize, remove_unlinked, RawChild, RawNode, RawTree, Role};
pub use relmap::{harmonize, RelationMap, DEFAULT_RELATION_MAP};
pub use rs3::parse_rs3;

/// Nuclearity of a binary split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Nuclearity {
    NS,
    SN,
    NN,
}

impl Nuclearity {
    pub const ALL: [Nuclearity; 3] = [Nuclearity::NS, Nuclearity::SN, Nuclearity::NN];

    pub fn as_str(self) -> &'static str {
        match self {
            Nuclearity::NS => "NS",
            Nuclearity::SN => "SN",
            Nuclearity::NN => "NN",
        }
    }
}

impl fmt::Display for Nuclearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Nuclearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NS" => Ok(Nuclearity::NS),
            "SN" => Ok(Nuclearity::SN),
            "NN" => Ok(Nuclearity::NN),
            other => Err(Error::Tree(format!("unknown nuclearity {other:?}"))),
        }
    }
}

/// A rhetorical relation, either as written in the source treebank or
/// after mapping onto the coarse inventory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Raw(String),
    Coarse(String),
}

impl Relation {
    pub fn name(&self) -> &str {
        match self {
            Relation::Raw(s) | Relation::Coarse(s) => s,
        }
    }

    pub fn is_coarse(&self) -> bool {
        matches!(self, Relation::Coarse(_))
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Joint nuclearity-relation label, rendered as `<Relation>-<Nuc>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointLabel {
    pub rel: Relation,
    pub nuc: Nuclearity,
}

impl JointLabel {
    pub fn new(rel: Relation, nuc: Nuclearity) -> Self {
        JointLabel { rel, nuc }
    }

    /// Parses `<Relation>-<Nuc>`; the relation part may itself contain dashes.
    pub fn parse_coarse(s: &str) -> Result<Self> {
        let (rel, nuc) = s
            .rsplit_once('-')
            .ok_or_else(|| Error::Tree(format!("malformed joint label {s:?}")))?;
        Ok(JointLabel {
            rel: Relation::Coarse(rel.to_string()),
            nuc: nuc.parse()?,
        })
    }
}

impl fmt::Display for JointLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.rel, self.nuc)
    }
}

/// Elementary discourse unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edu {
    /// 1-based position in the document.
    pub index: usize,
    pub text: String,
    /// Half-open interval into [`Document::tokens`].
    pub token_span: Range<usize>,
}

/// Splits text into tokens. The name is recorded with each document so
/// that re-tokenization after translation uses the same policy.
pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn tokenize(&self, text: &str) -> Vec<String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn name(&self) -> &str {
        "whitespace"
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_string).collect()
    }
}

/// A language-tagged, EDU-segmented document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub lang: String,
    pub tokens: Vec<String>,
    pub edus: Vec<Edu>,
    pub source_treebank: String,
    pub tokenizer: String,
}

impl Document {
    /// Builds a document from EDU texts, tokenizing each EDU independently so
    /// that the EDUs tile the token sequence.
    pub fn from_edus<S: AsRef<str>>(
        doc_id: impl Into<String>,
        lang: impl Into<String>,
        edu_texts: &[S],
        source_treebank: impl Into<String>,
        tokenizer: &dyn Tokenizer,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        if edu_texts.is_empty() {
            return Err(Error::Document(format!("{doc_id}: document has no EDUs")));
        }
        let mut tokens = Vec::new();
        let mut edus = Vec::with_capacity(edu_texts.len());
        for (pos, text) in edu_texts.iter().enumerate() {
            let text = text.as_ref();
            let toks = tokenizer.tokenize(text);
            if toks.is_empty() {
                return Err(Error::Document(format!(
                    "{doc_id}: EDU {} has no tokens",
                    pos + 1
                )));
            }
            let start = tokens.len();
            tokens.extend(toks);
            edus.push(Edu {
                index: pos + 1,
                text: text.to_string(),
                token_span: start..tokens.len(),
            });
        }
        Ok(Document {
            doc_id,
            lang: lang.into(),
            tokens,
            edus,
            source_treebank: source_treebank.into(),
            tokenizer: tokenizer.name().to_string(),
        })
    }

    pub fn edu_count(&self) -> usize {
        self.edus.len()
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn edu_texts(&self) -> Vec<String> {
        self.edus.iter().map(|e| e.text.clone()).collect()
    }

    /// Checks the tiling invariant.
    pub fn validate(&self) -> Result<()> {
        if self.edus.is_empty() {
            return Err(Error::Document(format!("{}: no EDUs", self.doc_id)));
        }
        let mut cursor = 0;
        for (pos, edu) in self.edus.iter().enumerate() {
            if edu.index != pos + 1 {
                return Err(Error::Document(format!(
                    "{}: EDU at position {} has index {}",
                    self.doc_id,
                    pos + 1,
                    edu.index
                )));
            }
            if edu.token_span.start != cursor || edu.token_span.is_empty() {
                return Err(Error::Document(format!(
                    "{}: EDU {} does not tile the token sequence",
                    self.doc_id, edu.index
                )));
            }
            cursor = edu.token_span.end;
        }
        if cursor != self.tokens.len() {
            return Err(Error::Document(format!(
                "{}: {} trailing tokens outside any EDU",
                self.doc_id,
                self.tokens.len() - cursor
            )));
        }
        Ok(())
    }
}

/// Binary discourse tree over EDU indices `1..=m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RstTree {
    Leaf(usize),
    Node(Box<RstNode>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RstNode {
    pub left: RstTree,
    pub right: RstTree,
    pub nuc: Nuclearity,
    pub rel: Relation,
}

impl RstTree {
    pub fn node(left: RstTree, right: RstTree, nuc: Nuclearity, rel: Relation) -> Self {
        RstTree::Node(Box::new(RstNode {
            left,
            right,
            nuc,
            rel,
        }))
    }

    /// Covered EDU interval `(i, j)`, inclusive on both ends.
    pub fn span(&self) -> (usize, usize) {
        match self {
            RstTree::Leaf(i) => (*i, *i),
            RstTree::Node(n) => (n.left.span().0, n.right.span().1),
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<usize>) {
        match self {
            RstTree::Leaf(i) => out.push(*i),
            RstTree::Node(n) => {
                n.left.collect_leaves(out);
                n.right.collect_leaves(out);
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            RstTree::Leaf(_) => 1,
            RstTree::Node(n) => n.left.leaf_count() + n.right.leaf_count(),
        }
    }

    pub fn internal_count(&self) -> usize {
        match self {
            RstTree::Leaf(_) => 0,
            RstTree::Node(n) => 1 + n.left.internal_count() + n.right.internal_count(),
        }
    }

    pub fn joint_label(&self) -> Option<JointLabel> {
        match self {
            RstTree::Leaf(_) => None,
            RstTree::Node(n) => Some(JointLabel::new(n.rel.clone(), n.nuc)),
        }
    }

    /// Pre-order visit of internal nodes.
    pub fn for_each_node<'a>(&'a self, f: &mut impl FnMut(&'a RstNode)) {
        if let RstTree::Node(n) = self {
            f(n);
            n.left.for_each_node(f);
            n.right.for_each_node(f);
        }
    }

    /// Leaves must enumerate `1..=m` left to right.
    pub fn validate(&self, m: usize) -> Result<()> {
        let leaves = self.leaves();
        if leaves.len() != m || leaves.iter().enumerate().any(|(p, &l)| l != p + 1) {
            return Err(Error::Tree(format!(
                "leaves {leaves:?} do not enumerate 1..={m}"
            )));
        }
        Ok(())
    }

    /// Right-branching tree over `1..=m` with the same label on every node.
    pub fn right_branching(m: usize, label: &JointLabel) -> Self {
        assert!(m >= 1, "tree needs at least one EDU");
        let mut tree = RstTree::Leaf(m);
        for i in (1..m).rev() {
            tree = RstTree::node(RstTree::Leaf(i), tree, label.nuc, label.rel.clone());
        }
        tree
    }
}
