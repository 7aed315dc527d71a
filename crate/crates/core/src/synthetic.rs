//! Random trees and documents for tests, benchmarks and demos.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::treebank::{Document, JointLabel, Nuclearity, Record, Relation, RstTree, WhitespaceTokenizer};

/// A uniformly split random binary tree over EDUs `first..=last`.
pub fn random_tree_span<R: Rng>(first: usize, last: usize, labels: &[JointLabel], rng: &mut R) -> RstTree {
    if first == last {
        return RstTree::Leaf(first);
    }
    let k = rng.gen_range(first..last);
    let label = labels.choose(rng).expect("at least one label").clone();
    RstTree::node(
        random_tree_span(first, k, labels, rng),
        random_tree_span(k + 1, last, labels, rng),
        label.nuc,
        label.rel,
    )
}

pub fn random_tree<R: Rng>(m: usize, labels: &[JointLabel], rng: &mut R) -> RstTree {
    random_tree_span(1, m, labels, rng)
}

/// A few coarse joint labels.
pub fn sample_labels() -> Vec<JointLabel> {
    [
        ("Elaboration", Nuclearity::NS),
        ("Attribution", Nuclearity::SN),
        ("Joint", Nuclearity::NN),
        ("Contrast", Nuclearity::NN),
        ("Cause", Nuclearity::NS),
    ]
    .into_iter()
    .map(|(r, n)| JointLabel::new(Relation::Coarse(r.to_string()), n))
    .collect()
}

/// A document of `m` EDUs with 1..=`max_tokens` tokens each, drawn from `vocab`.
pub fn random_document<R: Rng>(
    doc_id: &str,
    lang: &str,
    m: usize,
    max_tokens: usize,
    vocab: &[&str],
    rng: &mut R,
) -> Document {
    let edus: Vec<String> = (0..m)
        .map(|_| {
            let n = rng.gen_range(1..=max_tokens);
            (0..n)
                .map(|_| *vocab.choose(rng).expect("non-empty vocabulary"))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    Document::from_edus(doc_id, lang, &edus, "synthetic", &WhitespaceTokenizer)
        .expect("non-empty EDUs")
}

/// A labeled record with a random document and tree.
pub fn random_record<R: Rng>(
    doc_id: &str,
    lang: &str,
    m: usize,
    labels: &[JointLabel],
    vocab: &[&str],
    rng: &mut R,
) -> Record {
    let doc = random_document(doc_id, lang, m, 4, vocab, rng);
    let tree = random_tree(m, labels, rng);
    Record::new(doc, Some(tree))
}

pub const TOY_VOCAB: &[&str] = &[
    "the", "report", "said", "because", "however", "sales", "rose", "but", "costs", "fell",
    "and", "then", "we", "left", "although", "it", "rained", "so", "prices", "grew",
];
