//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::RngCore;
use rstparse::model::{
    EmbeddingBackbone, Hyperparams, LabelVocab, LayerPolicy, BackboneSpec, ParamStore, Parser, ToyBackbone,
};
use rstparse::model::tape::{Tape, Var};
use rstparse::oracle::{tree_to_trace, SplitTrace};
use rstparse::synthetic::{random_record, random_tree, sample_labels, TOY_VOCAB};
use rstparse::translation::{IdentityClient, TranslationClient};
use rstparse::treebank::{
    Document, JointLabel, Nuclearity, RawChild, RawNode, RawTree, Record, Relation, Role, RstTree, Tokenizer,
    WhitespaceTokenizer,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labeled_tree(m: usize, rng: &mut ChaCha8Rng) -> RstTree {
    random_tree(m, &sample_labels(), rng)
}

// ---------------------------------------------------------------- raw trees

const RAW_RELATIONS: &[&str] = &["elaboration", "cause", "contrast", "joint", "condition", "list"];

/// Random n-ary subtree over leaves numbered from `*next`. Returns the node
/// and the sum of `(children - 1)` over its groups.
fn raw_node(rng: &mut ChaCha8Rng, next: &mut usize, budget: usize, depth: usize) -> (RawNode, usize) {
    if budget == 1 || depth == 0 || rng.gen_bool(0.25) {
        let id = *next;
        *next += 1;
        return (
            RawNode::Leaf {
                id,
                text: format!("unit {id}"),
            },
            0,
        );
    }
    let arity = rng.gen_range(2..=budget.min(5));
    let mut sizes = vec![1usize; arity];
    for _ in 0..rng.gen_range(0..=budget - arity) {
        let i = rng.gen_range(0..arity);
        sizes[i] += 1;
    }
    let nucleus = rng.gen_range(0..arity);
    let multinuclear = rng.gen_bool(0.3);
    let mut expected = arity - 1;
    let children = sizes
        .into_iter()
        .enumerate()
        .map(|(c, size)| {
            let (node, sub) = raw_node(rng, next, size, depth - 1);
            expected += sub;
            let rel = RAW_RELATIONS.choose(rng).unwrap().to_string();
            let (role, relation) = if multinuclear || c == nucleus {
                (Role::Nucleus, Some(if multinuclear { rel } else { "span".into() }))
            } else {
                (Role::Satellite, Some(rel))
            };
            RawChild { role, relation, node }
        })
        .collect();
    (RawNode::Group { children }, expected)
}

/// Random single-rooted n-ary tree with up to `max_leaves` leaves, and the
/// number of binary nodes it should produce.
pub fn random_raw_tree(rng: &mut ChaCha8Rng, max_leaves: usize) -> (RawTree, usize) {
    let budget = rng.gen_range(1..=max_leaves);
    let mut next = 1;
    let (root, expected) = raw_node(rng, &mut next, budget, 6);
    (RawTree { roots: vec![root] }, expected)
}

pub fn raw_leaf_ids(node: &RawNode) -> Vec<usize> {
    node.leaves().into_iter().map(|(id, _)| id).collect()
}

/// Rewrites a binary tree in source-format roles so binarizing it again
/// must give back the same tree.
pub fn binary_to_raw(tree: &RstTree) -> RawTree {
    fn node(t: &RstTree) -> RawNode {
        match t {
            RstTree::Leaf(i) => RawNode::Leaf {
                id: *i,
                text: format!("unit {i}"),
            },
            RstTree::Node(n) => {
                let rel = n.rel.name().to_string();
                let (lr, ll, rr, rl) = match n.nuc {
                    Nuclearity::NS => (Role::Nucleus, "span".to_string(), Role::Satellite, rel),
                    Nuclearity::SN => (Role::Satellite, rel, Role::Nucleus, "span".to_string()),
                    Nuclearity::NN => (Role::Nucleus, rel.clone(), Role::Nucleus, rel),
                };
                RawNode::Group {
                    children: vec![
                        RawChild {
                            role: lr,
                            relation: Some(ll),
                            node: node(&n.left),
                        },
                        RawChild {
                            role: rr,
                            relation: Some(rl),
                            node: node(&n.right),
                        },
                    ],
                }
            }
        }
    }
    RawTree { roots: vec![node(tree)] }
}

/// Random binary tree whose relations are raw (unharmonized) names.
pub fn raw_labeled_tree(m: usize, rng: &mut ChaCha8Rng) -> RstTree {
    let labels: Vec<JointLabel> = RAW_RELATIONS
        .iter()
        .flat_map(|r| {
            [Nuclearity::NS, Nuclearity::SN, Nuclearity::NN]
                .map(|n| JointLabel::new(Relation::Raw(r.to_string()), n))
        })
        .collect();
    random_tree(m, &labels, rng)
}

// ------------------------------------------------------------------ metrics

type Span = (usize, usize);
type SetPair<T> = (BTreeSet<T>, BTreeSet<T>);

/// Internal-node spans with their labels, found by scanning every
/// sub-interval of `1..=m` and asking the tree whether it owns it.
fn owned_spans(tree: &RstTree, include_root: bool) -> BTreeMap<Span, (Nuclearity, String)> {
    fn find(t: &RstTree, span: Span) -> Option<(Nuclearity, String)> {
        match t {
            RstTree::Leaf(_) => None,
            RstTree::Node(n) => {
                if t.span() == span {
                    return Some((n.nuc, n.rel.name().to_string()));
                }
                let (ls, le) = n.left.span();
                if span.0 >= ls && span.1 <= le {
                    find(&n.left, span)
                } else {
                    find(&n.right, span)
                }
            }
        }
    }
    let (lo, hi) = tree.span();
    let mut out = BTreeMap::new();
    for i in lo..=hi {
        for j in i + 1..=hi {
            if !include_root && (i, j) == (lo, hi) {
                continue;
            }
            if let Some(l) = find(tree, (i, j)) {
                out.insert((i, j), l);
            }
        }
    }
    out
}

/// Per-pair sets for span, nuclearity and relation matching.
pub struct PairSets {
    pub sp: SetPair<Span>,
    pub nu: SetPair<(Span, Nuclearity)>,
    pub rel: SetPair<(Span, String)>,
}

pub fn pair_sets(gold: &RstTree, pred: &RstTree, include_root: bool) -> PairSets {
    let g = owned_spans(gold, include_root);
    let p = owned_spans(pred, include_root);
    PairSets {
        sp: (g.keys().copied().collect(), p.keys().copied().collect()),
        nu: (
            g.iter().map(|(s, l)| (*s, l.0)).collect(),
            p.iter().map(|(s, l)| (*s, l.0)).collect(),
        ),
        rel: (
            g.iter().map(|(s, l)| (*s, l.1.clone())).collect(),
            p.iter().map(|(s, l)| (*s, l.1.clone())).collect(),
        ),
    }
}

/// Precision/recall F1 in percent; perfect agreement on two empty sets.
pub fn prf(inter: usize, gold: usize, pred: usize) -> f64 {
    if gold == 0 && pred == 0 {
        return 100.0;
    }
    if inter == 0 {
        return 0.0;
    }
    let p = inter as f64 / pred as f64;
    let r = inter as f64 / gold as f64;
    100.0 * 2.0 * p * r / (p + r)
}

fn set_counts<T: Ord>(pair: &SetPair<T>) -> (usize, usize, usize) {
    (pair.0.intersection(&pair.1).count(), pair.0.len(), pair.1.len())
}

/// Brute-force micro and document-macro F1 for `[sp, nu, rel]`.
pub fn brute_scores(pairs: &[(RstTree, RstTree)], include_root: bool) -> ([f64; 3], [f64; 3]) {
    let mut tot = [(0, 0, 0); 3];
    let mut macro_sum = [0.0; 3];
    let mut docs = 0;
    for (g, p) in pairs {
        let s = pair_sets(g, p, include_root);
        let c = [set_counts(&s.sp), set_counts(&s.nu), set_counts(&s.rel)];
        for (t, x) in tot.iter_mut().zip(c) {
            t.0 += x.0;
            t.1 += x.1;
            t.2 += x.2;
        }
        if c[0].1 + c[0].2 > 0 {
            docs += 1;
            for (m, x) in macro_sum.iter_mut().zip(c) {
                *m += prf(x.0, x.1, x.2);
            }
        }
    }
    let micro = tot.map(|(i, g, p)| prf(i, g, p));
    let macro_ = if docs == 0 {
        [100.0; 3]
    } else {
        macro_sum.map(|s| s / docs as f64)
    };
    (micro, macro_)
}

/// Brute-force class-averaged F1 for nuclearity and relation.
pub fn brute_class_scores(pairs: &[(RstTree, RstTree)], include_root: bool) -> (f64, f64) {
    fn per_class<C: Ord + Clone>(items: Vec<(usize, SetPair<(Span, C)>)>) -> f64 {
        let classes: BTreeSet<C> = items
            .iter()
            .flat_map(|(_, (g, p))| g.iter().chain(p).map(|(_, c)| c.clone()))
            .collect();
        if classes.is_empty() {
            return 100.0;
        }
        let f: Vec<f64> = classes
            .iter()
            .map(|c| {
                let tag = |d: usize, s: &BTreeSet<(Span, C)>| -> BTreeSet<(usize, Span)> {
                    s.iter().filter(|(_, x)| x == c).map(|(sp, _)| (d, *sp)).collect()
                };
                let (mut gold, mut pred) = (BTreeSet::new(), BTreeSet::new());
                for (d, (g, p)) in &items {
                    gold.extend(tag(*d, g));
                    pred.extend(tag(*d, p));
                }
                prf(gold.intersection(&pred).count(), gold.len(), pred.len())
            })
            .collect();
        f.iter().sum::<f64>() / f.len() as f64
    }
    let sets: Vec<PairSets> = pairs.iter().map(|(g, p)| pair_sets(g, p, include_root)).collect();
    let nu = per_class(sets.iter().enumerate().map(|(d, s)| (d, s.nu.clone())).collect());
    let rel = per_class(sets.iter().enumerate().map(|(d, s)| (d, s.rel.clone())).collect());
    (nu, rel)
}

/// Gold and predicted trees over the same EDUs. Half of the predictions are
/// relabeled copies of the gold tree so label matches are exercised.
pub fn random_pair(rng: &mut ChaCha8Rng, max_m: usize) -> (RstTree, RstTree) {
    let m = rng.gen_range(1..=max_m);
    let gold = labeled_tree(m, rng);
    let pred = if rng.gen_bool(0.5) {
        relabel(&gold, rng)
    } else {
        labeled_tree(m, rng)
    };
    (gold, pred)
}

fn relabel(t: &RstTree, rng: &mut ChaCha8Rng) -> RstTree {
    match t {
        RstTree::Leaf(i) => RstTree::Leaf(*i),
        RstTree::Node(n) => {
            let (nuc, rel) = if rng.gen_bool(0.5) {
                (n.nuc, n.rel.clone())
            } else {
                let l = sample_labels().choose(rng).unwrap().clone();
                (l.nuc, l.rel)
            };
            RstTree::node(relabel(&n.left, rng), relabel(&n.right, rng), nuc, rel)
        }
    }
}

pub fn tree(s: &str) -> RstTree {
    // Tiny s-expression reader: `(NS:Rel left right)` or an EDU number.
    fn parse(tokens: &mut std::iter::Peekable<std::vec::IntoIter<String>>) -> RstTree {
        let t = tokens.next().unwrap();
        if t != "(" {
            return RstTree::Leaf(t.parse().unwrap());
        }
        let head = tokens.next().unwrap();
        let (nuc, rel) = head.split_once(':').unwrap();
        let left = parse(tokens);
        let right = parse(tokens);
        assert_eq!(tokens.next().as_deref(), Some(")"));
        RstTree::node(left, right, nuc.parse().unwrap(), Relation::Coarse(rel.to_string()))
    }
    let spaced = s.replace('(', " ( ").replace(')', " ) ");
    let tokens: Vec<String> = spaced.split_whitespace().map(str::to_string).collect();
    parse(&mut tokens.into_iter().peekable())
}

// ------------------------------------------------------------------ models

/// A labeled synthetic corpus over the toy vocabulary.
pub fn toy_corpus(n: usize, m_range: std::ops::RangeInclusive<usize>, seed: u64) -> Vec<Record> {
    let mut rng = rng(seed);
    (0..n)
        .map(|d| {
            let m = rng.gen_range(m_range.clone());
            random_record(&format!("doc{d}"), "en", m, &sample_labels(), TOY_VOCAB, &mut rng)
        })
        .collect()
}

pub fn toy_parser(hp: Hyperparams, corpus: &[Record], labels: Vec<JointLabel>, seed: u64) -> Parser {
    let backbone = Box::new(ToyBackbone::from_corpus(corpus, hp.d_emb, 1));
    Parser::new(hp, backbone, LabelVocab::new(labels).unwrap(), Vec::new(), seed).unwrap()
}

/// Relative error `‖a − n‖ / (‖a‖ + ‖n‖)` between analytic and central
/// finite-difference gradients, per parameter tensor.
pub fn gradient_errors(parser: &mut Parser, doc: &Document, gold: &SplitTrace, h: f64) -> Vec<(String, f64)> {
    let analytic = parser.compute_loss(doc, gold, None).unwrap().grads;
    let loss = |p: &Parser| p.compute_loss(doc, gold, None).unwrap().total;
    let mut out = Vec::new();
    for id in 0..parser.params.len() {
        let n = parser.params.get(id).len();
        let a = analytic.dense(id, n);
        let mut numeric = vec![0.0; n];
        for (x, slot) in numeric.iter_mut().enumerate() {
            let orig = parser.params.get(id).data[x];
            parser.params.get_mut(id).data[x] = orig + h;
            let up = loss(parser);
            parser.params.get_mut(id).data[x] = orig - h;
            let down = loss(parser);
            parser.params.get_mut(id).data[x] = orig;
            *slot = (up - down) / (2.0 * h);
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a.iter().zip(&numeric).map(|(p, q)| p - q).collect();
        let denom = norm(&a) + norm(&numeric);
        let rel = if denom < 1e-10 { 0.0 } else { norm(&diff) / denom };
        out.push((parser.params.get(id).name.clone(), rel));
    }
    out
}

/// One random configuration of the gradient-check model: d = 8, four
/// labels, 2..=5 EDUs.
pub fn gradient_case(seed: u64) -> (Parser, Document, SplitTrace) {
    let mut r = rng(seed);
    let labels: Vec<JointLabel> = sample_labels().into_iter().take(4).collect();
    let m = r.gen_range(2..=5);
    let rec = random_record(&format!("g{seed}"), "en", m, &labels, TOY_VOCAB, &mut r);
    let hp = Hyperparams {
        d_emb: 8,
        d_hidden: 8,
        d_label: 8,
        weight_decay: 1e-3,
        init_range: 0.5,
        ..Hyperparams::toy()
    };
    let parser = toy_parser(hp, std::slice::from_ref(&rec), labels, seed);
    let trace = tree_to_trace(rec.gold().unwrap(), &rec.doc.doc_id).unwrap();
    (parser, rec.doc, trace)
}

/// Span and joint-label accuracy of greedy parses against gold splits.
pub fn training_accuracy(parser: &Parser, corpus: &[Record]) -> (f64, f64) {
    let (mut spans, mut labels, mut total) = (0, 0, 0);
    for r in corpus {
        let gold = tree_to_trace(r.gold().unwrap(), "g").unwrap();
        let pred = tree_to_trace(&parser.parse(&r.doc).unwrap(), "p").unwrap();
        let by_split: HashMap<_, _> = gold.steps.iter().map(|s| ((s.span, s.split_at), &s.label)).collect();
        for s in &pred.steps {
            total += 1;
            if let Some(l) = by_split.get(&(s.span, s.split_at)) {
                spans += 1;
                labels += usize::from(*l == &s.label);
            }
        }
    }
    (spans as f64 / total as f64, labels as f64 / total as f64)
}

/// Backbone whose token vectors depend on the whole window: each vector
/// mixes a token hash, the token's position and the window's mean hash.
pub struct ContextBackbone;

pub const CONTEXT_DIM: usize = 4;

fn token_hash(t: &str) -> f64 {
    let h = t.bytes().fold(2166136261u32, |h, b| (h ^ b as u32).wrapping_mul(16777619));
    (h % 10_000) as f64 / 10_000.0
}

impl EmbeddingBackbone for ContextBackbone {
    fn kind(&self) -> &str {
        "context-test"
    }

    fn dim(&self) -> usize {
        CONTEXT_DIM
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        &WhitespaceTokenizer
    }

    fn layer_policy(&self) -> LayerPolicy {
        LayerPolicy {
            total_layers: 1,
            trainable_last: 0,
        }
    }

    fn init_params(&mut self, _: &mut ParamStore, _: f64, _: &mut ChaCha8Rng) -> rstparse::Result<()> {
        Ok(())
    }

    fn bind_params(&mut self, _: &ParamStore) -> rstparse::Result<()> {
        Ok(())
    }

    fn embed(&self, tape: &mut Tape, tokens: &[String]) -> Vec<Var> {
        let hashes: Vec<f64> = tokens.iter().map(|t| token_hash(t)).collect();
        let ctx = hashes.iter().sum::<f64>() / hashes.len() as f64;
        hashes
            .iter()
            .enumerate()
            .map(|(p, &h)| {
                let pos = p as f64 / tokens.len() as f64;
                tape.input(vec![h, ctx, (h * 7.0 + pos).sin(), h * ctx + pos])
            })
            .collect()
    }

    fn spec(&self) -> Option<BackboneSpec> {
        None
    }
}

pub fn random_tokens(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..n).map(|_| TOY_VOCAB.choose(rng).unwrap().to_string()).collect()
}

// ------------------------------------------------------------- translation

/// Identity translation that counts client calls and segments.
#[derive(Default)]
pub struct CountingClient {
    pub calls: AtomicUsize,
    pub segments: AtomicUsize,
}

impl CountingClient {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl TranslationClient for CountingClient {
    fn id(&self) -> &str {
        "counting"
    }

    fn translate_batch(&self, texts: &[String], source: &str, target: &str) -> rstparse::Result<Vec<String>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.segments.fetch_add(texts.len(), Ordering::SeqCst);
        IdentityClient.translate_batch(texts, source, target)
    }
}

// ----------------------------------------------------------------- analysis

pub const TOPIC_A: &[&str] = &[
    "market", "shares", "profit", "investor", "dividend", "bond", "revenue", "quarter", "earnings",
    "stock", "trading", "capital", "merger", "portfolio", "banker",
];
pub const TOPIC_B: &[&str] = &[
    "rainfall", "glacier", "storm", "humidity", "climate", "monsoon", "drought", "thunder", "forecast",
    "cyclone", "snowfall", "breeze", "temperature", "flood", "weather",
];

/// `n` documents alternating between two disjoint vocabularies, with the
/// generating topic of each.
pub fn planted_corpus(n: usize, len: usize, seed: u64) -> (Vec<String>, Vec<usize>) {
    let mut r = rng(seed);
    (0..n)
        .map(|d| {
            let (vocab, class) = if d % 2 == 0 { (TOPIC_A, 0) } else { (TOPIC_B, 1) };
            let text = (0..len).map(|_| *vocab.choose(&mut r).unwrap()).collect::<Vec<_>>().join(" ");
            (text, class)
        })
        .unzip()
}

/// Cluster purity: documents go to their most probable topic, each topic
/// is credited with its majority class.
pub fn purity_oracle(theta: &[Vec<f64>], classes: &[usize]) -> f64 {
    let mut counts: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
    for (row, &c) in theta.iter().zip(classes) {
        let mut best = 0;
        for (t, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = t;
            }
        }
        *counts.entry(best).or_default().entry(c).or_default() += 1;
    }
    let hits: usize = counts.values().map(|m| *m.values().max().unwrap()).sum();
    hits as f64 / theta.len() as f64
}

pub fn seed_stream(seed: u64) -> impl Iterator<Item = u64> {
    let mut r = rng(seed);
    std::iter::repeat_with(move || r.next_u64())
}
