//! The full parser: greedy top-down decoding and the training loss.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{push_children, trace_to_tree, SplitStep, SplitTrace};
use crate::treebank::{Document, JointLabel, Nuclearity, Record, Relation, RstTree};

use super::backbone::EmbeddingBackbone;
use super::classifier::Classifier;
use super::encoder::{EncodedDocument, Encoder};
use super::hyper::Hyperparams;
use super::params::{Gradients, ParamStore};
use super::pointer::{span_mean, Decoder};
use super::tape::{argmax, Tape, Var};
use super::window::encode_tokens;

/// Serialized form of one joint label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub rel: String,
    pub coarse: bool,
    pub nuc: Nuclearity,
}

/// The closed set of joint labels the classifier predicts, in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocab {
    labels: Vec<JointLabel>,
    index: HashMap<JointLabel, usize>,
}

impl LabelVocab {
    pub fn new(labels: impl IntoIterator<Item = JointLabel>) -> Result<Self> {
        let set: BTreeSet<JointLabel> = labels.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Config("empty joint-label vocabulary".into()));
        }
        let labels: Vec<JointLabel> = set.into_iter().collect();
        let index = labels.iter().cloned().enumerate().map(|(i, l)| (l, i)).collect();
        Ok(LabelVocab { labels, index })
    }

    /// Every label occurring in the gold trees of `corpus`.
    pub fn from_corpus(corpus: &[Record]) -> Result<Self> {
        let mut all = Vec::new();
        for r in corpus {
            r.gold()?.for_each_node(&mut |n| all.push(JointLabel::new(n.rel.clone(), n.nuc)));
        }
        Self::new(all)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize) -> &JointLabel {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &JointLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn labels(&self) -> &[JointLabel] {
        &self.labels
    }

    pub fn to_entries(&self) -> Vec<LabelEntry> {
        self.labels
            .iter()
            .map(|l| LabelEntry {
                rel: l.rel.name().to_string(),
                coarse: l.rel.is_coarse(),
                nuc: l.nuc,
            })
            .collect()
    }

    pub fn from_entries(entries: &[LabelEntry]) -> Result<Self> {
        Self::new(entries.iter().map(|e| {
            let rel = if e.coarse {
                Relation::Coarse(e.rel.clone())
            } else {
                Relation::Raw(e.rel.clone())
            };
            JointLabel::new(rel, e.nuc)
        }))
    }
}

/// Greedy decoding output with the distributions seen at every step.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub trace: SplitTrace,
    pub pointer_probs: Vec<Vec<f64>>,
    pub label_probs: Vec<Vec<f64>>,
}

/// Loss terms for one document (or batch) and the gradient of their sum.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: f64,
    pub structure: f64,
    pub label: f64,
    pub regularizer: f64,
    pub grads: Gradients,
}

pub struct Parser {
    pub hp: Hyperparams,
    pub labels: LabelVocab,
    /// Relation inventory the labels were harmonized onto (may be empty).
    pub inventory: Vec<String>,
    pub params: ParamStore,
    pub backbone: Box<dyn EmbeddingBackbone>,
    pub seed: u64,
    encoder: Encoder,
    decoder: Decoder,
    classifier: Classifier,
}

impl std::fmt::Debug for Parser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Parser")
            .field("hp", &self.hp)
            .field("labels", &self.labels.len())
            .field("backbone", &self.backbone.kind())
            .field("params", &self.params.scalar_count())
            .field("seed", &self.seed)
            .finish()
    }
}

impl Parser {
    /// Freshly initialized parser.
    pub fn new(
        hp: Hyperparams,
        mut backbone: Box<dyn EmbeddingBackbone>,
        labels: LabelVocab,
        inventory: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        hp.validate()?;
        if backbone.dim() != hp.d_emb {
            return Err(Error::Config(format!(
                "backbone dimension {} differs from d_emb {}",
                backbone.dim(),
                hp.d_emb
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        backbone.init_params(&mut params, hp.init_range, &mut rng)?;
        let encoder = Encoder::register(
            &mut params,
            hp.d_emb,
            hp.d_hidden,
            hp.encoder_layers,
            hp.init_range,
            &mut rng,
        )?;
        let decoder = Decoder::register(&mut params, hp.d_hidden, hp.init_range, &mut rng)?;
        let classifier = Classifier::register(
            &mut params,
            hp.d_hidden,
            hp.d_label,
            labels.len(),
            hp.init_range,
            &mut rng,
        )?;
        Ok(Parser {
            hp,
            labels,
            inventory,
            params,
            backbone,
            seed,
            encoder,
            decoder,
            classifier,
        })
    }

    /// Rebuilds a parser around existing parameters.
    pub fn from_parts(
        hp: Hyperparams,
        mut backbone: Box<dyn EmbeddingBackbone>,
        labels: LabelVocab,
        inventory: Vec<String>,
        params: ParamStore,
        seed: u64,
    ) -> Result<Self> {
        hp.validate()?;
        backbone.bind_params(&params)?;
        let encoder = Encoder::bind(&params, hp.d_emb, hp.d_hidden, hp.encoder_layers)?;
        let decoder = Decoder::bind(&params, hp.d_hidden)?;
        let classifier = Classifier::bind(&params, hp.d_hidden, hp.d_label, labels.len())?;
        Ok(Parser {
            hp,
            labels,
            inventory,
            params,
            backbone,
            seed,
            encoder,
            decoder,
            classifier,
        })
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    fn encode(&self, tape: &mut Tape, doc: &Document, dropout: Option<&mut ChaCha8Rng>) -> Result<EncodedDocument> {
        if doc.edus.is_empty() {
            return Err(Error::Document(format!("{}: no EDUs", doc.doc_id)));
        }
        let tokens = encode_tokens(tape, self.backbone.as_ref(), &doc.tokens, self.hp.window, self.hp.stride);
        let mut enc = self.encoder.encode(tape, doc, tokens)?;
        if let Some(rng) = dropout {
            let p = self.hp.dropout;
            enc.edus = enc
                .edus
                .iter()
                .map(|&e| apply_dropout(tape, e, p, rng))
                .collect();
        }
        Ok(enc)
    }

    /// Greedy decoding with the per-step distributions.
    pub fn decode(&self, doc: &Document) -> Result<Decoded> {
        let m = doc.edu_count();
        let mut trace = SplitTrace {
            doc_id: doc.doc_id.clone(),
            edu_count: m,
            steps: Vec::with_capacity(m.saturating_sub(1)),
        };
        let mut pointer_probs = Vec::new();
        let mut label_probs = Vec::new();
        if m == 0 {
            return Err(Error::Document(format!("{}: no EDUs", doc.doc_id)));
        }
        if m > 1 {
            let mut tape = Tape::new(&self.params);
            let enc = self.encode(&mut tape, doc, None)?;
            let mut h = enc.final_state;
            let mut stack = vec![(1, m)];
            while let Some(span) = stack.pop() {
                let repr = span_mean(&mut tape, &enc.edus, span);
                let step = self.decoder.step(&mut tape, h, repr, &enc.edus, span)?;
                h = step.hidden;
                let k = step.split_at;
                let left = span_mean(&mut tape, &enc.edus, (span.0, k));
                let right = span_mean(&mut tape, &enc.edus, (k + 1, span.1));
                let probs = self.classifier.classify(&mut tape, left, right)?;
                let label = self.labels.get(argmax(&probs)).clone();
                trace.steps.push(SplitStep {
                    span,
                    split_at: k,
                    label: Some(label),
                });
                pointer_probs.push(step.probs);
                label_probs.push(probs);
                push_children(&mut stack, span, k);
            }
        }
        Ok(Decoded {
            trace,
            pointer_probs,
            label_probs,
        })
    }

    /// Greedy parse into a binary labeled tree.
    pub fn parse(&self, doc: &Document) -> Result<RstTree> {
        let decoded = self.decode(doc)?;
        trace_to_tree(&decoded.trace, true)
    }

    /// `L_s + L_l` under teacher forcing, without the regularizer. Gradients
    /// are accumulated into `grads`. Pass an RNG to enable dropout.
    pub fn document_loss(
        &self,
        doc: &Document,
        gold: &SplitTrace,
        dropout: Option<&mut ChaCha8Rng>,
        grads: &mut Gradients,
    ) -> Result<(f64, f64)> {
        let m = doc.edu_count();
        if gold.edu_count != m {
            return Err(Error::Contract(format!(
                "{}: trace covers {} EDUs, document has {m}",
                doc.doc_id, gold.edu_count
            )));
        }
        if gold.steps.is_empty() {
            return Ok((0.0, 0.0));
        }
        let mut tape = Tape::new(&self.params);
        let mut rng = dropout;
        let enc = self.encode(&mut tape, doc, rng.as_deref_mut())?;
        let mut h = enc.final_state;
        let mut s_terms = Vec::with_capacity(gold.steps.len());
        let mut l_terms = Vec::with_capacity(gold.steps.len());
        for (n, step) in gold.steps.iter().enumerate() {
            let (i, j) = step.span;
            let k = step.split_at;
            if !(i <= k && k < j) {
                return Err(Error::Trace {
                    step: n,
                    message: format!("split {k} outside ({i}, {j})"),
                });
            }
            let label = step.label.as_ref().ok_or_else(|| Error::Trace {
                step: n,
                message: "gold step has no label".into(),
            })?;
            let target = self.labels.index_of(label).ok_or_else(|| {
                Error::Contract(format!("gold label {label} is not in the label vocabulary"))
            })?;
            let mut repr = span_mean(&mut tape, &enc.edus, step.span);
            if let Some(r) = rng.as_deref_mut() {
                repr = apply_dropout(&mut tape, repr, self.hp.dropout, r);
            }
            let ptr = self.decoder.step(&mut tape, h, repr, &enc.edus, step.span)?;
            h = ptr.hidden;
            s_terms.push(tape.neg_log_softmax(ptr.scores, k - i));
            let left = span_mean(&mut tape, &enc.edus, (i, k));
            let right = span_mean(&mut tape, &enc.edus, (k + 1, j));
            let logits = self.classifier.logits(&mut tape, left, right)?;
            l_terms.push(tape.neg_log_softmax(logits, target));
        }
        let ls = tape.sum(&s_terms);
        let ll = tape.sum(&l_terms);
        let (vs, vl) = (tape.scalar(ls), tape.scalar(ll));
        if !(vs.is_finite() && vl.is_finite()) {
            return Err(Error::Numerical(format!(
                "{}: non-finite loss (structure {vs}, label {vl})",
                doc.doc_id
            )));
        }
        let total = tape.sum(&[ls, ll]);
        tape.backward(total, 1.0, grads);
        Ok((vs, vl))
    }

    /// `L_total = L_s + L_l + λ‖θ‖²` for one document with its gradients.
    pub fn compute_loss(
        &self,
        doc: &Document,
        gold: &SplitTrace,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<LossBreakdown> {
        let mut grads = Gradients::for_store(&self.params);
        let (structure, label) = self.document_loss(doc, gold, dropout, &mut grads)?;
        let regularizer = self.add_regularizer(&mut grads);
        let total = structure + label + regularizer;
        if !total.is_finite() || !grads.all_finite() {
            return Err(Error::Numerical(format!("{}: non-finite loss or gradient", doc.doc_id)));
        }
        Ok(LossBreakdown {
            total,
            structure,
            label,
            regularizer,
            grads,
        })
    }

    /// Adds `∇ λ‖θ‖² = 2λθ` to `grads` and returns `λ‖θ‖²`.
    pub fn add_regularizer(&self, grads: &mut Gradients) -> f64 {
        let lambda = self.hp.weight_decay;
        if lambda == 0.0 {
            return 0.0;
        }
        grads.add_scaled_params(&self.params, 2.0 * lambda);
        lambda * self.params.squared_norm()
    }
}

/// Inverted dropout with a freshly sampled mask.
fn apply_dropout(tape: &mut Tape, x: Var, p: f64, rng: &mut ChaCha8Rng) -> Var {
    if p == 0.0 {
        return x;
    }
    let keep = 1.0 / (1.0 - p);
    let mask = (0..tape.dim(x))
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect();
    tape.scale(x, mask)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::model::backbone::ToyBackbone;
    use crate::oracle::tree_to_trace;
    use crate::synthetic::{random_record, sample_labels, TOY_VOCAB};

    fn parser(records: &[Record], init: f64, seed: u64) -> Parser {
        let hp = Hyperparams {
            d_emb: 6,
            d_hidden: 6,
            d_label: 5,
            init_range: init,
            weight_decay: 0.0,
            ..Hyperparams::toy()
        };
        let backbone = ToyBackbone::from_corpus(records, hp.d_emb, 1);
        let labels = LabelVocab::new(sample_labels()).unwrap();
        Parser::new(hp, Box::new(backbone), labels, Vec::new(), seed).unwrap()
    }

    fn records(n: usize, seed: u64) -> Vec<Record> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|d| {
                let m = rng.gen_range(1..=9);
                random_record(&format!("d{d}"), "en", m, &sample_labels(), TOY_VOCAB, &mut rng)
            })
            .collect()
    }

    #[test]
    fn zero_parameters_give_uniform_loss() {
        let recs = records(12, 3);
        let p = parser(&recs, 0.0, 1);
        let r = p.label_count() as f64;
        for rec in &recs {
            let gold = tree_to_trace(rec.gold().unwrap(), &rec.doc.doc_id).unwrap();
            let expected: f64 = gold
                .steps
                .iter()
                .map(|s| ((s.span.1 - s.span.0) as f64).ln() + r.ln())
                .sum();
            let loss = p.compute_loss(&rec.doc, &gold, None).unwrap();
            assert!((loss.total - expected).abs() < 1e-10, "{} vs {expected}", loss.total);
            assert_eq!(loss.regularizer, 0.0);
        }
    }

    #[test]
    fn regularizer_matches_norm() {
        let recs = records(1, 4);
        let mut p = parser(&recs, 0.1, 2);
        p.hp.weight_decay = 5e-5;
        let gold = tree_to_trace(recs[0].gold().unwrap(), "d0").unwrap();
        let loss = p.compute_loss(&recs[0].doc, &gold, None).unwrap();
        let expected = 5e-5 * p.params.squared_norm();
        assert!((loss.regularizer - expected).abs() < 1e-15);
        assert!((loss.total - loss.structure - loss.label - expected).abs() < 1e-12);
    }

    #[test]
    fn single_and_two_edu_documents() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let one = random_record("one", "en", 1, &sample_labels(), TOY_VOCAB, &mut rng);
        let two = random_record("two", "en", 2, &sample_labels(), TOY_VOCAB, &mut rng);
        let p = parser(&[one.clone(), two.clone()], 0.1, 5);
        assert_eq!(p.parse(&one.doc).unwrap(), RstTree::Leaf(1));
        let d = p.decode(&two.doc).unwrap();
        assert_eq!(d.trace.steps.len(), 1);
        assert_eq!(d.trace.steps[0].split_at, 1);
        assert_eq!(d.pointer_probs[0], vec![1.0]);
        let best = argmax(&d.label_probs[0]);
        assert_eq!(d.trace.steps[0].label.as_ref(), Some(p.labels.get(best)));
    }

    #[test]
    fn random_parameters_yield_valid_trees() {
        let recs = records(40, 7);
        for seed in 0..3 {
            let p = parser(&recs, 0.5, seed);
            for rec in &recs {
                let m = rec.doc.edu_count();
                let tree = p.parse(&rec.doc).unwrap();
                tree.validate(m).unwrap();
                assert_eq!(tree.leaves(), (1..=m).collect::<Vec<_>>());
                assert_eq!(tree.internal_count(), m - 1);
            }
        }
    }

    #[test]
    fn parsing_is_deterministic() {
        let recs = records(5, 8);
        let a = parser(&recs, 0.3, 11);
        let b = parser(&recs, 0.3, 11);
        assert_eq!(a.params, b.params);
        for rec in &recs {
            let x = a.decode(&rec.doc).unwrap();
            let y = b.decode(&rec.doc).unwrap();
            assert_eq!(x.trace, y.trace);
            assert_eq!(x.label_probs, y.label_probs);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let recs = records(6, 10);
        let p = parser(&recs, 0.3, 12);
        let q = Parser::from_checkpoint_json(&p.to_checkpoint_json().unwrap()).unwrap();
        assert_eq!(p.params, q.params);
        assert_eq!(p.labels, q.labels);
        for rec in &recs {
            assert_eq!(p.decode(&rec.doc).unwrap().label_probs, q.decode(&rec.doc).unwrap().label_probs);
        }
    }

    #[test]
    fn unknown_gold_label_is_rejected() {
        let recs = records(3, 13);
        let p = parser(&recs, 0.1, 1);
        let rec = recs.iter().find(|r| r.doc.edu_count() > 1).unwrap();
        let mut gold = tree_to_trace(rec.gold().unwrap(), "x").unwrap();
        gold.steps[0].label = Some(JointLabel::new(Relation::Coarse("Nope".into()), Nuclearity::NN));
        assert!(matches!(p.compute_loss(&rec.doc, &gold, None), Err(Error::Contract(_))));
        gold.edu_count += 1;
        assert!(p.compute_loss(&rec.doc, &gold, None).is_err());
    }

    #[test]
    fn bad_checkpoint_format() {
        let recs = records(2, 1);
        let p = parser(&recs, 0.1, 1);
        let json = p.to_checkpoint_json().unwrap().replace(CHECKPOINT_TAG, "other/9");
        assert!(matches!(Parser::from_checkpoint_json(&json), Err(Error::Checkpoint(_))));
    }

    const CHECKPOINT_TAG: &str = crate::model::CHECKPOINT_FORMAT;
}
