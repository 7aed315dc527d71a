//! Labeled-span scoring of predicted trees against gold trees, and the
//! most-frequent-label right-branching baseline.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::{Document, JointLabel, Nuclearity, Record, RstTree};

/// One internal node as `(i, j, nuc, rel)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledSpan {
    pub i: usize,
    pub j: usize,
    pub nuc: Nuclearity,
    pub rel: String,
}

/// How macro averages are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MacroMode {
    /// Mean of per-document F1.
    #[default]
    Document,
    /// Mean of per-label F1 (nuclearity classes for Nu, relation classes
    /// for Rel; Sp has a single class).
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Count the span covering the whole document.
    pub include_root: bool,
    pub macro_mode: MacroMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            include_root: true,
            macro_mode: MacroMode::Document,
        }
    }
}

/// Span, nuclearity and relation scores in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricScores {
    pub sp: f64,
    pub nu: f64,
    pub rel: f64,
}

impl MetricScores {
    pub fn mean(&self) -> f64 {
        (self.sp + self.nu + self.rel) / 3.0
    }

    fn zip(self, o: MetricScores, f: impl Fn(f64, f64) -> f64) -> MetricScores {
        MetricScores {
            sp: f(self.sp, o.sp),
            nu: f(self.nu, o.nu),
            rel: f(self.rel, o.rel),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub macro_f1: MetricScores,
    pub micro_f1: MetricScores,
    pub documents: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    pub pooled: ScoreSet,
    pub per_language: BTreeMap<String, ScoreSet>,
}

impl ScoreReport {
    /// Element-wise mean of several reports. Languages missing from some
    /// reports are averaged over the reports that have them.
    pub fn mean(reports: &[ScoreReport]) -> Option<ScoreReport> {
        if reports.is_empty() {
            return None;
        }
        let avg = |sets: Vec<&ScoreSet>| {
            let n = sets.len() as f64;
            let mut out = ScoreSet::default();
            for s in &sets {
                out.macro_f1 = out.macro_f1.zip(s.macro_f1, |a, b| a + b);
                out.micro_f1 = out.micro_f1.zip(s.micro_f1, |a, b| a + b);
            }
            out.macro_f1 = out.macro_f1.zip(out.macro_f1, |a, _| a / n);
            out.micro_f1 = out.micro_f1.zip(out.micro_f1, |a, _| a / n);
            out.documents = sets[0].documents;
            out
        };
        let pooled = avg(reports.iter().map(|r| &r.pooled).collect());
        let langs: BTreeSet<&String> = reports.iter().flat_map(|r| r.per_language.keys()).collect();
        let per_language = langs
            .into_iter()
            .map(|l| {
                let sets = reports.iter().filter_map(|r| r.per_language.get(l)).collect();
                (l.clone(), avg(sets))
            })
            .collect();
        Some(ScoreReport {
            pooled,
            per_language,
        })
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<8} {:>5}  {:>7} {:>7} {:>7}  {:>7} {:>7} {:>7}",
            "lang", "docs", "macSp", "macNu", "macRel", "micSp", "micNu", "micRel"
        )?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, s: &ScoreSet| {
            writeln!(
                f,
                "{:<8} {:>5}  {:>7.2} {:>7.2} {:>7.2}  {:>7.2} {:>7.2} {:>7.2}",
                name,
                s.documents,
                s.macro_f1.sp,
                s.macro_f1.nu,
                s.macro_f1.rel,
                s.micro_f1.sp,
                s.micro_f1.nu,
                s.micro_f1.rel
            )
        };
        for (lang, s) in &self.per_language {
            row(f, lang, s)?;
        }
        row(f, "all", &self.pooled)
    }
}

/// Internal-node spans of `tree`, ordered by `(i, j)`.
pub fn extract_spans(tree: &RstTree, include_root: bool) -> Vec<LabeledSpan> {
    let root = tree.span();
    let mut out = Vec::new();
    collect(tree, &mut out);
    if !include_root {
        out.retain(|s| (s.i, s.j) != root);
    }
    out.sort();
    out
}

fn collect(tree: &RstTree, out: &mut Vec<LabeledSpan>) {
    if let RstTree::Node(n) = tree {
        let (i, _) = n.left.span();
        let (_, j) = n.right.span();
        out.push(LabeledSpan {
            i,
            j,
            nuc: n.nuc,
            rel: n.rel.name().to_string(),
        });
        collect(&n.left, out);
        collect(&n.right, out);
    }
}

/// Match counts of one tree pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    gold: usize,
    pred: usize,
    sp: usize,
    nu: usize,
    rel: usize,
}

impl Counts {
    fn add(&mut self, o: Counts) {
        self.gold += o.gold;
        self.pred += o.pred;
        self.sp += o.sp;
        self.nu += o.nu;
        self.rel += o.rel;
    }

    fn scores(&self) -> MetricScores {
        MetricScores {
            sp: f1(self.sp, self.gold, self.pred),
            nu: f1(self.nu, self.gold, self.pred),
            rel: f1(self.rel, self.gold, self.pred),
        }
    }
}

/// F1 in percent. Two empty sets agree perfectly.
fn f1(matched: usize, gold: usize, pred: usize) -> f64 {
    if gold == 0 && pred == 0 {
        return 100.0;
    }
    if matched == 0 {
        return 0.0;
    }
    200.0 * matched as f64 / (gold + pred) as f64
}

fn check_pair(gold: &RstTree, pred: &RstTree) -> Result<()> {
    let (g, p) = (gold.leaf_count(), pred.leaf_count());
    if g != p {
        return Err(Error::Eval(format!("gold tree has {g} EDUs, prediction has {p}")));
    }
    Ok(())
}

fn pair_counts(gold: &RstTree, pred: &RstTree, include_root: bool) -> Result<Counts> {
    check_pair(gold, pred)?;
    let g = extract_spans(gold, include_root);
    let p = extract_spans(pred, include_root);
    let by_span: HashMap<(usize, usize), &LabeledSpan> = g.iter().map(|s| ((s.i, s.j), s)).collect();
    let mut c = Counts {
        gold: g.len(),
        pred: p.len(),
        ..Counts::default()
    };
    for s in &p {
        if let Some(gs) = by_span.get(&(s.i, s.j)) {
            c.sp += 1;
            c.nu += usize::from(gs.nuc == s.nuc);
            c.rel += usize::from(gs.rel == s.rel);
        }
    }
    Ok(c)
}

/// F1 pooled over all pairs.
pub fn micro_scores(pairs: &[(&RstTree, &RstTree)], opts: &EvalOptions) -> Result<MetricScores> {
    let mut total = Counts::default();
    for (g, p) in pairs {
        total.add(pair_counts(g, p, opts.include_root)?);
    }
    Ok(total.scores())
}

/// Macro-averaged F1 as selected by `opts.macro_mode`. Documents without
/// any scored span are skipped; if none remain the score is 100.
pub fn macro_scores(pairs: &[(&RstTree, &RstTree)], opts: &EvalOptions) -> Result<MetricScores> {
    match opts.macro_mode {
        MacroMode::Document => {
            let mut sum = MetricScores::default();
            let mut n = 0usize;
            for (g, p) in pairs {
                let c = pair_counts(g, p, opts.include_root)?;
                if c.gold == 0 && c.pred == 0 {
                    continue;
                }
                sum = sum.zip(c.scores(), |a, b| a + b);
                n += 1;
            }
            if n == 0 {
                return Ok(MetricScores {
                    sp: 100.0,
                    nu: 100.0,
                    rel: 100.0,
                });
            }
            Ok(sum.zip(sum, |a, _| a / n as f64))
        }
        MacroMode::Class => class_macro(pairs, opts.include_root),
    }
}

fn class_macro(pairs: &[(&RstTree, &RstTree)], include_root: bool) -> Result<MetricScores> {
    // Per class: (matched, gold, pred).
    let mut nu: BTreeMap<Nuclearity, (usize, usize, usize)> = BTreeMap::new();
    let mut rel: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let mut sp = Counts::default();
    for (g, p) in pairs {
        sp.add(pair_counts(g, p, include_root)?);
        let gs = extract_spans(g, include_root);
        let ps = extract_spans(p, include_root);
        let gold_nu: BTreeSet<(usize, usize, Nuclearity)> = gs.iter().map(|s| (s.i, s.j, s.nuc)).collect();
        let gold_rel: BTreeSet<(usize, usize, &str)> = gs.iter().map(|s| (s.i, s.j, s.rel.as_str())).collect();
        for s in &gs {
            nu.entry(s.nuc).or_default().1 += 1;
            rel.entry(s.rel.clone()).or_default().1 += 1;
        }
        for s in &ps {
            let e = nu.entry(s.nuc).or_default();
            e.2 += 1;
            e.0 += usize::from(gold_nu.contains(&(s.i, s.j, s.nuc)));
            let e = rel.entry(s.rel.clone()).or_default();
            e.2 += 1;
            e.0 += usize::from(gold_rel.contains(&(s.i, s.j, s.rel.as_str())));
        }
    }
    let mean = |vals: Vec<f64>| {
        if vals.is_empty() {
            100.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    Ok(MetricScores {
        sp: sp.scores().sp,
        nu: mean(nu.values().map(|&(m, g, p)| f1(m, g, p)).collect()),
        rel: mean(rel.values().map(|&(m, g, p)| f1(m, g, p)).collect()),
    })
}

/// Scores `(language, gold, predicted)` triples, pooled and per language.
pub fn score_report(items: &[(&str, &RstTree, &RstTree)], opts: &EvalOptions) -> Result<ScoreReport> {
    let set = |pairs: &[(&RstTree, &RstTree)]| -> Result<ScoreSet> {
        Ok(ScoreSet {
            macro_f1: macro_scores(pairs, opts)?,
            micro_f1: micro_scores(pairs, opts)?,
            documents: pairs.len(),
        })
    };
    let all: Vec<(&RstTree, &RstTree)> = items.iter().map(|(_, g, p)| (*g, *p)).collect();
    let mut by_lang: BTreeMap<String, Vec<(&RstTree, &RstTree)>> = BTreeMap::new();
    for (l, g, p) in items {
        by_lang.entry(l.to_string()).or_default().push((g, p));
    }
    let per_language = by_lang
        .into_iter()
        .map(|(l, pairs)| Ok((l, set(&pairs)?)))
        .collect::<Result<_>>()?;
    Ok(ScoreReport {
        pooled: set(&all)?,
        per_language,
    })
}

/// Scores a predicted corpus against a gold corpus, matched by `doc_id`.
pub fn evaluate_corpora(gold: &[Record], pred: &[Record], opts: &EvalOptions) -> Result<ScoreReport> {
    let mut by_id: HashMap<&str, &Record> = HashMap::with_capacity(pred.len());
    for r in pred {
        if by_id.insert(r.doc.doc_id.as_str(), r).is_some() {
            return Err(Error::Eval(format!("duplicate prediction for {}", r.doc.doc_id)));
        }
    }
    let mut seen = BTreeSet::new();
    let mut items = Vec::with_capacity(gold.len());
    for g in gold {
        if !seen.insert(g.doc.doc_id.as_str()) {
            return Err(Error::Eval(format!("duplicate gold document {}", g.doc.doc_id)));
        }
        let p = by_id
            .get(g.doc.doc_id.as_str())
            .ok_or_else(|| Error::Eval(format!("no prediction for {}", g.doc.doc_id)))?;
        items.push((g.doc.lang.as_str(), g.gold()?, p.gold()?));
    }
    score_report(&items, opts)
}

/// Most frequent joint label in the gold trees; ties go to the
/// lexicographically smallest `Rel-NUC` string.
pub fn most_frequent_label(train: &[Record]) -> Result<JointLabel> {
    let mut counts: HashMap<JointLabel, usize> = HashMap::new();
    for r in train {
        r.gold()?
            .for_each_node(&mut |n| *counts.entry(JointLabel::new(n.rel.clone(), n.nuc)).or_default() += 1);
    }
    counts
        .into_iter()
        .max_by(|(a, ca), (b, cb)| ca.cmp(cb).then_with(|| b.to_string().cmp(&a.to_string())))
        .map(|(l, _)| l)
        .ok_or_else(|| Error::Eval("MFS baseline needs at least one labeled node".into()))
}

/// Right-branching tree over `doc` labeled with the most frequent label.
pub fn mfs_baseline(train: &[Record], doc: &Document) -> Result<RstTree> {
    let label = most_frequent_label(train)?;
    Ok(RstTree::right_branching(doc.edu_count(), &label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::Relation;

    fn lab(rel: &str, nuc: Nuclearity) -> JointLabel {
        JointLabel::new(Relation::Coarse(rel.into()), nuc)
    }

    fn node(l: RstTree, r: RstTree, rel: &str, nuc: Nuclearity) -> RstTree {
        RstTree::node(l, r, nuc, Relation::Coarse(rel.into()))
    }

    fn left3(root: &str) -> RstTree {
        node(
            node(RstTree::Leaf(1), RstTree::Leaf(2), "Joint", Nuclearity::NN),
            RstTree::Leaf(3),
            root,
            Nuclearity::NS,
        )
    }

    fn right3(root: &str) -> RstTree {
        node(
            RstTree::Leaf(1),
            node(RstTree::Leaf(2), RstTree::Leaf(3), "Cause", Nuclearity::SN),
            root,
            Nuclearity::NS,
        )
    }

    #[test]
    fn span_extraction() {
        let t = left3("Elaboration");
        let spans: Vec<(usize, usize)> = extract_spans(&t, true).iter().map(|s| (s.i, s.j)).collect();
        assert_eq!(spans, vec![(1, 2), (1, 3)]);
        assert_eq!(extract_spans(&t, false).len(), 1);
        assert!(extract_spans(&RstTree::Leaf(1), true).is_empty());
    }

    #[test]
    fn crossing_three_edu_trees() {
        let opts = EvalOptions::default();
        let (g, p) = (left3("Elaboration"), right3("Elaboration"));
        let s = micro_scores(&[(&g, &p)], &opts).unwrap();
        assert_eq!(s.sp, 50.0);
        assert_eq!((s.nu, s.rel), (50.0, 50.0));
        let p2 = right3("Contrast");
        let s = micro_scores(&[(&g, &p2)], &opts).unwrap();
        assert_eq!((s.nu, s.rel), (50.0, 0.0));
    }

    #[test]
    fn identical_trees_score_100() {
        let g = left3("Elaboration");
        let opts = EvalOptions::default();
        let s = micro_scores(&[(&g, &g)], &opts).unwrap();
        let m = macro_scores(&[(&g, &g)], &opts).unwrap();
        for v in [s.sp, s.nu, s.rel, m.sp, m.nu, m.rel] {
            assert_eq!(v, 100.0);
        }
    }

    #[test]
    fn macro_means_documents() {
        let opts = EvalOptions::default();
        let g = left3("Elaboration");
        let right = right3("Elaboration");
        // Two documents: 100 and 0 span F1.
        let two_g = node(RstTree::Leaf(1), RstTree::Leaf(2), "Joint", Nuclearity::NN);
        let g4 = node(
            node(RstTree::Leaf(1), RstTree::Leaf(2), "Joint", Nuclearity::NN),
            node(RstTree::Leaf(3), RstTree::Leaf(4), "Joint", Nuclearity::NN),
            "Joint",
            Nuclearity::NN,
        );
        let opts_no_root = EvalOptions {
            include_root: false,
            ..opts
        };
        let p4 = RstTree::right_branching(4, &lab("Joint", Nuclearity::NN));
        // Without the root, g4 has {(1,2),(3,4)} and p4 has {(2,4),(3,4)}: F1 50.
        let m = macro_scores(&[(&two_g, &two_g), (&g4, &p4)], &opts).unwrap();
        let micro_one = micro_scores(&[(&g4, &p4)], &opts).unwrap();
        assert_eq!(m.sp, (100.0 + micro_one.sp) / 2.0);
        let m2 = macro_scores(&[(&g4, &p4)], &opts_no_root).unwrap();
        assert_eq!(m2.sp, 50.0);
        // One document: macro == micro.
        let a = macro_scores(&[(&g, &right)], &opts).unwrap();
        let b = micro_scores(&[(&g, &right)], &opts).unwrap();
        assert_eq!(a, b);
        // Per-document {100, 50} → 75.
        let m3 = macro_scores(&[(&g, &g), (&g, &right)], &opts).unwrap();
        assert_eq!(m3.sp, 75.0);
    }

    #[test]
    fn mismatched_edu_counts() {
        let g = left3("Elaboration");
        let p = RstTree::right_branching(4, &lab("Joint", Nuclearity::NN));
        assert!(matches!(
            micro_scores(&[(&g, &p)], &EvalOptions::default()),
            Err(Error::Eval(_))
        ));
    }

    #[test]
    fn class_macro_mode() {
        let opts = EvalOptions {
            macro_mode: MacroMode::Class,
            ..EvalOptions::default()
        };
        let g = left3("Elaboration");
        let p = right3("Elaboration");
        let s = macro_scores(&[(&g, &p)], &opts).unwrap();
        // Relations: Elaboration F1 100, Joint F1 0, Cause F1 0.
        assert!((s.rel - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.sp, 50.0);
    }

    fn record(id: &str, tree: RstTree) -> Record {
        let m = tree.leaf_count();
        let edus: Vec<String> = (1..=m).map(|i| format!("w{i}")).collect();
        let doc = Document::from_edus(id, "en", &edus, "t", &crate::treebank::WhitespaceTokenizer).unwrap();
        Record::new(doc, Some(tree))
    }

    #[test]
    fn mfs_labels() {
        let train = vec![record("a", left3("Elaboration")), record("b", right3("Elaboration"))];
        let l = most_frequent_label(&train).unwrap();
        assert_eq!(l.to_string(), "Elaboration-NS");
        let doc = &record("c", RstTree::right_branching(2, &l)).doc;
        let t = mfs_baseline(&train, doc).unwrap();
        assert_eq!(t.internal_count(), 1);
        assert_eq!(t.joint_label(), Some(l));
        // Tie between Cause-SN and Joint-NN: lexicographic smallest wins.
        let tie = vec![
            record("x", node(RstTree::Leaf(1), RstTree::Leaf(2), "Joint", Nuclearity::NN)),
            record("y", node(RstTree::Leaf(1), RstTree::Leaf(2), "Cause", Nuclearity::SN)),
        ];
        assert_eq!(most_frequent_label(&tie).unwrap().to_string(), "Cause-SN");
    }

    #[test]
    fn report_mean() {
        let g = left3("Elaboration");
        let p = right3("Elaboration");
        let opts = EvalOptions::default();
        let a = score_report(&[("en", &g, &g)], &opts).unwrap();
        let b = score_report(&[("en", &g, &p)], &opts).unwrap();
        let m = ScoreReport::mean(&[a.clone(), b]).unwrap();
        assert_eq!(m.pooled.micro_f1.sp, 75.0);
        assert_eq!(ScoreReport::mean(std::slice::from_ref(&a)).unwrap(), a);
        assert!(ScoreReport::mean(&[]).is_none());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let opts = EvalOptions::default();
        let a = record("a", left3("Elaboration"));
        let dup = vec![a.clone(), a.clone()];
        assert!(matches!(evaluate_corpora(&dup, std::slice::from_ref(&a), &opts), Err(Error::Eval(_))));
        assert!(matches!(evaluate_corpora(std::slice::from_ref(&a), &dup, &opts), Err(Error::Eval(_))));
        let missing = record("b", left3("Elaboration"));
        assert!(evaluate_corpora(&[missing], std::slice::from_ref(&a), &opts).is_err());
        assert_eq!(evaluate_corpora(std::slice::from_ref(&a), std::slice::from_ref(&a), &opts).unwrap().pooled.micro_f1.sp, 100.0);
    }
}
