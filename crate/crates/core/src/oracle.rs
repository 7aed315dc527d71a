//! Top-down split supervision: converts binary trees into the sequence of
//! span splits the decoder performs, and replays such sequences into trees.
//!
//! The decoder keeps a stack initialized with the full span `(1, m)`. Each
//! step pops the head span, splits it at `k`, and pushes the sub-spans that
//! still contain more than one EDU, right first so the left one is handled
//! next.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::treebank::{JointLabel, Nuclearity, Relation, RstTree};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitStep {
    /// Inclusive EDU interval, `i < j`.
    pub span: (usize, usize),
    /// Last EDU of the left part, `i <= k < j`.
    pub split_at: usize,
    pub label: Option<JointLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitTrace {
    pub doc_id: String,
    pub edu_count: usize,
    pub steps: Vec<SplitStep>,
}

/// Pushes the children of a split in decoder order.
pub fn push_children(stack: &mut Vec<(usize, usize)>, span: (usize, usize), k: usize) {
    let (i, j) = span;
    if j > k + 1 {
        stack.push((k + 1, j));
    }
    if k > i {
        stack.push((i, k));
    }
}

/// Gold split sequence for a binary tree.
pub fn tree_to_trace(tree: &RstTree, doc_id: &str) -> Result<SplitTrace> {
    let mut by_span: HashMap<(usize, usize), &RstTree> = HashMap::new();
    index_spans(tree, &mut by_span)?;
    let (first, m) = tree.span();
    if first != 1 {
        return Err(Error::Oracle(format!("tree starts at EDU {first}, not 1")));
    }
    let mut steps = Vec::with_capacity(m.saturating_sub(1));
    let mut stack = Vec::new();
    if m > 1 {
        stack.push((1, m));
    }
    while let Some(span) = stack.pop() {
        let RstTree::Node(node) = by_span[&span] else {
            unreachable!("multi-EDU spans are internal nodes")
        };
        let k = node.left.span().1;
        steps.push(SplitStep {
            span,
            split_at: k,
            label: Some(JointLabel::new(node.rel.clone(), node.nuc)),
        });
        push_children(&mut stack, span, k);
    }
    Ok(SplitTrace {
        doc_id: doc_id.to_string(),
        edu_count: m,
        steps,
    })
}

fn index_spans<'a>(
    tree: &'a RstTree,
    out: &mut HashMap<(usize, usize), &'a RstTree>,
) -> Result<()> {
    if let RstTree::Node(n) = tree {
        let (li, lj) = n.left.span();
        let (ri, _) = n.right.span();
        if ri != lj + 1 || li > lj {
            return Err(Error::Oracle(format!(
                "children of node {:?} are not adjacent",
                tree.span()
            )));
        }
        index_spans(&n.left, out)?;
        index_spans(&n.right, out)?;
    }
    out.insert(tree.span(), tree);
    Ok(())
}

/// Replays a split sequence into a tree. Without labels every node gets the
/// placeholder `NN` / raw `span` label.
pub fn trace_to_tree(trace: &SplitTrace, labels_included: bool) -> Result<RstTree> {
    let m = trace.edu_count;
    if m == 0 {
        return Err(Error::Trace {
            step: 0,
            message: "trace over zero EDUs".into(),
        });
    }
    let mut splits: HashMap<(usize, usize), (usize, JointLabel)> = HashMap::new();
    let mut stack = Vec::new();
    if m > 1 {
        stack.push((1, m));
    }
    for (n, step) in trace.steps.iter().enumerate() {
        let err = |message: String| Error::Trace { step: n, message };
        let expected = stack
            .pop()
            .ok_or_else(|| err("step after the stack emptied".into()))?;
        if step.span != expected {
            return Err(err(format!(
                "span {:?} where the stack holds {expected:?}",
                step.span
            )));
        }
        let (i, j) = step.span;
        let k = step.split_at;
        if !(i <= k && k < j) {
            return Err(err(format!("split {k} outside [{i}, {j})")));
        }
        let label = match (&step.label, labels_included) {
            (Some(l), true) => l.clone(),
            (None, true) => return Err(err("missing label".into())),
            (_, false) => JointLabel::new(Relation::Raw("span".into()), Nuclearity::NN),
        };
        splits.insert(step.span, (k, label));
        push_children(&mut stack, step.span, k);
    }
    if let Some(open) = stack.last() {
        return Err(Error::Trace {
            step: trace.steps.len(),
            message: format!("span {open:?} never split"),
        });
    }
    Ok(build(1, m, &splits))
}

fn build(i: usize, j: usize, splits: &HashMap<(usize, usize), (usize, JointLabel)>) -> RstTree {
    if i == j {
        return RstTree::Leaf(i);
    }
    let (k, label) = &splits[&(i, j)];
    RstTree::node(
        build(i, *k, splits),
        build(k + 1, j, splits),
        label.nuc,
        label.rel.clone(),
    )
}

impl SplitTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// True when no span occurs twice.
    pub fn spans_unique(&self) -> bool {
        let mut seen = HashSet::new();
        self.steps.iter().all(|s| seen.insert(s.span))
    }

    /// Parses the line-oriented dump produced by `Display`.
    pub fn parse_dump(doc_id: &str, edu_count: usize, text: &str) -> Result<Self> {
        let mut steps = Vec::new();
        for (n, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let err = |message: &str| Error::Trace {
                step: n,
                message: format!("{message}: {line:?}"),
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() < 3 || f.len() > 4 {
                return Err(err("expected `i j k [REL-NUC]`"));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad number"));
            let label = match f.get(3) {
                Some(l) => Some(JointLabel::parse_coarse(l)?),
                None => None,
            };
            steps.push(SplitStep {
                span: (num(f[0])?, num(f[1])?),
                split_at: num(f[2])?,
                label,
            });
        }
        Ok(SplitTrace {
            doc_id: doc_id.to_string(),
            edu_count,
            steps,
        })
    }
}

impl fmt::Display for SplitTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            write!(f, "{} {} {}", s.span.0, s.span.1, s.split_at)?;
            if let Some(l) = &s.label {
                write!(f, " {l}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
