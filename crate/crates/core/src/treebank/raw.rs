use crate::error::{Error, Result};

use super::{Nuclearity, Relation, RstTree};

/// Role of a child under its parent, in source-format terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Nucleus,
    Satellite,
    Root,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawNode {
    Leaf { id: usize, text: String },
    Group { children: Vec<RawChild> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawChild {
    pub role: Role,
    /// Relation as written on the child (`rel2par` / `relname`).
    pub relation: Option<String>,
    pub node: RawNode,
}

/// An n-ary tree as read from disk. More than one root means some units
/// were never linked into the main structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTree {
    pub roots: Vec<RawNode>,
}

impl RawNode {
    pub fn leaf_count(&self) -> usize {
        match self {
            RawNode::Leaf { .. } => 1,
            RawNode::Group { children } => children.iter().map(|c| c.node.leaf_count()).sum(),
        }
    }

    pub fn internal_count(&self) -> usize {
        match self {
            RawNode::Leaf { .. } => 0,
            RawNode::Group { children } => {
                1 + children
                    .iter()
                    .map(|c| c.node.internal_count())
                    .sum::<usize>()
            }
        }
    }

    pub fn leaves(&self) -> Vec<(usize, &str)> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect<'a>(&'a self, out: &mut Vec<(usize, &'a str)>) {
        match self {
            RawNode::Leaf { id, text } => out.push((*id, text.as_str())),
            RawNode::Group { children } => children.iter().for_each(|c| c.node.collect(out)),
        }
    }

    fn first_leaf(&self) -> Option<usize> {
        match self {
            RawNode::Leaf { id, .. } => Some(*id),
            RawNode::Group { children } => children.iter().find_map(|c| c.node.first_leaf()),
        }
    }

    fn renumber(&mut self, map: &dyn Fn(usize) -> usize) {
        match self {
            RawNode::Leaf { id, .. } => *id = map(*id),
            RawNode::Group { children } => children.iter_mut().for_each(|c| c.node.renumber(map)),
        }
    }
}

impl RawTree {
    pub fn leaf_count(&self) -> usize {
        self.roots.iter().map(RawNode::leaf_count).sum()
    }

    pub fn internal_count(&self) -> usize {
        self.roots.iter().map(RawNode::internal_count).sum()
    }

    /// Leaf texts of the (single) root in reading order.
    pub fn edu_texts(&self) -> Vec<String> {
        self.roots
            .iter()
            .flat_map(|r| r.leaves())
            .map(|(_, t)| t.to_string())
            .collect()
    }

    pub(crate) fn sort_roots(&mut self) {
        self.roots
            .sort_by_key(|r| r.first_leaf().unwrap_or(usize::MAX));
    }
}

/// Drops every unit not reachable from the principal root and renumbers the
/// remaining leaves `1..=m` in their original order.
///
/// With a single root the tree is kept as is. With several roots, the one
/// covering the most leaves is principal (first wins ties); if no root links
/// at least two units, nothing in the tree is linked.
pub fn remove_unlinked(raw: &RawTree) -> Result<RawTree> {
    let candidates: Vec<&RawNode> = raw.roots.iter().filter(|r| r.leaf_count() > 0).collect();
    let principal = match candidates.len() {
        0 => return Err(Error::EmptyTree),
        1 => candidates[0],
        _ => {
            let mut best: Option<&RawNode> = None;
            for r in candidates.iter().copied().filter(|r| r.leaf_count() >= 2) {
                if best.is_none_or(|b| r.leaf_count() > b.leaf_count()) {
                    best = Some(r);
                }
            }
            best.ok_or(Error::EmptyTree)?
        }
    };
    let mut root = principal.clone();
    let mut ids: Vec<usize> = root.leaves().iter().map(|(id, _)| *id).collect();
    ids.sort_unstable();
    ids.dedup();
    let lookup = |id: usize| ids.binary_search(&id).map(|p| p + 1).unwrap_or(id);
    root.renumber(&lookup);
    Ok(RawTree { roots: vec![root] })
}

/// Converts a connected raw tree into a binary [`RstTree`].
///
/// Nodes with more than two children are expanded right-branching; each
/// introduced node takes its nuclearity from which side holds a nucleus and
/// its relation from the satellite (or from the multinuclear relation for
/// NN pairs). Relations stay [`Relation::Raw`] until [`super::harmonize`].
pub fn binarize(raw: &RawTree) -> Result<RstTree> {
    match raw.roots.as_slice() {
        [root] => convert(root),
        [] => Err(Error::EmptyTree),
        _ => Err(Error::Tree(format!(
            "tree has {} roots; remove unlinked units first",
            raw.roots.len()
        ))),
    }
}

fn convert(node: &RawNode) -> Result<RstTree> {
    match node {
        RawNode::Leaf { id, .. } => Ok(RstTree::Leaf(*id)),
        RawNode::Group { children } => {
            if children.is_empty() {
                return Err(Error::Tree("group without children".into()));
            }
            combine(children)
        }
    }
}

fn is_nucleus(c: &RawChild) -> bool {
    c.role != Role::Satellite
}

fn combine(children: &[RawChild]) -> Result<RstTree> {
    let (first, rest) = children.split_first().expect("non-empty children");
    if rest.is_empty() {
        return convert(&first.node);
    }
    let left = convert(&first.node)?;
    let right = combine(rest)?;
    let left_nuc = is_nucleus(first);
    let right_nuc = rest.iter().any(is_nucleus);
    let nuc = match (left_nuc, right_nuc) {
        (true, false) => Nuclearity::NS,
        (false, true) => Nuclearity::SN,
        _ => Nuclearity::NN,
    };
    let rel = match nuc {
        Nuclearity::NS => rest
            .iter()
            .find(|c| !is_nucleus(c))
            .and_then(|c| c.relation.clone()),
        Nuclearity::SN => first.relation.clone(),
        Nuclearity::NN => multinuclear_relation(children),
    };
    let rel = rel.unwrap_or_else(|| "span".to_string());
    Ok(RstTree::node(left, right, nuc, Relation::Raw(rel)))
}

fn multinuclear_relation(children: &[RawChild]) -> Option<String> {
    let named = |c: &&RawChild| {
        c.relation
            .as_deref()
            .is_some_and(|r| !r.eq_ignore_ascii_case("span"))
    };
    children
        .iter()
        .filter(|c| is_nucleus(c))
        .find(named)
        .or_else(|| children.iter().find(named))
        .and_then(|c| c.relation.clone())
}
