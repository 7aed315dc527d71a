//! Reader for the `.rs3` XML format used by most non-English treebanks.
//!
//! Segments and groups point at their parent through `parent`; the child's
//! `relname` decides whether it is span content (`span`), a member of a
//! multinuclear group, or a satellite of its parent.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

use super::raw::{RawChild, RawNode, RawTree, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GroupKind {
    Span,
    Multinuc,
}

#[derive(Debug)]
struct Unit {
    id: String,
    parent: Option<String>,
    relname: Option<String>,
    /// `Some(text)` for segments.
    text: Option<String>,
    group: Option<GroupKind>,
    /// Reading-order position of segments, 1-based.
    order: usize,
}

fn err(msg: impl Into<String>) -> Error {
    Error::Rs3(msg.into())
}

/// Parses one `.rs3` document.
pub fn parse_rs3(xml: &str) -> Result<RawTree> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| {
        let pos = e.pos();
        Error::Parse {
            line: pos.row as usize,
            column: pos.col as usize,
            message: e.to_string(),
        }
    })?;

    let mut multinuc_rels = HashSet::new();
    for rel in doc.descendants().filter(|n| n.has_tag_name("rel")) {
        if rel.attribute("type") == Some("multinuc") {
            if let Some(name) = rel.attribute("name") {
                multinuc_rels.insert(name.to_string());
            }
        }
    }

    let mut units: Vec<Unit> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut segments = 0;
    for node in doc.descendants() {
        let is_segment = node.has_tag_name("segment");
        if !is_segment && !node.has_tag_name("group") {
            continue;
        }
        let id = node
            .attribute("id")
            .ok_or_else(|| err("unit without id"))?
            .to_string();
        if index.contains_key(&id) {
            return Err(err(format!("duplicate id {id:?}")));
        }
        let (text, group, order) = if is_segment {
            segments += 1;
            let text: String = node
                .descendants()
                .filter(|n| n.is_text())
                .filter_map(|n| n.text())
                .collect::<Vec<_>>()
                .join(" ");
            let text = text.split_whitespace().collect::<Vec<_>>().join(" ");
            (Some(text), None, segments)
        } else {
            let kind = match node.attribute("type") {
                Some("multinuc") => GroupKind::Multinuc,
                _ => GroupKind::Span,
            };
            (None, Some(kind), 0)
        };
        index.insert(id.clone(), units.len());
        units.push(Unit {
            id,
            parent: node.attribute("parent").map(str::to_string),
            relname: node.attribute("relname").map(str::to_string),
            text,
            group,
            order,
        });
    }

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); units.len()];
    let mut roots = Vec::new();
    for (u, unit) in units.iter().enumerate() {
        match &unit.parent {
            Some(p) => {
                let &pi = index
                    .get(p)
                    .ok_or_else(|| err(format!("dangling parent {p:?} on unit {:?}", unit.id)))?;
                children[pi].push(u);
            }
            None => roots.push(u),
        }
    }

    // every chain of parents must end at a root
    for start in 0..units.len() {
        let mut seen = HashSet::new();
        let mut at = start;
        while let Some(p) = &units[at].parent {
            if !seen.insert(at) {
                return Err(err(format!("cycle in parent links at unit {:?}", units[at].id)));
            }
            at = index[p];
        }
    }

    let first_leaf = first_leaf_positions(&units, &children);
    for kids in children.iter_mut() {
        kids.sort_by_key(|&c| first_leaf[c]);
    }
    roots.sort_by_key(|&r| first_leaf[r]);

    let builder = Builder {
        units: &units,
        children: &children,
        multinuc_rels: &multinuc_rels,
    };
    let mut tree = RawTree {
        roots: roots
            .into_iter()
            .filter(|&r| first_leaf[r] != usize::MAX)
            .map(|r| builder.build(r))
            .collect::<Result<_>>()?,
    };
    tree.sort_roots();
    Ok(tree)
}

fn first_leaf_positions(units: &[Unit], children: &[Vec<usize>]) -> Vec<usize> {
    fn visit(u: usize, units: &[Unit], children: &[Vec<usize>], memo: &mut Vec<Option<usize>>) -> usize {
        if let Some(v) = memo[u] {
            return v;
        }
        let own = if units[u].text.is_some() {
            units[u].order
        } else {
            usize::MAX
        };
        let v = children[u]
            .iter()
            .map(|&c| visit(c, units, children, memo))
            .fold(own, usize::min);
        memo[u] = Some(v);
        v
    }
    let mut memo = vec![None; units.len()];
    (0..units.len())
        .map(|u| visit(u, units, children, &mut memo))
        .collect()
}

struct Builder<'a> {
    units: &'a [Unit],
    children: &'a [Vec<usize>],
    multinuc_rels: &'a HashSet<String>,
}

#[derive(PartialEq)]
enum Link {
    SpanContent,
    Member,
    Satellite,
}

impl Builder<'_> {
    fn link(&self, parent: usize, child: usize) -> Link {
        let rel = self.units[child].relname.as_deref().unwrap_or("span");
        if rel == "span" {
            return Link::SpanContent;
        }
        let parent_multinuc = self.units[parent].group == Some(GroupKind::Multinuc);
        if parent_multinuc && (self.multinuc_rels.contains(rel) || self.multinuc_rels.is_empty()) {
            Link::Member
        } else {
            Link::Satellite
        }
    }

    /// Constituent headed by `u`: its core content plus any satellites
    /// attached to it.
    fn build(&self, u: usize) -> Result<RawNode> {
        let unit = &self.units[u];
        let kids = &self.children[u];
        let mut parts: Vec<(usize, RawChild)> = Vec::new();

        let core = if let Some(text) = &unit.text {
            Some(RawNode::Leaf {
                id: unit.order,
                text: text.clone(),
            })
        } else {
            match unit.group {
                Some(GroupKind::Multinuc) => {
                    let members = kids
                        .iter()
                        .filter(|&&c| self.link(u, c) == Link::Member)
                        .map(|&c| {
                            Ok(RawChild {
                                role: Role::Nucleus,
                                relation: self.units[c].relname.clone(),
                                node: self.build(c)?,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    match members.len() {
                        0 => None,
                        1 => members.into_iter().next().map(|m| m.node),
                        _ => Some(RawNode::Group { children: members }),
                    }
                }
                _ => {
                    let content: Vec<usize> = kids
                        .iter()
                        .copied()
                        .filter(|&c| self.link(u, c) == Link::SpanContent)
                        .collect();
                    match content.as_slice() {
                        [] => None,
                        [c] => Some(self.build(*c)?),
                        many => Some(RawNode::Group {
                            children: many
                                .iter()
                                .map(|&c| {
                                    Ok(RawChild {
                                        role: Role::Nucleus,
                                        relation: None,
                                        node: self.build(c)?,
                                    })
                                })
                                .collect::<Result<_>>()?,
                        }),
                    }
                }
            }
        };

        let core_pos = core
            .as_ref()
            .map(|_| self.core_position(u))
            .unwrap_or(usize::MAX);
        if let Some(core) = core {
            parts.push((
                core_pos,
                RawChild {
                    role: Role::Nucleus,
                    relation: Some("span".into()),
                    node: core,
                },
            ));
        }
        for &c in kids.iter().filter(|&&c| self.link(u, c) == Link::Satellite) {
            parts.push((
                self.position(c),
                RawChild {
                    role: Role::Satellite,
                    relation: self.units[c].relname.clone(),
                    node: self.build(c)?,
                },
            ));
        }
        parts.sort_by_key(|p| p.0);
        match parts.len() {
            0 => Err(err(format!("unit {:?} covers no segments", unit.id))),
            1 => Ok(parts.pop().expect("one part").1.node),
            _ => Ok(RawNode::Group {
                children: parts.into_iter().map(|p| p.1).collect(),
            }),
        }
    }

    fn position(&self, u: usize) -> usize {
        let mut best = if self.units[u].text.is_some() {
            self.units[u].order
        } else {
            usize::MAX
        };
        for &c in &self.children[u] {
            best = best.min(self.position(c));
        }
        best
    }

    /// Position of `u`'s own content, ignoring its satellites.
    fn core_position(&self, u: usize) -> usize {
        if self.units[u].text.is_some() {
            return self.units[u].order;
        }
        self.children[u]
            .iter()
            .filter(|&&c| self.link(u, c) != Link::Satellite)
            .map(|&c| self.position(c))
            .min()
            .unwrap_or(usize::MAX)
    }
}
