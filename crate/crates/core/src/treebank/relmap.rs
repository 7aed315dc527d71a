use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Relation, RstTree};

/// The shipped relation table: the 18 coarse classes and a best-effort
/// mapping of relation names found in common RST treebanks.
pub const DEFAULT_RELATION_MAP: &str = include_str!("../../data/relation_map.tsv");

/// Maps `(treebank, raw relation)` pairs onto a coarse inventory.
///
/// File format, one entry per line:
///
/// ```text
/// # comment
/// @class Elaboration
/// *      elaboration-additional   Elaboration
/// pt-dt  parenthetical            Elaboration
/// ```
///
/// `@class` lines declare the inventory; mapping lines are tab or
/// whitespace separated. Treebank `*` applies to every treebank, and raw
/// names are matched case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMap {
    inventory: Vec<String>,
    entries: HashMap<(String, String), String>,
}

impl RelationMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut inventory = Vec::new();
        let mut pending = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(class) = line.strip_prefix("@class") {
                let class = class.trim();
                if class.is_empty() {
                    return Err(Error::RelationMap(format!("line {}: empty class", n + 1)));
                }
                inventory.push(class.to_string());
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [treebank, raw, coarse] = fields.as_slice() else {
                return Err(Error::RelationMap(format!(
                    "line {}: expected `treebank raw coarse`",
                    n + 1
                )));
            };
            pending.push((n + 1, treebank.to_string(), raw.to_lowercase(), coarse.to_string()));
        }
        let known: BTreeSet<&str> = inventory.iter().map(String::as_str).collect();
        let mut entries = HashMap::new();
        for (line, treebank, raw, coarse) in pending {
            if !known.contains(coarse.as_str()) {
                return Err(Error::RelationMap(format!(
                    "line {line}: {coarse:?} is not a declared class"
                )));
            }
            entries.insert((treebank, raw), coarse);
        }
        Ok(RelationMap { inventory, entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn shipped() -> Self {
        Self::parse(DEFAULT_RELATION_MAP).expect("shipped relation map is valid")
    }

    pub fn inventory(&self) -> &[String] {
        &self.inventory
    }

    pub fn lookup(&self, treebank: &str, raw: &str) -> Option<&str> {
        let raw = raw.to_lowercase();
        self.entries
            .get(&(treebank.to_string(), raw.clone()))
            .or_else(|| self.entries.get(&("*".to_string(), raw)))
            .map(String::as_str)
    }
}

/// Replaces every raw relation with its coarse class. Coarse labels pass
/// through untouched.
pub fn harmonize(tree: &RstTree, map: &RelationMap, treebank: &str) -> Result<RstTree> {
    match tree {
        RstTree::Leaf(i) => Ok(RstTree::Leaf(*i)),
        RstTree::Node(n) => {
            let rel = match &n.rel {
                Relation::Coarse(c) => Relation::Coarse(c.clone()),
                Relation::Raw(raw) => Relation::Coarse(
                    map.lookup(treebank, raw)
                        .ok_or_else(|| Error::Mapping {
                            treebank: treebank.to_string(),
                            relation: raw.clone(),
                        })?
                        .to_string(),
                ),
            };
            Ok(RstTree::node(
                harmonize(&n.left, map, treebank)?,
                harmonize(&n.right, map, treebank)?,
                n.nuc,
                rel,
            ))
        }
    }
}
