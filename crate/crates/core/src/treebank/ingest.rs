use std::path::Path;

use crate::error::{Error, Result};

use super::{binarize, harmonize, parse_dis, parse_rs3, remove_unlinked, Document, Record, RelationMap, WhitespaceTokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Dis,
    Rs3,
}

impl SourceFormat {
    /// Format implied by a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "dis" => Some(SourceFormat::Dis),
            "rs3" => Some(SourceFormat::Rs3),
            _ => None,
        }
    }
}

impl std::str::FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dis" => Ok(SourceFormat::Dis),
            "rs3" => Ok(SourceFormat::Rs3),
            other => Err(Error::Config(format!("unknown format {other:?}"))),
        }
    }
}

/// Default treebank name for a language code, e.g. `pt` → `Pt-DT`.
pub fn default_treebank_name(lang: &str) -> String {
    let mut c = lang.chars();
    match c.next() {
        Some(f) => format!("{}{}-DT", f.to_uppercase(), c.as_str().to_lowercase()),
        None => "DT".to_string(),
    }
}

/// Runs the whole ingestion chain on one source text: parse, prune
/// unlinked units, binarize and map relations onto the coarse inventory.
pub fn ingest_text(
    text: &str,
    format: SourceFormat,
    doc_id: &str,
    lang: &str,
    treebank: &str,
    map: &RelationMap,
) -> Result<Record> {
    let raw = match format {
        SourceFormat::Dis => parse_dis(text)?,
        SourceFormat::Rs3 => parse_rs3(text)?,
    };
    let raw = remove_unlinked(&raw)?;
    let tree = harmonize(&binarize(&raw)?, map, treebank)?;
    let doc = Document::from_edus(doc_id, lang, &raw.edu_texts(), treebank, &WhitespaceTokenizer)?;
    tree.validate(doc.edu_count())?;
    Ok(Record::new(doc, Some(tree)))
}

/// Reads and ingests one file; the document id is the file stem.
pub fn ingest_file(
    path: &Path,
    format: Option<SourceFormat>,
    lang: &str,
    treebank: &str,
    map: &RelationMap,
) -> Result<Record> {
    let format = format
        .or_else(|| SourceFormat::from_path(path))
        .ok_or_else(|| Error::Config(format!("{}: cannot tell the format", path.display())))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc_id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("doc")
        .to_string();
    ingest_text(&text, format, &doc_id, lang, treebank, map)
}
