//! The domain knowledge base consulted by the agentic operator.
//!
//! A flat store of documents with deterministic token-overlap ranking — no
//! embeddings, no external services. Loaded from a directory of text files
//! with a small front-matter header, or from the notes embedded in the
//! repository. Immutable after load and freely shareable.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub body: String,
    pub tags: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("unknown document id `{0}`")]
    UnknownId(String),
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{0}` has an empty body")]
    EmptyBody(String),
    #[error("{path}: missing or malformed front matter")]
    BadFrontMatter { path: String },
    #[error("failed to read knowledge store: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    docs: Vec<Document>,
}

impl KnowledgeBase {
    pub fn new(docs: Vec<Document>) -> Result<KnowledgeBase, KnowledgeError> {
        let mut seen = BTreeSet::new();
        for doc in &docs {
            if !seen.insert(doc.id.clone()) {
                return Err(KnowledgeError::DuplicateId(doc.id.clone()));
            }
            if doc.body.trim().is_empty() {
                return Err(KnowledgeError::EmptyBody(doc.id.clone()));
            }
        }
        Ok(KnowledgeBase { docs })
    }

    /// An empty store (the agent simply finds nothing).
    pub fn empty() -> KnowledgeBase {
        KnowledgeBase::default()
    }

    /// The MiniVM optimization notes shipped in-repo.
    pub fn builtin() -> KnowledgeBase {
        let sources = [
            include_str!("../../../knowledge/rewrite-catalog.md"),
            include_str!("../../../knowledge/cost-model.md"),
            include_str!("../../../knowledge/vm-semantics.md"),
            include_str!("../../../knowledge/search-strategy.md"),
        ];
        let docs = sources
            .iter()
            .map(|text| parse_front_matter(text, "<builtin>").expect("embedded notes are well-formed"))
            .collect();
        KnowledgeBase::new(docs).expect("embedded notes have unique ids")
    }

    /// Load every `.md`/`.txt` file in a directory, sorted by file name.
    pub fn load_dir(path: impl AsRef<Path>) -> Result<KnowledgeBase, KnowledgeError> {
        let mut paths: Vec<_> = std::fs::read_dir(path)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("md") | Some("txt")
                )
            })
            .collect();
        paths.sort();
        let mut docs = Vec::new();
        for path in paths {
            let text = std::fs::read_to_string(&path)?;
            docs.push(parse_front_matter(&text, &path.display().to_string())?);
        }
        KnowledgeBase::new(docs)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    pub fn get(&self, id: &str) -> Result<&Document, KnowledgeError> {
        self.docs
            .iter()
            .find(|d| d.id == id)
            .ok_or_else(|| KnowledgeError::UnknownId(id.to_string()))
    }

    /// Rank documents by the number of distinct query tokens they share
    /// with title, tags, and body. Zero-overlap documents are omitted; ties
    /// break by ascending id.
    pub fn search(&self, query: &str) -> Vec<String> {
        let query_tokens = tokenize(query);
        if query_tokens.is_empty() {
            return vec![];
        }
        let mut hits: Vec<(usize, &str)> = self
            .docs
            .iter()
            .filter_map(|doc| {
                let mut haystack = tokenize(&doc.title);
                haystack.extend(tokenize(&doc.body));
                for tag in &doc.tags {
                    haystack.extend(tokenize(tag));
                }
                let overlap = query_tokens.intersection(&haystack).count();
                (overlap > 0).then_some((overlap, doc.id.as_str()))
            })
            .collect();
        hits.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        hits.into_iter().map(|(_, id)| id.to_string()).collect()
    }
}

/// Lowercased alphanumeric runs.
fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Parse a document of the form:
///
/// ```text
/// ---
/// id: rewrite-catalog
/// title: Rewrite catalog
/// tags: strength-reduction, dead-code
/// ---
/// body...
/// ```
fn parse_front_matter(text: &str, path: &str) -> Result<Document, KnowledgeError> {
    let bad = || KnowledgeError::BadFrontMatter {
        path: path.to_string(),
    };
    let rest = text.strip_prefix("---").ok_or_else(bad)?;
    let (header, body) = rest.split_once("\n---").ok_or_else(bad)?;
    let body = body.trim_start_matches('\n').to_string();
    let mut id = None;
    let mut title = None;
    let mut tags = Vec::new();
    for line in header.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(bad)?;
        let value = value.trim();
        match key.trim() {
            "id" => id = Some(value.to_string()),
            "title" => title = Some(value.to_string()),
            "tags" => {
                tags = value
                    .split(',')
                    .map(|t| t.trim().to_string())
                    .filter(|t| !t.is_empty())
                    .collect()
            }
            _ => return Err(bad()),
        }
    }
    Ok(Document {
        id: id.ok_or_else(bad)?,
        title: title.ok_or_else(bad)?,
        body,
        tags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> KnowledgeBase {
        KnowledgeBase::new(vec![
            Document {
                id: "d1".into(),
                title: "Strength reduction".into(),
                body: "Replace multiplies with shifts and adds.".into(),
                tags: vec!["strength-reduction".into()],
            },
            Document {
                id: "d2".into(),
                title: "Dead code".into(),
                body: "Remove writes that are never read.".into(),
                tags: vec!["dead-code".into()],
            },
        ])
        .unwrap()
    }

    #[test]
    fn search_ranks_by_overlap_and_omits_misses() {
        assert_eq!(store().search("strength reduction"), vec!["d1".to_string()]);
    }

    #[test]
    fn empty_query_returns_nothing() {
        assert!(store().search("").is_empty());
        assert!(store().search("  ,, ").is_empty());
    }

    #[test]
    fn equal_overlap_ties_break_by_id() {
        let kb = KnowledgeBase::new(vec![
            Document {
                id: "b".into(),
                title: "shifts".into(),
                body: "x".into(),
                tags: vec![],
            },
            Document {
                id: "a".into(),
                title: "shifts".into(),
                body: "y".into(),
                tags: vec![],
            },
        ])
        .unwrap();
        assert_eq!(kb.search("shifts"), vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn search_is_deterministic_and_complete() {
        let kb = store();
        let a = kb.search("remove multiplies");
        let b = kb.search("remove multiplies");
        assert_eq!(a, b);
        // Every document with at least one overlapping token appears.
        assert_eq!(a.len(), 2);
    }

    #[test]
    fn get_round_trips_and_unknown_id_errors() {
        let kb = store();
        assert_eq!(kb.get("d1").unwrap().body, "Replace multiplies with shifts and adds.");
        assert!(matches!(kb.get("nope"), Err(KnowledgeError::UnknownId(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let doc = store().get("d1").unwrap().clone();
        assert!(matches!(
            KnowledgeBase::new(vec![doc.clone(), doc]),
            Err(KnowledgeError::DuplicateId(_))
        ));
    }

    #[test]
    fn front_matter_parses() {
        let doc = parse_front_matter(
            "---\nid: x\ntitle: The X\ntags: a, b\n---\nbody text\n",
            "test",
        )
        .unwrap();
        assert_eq!(doc.id, "x");
        assert_eq!(doc.tags, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(doc.body, "body text\n");
    }

    #[test]
    fn disk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("01-note.md"),
            "---\nid: note\ntitle: A note\ntags: t\n---\ncontent here\n",
        )
        .unwrap();
        let kb = KnowledgeBase::load_dir(dir.path()).unwrap();
        let doc = kb.get("note").unwrap();
        assert_eq!(doc.body, "content here\n");
        let again = KnowledgeBase::load_dir(dir.path()).unwrap();
        assert_eq!(doc, again.get("note").unwrap());
    }

    #[test]
    fn builtin_store_loads() {
        let kb = KnowledgeBase::builtin();
        assert!(kb.len() >= 4);
        assert!(!kb.search("strength reduction").is_empty());
    }
}
