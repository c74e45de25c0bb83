//! Commonsense knowledge base of `(subject, relation, object)` triples.

mod extract;
mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use extract::extract_triples;
pub use io::{read_kb, read_kb_from, write_kb, write_kb_to, KB_HEADER};

pub type CategoryId = usize;
pub type RelationId = usize;

/// Relation id of the "no relation" label.
pub const NA: RelationId = 0;
/// Vocabulary entry stored at [`NA`].
pub const NA_NAME: &str = "NA";

/// Frequency threshold applied by [`build_kb`] when none is given.
pub const DEFAULT_MIN_COUNT: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub count: u64,
}

impl RelationTriple {
    pub fn new(subject: &str, relation: &str, object: &str, count: u64) -> Self {
        Self {
            subject: subject.to_owned(),
            relation: relation.to_owned(),
            object: object.to_owned(),
            count,
        }
    }

    fn check(&self) -> Result<()> {
        for (field, value) in [
            ("subject", &self.subject),
            ("relation", &self.relation),
            ("object", &self.object),
        ] {
            if value.is_empty() || value.trim() != value {
                return Err(Error::input(format!("triple {field} '{value}' is empty or padded")));
            }
            if value.contains(['\t', '\n', '\r']) {
                return Err(Error::input(format!(
                    "triple {field} '{value}' contains a tab or newline"
                )));
            }
        }
        for (field, value) in [("subject", &self.subject), ("object", &self.object)] {
            if value.contains(char::is_whitespace) {
                return Err(Error::input(format!("category {field} '{value}' contains whitespace")));
            }
        }
        Ok(())
    }
}

/// Summary counts of a knowledge base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KbStats {
    pub num_categories: usize,
    /// Includes the NA slot.
    pub num_relations: usize,
    pub num_triples: usize,
    pub avg_relations_per_pair: f64,
}

/// Immutable triple store indexed by ordered category pair.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    categories: Vec<String>,
    relations: Vec<String>,
    category_ids: HashMap<String, CategoryId>,
    relation_ids: HashMap<String, RelationId>,
    // relation lists are sorted by id and never contain NA
    pairs: BTreeMap<(CategoryId, CategoryId), Vec<(RelationId, u64)>>,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::from_merged(BTreeMap::new())
    }
}

impl KnowledgeBase {
    fn from_merged(merged: BTreeMap<(String, String, String), u64>) -> Self {
        let categories: BTreeSet<&str> = merged.keys().flat_map(|(s, _, o)| [s.as_str(), o.as_str()]).collect();
        let relation_set: BTreeSet<&str> = merged.keys().map(|(_, r, _)| r.as_str()).collect();

        let categories: Vec<String> = categories.into_iter().map(str::to_owned).collect();
        let relations: Vec<String> = std::iter::once(NA_NAME)
            .chain(relation_set)
            .map(str::to_owned)
            .collect();
        let category_ids: HashMap<String, CategoryId> =
            categories.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        let relation_ids: HashMap<String, RelationId> =
            relations.iter().enumerate().map(|(i, r)| (r.clone(), i)).collect();

        let mut pairs: BTreeMap<(CategoryId, CategoryId), Vec<(RelationId, u64)>> = BTreeMap::new();
        for ((s, r, o), count) in &merged {
            pairs
                .entry((category_ids[s], category_ids[o]))
                .or_default()
                .push((relation_ids[r], *count));
        }
        for rels in pairs.values_mut() {
            rels.sort_unstable();
        }

        Self {
            categories,
            relations,
            category_ids,
            relation_ids,
            pairs,
        }
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// Relation vocabulary, NA first.
    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn category_id(&self, name: &str) -> Option<CategoryId> {
        self.category_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_ids.get(name).copied()
    }

    pub fn category_name(&self, id: CategoryId) -> Option<&str> {
        self.categories.get(id).map(String::as_str)
    }

    pub fn relation_name(&self, id: RelationId) -> Option<&str> {
        self.relations.get(id).map(String::as_str)
    }

    fn check_pair(&self, subj: CategoryId, obj: CategoryId) -> Result<()> {
        let n = self.categories.len();
        if subj >= n || obj >= n {
            return Err(Error::input(format!(
                "category pair ({subj}, {obj}) out of range for {n} categories"
            )));
        }
        Ok(())
    }

    /// Candidate relations with their corpus counts for an ordered pair.
    pub fn lookup_counts(&self, subj: CategoryId, obj: CategoryId) -> Result<&[(RelationId, u64)]> {
        self.check_pair(subj, obj)?;
        Ok(self.pairs.get(&(subj, obj)).map(Vec::as_slice).unwrap_or(&[]))
    }

    /// The candidate set for an ordered category pair, ascending by id.
    pub fn lookup(&self, subj: CategoryId, obj: CategoryId) -> Result<Vec<RelationId>> {
        Ok(self.lookup_counts(subj, obj)?.iter().map(|&(r, _)| r).collect())
    }

    /// Corpus count of a triple; zero when absent.
    pub fn count(&self, subj: CategoryId, relation: RelationId, obj: CategoryId) -> Result<u64> {
        let rels = self.lookup_counts(subj, obj)?;
        Ok(rels
            .binary_search_by_key(&relation, |&(r, _)| r)
            .map(|i| rels[i].1)
            .unwrap_or(0))
    }

    pub fn stats(&self) -> KbStats {
        let num_triples: usize = self.pairs.values().map(Vec::len).sum();
        let avg = if self.pairs.is_empty() {
            0.0
        } else {
            num_triples as f64 / self.pairs.len() as f64
        };
        KbStats {
            num_categories: self.categories.len(),
            num_relations: self.relations.len(),
            num_triples,
            avg_relations_per_pair: avg,
        }
    }

    /// All stored triples in `(subject, relation, object)` name order.
    pub fn triples(&self) -> Vec<RelationTriple> {
        let mut out: Vec<RelationTriple> = self
            .pairs
            .iter()
            .flat_map(|(&(s, o), rels)| {
                rels.iter().map(move |&(r, count)| {
                    RelationTriple::new(&self.categories[s], &self.relations[r], &self.categories[o], count)
                })
            })
            .collect();
        out.sort_by(|a, b| (&a.subject, &a.relation, &a.object).cmp(&(&b.subject, &b.relation, &b.object)));
        out
    }
}

/// Maps plural category names to a singular form present in `names`.
///
/// A trailing "s" is stripped, repeatedly, only while the stripped form is
/// itself a known name.
fn singular_map(names: &BTreeSet<String>) -> HashMap<String, String> {
    let mut map = HashMap::new();
    for name in names {
        let mut current = name.as_str();
        while let Some(stripped) = current.strip_suffix('s') {
            if stripped.is_empty() || !names.contains(stripped) {
                break;
            }
            current = stripped;
        }
        if current != name {
            map.insert(name.clone(), current.to_owned());
        }
    }
    map
}

/// Builds a knowledge base from a triple stream.
///
/// Category names are lowercased and singularized, identical triples are
/// merged by summing counts, and merged triples below `min_count` are
/// dropped. Vocabularies contain only names from surviving triples and are
/// sorted lexicographically, with NA prepended to the relations.
pub fn build_kb<I>(triples: I, min_count: u64) -> Result<KnowledgeBase>
where
    I: IntoIterator<Item = RelationTriple>,
{
    if min_count == 0 {
        return Err(Error::input("min_count must be at least 1"));
    }
    let mut raw: Vec<RelationTriple> = Vec::new();
    for mut t in triples {
        t.subject = t.subject.to_lowercase();
        t.object = t.object.to_lowercase();
        t.check()?;
        if t.relation == NA_NAME || t.count == 0 {
            continue;
        }
        raw.push(t);
    }

    let names: BTreeSet<String> = raw.iter().flat_map(|t| [t.subject.clone(), t.object.clone()]).collect();
    let singular = singular_map(&names);
    let canon = |name: String| singular.get(&name).cloned().unwrap_or(name);

    let mut merged: BTreeMap<(String, String, String), u64> = BTreeMap::new();
    for t in raw {
        *merged
            .entry((canon(t.subject), t.relation, canon(t.object)))
            .or_insert(0) += t.count;
    }
    merged.retain(|_, count| *count >= min_count);
    Ok(KnowledgeBase::from_merged(merged))
}

/// Extracts triples from every caption and builds a knowledge base.
pub fn build_kb_from_captions<'a, I>(captions: I, min_count: u64) -> Result<KnowledgeBase>
where
    I: IntoIterator<Item = &'a str>,
{
    let captions: Vec<&str> = captions.into_iter().collect();
    let per_caption = crate::par::map(&captions, |c| extract_triples(c));
    build_kb(per_caption.into_iter().flatten(), min_count)
}
