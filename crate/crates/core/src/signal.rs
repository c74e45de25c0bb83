//! External semantic signals scoring how well a relation fits an object pair.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, RelationId};
use crate::scene::{RelationInstance, Scene};

/// Unnormalized relatedness between an object pair and a relation.
///
/// Implementations must be deterministic and return finite values.
pub trait ExternalSignal: Send + Sync {
    fn relatedness(&self, scene: &Scene, instance: &RelationInstance, relation: RelationId) -> f64;
}

/// Scores `relation` for `instance`, which must list it as a candidate.
pub fn score(
    signal: &dyn ExternalSignal,
    scene: &Scene,
    instance: &RelationInstance,
    relation: RelationId,
) -> Result<f64> {
    if instance.candidates.binary_search(&relation).is_err() {
        return Err(Error::input(format!(
            "relation {relation} is not a candidate of pair ({}, {}) in scene '{}'",
            instance.subject_idx, instance.object_idx, scene.id
        )));
    }
    let alpha = signal.relatedness(scene, instance, relation);
    if !alpha.is_finite() {
        return Err(Error::input(format!("signal returned non-finite score {alpha}")));
    }
    Ok(alpha)
}

/// Softmax of `alphas` placed at the `candidates` slots of a length
/// `num_relations` vector; every other slot, NA included, is zero.
pub fn normalize(alphas: &[f64], candidates: &[RelationId], num_relations: usize) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::input("cannot normalize over an empty candidate set"));
    }
    if alphas.len() != candidates.len() {
        return Err(Error::input(format!(
            "{} scores for {} candidates",
            alphas.len(),
            candidates.len()
        )));
    }
    if let Some(&c) = candidates.iter().find(|&&c| c >= num_relations) {
        return Err(Error::input(format!("candidate {c} outside {num_relations} relations")));
    }
    if alphas.iter().any(|a| !a.is_finite()) {
        return Err(Error::input("non-finite relatedness score"));
    }
    let max = alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = alphas.iter().map(|a| (a - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let mut e = vec![0.0; num_relations];
    for (&c, x) in candidates.iter().zip(exps) {
        e[c] = x / z;
    }
    Ok(e)
}

/// Scores every candidate of `instance` and normalizes.
pub fn estimate_e(
    signal: &dyn ExternalSignal,
    scene: &Scene,
    instance: &RelationInstance,
    num_relations: usize,
) -> Result<Vec<f64>> {
    let alphas = instance
        .candidates
        .iter()
        .map(|&r| score(signal, scene, instance, r))
        .collect::<Result<Vec<_>>>()?;
    normalize(&alphas, &instance.candidates, num_relations)
}

/// Log co-occurrence count from the knowledge base: `ln(count + 1)`.
///
/// Uses caption statistics only, so no human relation labels leak into the
/// distant pipeline.
#[derive(Debug, Clone, Copy)]
pub struct CooccurrenceSignal<'a> {
    kb: &'a KnowledgeBase,
}

impl<'a> CooccurrenceSignal<'a> {
    pub fn new(kb: &'a KnowledgeBase) -> Self {
        Self { kb }
    }
}

impl ExternalSignal for CooccurrenceSignal<'_> {
    fn relatedness(&self, scene: &Scene, instance: &RelationInstance, relation: RelationId) -> f64 {
        let s = scene.objects[instance.subject_idx].category;
        let o = scene.objects[instance.object_idx].category;
        let count = self.kb.count(s, relation, o).unwrap_or(0);
        (count as f64 + 1.0).ln()
    }
}

type SignalKey = (String, usize, usize, RelationId);

/// Precomputed scores keyed by `(scene id, subject, object, relation)`.
/// Missing keys score 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileSignal {
    scores: HashMap<SignalKey, f64>,
}

impl FileSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, scene_id: &str, sub: usize, obj: usize, relation: RelationId, score: f64) {
        self.scores.insert((scene_id.to_owned(), sub, obj, relation), score);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Parses `scene_id\tsub\tobj\trelation\tscore` lines. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn read_from<R: BufRead>(input: R, origin: &str) -> Result<Self> {
        let mut signal = Self::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [scene, sub, obj, rel, score] = fields[..] else {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("expected 5 fields, found {}", fields.len()),
                ));
            };
            let int = |s: &str, what: &str| -> Result<usize> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::parse(origin, lineno, format!("invalid {what} '{s}'")))
            };
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("invalid score '{score}'")))?;
            if !score.is_finite() {
                return Err(Error::parse(origin, lineno, "score must be finite"));
            }
            signal.insert(
                scene,
                int(sub, "subject index")?,
                int(obj, "object index")?,
                int(rel, "relation")?,
                score,
            );
        }
        Ok(signal)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read_from(BufReader::new(File::open(path)?), &path.display().to_string())
    }
}

impl ExternalSignal for FileSignal {
    fn relatedness(&self, scene: &Scene, instance: &RelationInstance, relation: RelationId) -> f64 {
        self.scores
            .get(&(scene.id.clone(), instance.subject_idx, instance.object_idx, relation))
            .copied()
            .unwrap_or(0.0)
    }
}
