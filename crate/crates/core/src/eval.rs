//! Predicate-classification evaluation: ranked predictions, recall and
//! precision at K, and label quality against an oracle.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{KnowledgeBase, RelationId, NA};
use crate::par;
use crate::scene::{Dataset, Scene};
use crate::scorer::{featurize_pair, RelationScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoldTriple {
    pub sub: usize,
    pub obj: usize,
    pub relation: RelationId,
}

/// Ground-truth relation triples per scene id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldSet {
    scenes: BTreeMap<String, BTreeSet<GoldTriple>>,
}

#[derive(Serialize, Deserialize)]
struct GoldRecord {
    id: String,
    relations: Vec<GoldTriple>,
}

impl GoldSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, scene: &str, triple: GoldTriple) {
        self.scenes.entry(scene.to_owned()).or_default().insert(triple);
    }

    /// Registers a scene with no gold triples.
    pub fn touch(&mut self, scene: &str) {
        self.scenes.entry(scene.to_owned()).or_default();
    }

    pub fn scene(&self, id: &str) -> Option<&BTreeSet<GoldTriple>> {
        self.scenes.get(id)
    }

    pub fn scene_ids(&self) -> impl Iterator<Item = &str> {
        self.scenes.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.scenes.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First gold relation of an ordered pair.
    pub fn relation(&self, scene: &str, sub: usize, obj: usize) -> Option<RelationId> {
        self.scenes
            .get(scene)?
            .range(GoldTriple { sub, obj, relation: 0 }..)
            .next()
            .filter(|t| t.sub == sub && t.obj == obj)
            .map(|t| t.relation)
    }

    /// Gold triples from the one-hot labels of a human-labeled dataset.
    pub fn from_dataset(dl: &Dataset) -> Self {
        let mut gold = Self::new();
        for scene in &dl.scenes {
            gold.touch(&scene.id);
            for rel in &scene.relations {
                if let Some(r) = rel.argmax_label() {
                    gold.insert(
                        &scene.id,
                        GoldTriple {
                            sub: rel.subject_idx,
                            obj: rel.object_idx,
                            relation: r,
                        },
                    );
                }
            }
        }
        gold
    }

    pub fn max_relation(&self) -> Option<RelationId> {
        self.scenes.values().flatten().map(|t| t.relation).max()
    }

    /// JSON lines: `{"id": ..., "relations": [{"sub", "obj", "relation"}]}`.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for (id, triples) in &self.scenes {
            let rec = GoldRecord {
                id: id.clone(),
                relations: triples.iter().copied().collect(),
            };
            let line = serde_json::to_string(&rec).map_err(std::io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn read_from<R: BufRead>(input: R, origin: &str) -> Result<Self> {
        let mut gold = Self::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: GoldRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(origin, idx + 1, e.to_string()))?;
            gold.touch(&rec.id);
            for t in rec.relations {
                if t.relation == NA || t.sub == t.obj {
                    return Err(Error::parse(origin, idx + 1, "gold triple is NA or a self pair"));
                }
                gold.insert(&rec.id, t);
            }
        }
        Ok(gold)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read_from(BufReader::new(File::open(path)?), &path.display().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedPrediction {
    pub scene: String,
    pub subject_idx: usize,
    pub object_idx: usize,
    pub relation: RelationId,
    pub score: f64,
}

/// Ranking order: score descending, then relation, subject and object
/// ascending.
fn rank_cmp(a: &RankedPrediction, b: &RankedPrediction) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.relation.cmp(&b.relation))
        .then(a.subject_idx.cmp(&b.subject_idx))
        .then(a.object_idx.cmp(&b.object_idx))
}

/// Scores every ordered object pair of `scene` for every non-NA relation
/// (or only its knowledge-base candidates when `kb` is given), with the
/// softmax probability over all relations as score.
pub fn predict_scene(
    scorer: &RelationScorer,
    scene: &Scene,
    kb: Option<&KnowledgeBase>,
) -> Result<Vec<RankedPrediction>> {
    let n = scene.objects.len();
    let mut preds = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let x = featurize_pair(scene, i, j, scorer.num_categories())?;
            let probs = scorer.probabilities(&x)?;
            let allowed: Vec<RelationId> = match kb {
                Some(kb) => kb.lookup(scene.objects[i].category, scene.objects[j].category)?,
                None => (1..scorer.num_relations()).collect(),
            };
            for r in allowed {
                if r == NA || r >= probs.len() {
                    continue;
                }
                preds.push(RankedPrediction {
                    scene: scene.id.clone(),
                    subject_idx: i,
                    object_idx: j,
                    relation: r,
                    score: probs[r],
                });
            }
        }
    }
    preds.sort_by(rank_cmp);
    Ok(preds)
}

/// Predictions for many scenes, concatenated in scene order.
pub fn predict_all(
    scorer: &RelationScorer,
    scenes: &[Scene],
    kb: Option<&KnowledgeBase>,
) -> Result<Vec<RankedPrediction>> {
    let per_scene = par::map(scenes, |s| predict_scene(scorer, s, kb));
    let mut out = Vec::new();
    for p in per_scene {
        out.extend(p?);
    }
    Ok(out)
}

/// How the per-scene top-K list is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankingProtocol {
    /// Keep only the best-scoring relation per ordered object pair.
    pub graph_constraint: bool,
}

impl Default for RankingProtocol {
    fn default() -> Self {
        Self { graph_constraint: true }
    }
}

struct TopK<'a> {
    /// (scene, triple) of every retained prediction
    kept: Vec<(&'a str, GoldTriple)>,
}

impl RankingProtocol {
    fn top_k<'a>(&self, preds: &'a [RankedPrediction], k: usize) -> Result<TopK<'a>> {
        if k == 0 {
            return Err(Error::input("K must be positive"));
        }
        let mut by_scene: BTreeMap<&str, Vec<&RankedPrediction>> = BTreeMap::new();
        for p in preds {
            by_scene.entry(p.scene.as_str()).or_default().push(p);
        }
        let mut kept = Vec::new();
        for (scene, mut list) in by_scene {
            list.sort_by(|a, b| rank_cmp(a, b));
            let mut seen_pairs = HashSet::new();
            let mut taken = 0;
            for p in list {
                if taken == k {
                    break;
                }
                if self.graph_constraint && !seen_pairs.insert((p.subject_idx, p.object_idx)) {
                    continue;
                }
                kept.push((
                    scene,
                    GoldTriple {
                        sub: p.subject_idx,
                        obj: p.object_idx,
                        relation: p.relation,
                    },
                ));
                taken += 1;
            }
        }
        Ok(TopK { kept })
    }

    fn hits<'a>(&self, top: &TopK<'a>, gold: &GoldSet) -> Vec<(&'a str, GoldTriple, bool)> {
        top.kept
            .iter()
            .map(|&(s, t)| (s, t, gold.scene(s).is_some_and(|g| g.contains(&t))))
            .collect()
    }

    /// Micro recall: gold triples found in the per-scene top-K over all
    /// gold triples. Zero when there is no gold.
    pub fn recall_at_k(&self, preds: &[RankedPrediction], gold: &GoldSet, k: usize) -> Result<f64> {
        let top = self.top_k(preds, k)?;
        let found = self.hits(&top, gold).iter().filter(|h| h.2).count();
        let total = gold.len();
        Ok(if total == 0 { 0.0 } else { found as f64 / total as f64 })
    }

    /// Macro recall: per-relation recall averaged over relations with at
    /// least one gold triple.
    pub fn mean_recall_at_k(&self, preds: &[RankedPrediction], gold: &GoldSet, k: usize) -> Result<f64> {
        let top = self.top_k(preds, k)?;
        let mut found: HashMap<RelationId, usize> = HashMap::new();
        for (_, t, hit) in self.hits(&top, gold) {
            if hit {
                *found.entry(t.relation).or_default() += 1;
            }
        }
        let mut totals: BTreeMap<RelationId, usize> = BTreeMap::new();
        for t in gold.scenes.values().flatten() {
            *totals.entry(t.relation).or_default() += 1;
        }
        if totals.is_empty() {
            return Ok(0.0);
        }
        let sum: f64 = totals
            .iter()
            .map(|(r, &n)| found.get(r).copied().unwrap_or(0) as f64 / n as f64)
            .sum();
        Ok(sum / totals.len() as f64)
    }

    /// Micro precision: correct top-K predictions over retained
    /// predictions. When a scene has fewer than K predictions the
    /// denominator is the number actually retained.
    pub fn precision_at_k(&self, preds: &[RankedPrediction], gold: &GoldSet, k: usize) -> Result<f64> {
        let top = self.top_k(preds, k)?;
        let hits = self.hits(&top, gold);
        if hits.is_empty() {
            return Ok(0.0);
        }
        Ok(hits.iter().filter(|h| h.2).count() as f64 / hits.len() as f64)
    }

    /// Macro precision: per-relation precision averaged over relations
    /// that appear in some top-K list.
    pub fn mean_precision_at_k(&self, preds: &[RankedPrediction], gold: &GoldSet, k: usize) -> Result<f64> {
        let top = self.top_k(preds, k)?;
        let mut per: BTreeMap<RelationId, (usize, usize)> = BTreeMap::new();
        for (_, t, hit) in self.hits(&top, gold) {
            let e = per.entry(t.relation).or_default();
            e.0 += usize::from(hit);
            e.1 += 1;
        }
        if per.is_empty() {
            return Ok(0.0);
        }
        let sum: f64 = per.values().map(|&(h, n)| h as f64 / n as f64).sum();
        Ok(sum / per.len() as f64)
    }
}

pub fn recall_at_k(preds: &[RankedPrediction], gold: &GoldSet, k: usize) -> Result<f64> {
    RankingProtocol::default().recall_at_k(preds, gold, k)
}

pub fn mean_recall_at_k(preds: &[RankedPrediction], gold: &GoldSet, k: usize) -> Result<f64> {
    RankingProtocol::default().mean_recall_at_k(preds, gold, k)
}

pub fn precision_at_k(preds: &[RankedPrediction], gold: &GoldSet, k: usize) -> Result<f64> {
    RankingProtocol::default().precision_at_k(preds, gold, k)
}

pub fn mean_precision_at_k(preds: &[RankedPrediction], gold: &GoldSet, k: usize) -> Result<f64> {
    RankingProtocol::default().mean_precision_at_k(preds, gold, k)
}

/// Fraction of active instances whose arg-max label (lowest id on ties;
/// uniform over candidates when unlabeled) equals the gold relation.
/// Zero when no instance is active.
pub fn label_quality(ds: &Dataset, gold: &GoldSet) -> Result<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for (scene, rel) in ds.instances().filter(|(_, r)| r.active) {
        let g = gold
            .relation(&scene.id, rel.subject_idx, rel.object_idx)
            .ok_or_else(|| {
                Error::input(format!(
                    "no gold relation for pair ({}, {}) in scene '{}'",
                    rel.subject_idx, rel.object_idx, scene.id
                ))
            })?;
        total += 1;
        correct += usize::from(rel.argmax_label() == Some(g));
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}
