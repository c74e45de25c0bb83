//! Distant labeling: align a knowledge base to scenes of annotated boxes.

use std::collections::HashMap;
use std::ops::AddAssign;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::par;
use crate::scene::{overlaps, Dataset, DatasetKind, RelationInstance, Scene};

/// Per-run alignment tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AlignStats {
    /// Ordered object pairs examined.
    pub pairs_considered: usize,
    /// Pairs with a category outside the knowledge-base vocabulary.
    pub skipped_unknown_category: usize,
    /// Pairs rejected because their boxes do not overlap.
    pub skipped_no_overlap: usize,
    /// Overlapping pairs whose category pair has no stored relation.
    pub skipped_no_candidates: usize,
    pub emitted: usize,
}

impl AddAssign for AlignStats {
    fn add_assign(&mut self, o: Self) {
        self.pairs_considered += o.pairs_considered;
        self.skipped_unknown_category += o.skipped_unknown_category;
        self.skipped_no_overlap += o.skipped_no_overlap;
        self.skipped_no_candidates += o.skipped_no_candidates;
        self.emitted += o.emitted;
    }
}

/// Emits one distant instance per ordered pair of overlapping objects whose
/// category pair has candidates in `kb`. Existing relations are replaced.
pub fn align_scene(kb: &KnowledgeBase, scene: &Scene) -> (Scene, AlignStats) {
    let mut stats = AlignStats::default();
    let mut relations = Vec::new();
    let n_cat = kb.num_categories();
    for (i, si) in scene.objects.iter().enumerate() {
        for (j, sj) in scene.objects.iter().enumerate() {
            if i == j {
                continue;
            }
            stats.pairs_considered += 1;
            if si.category >= n_cat || sj.category >= n_cat {
                stats.skipped_unknown_category += 1;
                continue;
            }
            if !overlaps(&si.bbox, &sj.bbox) {
                stats.skipped_no_overlap += 1;
                continue;
            }
            let candidates = kb
                .lookup(si.category, sj.category)
                .expect("category ids checked against vocabulary");
            if candidates.is_empty() {
                stats.skipped_no_candidates += 1;
                continue;
            }
            relations.push(RelationInstance::distant(i, j, candidates));
            stats.emitted += 1;
        }
    }
    let mut out = scene.clone();
    out.relations = relations;
    (out, stats)
}

/// Aligns every scene, keeping scene order.
pub fn align_dataset(kb: &KnowledgeBase, scenes: &[Scene]) -> (Dataset, AlignStats) {
    let aligned = par::map(scenes, |s| align_scene(kb, s));
    let mut total = AlignStats::default();
    let mut out = Vec::with_capacity(aligned.len());
    for (scene, stats) in aligned {
        total += stats;
        out.push(scene);
    }
    (Dataset::new(DatasetKind::Distant, out), total)
}

/// Fraction of human-labeled `(scene, subject, object, relation)` tuples
/// whose relation is among the candidates of the matching distant instance.
///
/// Every scene id in `dl` must exist in `ds`. Returns 0 when `dl` holds no
/// relations.
pub fn coverage(ds: &Dataset, dl: &Dataset) -> Result<f64> {
    let by_id: HashMap<&str, &Scene> = ds.scenes.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut total = 0usize;
    let mut covered = 0usize;
    for scene in &dl.scenes {
        let Some(aligned) = by_id.get(scene.id.as_str()) else {
            return Err(Error::input(format!(
                "scene '{}' of the human-labeled set is missing from the distant set",
                scene.id
            )));
        };
        let cands: HashMap<(usize, usize), &[usize]> = aligned
            .relations
            .iter()
            .map(|r| ((r.subject_idx, r.object_idx), r.candidates.as_slice()))
            .collect();
        for rel in &scene.relations {
            for &gold in &rel.candidates {
                total += 1;
                if cands
                    .get(&(rel.subject_idx, rel.object_idx))
                    .is_some_and(|c| c.contains(&gold))
                {
                    covered += 1;
                }
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { covered as f64 / total as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{build_kb, RelationTriple};
    use crate::scene::{BoundingBox, ObjectInstance};

    fn figure_kb() -> KnowledgeBase {
        build_kb(
            vec![
                RelationTriple::new("person", "riding", "horse", 5),
                RelationTriple::new("person", "sitting on", "horse", 3),
                RelationTriple::new("person", "watching", "horse", 2),
                RelationTriple::new("person", "walking on", "beach", 2),
                RelationTriple::new("horse", "on", "beach", 4),
            ],
            1,
        )
        .unwrap()
    }

    fn obj(kb: &KnowledgeBase, name: &str, b: [f64; 4]) -> ObjectInstance {
        ObjectInstance {
            bbox: BoundingBox::new(b[0], b[1], b[2], b[3]).unwrap(),
            category: kb.category_id(name).unwrap(),
        }
    }

    #[test]
    fn figure_one_alignment() {
        let kb = figure_kb();
        let scene = Scene::new(
            "fig1",
            200.0,
            200.0,
            vec![
                obj(&kb, "person", [40., 10., 80., 90.]),
                obj(&kb, "horse", [30., 50., 120., 140.]),
                obj(&kb, "beach", [0., 150., 200., 200.]),
            ],
        );
        let (out, stats) = align_scene(&kb, &scene);
        assert_eq!(out.relations.len(), 1);
        let rel = &out.relations[0];
        assert_eq!((rel.subject_idx, rel.object_idx), (0, 1));
        let names: Vec<&str> = rel.candidates.iter().map(|&r| kb.relation_name(r).unwrap()).collect();
        assert_eq!(names, vec!["riding", "sitting on", "watching"]);
        let d = rel.raw_vector(kb.num_relations());
        assert_eq!(d.iter().sum::<f64>(), 3.0);
        assert_eq!(d[0], 0.0);
        assert!(rel.label.is_empty() && rel.active);
        assert_eq!(stats.pairs_considered, 6);
        assert_eq!(stats.emitted, 1);
        // person/beach has candidates but the boxes are disjoint
        assert!(stats.skipped_no_overlap >= 1);
    }

    #[test]
    fn overlapping_pair_without_candidates() {
        let kb = figure_kb();
        let scene = Scene::new(
            "s",
            100.0,
            100.0,
            vec![
                obj(&kb, "beach", [0., 0., 50., 50.]),
                obj(&kb, "person", [10., 10., 40., 40.]),
            ],
        );
        let (out, stats) = align_scene(&kb, &scene);
        // beach -> person has no stored relation; person -> beach does
        let pairs: Vec<_> = out.relations.iter().map(|r| (r.subject_idx, r.object_idx)).collect();
        assert_eq!(pairs, vec![(1, 0)]);
        assert_eq!(stats.skipped_no_candidates, 1);
    }

    #[test]
    fn both_directions() {
        let kb = build_kb(
            vec![
                RelationTriple::new("a", "near", "b", 1),
                RelationTriple::new("b", "near", "a", 1),
            ],
            1,
        )
        .unwrap();
        let scene = Scene::new(
            "s",
            10.0,
            10.0,
            vec![obj(&kb, "a", [0., 0., 5., 5.]), obj(&kb, "b", [2., 2., 7., 7.])],
        );
        let (ds, stats) = align_dataset(&kb, &[scene]);
        assert_eq!(ds.num_instances(), 2);
        assert_eq!(stats.emitted, 2);
        let pairs: Vec<_> = ds.scenes[0]
            .relations
            .iter()
            .map(|r| (r.subject_idx, r.object_idx))
            .collect();
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn unknown_category_skipped() {
        let kb = figure_kb();
        let mut scene = Scene::new(
            "s",
            100.0,
            100.0,
            vec![
                obj(&kb, "person", [0., 0., 50., 50.]),
                obj(&kb, "horse", [10., 10., 40., 40.]),
            ],
        );
        scene.objects[1].category = 99;
        let (out, stats) = align_scene(&kb, &scene);
        assert!(out.relations.is_empty());
        assert_eq!(stats.skipped_unknown_category, 2);
    }

    #[test]
    fn empty_scene_list() {
        let (ds, stats) = align_dataset(&figure_kb(), &[]);
        assert!(ds.scenes.is_empty());
        assert_eq!(stats, AlignStats::default());
    }

    #[test]
    fn coverage_mismatched_ids() {
        let ds = Dataset::empty(DatasetKind::Distant);
        let dl = Dataset::new(DatasetKind::Human, vec![Scene::new("x", 1.0, 1.0, vec![])]);
        assert!(coverage(&ds, &dl).is_err());
    }
}
