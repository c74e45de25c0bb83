//! Scenes, objects, relation instances and the JSON-lines dataset format.

mod bbox;
mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{CategoryId, RelationId, NA};

pub use bbox::{iou, overlaps, BoundingBox};
pub use io::{read_dataset, read_dataset_from, write_dataset, write_dataset_to};

/// Tolerance for probability vectors summing to one.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub category: CategoryId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Human,
    Distant,
}

/// One ordered object pair with its candidate relations and current label.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationInstance {
    pub subject_idx: usize,
    pub object_idx: usize,
    /// Candidate relation ids, ascending and unique.
    pub candidates: Vec<RelationId>,
    /// Probability vector over all relations; empty while unset.
    pub label: Vec<f64>,
    pub provenance: Provenance,
    pub active: bool,
}

impl RelationInstance {
    /// A distant instance with no label yet.
    pub fn distant(subject_idx: usize, object_idx: usize, candidates: Vec<RelationId>) -> Self {
        Self {
            subject_idx,
            object_idx,
            candidates,
            label: Vec::new(),
            provenance: Provenance::Distant,
            active: true,
        }
    }

    /// A human-annotated instance with a one-hot label at `relation`.
    pub fn human(subject_idx: usize, object_idx: usize, relation: RelationId, num_relations: usize) -> Self {
        let mut label = vec![0.0; num_relations];
        label[relation] = 1.0;
        Self {
            subject_idx,
            object_idx,
            candidates: vec![relation],
            label,
            provenance: Provenance::Human,
            active: true,
        }
    }

    /// Multi-hot indicator of the candidate set over `num_relations` slots.
    pub fn raw_vector(&self, num_relations: usize) -> Vec<f64> {
        let mut d = vec![0.0; num_relations];
        for &c in &self.candidates {
            d[c] = 1.0;
        }
        d
    }

    pub fn has_label(&self) -> bool {
        !self.label.is_empty()
    }

    /// The current label, or the uniform distribution over candidates when
    /// no label has been assigned.
    pub fn effective_label(&self, num_relations: usize) -> Vec<f64> {
        if self.has_label() {
            return self.label.clone();
        }
        let mut r = vec![0.0; num_relations];
        let p = 1.0 / self.candidates.len() as f64;
        for &c in &self.candidates {
            r[c] = p;
        }
        r
    }

    /// Arg-max of the effective label over candidate slots; ties go to the
    /// lowest relation id.
    pub fn argmax_label(&self) -> Option<RelationId> {
        if !self.has_label() {
            return self.candidates.first().copied();
        }
        let mut best: Option<(RelationId, f64)> = None;
        for &c in &self.candidates {
            let p = self.label[c];
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((c, p));
            }
        }
        best.map(|(c, _)| c)
    }

    fn validate(&self, num_objects: usize) -> std::result::Result<(), String> {
        if self.subject_idx >= num_objects || self.object_idx >= num_objects {
            return Err(format!(
                "relation ({}, {}) references missing object (scene has {num_objects})",
                self.subject_idx, self.object_idx
            ));
        }
        if self.subject_idx == self.object_idx {
            return Err(format!("relation links object {} to itself", self.subject_idx));
        }
        if self.candidates.is_empty() {
            return Err("relation has no candidates".into());
        }
        if self.candidates.windows(2).any(|w| w[0] >= w[1]) {
            return Err("candidates must be ascending and unique".into());
        }
        if self.provenance == Provenance::Distant && self.candidates.contains(&NA) {
            return Err("distant candidates must not contain NA".into());
        }
        if self.provenance == Provenance::Human && self.candidates.len() != 1 {
            return Err("human relation must have exactly one candidate".into());
        }
        if self.has_label() {
            check_label(&self.label, &self.candidates)?;
            if self.provenance == Provenance::Human && self.label[self.candidates[0]] != 1.0 {
                return Err("human label must be one-hot".into());
            }
        }
        Ok(())
    }
}

/// Checks that `label` is a probability vector supported on `candidates`.
pub fn check_label(label: &[f64], candidates: &[RelationId]) -> std::result::Result<(), String> {
    let Some(&max_c) = candidates.iter().max() else {
        return Err("empty candidate set".into());
    };
    if label.len() <= max_c {
        return Err(format!(
            "label has {} slots, candidate {max_c} out of range",
            label.len()
        ));
    }
    let mut sum = 0.0;
    for (i, &p) in label.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(format!("label slot {i} is {p}"));
        }
        if p != 0.0 && candidates.binary_search(&i).is_err() {
            return Err(format!("label slot {i} is off-candidate but {p}"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(format!("label sums to {sum}"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub width: f64,
    pub height: f64,
    pub objects: Vec<ObjectInstance>,
    pub relations: Vec<RelationInstance>,
}

impl Scene {
    pub fn new(id: impl Into<String>, width: f64, height: f64, objects: Vec<ObjectInstance>) -> Self {
        Self {
            id: id.into(),
            width,
            height,
            objects,
            relations: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Error::validation(&self.id, msg);
        if !(self.width.is_finite() && self.width > 0.0 && self.height.is_finite() && self.height > 0.0) {
            return Err(fail(format!("invalid image size {}x{}", self.width, self.height)));
        }
        for (i, obj) in self.objects.iter().enumerate() {
            obj.bbox.validate().map_err(|e| fail(format!("object {i}: {e}")))?;
            if !obj.bbox.within_image(self.width, self.height) {
                return Err(fail(format!("object {i} lies outside the image")));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (k, rel) in self.relations.iter().enumerate() {
            rel.validate(self.objects.len())
                .map_err(|m| fail(format!("relation {k}: {m}")))?;
            if !seen.insert((rel.subject_idx, rel.object_idx, rel.provenance)) {
                return Err(fail(format!(
                    "relation {k}: duplicate pair ({}, {})",
                    rel.subject_idx, rel.object_idx
                )));
            }
        }
        Ok(())
    }

    /// Fails when any object category is outside `0..num_categories`.
    pub fn check_categories(&self, num_categories: usize) -> Result<()> {
        match self.objects.iter().position(|o| o.category >= num_categories) {
            Some(i) => Err(Error::validation(
                &self.id,
                format!(
                    "object {i} has category {} outside vocabulary of {num_categories}",
                    self.objects[i].category
                ),
            )),
            None => Ok(()),
        }
    }

    pub fn subject_box(&self, rel: &RelationInstance) -> &BoundingBox {
        &self.objects[rel.subject_idx].bbox
    }

    pub fn object_box(&self, rel: &RelationInstance) -> &BoundingBox {
        &self.objects[rel.object_idx].bbox
    }

    /// Ordered pairs `(i, j)`, `i != j`, that carry no relation instance.
    pub fn unlabeled_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.objects.len();
        let mut taken = vec![false; n * n];
        for r in &self.relations {
            taken[r.subject_idx * n + r.object_idx] = true;
        }
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && !taken[i * n + j])
            .collect()
    }
}

/// Distantly labeled (`DS`) or human-labeled (`DL`) data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetKind {
    #[serde(rename = "D_S")]
    Distant,
    #[serde(rename = "D_L")]
    Human,
}

impl DatasetKind {
    pub fn provenance(self) -> Provenance {
        match self {
            DatasetKind::Distant => Provenance::Distant,
            DatasetKind::Human => Provenance::Human,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub scenes: Vec<Scene>,
}

impl Dataset {
    pub fn new(kind: DatasetKind, scenes: Vec<Scene>) -> Self {
        Self { kind, scenes }
    }

    pub fn empty(kind: DatasetKind) -> Self {
        Self::new(kind, Vec::new())
    }

    /// Validates every scene plus the provenance/kind agreement.
    pub fn validate(&self) -> Result<()> {
        let want = self.kind.provenance();
        let mut label_len: Option<usize> = None;
        for scene in &self.scenes {
            scene.validate()?;
            for rel in &scene.relations {
                if rel.provenance != want {
                    return Err(Error::validation(
                        &scene.id,
                        format!("{:?} relation in a {:?} dataset", rel.provenance, self.kind),
                    ));
                }
                if rel.has_label() {
                    match label_len {
                        None => label_len = Some(rel.label.len()),
                        Some(n) if n != rel.label.len() => {
                            return Err(Error::validation(
                                &scene.id,
                                format!("label length {} differs from {n}", rel.label.len()),
                            ))
                        }
                        Some(_) => {}
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_instances(&self) -> usize {
        self.scenes.iter().map(|s| s.relations.len()).sum()
    }

    pub fn num_active(&self) -> usize {
        self.instances().filter(|(_, r)| r.active).count()
    }

    /// Every relation instance with its scene, in file order.
    pub fn instances(&self) -> impl Iterator<Item = (&Scene, &RelationInstance)> {
        self.scenes.iter().flat_map(|s| s.relations.iter().map(move |r| (s, r)))
    }

    pub fn check_categories(&self, num_categories: usize) -> Result<()> {
        self.scenes.iter().try_for_each(|s| s.check_categories(num_categories))
    }

    /// Fails when any candidate or label slot exceeds `num_relations`.
    pub fn check_relations(&self, num_relations: usize) -> Result<()> {
        for (scene, rel) in self.instances() {
            if rel.candidates.iter().any(|&c| c >= num_relations)
                || (rel.has_label() && rel.label.len() != num_relations)
            {
                return Err(Error::validation(
                    &scene.id,
                    format!(
                        "relation ({}, {}) does not fit a vocabulary of {num_relations} relations",
                        rel.subject_idx, rel.object_idx
                    ),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(x1: f64, y1: f64, x2: f64, y2: f64, c: usize) -> ObjectInstance {
        ObjectInstance {
            bbox: BoundingBox::new(x1, y1, x2, y2).unwrap(),
            category: c,
        }
    }

    fn scene() -> Scene {
        Scene::new(
            "s",
            100.0,
            100.0,
            vec![
                obj(0., 0., 10., 10., 0),
                obj(5., 5., 20., 20., 1),
                obj(50., 50., 60., 60., 1),
            ],
        )
    }

    #[test]
    fn label_invariants() {
        let mut s = scene();
        let mut r = RelationInstance::distant(0, 1, vec![1, 3]);
        r.label = vec![0.0, 0.4, 0.0, 0.6];
        s.relations.push(r.clone());
        s.validate().unwrap();

        s.relations[0].label = vec![0.0, 0.4, 0.1, 0.5];
        assert!(s.validate().is_err(), "off-candidate mass");
        s.relations[0].label = vec![0.0, 0.4, 0.0, 0.5];
        assert!(s.validate().is_err(), "not normalized");
        s.relations[0] = RelationInstance::distant(0, 1, vec![0, 2]);
        assert!(s.validate().is_err(), "NA candidate");
        s.relations[0] = RelationInstance::distant(1, 1, vec![2]);
        assert!(s.validate().is_err(), "self pair");
        s.relations[0] = RelationInstance::distant(0, 4, vec![2]);
        assert!(s.validate().is_err(), "missing object");
    }

    #[test]
    fn human_one_hot() {
        let r = RelationInstance::human(0, 1, 2, 4);
        assert_eq!(r.label, vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(r.raw_vector(4), vec![0.0, 0.0, 1.0, 0.0]);
        assert_eq!(r.argmax_label(), Some(2));
    }

    #[test]
    fn effective_label_defaults_to_uniform() {
        let r = RelationInstance::distant(0, 1, vec![1, 2, 4]);
        let e = r.effective_label(5);
        assert_eq!(e, vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0]);
        assert_eq!(r.argmax_label(), Some(1));
        let mut r = r;
        r.label = vec![0.0, 0.2, 0.4, 0.0, 0.4];
        assert_eq!(r.argmax_label(), Some(2));
    }

    #[test]
    fn box_outside_image() {
        let s = Scene::new("big", 10.0, 10.0, vec![obj(0., 0., 11., 5., 0)]);
        assert!(matches!(s.validate(), Err(Error::Validation { scene, .. }) if scene == "big"));
    }

    #[test]
    fn unlabeled_pairs_skip_instances() {
        let mut s = scene();
        s.relations.push(RelationInstance::distant(0, 1, vec![1]));
        let pairs = s.unlabeled_pairs();
        assert_eq!(pairs, vec![(0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
    }

    #[test]
    fn dataset_kind_must_match() {
        let mut s = scene();
        s.relations.push(RelationInstance::human(0, 1, 1, 3));
        let ds = Dataset::new(DatasetKind::Distant, vec![s.clone()]);
        assert!(ds.validate().is_err());
        let dl = Dataset::new(DatasetKind::Human, vec![s]);
        dl.validate().unwrap();
        assert!(dl.check_relations(2).is_err());
        dl.check_relations(3).unwrap();
    }
}
