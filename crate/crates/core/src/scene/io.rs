use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, Dataset, DatasetKind, ObjectInstance, Provenance, RelationInstance, Scene};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct ObjectRecord {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    category: usize,
}

fn is_true(b: &bool) -> bool {
    *b
}

fn yes() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
struct RelationRecord {
    sub: usize,
    obj: usize,
    candidates: Vec<usize>,
    #[serde(default)]
    raw: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    label: Vec<f64>,
    provenance: Provenance,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    active: bool,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    id: String,
    width: f64,
    height: f64,
    objects: Vec<ObjectRecord>,
    #[serde(default)]
    relations: Vec<RelationRecord>,
}

impl From<&Scene> for SceneRecord {
    fn from(s: &Scene) -> Self {
        SceneRecord {
            id: s.id.clone(),
            width: s.width,
            height: s.height,
            objects: s
                .objects
                .iter()
                .map(|o| ObjectRecord {
                    bbox: o.bbox.into(),
                    category: o.category,
                })
                .collect(),
            relations: s
                .relations
                .iter()
                .map(|r| RelationRecord {
                    sub: r.subject_idx,
                    obj: r.object_idx,
                    candidates: r.candidates.clone(),
                    raw: Some(r.candidates.clone()),
                    label: r.label.clone(),
                    provenance: r.provenance,
                    active: r.active,
                })
                .collect(),
        }
    }
}

impl SceneRecord {
    fn into_scene(self) -> Result<Scene> {
        let id = self.id;
        let mut objects = Vec::with_capacity(self.objects.len());
        for (i, o) in self.objects.into_iter().enumerate() {
            let [x1, y1, x2, y2] = o.bbox;
            let bbox =
                BoundingBox::new(x1, y1, x2, y2).map_err(|e| Error::validation(&id, format!("object {i}: {e}")))?;
            objects.push(ObjectInstance {
                bbox,
                category: o.category,
            });
        }
        let mut relations = Vec::with_capacity(self.relations.len());
        for (k, r) in self.relations.into_iter().enumerate() {
            if let Some(raw) = &r.raw {
                let mut a = raw.clone();
                a.sort_unstable();
                a.dedup();
                if a != r.candidates {
                    return Err(Error::validation(
                        &id,
                        format!("relation {k}: raw labels differ from candidates"),
                    ));
                }
            }
            relations.push(RelationInstance {
                subject_idx: r.sub,
                object_idx: r.obj,
                candidates: r.candidates,
                label: r.label,
                provenance: r.provenance,
                active: r.active,
            });
        }
        let scene = Scene {
            id,
            width: self.width,
            height: self.height,
            objects,
            relations,
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// Writes one JSON object per scene per line.
pub fn write_dataset_to<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for scene in &ds.scenes {
        let line = serde_json::to_string(&SceneRecord::from(scene)).map_err(std::io::Error::other)?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset_to(ds, BufWriter::new(File::create(path)?))
}

/// Reads and validates a dataset. The kind is inferred from relation
/// provenance; a file without relations loads as distantly labeled.
pub fn read_dataset_from<R: BufRead>(input: R, origin: &str) -> Result<Dataset> {
    let mut scenes = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SceneRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(origin, idx + 1, e.to_string()))?;
        scenes.push(record.into_scene()?);
    }
    let kind = scenes
        .iter()
        .flat_map(|s| s.relations.first())
        .next()
        .map(|r| match r.provenance {
            Provenance::Human => DatasetKind::Human,
            Provenance::Distant => DatasetKind::Distant,
        })
        .unwrap_or(DatasetKind::Distant);
    let ds = Dataset::new(kind, scenes);
    ds.validate()?;
    Ok(ds)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    read_dataset_from(BufReader::new(File::open(path)?), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let objects = vec![
            ObjectInstance {
                bbox: BoundingBox::new(0.0, 0.0, 10.5, 10.0).unwrap(),
                category: 0,
            },
            ObjectInstance {
                bbox: BoundingBox::new(5.0, 5.0, 20.0, 20.0).unwrap(),
                category: 2,
            },
        ];
        let mut s = Scene::new("img-1", 64.0, 48.0, objects);
        let mut r = RelationInstance::distant(0, 1, vec![1, 2]);
        r.label = vec![0.0, 0.1 + 0.2, 0.7 - 1e-17, 0.0];
        let sum: f64 = r.label.iter().sum();
        r.label[2] += 1.0 - sum;
        s.relations.push(r);
        let mut r = RelationInstance::distant(1, 0, vec![3]);
        r.active = false;
        s.relations.push(r);
        Dataset::new(DatasetKind::Distant, vec![s, Scene::new("img-2", 8.0, 8.0, vec![])])
    }

    #[test]
    fn round_trip() {
        let ds = sample();
        let mut buf = Vec::new();
        write_dataset_to(&ds, &mut buf).unwrap();
        let back = read_dataset_from(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn empty_file() {
        let ds = read_dataset_from("".as_bytes(), "mem").unwrap();
        assert!(ds.scenes.is_empty());
    }

    #[test]
    fn inverted_box_is_validation_error() {
        let line = r#"{"id":"bad","width":10,"height":10,"objects":[{"box":[5,0,1,1],"category":0}],"relations":[]}"#;
        let err = read_dataset_from(line.as_bytes(), "mem").unwrap_err();
        assert!(
            matches!(err, Error::Validation { ref scene, .. } if scene == "bad"),
            "{err}"
        );
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "\n{\"id\":\"a\",\"width\":1,\"height\":1,\"objects\":[]}\n{not json\n";
        let err = read_dataset_from(text.as_bytes(), "f.jsonl").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn label_optional_and_kind_inferred() {
        let line = r#"{"id":"h","width":10,"height":10,"objects":[{"box":[0,0,5,5],"category":0},{"box":[1,1,6,6],"category":1}],"relations":[{"sub":0,"obj":1,"candidates":[2],"raw":[2],"provenance":"human"}]}"#;
        let ds = read_dataset_from(line.as_bytes(), "mem").unwrap();
        assert_eq!(ds.kind, DatasetKind::Human);
        assert!(ds.scenes[0].relations[0].label.is_empty());
        assert!(ds.scenes[0].relations[0].active);
    }

    #[test]
    fn mixed_provenance_rejected() {
        let mut ds = sample();
        ds.scenes[1] = Scene::new("img-2", 30.0, 30.0, ds.scenes[0].objects.clone());
        ds.scenes[1].relations.push(RelationInstance::human(0, 1, 1, 4));
        let mut buf = Vec::new();
        write_dataset_to(&ds, &mut buf).unwrap();
        assert!(read_dataset_from(buf.as_slice(), "mem").is_err());
    }
}
