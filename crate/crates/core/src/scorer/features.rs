use crate::error::{Error, Result};
use crate::scene::{iou, RelationInstance, Scene};

/// Length of the geometric block at the front of every feature vector:
///
/// | slots   | content                                         |
/// |---------|-------------------------------------------------|
/// | 0..4    | subject box `(x1, y1, x2, y2)` / image size      |
/// | 4..8    | object box, normalized likewise                  |
/// | 8, 9    | center offset `dx`, `dy` (subject minus object)  |
/// | 10..13  | log width, height and area ratios (subj / obj)   |
/// | 13      | IoU                                              |
/// | 14..18  | union box / image size                           |
///
/// Subject and object category one-hots follow.
pub const GEOMETRY_DIM: usize = 18;

pub fn feature_dim(num_categories: usize) -> usize {
    GEOMETRY_DIM + 2 * num_categories
}

/// Feature vector for the ordered object pair `(subject, object)`.
pub fn featurize_pair(scene: &Scene, subject: usize, object: usize, num_categories: usize) -> Result<Vec<f64>> {
    let n = scene.objects.len();
    if subject >= n || object >= n {
        return Err(Error::input(format!(
            "pair ({subject}, {object}) out of range in scene '{}'",
            scene.id
        )));
    }
    let s = &scene.objects[subject];
    let o = &scene.objects[object];
    if s.category >= num_categories || o.category >= num_categories {
        return Err(Error::validation(
            &scene.id,
            format!("category outside vocabulary of {num_categories}"),
        ));
    }
    let (w, h) = (scene.width, scene.height);
    let (sb, ob) = (&s.bbox, &o.bbox);
    let (scx, scy) = sb.center();
    let (ocx, ocy) = ob.center();
    let u = sb.union_box(ob);

    let mut x = Vec::with_capacity(feature_dim(num_categories));
    x.extend([sb.x1 / w, sb.y1 / h, sb.x2 / w, sb.y2 / h]);
    x.extend([ob.x1 / w, ob.y1 / h, ob.x2 / w, ob.y2 / h]);
    x.extend([(scx - ocx) / w, (scy - ocy) / h]);
    x.extend([
        (sb.width() / ob.width()).ln(),
        (sb.height() / ob.height()).ln(),
        (sb.area() / ob.area()).ln(),
    ]);
    x.push(iou(sb, ob));
    x.extend([u.x1 / w, u.y1 / h, u.x2 / w, u.y2 / h]);
    x.resize(feature_dim(num_categories), 0.0);
    x[GEOMETRY_DIM + s.category] = 1.0;
    x[GEOMETRY_DIM + num_categories + o.category] = 1.0;
    Ok(x)
}

/// Feature vector for a relation instance.
pub fn featurize(scene: &Scene, instance: &RelationInstance, num_categories: usize) -> Result<Vec<f64>> {
    featurize_pair(scene, instance.subject_idx, instance.object_idx, num_categories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{BoundingBox, ObjectInstance};

    fn scene(a: [f64; 4], b: [f64; 4]) -> Scene {
        let obj = |c: [f64; 4], cat| ObjectInstance {
            bbox: BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap(),
            category: cat,
        };
        Scene::new("f", 100.0, 50.0, vec![obj(a, 0), obj(b, 2)])
    }

    #[test]
    fn identical_boxes() {
        let s = scene([10., 10., 30., 20.], [10., 10., 30., 20.]);
        let x = featurize_pair(&s, 0, 1, 3).unwrap();
        assert_eq!(x.len(), feature_dim(3));
        assert_eq!(&x[8..13], &[0.0; 5]);
        assert_eq!(x[13], 1.0);
    }

    #[test]
    fn left_subject_has_negative_dx() {
        let s = scene([0., 0., 10., 10.], [50., 0., 60., 10.]);
        let x = featurize_pair(&s, 0, 1, 3).unwrap();
        assert!(x[8] < 0.0);
        assert_eq!(x[9], 0.0);
        let x = featurize_pair(&s, 1, 0, 3).unwrap();
        assert!(x[8] > 0.0);
    }

    #[test]
    fn hand_computed_fixture() {
        // subject (10,5)-(30,25), object (20,10)-(60,30) in a 100x50 image
        let s = scene([10., 5., 30., 25.], [20., 10., 60., 30.]);
        let x = featurize_pair(&s, 0, 1, 3).unwrap();
        let inter = 10.0 * 15.0;
        let union = 400.0 + 800.0 - inter;
        let expected = [
            0.1,
            0.1,
            0.3,
            0.5, // subject
            0.2,
            0.2,
            0.6,
            0.6, // object
            (20.0 - 40.0) / 100.0,
            (15.0 - 20.0) / 50.0,
            (20.0f64 / 40.0).ln(),
            (20.0f64 / 20.0).ln(),
            (400.0f64 / 800.0).ln(),
            inter / union,
            0.1,
            0.1,
            0.6,
            0.6, // union box
            1.0,
            0.0,
            0.0, // subject category 0
            0.0,
            0.0,
            1.0, // object category 2
        ];
        assert_eq!(x.len(), expected.len());
        for (i, (a, b)) in x.iter().zip(expected.iter()).enumerate() {
            assert!((a - b).abs() <= 1e-12, "slot {i}: {a} vs {b}");
        }
    }

    #[test]
    fn out_of_vocabulary_category() {
        let s = scene([0., 0., 10., 10.], [5., 5., 15., 15.]);
        assert!(featurize_pair(&s, 0, 1, 2).is_err());
        assert!(featurize_pair(&s, 0, 5, 3).is_err());
    }
}
