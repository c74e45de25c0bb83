use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scene::Dataset;

use super::loss::{unchecked_batch_loss, validate_sample};
use super::{featurize, featurize_pair, RelationScorer, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Label-weighted candidate likelihood; used on probabilistic labels.
    NoiseAware,
    /// Cross-entropy on the arg-max label.
    CrossEntropy,
}

/// SGD hyperparameters for one call to [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitParams {
    pub lr: f64,
    pub epochs: usize,
    /// Epoch indices at which the learning rate is multiplied by
    /// `decay_factor`.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Maximum NA negatives drawn per positive, per scene and epoch.
    pub neg_ratio: f64,
    pub seed: u64,
}

impl Default for FitParams {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 20,
            decay_epochs: vec![15],
            decay_factor: 0.1,
            momentum: 0.9,
            batch_size: 64,
            neg_ratio: 3.0,
            seed: 0,
        }
    }
}

impl FitParams {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| e <= epoch).count();
        self.lr * self.decay_factor.powi(decays as i32)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::input(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::input("batch size must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::input("momentum must lie in [0, 1)"));
        }
        if !(self.neg_ratio.is_finite() && self.neg_ratio >= 0.0) {
            return Err(Error::input("negative ratio must be non-negative"));
        }
        Ok(())
    }
}

struct ScenePool {
    positives: usize,
    negatives: Vec<Sample>,
}

/// Positive samples from active instances plus per-scene pools of NA
/// negatives drawn from object pairs that carry no instance.
pub struct TrainingSet {
    positives: Vec<Sample>,
    pools: Vec<ScenePool>,
}

impl TrainingSet {
    pub fn num_positives(&self) -> usize {
        self.positives.len()
    }

    pub fn num_negative_candidates(&self) -> usize {
        self.pools.iter().map(|p| p.negatives.len()).sum()
    }

    pub fn positives(&self) -> &[Sample] {
        &self.positives
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }
}

/// Featurizes a dataset for training.
pub fn build_samples(
    data: &Dataset,
    loss: LossKind,
    num_categories: usize,
    num_relations: usize,
) -> Result<TrainingSet> {
    let per_scene = crate::par::map(&data.scenes, |scene| -> Result<(Vec<Sample>, ScenePool)> {
        let mut positives = Vec::new();
        for rel in scene.relations.iter().filter(|r| r.active) {
            let x = featurize(scene, rel, num_categories)?;
            let sample = match loss {
                LossKind::NoiseAware => Sample::soft(x, rel.candidates.clone(), rel.effective_label(num_relations)),
                LossKind::CrossEntropy => Sample::hard(x, rel.argmax_label().expect("candidates are non-empty")),
            };
            positives.push(sample);
        }
        let negatives = if positives.is_empty() {
            Vec::new()
        } else {
            scene
                .unlabeled_pairs()
                .into_iter()
                .map(|(i, j)| featurize_pair(scene, i, j, num_categories).map(Sample::negative))
                .collect::<Result<Vec<_>>>()?
        };
        let pool = ScenePool {
            positives: positives.len(),
            negatives,
        };
        Ok((positives, pool))
    });
    let mut set = TrainingSet {
        positives: Vec::new(),
        pools: Vec::new(),
    };
    for item in per_scene {
        let (pos, pool) = item?;
        set.positives.extend(pos);
        set.pools.push(pool);
    }
    Ok(set)
}

/// Trains `scorer` in place with momentum SGD and returns the mean loss of
/// every epoch.
pub fn fit(scorer: &mut RelationScorer, data: &Dataset, loss: LossKind, params: &FitParams) -> Result<Vec<f64>> {
    params.validate()?;
    if params.epochs == 0 {
        return Ok(Vec::new());
    }
    let set = build_samples(data, loss, scorer.num_categories(), scorer.num_relations())?;
    fit_set(scorer, &set, params)
}

/// Like [`fit`], on a prebuilt training set.
pub fn fit_set(scorer: &mut RelationScorer, set: &TrainingSet, params: &FitParams) -> Result<Vec<f64>> {
    params.validate()?;
    if params.epochs == 0 {
        return Ok(Vec::new());
    }
    if set.is_empty() {
        return Err(Error::input("training set has no active instances"));
    }
    for s in set.positives.iter().chain(set.pools.iter().flat_map(|p| &p.negatives)) {
        validate_sample(scorer, s)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut velocity = vec![0.0; scorer.num_params()];
    let mut curve = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        let lr = params.lr_at(epoch);
        let mut order: Vec<&Sample> = set.positives.iter().collect();
        for pool in &set.pools {
            let want = (params.neg_ratio * pool.positives as f64).floor() as usize;
            let k = want.min(pool.negatives.len());
            if k > 0 {
                order.extend(
                    index::sample(&mut rng, pool.negatives.len(), k)
                        .into_iter()
                        .map(|i| &pool.negatives[i]),
                );
            }
        }
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(params.batch_size).enumerate() {
            let (loss, grad) = unchecked_batch_loss(scorer, batch);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical { epoch, batch: b });
            }
            epoch_loss += loss;
            let scale = 1.0 / batch.len() as f64;
            for ((p, v), g) in scorer.params_mut().iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = params.momentum * *v + g * scale;
                *p -= lr * *v;
            }
        }
        curve.push(epoch_loss / order.len() as f64);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{BoundingBox, DatasetKind, ObjectInstance, RelationInstance, Scene};
    use crate::scorer::Architecture;
    use rand::Rng;

    /// Two-object scenes labeled "left" (1) or "right" (2) by center order,
    /// with a gap between the classes.
    fn separable(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scenes = (0..n)
            .map(|k| {
                let y = rng.gen_range(0..50) as f64;
                let a = rng.gen_range(0..40) as f64;
                let b = a + rng.gen_range(15..40) as f64;
                let (sx, ox) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                let objects = vec![
                    ObjectInstance {
                        bbox: BoundingBox::new(sx, y, sx + 20.0, y + 20.0).unwrap(),
                        category: 0,
                    },
                    ObjectInstance {
                        bbox: BoundingBox::new(ox, y, ox + 20.0, y + 20.0).unwrap(),
                        category: 1,
                    },
                ];
                let mut s = Scene::new(format!("s{k}"), 100.0, 100.0, objects);
                let rel = if sx < ox { 1 } else { 2 };
                s.relations.push(RelationInstance::human(0, 1, rel, 3));
                s
            })
            .collect();
        Dataset::new(DatasetKind::Human, scenes)
    }

    fn accuracy(scorer: &RelationScorer, ds: &Dataset) -> f64 {
        let mut hit = 0;
        for (scene, rel) in ds.instances() {
            let z = scorer.instance_logits(scene, rel).unwrap();
            let pred = if z[1] >= z[2] { 1 } else { 2 };
            hit += usize::from(pred == rel.candidates[0]);
        }
        hit as f64 / ds.num_instances() as f64
    }

    fn params() -> FitParams {
        FitParams {
            lr: 0.5,
            epochs: 60,
            decay_epochs: vec![45],
            batch_size: 16,
            ..FitParams::default()
        }
    }

    #[test]
    fn learns_separable_relations() {
        let ds = separable(300, 3);
        let mut s = RelationScorer::new(Architecture::Linear, 2, 3, 5).unwrap();
        let curve = fit(&mut s, &ds, LossKind::CrossEntropy, &params()).unwrap();
        assert_eq!(curve.len(), 60);
        assert!(curve.last().unwrap() < &curve[0]);
        let acc = accuracy(&s, &ds);
        assert!(acc >= 0.99, "training accuracy {acc}");
    }

    #[test]
    fn mlp_variant_learns_too() {
        let ds = separable(300, 4);
        let mut s = RelationScorer::new(Architecture::Mlp { hidden: 8 }, 2, 3, 5).unwrap();
        fit(&mut s, &ds, LossKind::CrossEntropy, &params()).unwrap();
        assert!(accuracy(&s, &ds) >= 0.99);
    }

    #[test]
    fn zero_epochs_leave_parameters() {
        let ds = separable(10, 3);
        let mut s = RelationScorer::new(Architecture::Linear, 2, 3, 5).unwrap();
        let before = s.clone();
        let p = FitParams { epochs: 0, ..params() };
        assert!(fit(&mut s, &ds, LossKind::NoiseAware, &p).unwrap().is_empty());
        assert_eq!(s, before);
    }

    #[test]
    fn deterministic_given_seed() {
        let ds = separable(50, 8);
        let run = || {
            let mut s = RelationScorer::new(Architecture::Linear, 2, 3, 5).unwrap();
            let c = fit(&mut s, &ds, LossKind::NoiseAware, &params()).unwrap();
            (s, c)
        };
        let (a, ca) = run();
        let (b, cb) = run();
        assert_eq!(a.params(), b.params());
        assert_eq!(ca, cb);
    }

    #[test]
    fn bad_inputs() {
        let ds = separable(5, 1);
        let mut s = RelationScorer::new(Architecture::Linear, 2, 3, 5).unwrap();
        let p = FitParams { lr: 0.0, ..params() };
        assert!(fit(&mut s, &ds, LossKind::CrossEntropy, &p).is_err());
        let empty = Dataset::empty(DatasetKind::Human);
        assert!(fit(&mut s, &empty, LossKind::CrossEntropy, &params()).is_err());
    }

    #[test]
    fn nan_loss_aborts_with_location() {
        let ds = separable(5, 1);
        let mut s = RelationScorer::new(Architecture::Linear, 2, 3, 5).unwrap();
        let n = s.num_params();
        s.params_mut()[n - 1] = f64::NAN;
        let err = fit(&mut s, &ds, LossKind::CrossEntropy, &params()).unwrap_err();
        assert!(matches!(err, Error::Numerical { epoch: 0, batch: 0 }), "{err}");
    }

    #[test]
    fn negatives_follow_ratio() {
        let mut ds = separable(4, 2);
        for s in &mut ds.scenes {
            let extra = s.objects[0].clone();
            s.objects.push(extra);
        }
        let set = build_samples(&ds, LossKind::CrossEntropy, 2, 3).unwrap();
        assert_eq!(set.num_positives(), 4);
        // 3 objects, 6 ordered pairs, one labeled
        assert_eq!(set.num_negative_candidates(), 20);
    }

    #[test]
    fn lr_schedule() {
        let p = FitParams {
            lr: 1.0,
            decay_epochs: vec![2, 4],
            ..FitParams::default()
        };
        assert_eq!(p.lr_at(0), 1.0);
        assert_eq!(p.lr_at(2), 0.1);
        assert!((p.lr_at(5) - 0.01).abs() < 1e-15);
    }
}
