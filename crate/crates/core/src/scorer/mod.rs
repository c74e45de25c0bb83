//! Trainable relation model over pair features.
//!
//! The default model is a single linear layer producing one logit per
//! relation (NA at slot 0). A one-hidden-layer tanh network is available
//! through [`Architecture::Mlp`].

mod checkpoint;
mod features;
mod loss;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kb::RelationId;
use crate::scene::{RelationInstance, Scene};
use crate::signal::normalize;

pub use checkpoint::{read_scorer, read_scorer_from, write_scorer, write_scorer_to};
pub use features::{feature_dim, featurize, featurize_pair, GEOMETRY_DIM};
pub use loss::{batch_loss, loss_cross_entropy, loss_noise_aware, Sample, Target, PROB_FLOOR};
pub use train::{build_samples, fit, FitParams, LossKind, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Linear,
    Mlp { hidden: usize },
}

/// Relation scorer `f(s, o; theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationScorer {
    arch: Architecture,
    num_categories: usize,
    num_relations: usize,
    seed: u64,
    params: Vec<f64>,
}

/// Intermediate values kept for backpropagation.
pub(crate) struct Activations {
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

impl RelationScorer {
    /// Fresh scorer: zero biases, weights uniform in `±1/sqrt(fan_in)`.
    pub fn new(arch: Architecture, num_categories: usize, num_relations: usize, seed: u64) -> Result<Self> {
        if num_relations < 2 {
            return Err(Error::input("scorer needs NA plus at least one relation"));
        }
        if let Architecture::Mlp { hidden: 0 } = arch {
            return Err(Error::input("hidden layer width must be positive"));
        }
        let mut scorer = Self {
            arch,
            num_categories,
            num_relations,
            seed,
            params: Vec::new(),
        };
        scorer.params = vec![0.0; scorer.num_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = scorer.feature_dim();
        let r = num_relations;
        let mut init = |slice: &mut [f64], fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for w in slice {
                *w = rng.gen_range(-s..s);
            }
        };
        match arch {
            Architecture::Linear => init(&mut scorer.params[..f * r], f),
            Architecture::Mlp { hidden } => {
                init(&mut scorer.params[..f * hidden], f);
                let w2 = f * hidden + hidden;
                init(&mut scorer.params[w2..w2 + hidden * r], hidden);
            }
        }
        Ok(scorer)
    }

    pub(crate) fn from_parts(
        arch: Architecture,
        num_categories: usize,
        num_relations: usize,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Self> {
        let scorer = Self {
            arch,
            num_categories,
            num_relations,
            seed,
            params,
        };
        if scorer.params.len() != scorer.num_params() {
            return Err(Error::input(format!(
                "expected {} parameters, found {}",
                scorer.num_params(),
                scorer.params.len()
            )));
        }
        if scorer.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::input("non-finite parameter"));
        }
        Ok(scorer)
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.num_categories)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        let (f, r) = (self.feature_dim(), self.num_relations);
        match self.arch {
            Architecture::Linear => f * r + r,
            Architecture::Mlp { hidden } => f * hidden + hidden + hidden * r + r,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim() {
            return Err(Error::input(format!(
                "feature vector has {} entries, scorer expects {}",
                x.len(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    /// `x W + b` for a row vector `x`, `W` row-major `rows x cols`.
    fn affine(x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
        let cols = b.len();
        out.copy_from_slice(b);
        for (xi, row) in x.iter().zip(w.chunks_exact(cols)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, wij) in out.iter_mut().zip(row) {
                *o += xi * wij;
            }
        }
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Activations {
        let (f, r) = (self.feature_dim(), self.num_relations);
        let p = &self.params;
        let mut logits = vec![0.0; r];
        match self.arch {
            Architecture::Linear => {
                Self::affine(x, &p[..f * r], &p[f * r..], &mut logits);
                Activations {
                    hidden: Vec::new(),
                    logits,
                }
            }
            Architecture::Mlp { hidden: h } => {
                let mut hidden = vec![0.0; h];
                Self::affine(x, &p[..f * h], &p[f * h..f * h + h], &mut hidden);
                hidden.iter_mut().for_each(|v| *v = v.tanh());
                let o = f * h + h;
                Self::affine(&hidden, &p[o..o + h * r], &p[o + h * r..], &mut logits);
                Activations { hidden, logits }
            }
        }
    }

    /// Adds the gradient of a loss with logit gradient `dlogits` to `grad`.
    pub(crate) fn backward(&self, x: &[f64], act: &Activations, dlogits: &[f64], grad: &mut [f64]) {
        let (f, r) = (self.feature_dim(), self.num_relations);
        let outer = |input: &[f64], d: &[f64], gw: &mut [f64]| {
            for (xi, row) in input.iter().zip(gw.chunks_exact_mut(d.len())) {
                if *xi == 0.0 {
                    continue;
                }
                for (g, dj) in row.iter_mut().zip(d) {
                    *g += xi * dj;
                }
            }
        };
        match self.arch {
            Architecture::Linear => {
                let (gw, gb) = grad.split_at_mut(f * r);
                outer(x, dlogits, gw);
                gb.iter_mut().zip(dlogits).for_each(|(g, d)| *g += d);
            }
            Architecture::Mlp { hidden: h } => {
                let o = f * h + h;
                let w2 = &self.params[o..o + h * r];
                let (g1, g2) = grad.split_at_mut(o);
                let (gw2, gb2) = g2.split_at_mut(h * r);
                outer(&act.hidden, dlogits, gw2);
                gb2.iter_mut().zip(dlogits).for_each(|(g, d)| *g += d);
                let dhidden: Vec<f64> = (0..h)
                    .map(|k| {
                        let back: f64 = w2[k * r..(k + 1) * r].iter().zip(dlogits).map(|(w, d)| w * d).sum();
                        back * (1.0 - act.hidden[k] * act.hidden[k])
                    })
                    .collect();
                let (gw1, gb1) = g1.split_at_mut(f * h);
                outer(x, &dhidden, gw1);
                gb1.iter_mut().zip(&dhidden).for_each(|(g, d)| *g += d);
            }
        }
    }

    /// Raw relation logits for a feature vector.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.forward(x).logits)
    }

    /// Softmax over all relations, NA included.
    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.logits(x)?;
        let all: Vec<RelationId> = (0..self.num_relations).collect();
        normalize(&z, &all, self.num_relations)
    }

    /// Logits of a relation instance.
    pub fn instance_logits(&self, scene: &Scene, instance: &RelationInstance) -> Result<Vec<f64>> {
        self.logits(&featurize(scene, instance, self.num_categories)?)
    }

    /// Softmax of the logits restricted to the instance's candidates; zero
    /// at every other slot.
    pub fn predict_candidates(&self, scene: &Scene, instance: &RelationInstance) -> Result<Vec<f64>> {
        let z = self.instance_logits(scene, instance)?;
        candidate_softmax(&z, &instance.candidates)
    }
}

/// Candidate-restricted softmax of a logit vector.
pub fn candidate_softmax(logits: &[f64], candidates: &[RelationId]) -> Result<Vec<f64>> {
    if let Some(&c) = candidates.iter().find(|&&c| c >= logits.len()) {
        return Err(Error::input(format!("candidate {c} outside {} logits", logits.len())));
    }
    let restricted: Vec<f64> = candidates.iter().map(|&c| logits[c]).collect();
    normalize(&restricted, candidates, logits.len())
}
