//! Training objectives and their analytic gradients.
//!
//! Both losses are negative log-likelihoods summed over a batch. The
//! noise-aware objective weights the candidate-normalized log-probability
//! of every candidate by its current label mass; sampled negative pairs
//! contribute `-log f_NA` under the softmax over all relations. The
//! cross-entropy objective scores one target relation under the full
//! softmax.

use crate::error::{Error, Result};
use crate::kb::{RelationId, NA};
use crate::par;
use crate::scene::check_label;

use super::RelationScorer;

/// Probabilities below this are clamped inside logarithms; clamped terms
/// contribute no gradient.
pub const PROB_FLOOR: f64 = 1e-7;

/// Samples per gradient chunk. Chunks are summed in a fixed order, so batch
/// gradients do not depend on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Label distribution supported on `candidates`.
    Soft {
        candidates: Vec<RelationId>,
        label: Vec<f64>,
    },
    /// One relation under the softmax over all relations; NA marks a
    /// negative pair.
    Hard(RelationId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: Target,
}

impl Sample {
    pub fn soft(features: Vec<f64>, candidates: Vec<RelationId>, label: Vec<f64>) -> Self {
        Self {
            features,
            target: Target::Soft { candidates, label },
        }
    }

    pub fn hard(features: Vec<f64>, relation: RelationId) -> Self {
        Self {
            features,
            target: Target::Hard(relation),
        }
    }

    pub fn negative(features: Vec<f64>) -> Self {
        Self::hard(features, NA)
    }
}

fn log_sum_exp<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let max = values.clone().copied().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Loss of one sample and its gradient with respect to the logits.
fn logit_loss(logits: &[f64], target: &Target) -> (f64, Vec<f64>) {
    let floor = PROB_FLOOR.ln();
    let mut dz = vec![0.0; logits.len()];
    match target {
        Target::Soft { candidates, label } => {
            let lse = log_sum_exp(candidates.iter().map(|&c| &logits[c]));
            let mut loss = 0.0;
            let mut active_mass = 0.0;
            for &c in candidates {
                let logp = logits[c] - lse;
                let r = label[c];
                if logp < floor {
                    loss -= r * floor;
                } else {
                    loss -= r * logp;
                    active_mass += r;
                    dz[c] -= r;
                }
            }
            for &c in candidates {
                dz[c] += (logits[c] - lse).exp() * active_mass;
            }
            (loss, dz)
        }
        Target::Hard(t) => {
            let lse = log_sum_exp(logits.iter());
            let logp = logits[*t] - lse;
            if logp < floor {
                return (-floor, dz);
            }
            for (d, z) in dz.iter_mut().zip(logits) {
                *d = (z - lse).exp();
            }
            dz[*t] -= 1.0;
            (-logp, dz)
        }
    }
}

fn validate(scorer: &RelationScorer, sample: &Sample) -> Result<()> {
    if sample.features.len() != scorer.feature_dim() {
        return Err(Error::input(format!(
            "sample has {} features, scorer expects {}",
            sample.features.len(),
            scorer.feature_dim()
        )));
    }
    let r = scorer.num_relations();
    match &sample.target {
        Target::Soft { candidates, label } => {
            if label.len() != r {
                return Err(Error::input(format!("label has {} slots, expected {r}", label.len())));
            }
            check_label(label, candidates).map_err(Error::Input)
        }
        Target::Hard(t) if *t >= r => Err(Error::input(format!("target {t} outside {r} relations"))),
        Target::Hard(_) => Ok(()),
    }
}

/// Summed loss and parameter gradient over `samples`, without target-kind
/// restrictions.
pub fn batch_loss(scorer: &RelationScorer, samples: &[Sample]) -> Result<(f64, Vec<f64>)> {
    samples.iter().try_for_each(|s| validate(scorer, s))?;
    let refs: Vec<&Sample> = samples.iter().collect();
    Ok(unchecked_batch_loss(scorer, &refs))
}

pub(crate) fn validate_sample(scorer: &RelationScorer, sample: &Sample) -> Result<()> {
    validate(scorer, sample)
}

pub(crate) fn unchecked_batch_loss(scorer: &RelationScorer, samples: &[&Sample]) -> (f64, Vec<f64>) {
    let n_params = scorer.num_params();
    let chunks: Vec<&[&Sample]> = samples.chunks(CHUNK).collect();
    let partial = par::map(&chunks, |chunk| {
        let mut grad = vec![0.0; n_params];
        let mut loss = 0.0;
        for s in chunk.iter() {
            let act = scorer.forward(&s.features);
            let (l, dz) = logit_loss(&act.logits, &s.target);
            loss += l;
            scorer.backward(&s.features, &act, &dz, &mut grad);
        }
        (loss, grad)
    });
    let mut grad = vec![0.0; n_params];
    let mut loss = 0.0;
    for (l, g) in partial {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    (loss, grad)
}

/// Noise-aware likelihood loss. Accepts soft candidate labels and NA
/// negatives.
pub fn loss_noise_aware(scorer: &RelationScorer, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
    for s in batch {
        if let Target::Hard(t) = s.target {
            if t != NA {
                return Err(Error::input("noise-aware loss takes soft labels or NA negatives"));
            }
        }
    }
    batch_loss(scorer, batch)
}

/// Cross-entropy loss over one-hot targets.
pub fn loss_cross_entropy(scorer: &RelationScorer, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
    if batch.iter().any(|s| matches!(s.target, Target::Soft { .. })) {
        return Err(Error::input("cross-entropy loss takes one-hot targets"));
    }
    batch_loss(scorer, batch)
}
