//! EM denoising of distant relation labels.
//!
//! [`run_distant`] alternates label estimation (internal scorer mixed with an
//! optional external signal) with noise-aware training and drops the pairs
//! the scorer deems most likely NA. [`run_semi`] bootstraps from a
//! human-labeled set instead and trains on discretized labels.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::FlatConfig;
use crate::error::{Error, Result};
use crate::eval::{label_quality, GoldSet};
use crate::kb::{KnowledgeBase, RelationId, NA};
use crate::par;
use crate::scene::Dataset;
use crate::scorer::{fit, Architecture, FitParams, LossKind, RelationScorer};
use crate::signal::{estimate_e, ExternalSignal};

/// Hyperparameters of one denoising run.
#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Weight of the internal prediction in the E step.
    pub omega: f64,
    /// Share of active instances dropped per elimination.
    pub discard_fraction: f64,
    pub iterations: usize,
    pub use_external_signal: bool,
    /// Root seed; every initialization and fit derives its seed from it.
    pub seed: u64,
    pub arch: Architecture,
    /// Training schedule of the first fit. Its `seed` field is ignored.
    pub fit: FitParams,
    /// Learning-rate multiplier for warm-started distant M steps after the
    /// first iteration.
    pub later_lr_scale: f64,
    /// Learning-rate multiplier for fine-tuning on human labels.
    pub finetune_lr_scale: f64,
}

/// Keys accepted by [`EmConfig::from_flat`].
pub const CONFIG_KEYS: &[&str] = &[
    "omega",
    "discard",
    "iterations",
    "signal",
    "seed",
    "arch",
    "hidden",
    "lr",
    "epochs",
    "decay",
    "decay_factor",
    "momentum",
    "batch_size",
    "neg_ratio",
    "later_lr_scale",
    "finetune_lr_scale",
];

impl EmConfig {
    /// Distant-setting defaults: ω = 0.9, 75% discarded, two iterations.
    pub fn distant() -> Self {
        Self {
            omega: 0.9,
            discard_fraction: 0.75,
            iterations: 2,
            use_external_signal: true,
            seed: 0,
            arch: Architecture::Linear,
            fit: FitParams::default(),
            later_lr_scale: 0.1,
            finetune_lr_scale: 0.1,
        }
    }

    /// Semi-supervised defaults: nothing discarded, no external signal.
    pub fn semi() -> Self {
        Self {
            omega: 1.0,
            discard_fraction: 0.0,
            use_external_signal: false,
            ..Self::distant()
        }
    }

    /// Overrides `base` with the keys present in `cfg`.
    pub fn from_flat(cfg: &FlatConfig, base: EmConfig) -> Result<Self> {
        cfg.check_known(CONFIG_KEYS)?;
        let mut c = base;
        if let Some(v) = cfg.get("omega")? {
            c.omega = v;
        }
        if let Some(v) = cfg.get("discard")? {
            c.discard_fraction = v;
        }
        if let Some(v) = cfg.get("iterations")? {
            c.iterations = v;
        }
        if let Some(v) = cfg.get("signal")? {
            c.use_external_signal = v;
        }
        if let Some(v) = cfg.get("seed")? {
            c.seed = v;
        }
        match cfg.get_str("arch") {
            None => {}
            Some("linear") => c.arch = Architecture::Linear,
            Some("mlp") => {
                c.arch = Architecture::Mlp {
                    hidden: cfg.get("hidden")?.unwrap_or(32),
                }
            }
            Some(other) => return Err(Error::input(format!("unknown architecture '{other}'"))),
        }
        if let Some(v) = cfg.get("lr")? {
            c.fit.lr = v;
        }
        if let Some(v) = cfg.get("epochs")? {
            c.fit.epochs = v;
        }
        if let Some(v) = cfg.get_list("decay")? {
            c.fit.decay_epochs = v;
        }
        if let Some(v) = cfg.get("decay_factor")? {
            c.fit.decay_factor = v;
        }
        if let Some(v) = cfg.get("momentum")? {
            c.fit.momentum = v;
        }
        if let Some(v) = cfg.get("batch_size")? {
            c.fit.batch_size = v;
        }
        if let Some(v) = cfg.get("neg_ratio")? {
            c.fit.neg_ratio = v;
        }
        if let Some(v) = cfg.get("later_lr_scale")? {
            c.later_lr_scale = v;
        }
        if let Some(v) = cfg.get("finetune_lr_scale")? {
            c.finetune_lr_scale = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::input(format!("omega must lie in [0, 1], got {}", self.omega)));
        }
        if !self.use_external_signal && self.omega != 1.0 {
            return Err(Error::input("omega must be 1 without an external signal"));
        }
        if !(0.0..1.0).contains(&self.discard_fraction) {
            return Err(Error::input(format!(
                "discard fraction must lie in [0, 1), got {}",
                self.discard_fraction
            )));
        }
        if self.iterations == 0 {
            return Err(Error::input("at least one iteration is required"));
        }
        for (name, v) in [
            ("later_lr_scale", self.later_lr_scale),
            ("finetune_lr_scale", self.finetune_lr_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::input(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn params(&self, seed: u64, lr_scale: f64) -> FitParams {
        FitParams {
            lr: self.fit.lr * lr_scale,
            seed,
            ..self.fit.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Init = 1,
    Distant = 2,
    Pretrain = 3,
    Finetune = 4,
}

/// Seed of one training phase. Iteration 1 of the distant loop uses the
/// root seed unchanged.
fn phase_seed(seed: u64, iteration: usize, phase: Phase) -> u64 {
    if iteration == 1 && phase == Phase::Distant {
        return seed;
    }
    let mut z = seed ^ ((iteration as u64) << 8 | phase as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Diagnostics of one EM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Active instances the M step trained on.
    pub active: usize,
    /// Instances deactivated in this iteration.
    pub eliminated: usize,
    /// Mean Shannon entropy (nats) of the active labels after the E step.
    pub mean_entropy: f64,
    /// Per-epoch loss of the (pre-)training fit.
    pub loss_curve: Vec<f64>,
    /// Per-epoch loss of the fine-tuning fit (semi-supervised only).
    pub finetune_curve: Vec<f64>,
    /// Accuracy of the active labels against an oracle, when given.
    pub label_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmTrace {
    /// Loss of the supervised initialization (semi-supervised only).
    pub init_curve: Vec<f64>,
    pub records: Vec<IterationRecord>,
}

impl EmTrace {
    /// CSV with one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,active,eliminated,mean_entropy,final_loss,label_accuracy\n");
        for r in &self.records {
            let loss = r.loss_curve.last().map(|l| l.to_string()).unwrap_or_default();
            let acc = r.label_accuracy.map(|a| a.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{loss},{acc}",
                r.iteration, r.active, r.eliminated, r.mean_entropy
            );
        }
        out
    }

    /// CSV with one row per training epoch.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("iteration,phase,epoch,loss\n");
        for (e, l) in self.init_curve.iter().enumerate() {
            let _ = writeln!(out, "0,init,{e},{l}");
        }
        for r in &self.records {
            for (e, l) in r.loss_curve.iter().enumerate() {
                let _ = writeln!(out, "{},train,{e},{l}", r.iteration);
            }
            for (e, l) in r.finetune_curve.iter().enumerate() {
                let _ = writeln!(out, "{},finetune,{e},{l}", r.iteration);
            }
        }
        out
    }

    pub fn write_csv(&self, trace: impl AsRef<Path>, losses: impl AsRef<Path>) -> Result<()> {
        fs::write(trace, self.to_csv())?;
        fs::write(losses, self.loss_csv())?;
        Ok(())
    }
}

/// Computes one label per active instance in parallel and stores it.
fn relabel<F>(ds: &mut Dataset, f: F) -> Result<()>
where
    F: Fn(&crate::scene::Scene, &crate::scene::RelationInstance) -> Result<Vec<f64>> + Sync + Send,
{
    let labels = par::map(&ds.scenes, |scene| {
        scene
            .relations
            .iter()
            .map(|rel| if rel.active { f(scene, rel).map(Some) } else { Ok(None) })
            .collect::<Result<Vec<_>>>()
    });
    for (scene, labels) in ds.scenes.iter_mut().zip(labels) {
        for (rel, label) in scene.relations.iter_mut().zip(labels?) {
            if let Some(label) = label {
                rel.label = label;
            }
        }
    }
    Ok(())
}

/// Initial labels: the normalized external signal when given, otherwise
/// uniform over each instance's candidates.
pub fn e_step_initial(ds: &mut Dataset, signal: Option<&dyn ExternalSignal>, num_relations: usize) -> Result<()> {
    relabel(ds, |scene, rel| match signal {
        Some(s) => estimate_e(s, scene, rel, num_relations),
        None => {
            let mut uniform = rel.clone();
            uniform.label.clear();
            Ok(uniform.effective_label(num_relations))
        }
    })
}

/// Labels `ω·f + (1−ω)·e` on every active instance, where `f` is the
/// scorer's candidate softmax and `e` the normalized signal. Without a
/// signal the label is `f`.
pub fn e_step(
    ds: &mut Dataset,
    scorer: &RelationScorer,
    signal: Option<&dyn ExternalSignal>,
    omega: f64,
) -> Result<()> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::input(format!("omega must lie in [0, 1], got {omega}")));
    }
    let r = scorer.num_relations();
    relabel(ds, |scene, rel| {
        let f = scorer.predict_candidates(scene, rel)?;
        let Some(s) = signal else { return Ok(f) };
        if omega == 1.0 {
            return Ok(f);
        }
        let e = estimate_e(s, scene, rel, r)?;
        if omega == 0.0 {
            return Ok(e);
        }
        Ok(f.iter().zip(&e).map(|(f, e)| omega * f + (1.0 - omega) * e).collect())
    })
}

/// Number of instances removed from `active` at `fraction`.
pub fn elimination_count(active: usize, fraction: f64) -> usize {
    let n = (fraction * active as f64 - 1e-9).ceil();
    if n <= 0.0 {
        0
    } else {
        (n as usize).min(active)
    }
}

/// Deactivates the `⌈fraction·N_active⌉` active instances with the
/// highest raw NA logit. Ties go to the smaller (scene id, subject,
/// object). Returns the number removed.
pub fn eliminate_noisy(ds: &mut Dataset, scorer: &RelationScorer, fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::input(format!(
            "discard fraction must lie in [0, 1], got {fraction}"
        )));
    }
    let active = ds.num_active();
    let n = elimination_count(active, fraction);
    if n == 0 {
        return Ok(0);
    }
    let per_scene = par::map(&ds.scenes, |scene| {
        scene
            .relations
            .iter()
            .enumerate()
            .filter(|(_, r)| r.active)
            .map(|(k, r)| Ok((k, scorer.instance_logits(scene, r)?[NA])))
            .collect::<Result<Vec<_>>>()
    });
    let mut ranked = Vec::with_capacity(active);
    for (s, logits) in per_scene.into_iter().enumerate() {
        ranked.extend(logits?.into_iter().map(|(k, z)| (s, k, z)));
    }
    let scenes = &ds.scenes;
    ranked.sort_by(|a, b| {
        let ra = &scenes[a.0].relations[a.1];
        let rb = &scenes[b.0].relations[b.1];
        b.2.total_cmp(&a.2)
            .then_with(|| scenes[a.0].id.cmp(&scenes[b.0].id))
            .then(ra.subject_idx.cmp(&rb.subject_idx))
            .then(ra.object_idx.cmp(&rb.object_idx))
    });
    for &(s, k, _) in &ranked[..n] {
        ds.scenes[s].relations[k].active = false;
    }
    Ok(n)
}

/// One-hot vector at the arg-max candidate of `r`; ties go to the lowest
/// relation id.
pub fn discretize(r: &[f64], candidates: &[RelationId]) -> Result<Vec<f64>> {
    let mut best: Option<RelationId> = None;
    for &c in candidates {
        let p = *r
            .get(c)
            .ok_or_else(|| Error::input(format!("candidate {c} outside label of {} slots", r.len())))?;
        if best.is_none_or(|b| p > r[b]) {
            best = Some(c);
        }
    }
    let best = best.ok_or_else(|| Error::input("cannot discretize over an empty candidate set"))?;
    let mut hot = vec![0.0; r.len()];
    hot[best] = 1.0;
    Ok(hot)
}

/// Trains on the active labels with the noise-aware loss, starting from
/// `prev` or from a fresh initialization.
pub fn m_step(
    ds: &Dataset,
    prev: Option<RelationScorer>,
    num_categories: usize,
    num_relations: usize,
    arch: Architecture,
    params: &FitParams,
) -> Result<(RelationScorer, Vec<f64>)> {
    let mut scorer = match prev {
        Some(s) => s,
        None => RelationScorer::new(arch, num_categories, num_relations, params.seed)?,
    };
    let curve = fit(&mut scorer, ds, LossKind::NoiseAware, params)?;
    Ok((scorer, curve))
}

fn mean_entropy(ds: &Dataset) -> f64 {
    let (sum, n) = ds
        .instances()
        .filter(|(_, r)| r.active)
        .fold((0.0, 0usize), |(sum, n), (_, r)| {
            let h: f64 = r.label.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
            (sum + h, n + 1)
        });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn accuracy(ds: &Dataset, oracle: Option<&GoldSet>) -> Result<Option<f64>> {
    oracle.map(|g| label_quality(ds, g)).transpose()
}

fn require_active(ds: &Dataset, iteration: usize) -> Result<()> {
    if ds.num_active() == 0 {
        return Err(Error::input(format!(
            "iteration {iteration}: no active instances remain"
        )));
    }
    Ok(())
}

fn check_inputs(ds: &Dataset, kb: &KnowledgeBase) -> Result<()> {
    ds.validate()?;
    ds.check_categories(kb.num_categories())?;
    ds.check_relations(kb.num_relations())
}

/// Distantly supervised EM: initial E and M steps, then
/// `iterations − 1` rounds of E step, elimination and warm-started M step.
/// `ds` ends up holding the final labels and active flags.
pub fn run_distant(
    ds: &mut Dataset,
    kb: &KnowledgeBase,
    signal: Option<&dyn ExternalSignal>,
    config: &EmConfig,
    oracle: Option<&GoldSet>,
) -> Result<(RelationScorer, EmTrace)> {
    config.validate()?;
    check_inputs(ds, kb)?;
    let signal = if config.use_external_signal { signal } else { None };
    let (c, r) = (kb.num_categories(), kb.num_relations());
    let mut trace = EmTrace::default();

    require_active(ds, 1)?;
    e_step_initial(ds, signal, r)?;
    let mean_entropy_1 = mean_entropy(ds);
    let label_accuracy = accuracy(ds, oracle)?;
    let params = config.params(phase_seed(config.seed, 1, Phase::Distant), 1.0);
    let (mut scorer, loss_curve) = m_step(ds, None, c, r, config.arch, &params)?;
    trace.records.push(IterationRecord {
        iteration: 1,
        active: ds.num_active(),
        eliminated: 0,
        mean_entropy: mean_entropy_1,
        loss_curve,
        finetune_curve: Vec::new(),
        label_accuracy,
    });

    for t in 2..=config.iterations {
        e_step(ds, &scorer, signal, config.omega)?;
        let eliminated = eliminate_noisy(ds, &scorer, config.discard_fraction)?;
        require_active(ds, t)?;
        let mean_entropy = mean_entropy(ds);
        let label_accuracy = accuracy(ds, oracle)?;
        let params = config.params(phase_seed(config.seed, t, Phase::Distant), config.later_lr_scale);
        let (next, loss_curve) = m_step(ds, Some(scorer), c, r, config.arch, &params)?;
        scorer = next;
        trace.records.push(IterationRecord {
            iteration: t,
            active: ds.num_active(),
            eliminated,
            mean_entropy,
            loss_curve,
            finetune_curve: Vec::new(),
            label_accuracy,
        });
    }
    Ok((scorer, trace))
}

/// Semi-supervised EM. A scorer trained on `dl` relabels `ds`; each
/// iteration eliminates, discretizes, pretrains from scratch on `ds` and
/// fine-tunes on `dl`. Returns the last fine-tuned scorer.
pub fn run_semi(
    ds: &mut Dataset,
    dl: &Dataset,
    kb: &KnowledgeBase,
    config: &EmConfig,
    oracle: Option<&GoldSet>,
) -> Result<(RelationScorer, EmTrace)> {
    config.validate()?;
    check_inputs(ds, kb)?;
    check_inputs(dl, kb)?;
    if dl.num_active() == 0 {
        return Err(Error::input("human-labeled set has no active instances"));
    }
    let (c, r) = (kb.num_categories(), kb.num_relations());
    let mut trace = EmTrace::default();

    let init_seed = phase_seed(config.seed, 0, Phase::Init);
    let mut finetuned = RelationScorer::new(config.arch, c, r, init_seed)?;
    trace.init_curve = fit(
        &mut finetuned,
        dl,
        LossKind::CrossEntropy,
        &config.params(init_seed, 1.0),
    )?;

    for t in 1..=config.iterations {
        e_step(ds, &finetuned, None, 1.0)?;
        let eliminated = eliminate_noisy(ds, &finetuned, config.discard_fraction)?;
        let mean_entropy = mean_entropy(ds);
        relabel(ds, |_, rel| discretize(&rel.label, &rel.candidates))?;
        let label_accuracy = accuracy(ds, oracle)?;

        let pre_seed = phase_seed(config.seed, t, Phase::Pretrain);
        let (mut scorer, loss_curve) = if ds.num_active() == 0 {
            (finetuned.clone(), Vec::new())
        } else {
            let mut s = RelationScorer::new(config.arch, c, r, pre_seed)?;
            let curve = fit(&mut s, ds, LossKind::CrossEntropy, &config.params(pre_seed, 1.0))?;
            (s, curve)
        };
        let ft_seed = phase_seed(config.seed, t, Phase::Finetune);
        let finetune_curve = fit(
            &mut scorer,
            dl,
            LossKind::CrossEntropy,
            &config.params(ft_seed, config.finetune_lr_scale),
        )?;
        finetuned = scorer;
        trace.records.push(IterationRecord {
            iteration: t,
            active: ds.num_active(),
            eliminated,
            mean_entropy,
            loss_curve,
            finetune_curve,
            label_accuracy,
        });
    }
    Ok((finetuned, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{build_kb, RelationTriple};
    use crate::scene::{BoundingBox, DatasetKind, ObjectInstance, RelationInstance, Scene};
    use crate::signal::CooccurrenceSignal;

    fn obj(x: f64, c: usize) -> ObjectInstance {
        ObjectInstance {
            bbox: BoundingBox::new(x, 0.0, x + 10.0, 10.0).unwrap(),
            category: c,
        }
    }

    fn scene(id: &str, cands: &[Vec<RelationId>]) -> Scene {
        let mut s = Scene::new(
            id,
            100.0,
            20.0,
            (0..=cands.len()).map(|k| obj(k as f64 * 5.0, 0)).collect(),
        );
        for (k, c) in cands.iter().enumerate() {
            s.relations.push(RelationInstance::distant(k, k + 1, c.clone()));
        }
        s
    }

    #[test]
    fn initial_labels_without_signal_are_uniform() {
        let mut ds = Dataset::new(DatasetKind::Distant, vec![scene("a", &[vec![1, 2, 3]])]);
        e_step_initial(&mut ds, None, 4).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(ds.scenes[0].relations[0].label, vec![0.0, third, third, third]);
    }

    #[test]
    fn initial_labels_follow_signal() {
        let kb = build_kb(
            [
                RelationTriple::new("cat", "on", "cat", 3),
                RelationTriple::new("cat", "near", "cat", 1),
            ],
            1,
        )
        .unwrap();
        let mut ds = Dataset::new(DatasetKind::Distant, vec![scene("a", &[vec![1, 2]])]);
        e_step_initial(&mut ds, Some(&CooccurrenceSignal::new(&kb)), 3).unwrap();
        // near = 1, on = 2; softmax of (ln 2, ln 4) = (1/3, 2/3)
        let l = &ds.scenes[0].relations[0].label;
        assert!((l[1] - 1.0 / 3.0).abs() < 1e-15 && (l[2] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(l[0], 0.0);
    }

    struct Fixed(Vec<f64>);

    impl ExternalSignal for Fixed {
        fn relatedness(&self, _: &Scene, _: &RelationInstance, r: RelationId) -> f64 {
            self.0[r]
        }
    }

    #[test]
    fn omega_reductions() {
        let mut scorer = RelationScorer::new(Architecture::Linear, 1, 4, 3).unwrap();
        scorer
            .params_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, p)| *p = (i % 7) as f64 * 0.1);
        let base = Dataset::new(DatasetKind::Distant, vec![scene("a", &[vec![1, 3], vec![2]])]);
        let sig = Fixed(vec![0.0, 0.3, 0.0, -1.0]);

        let mut ds = base.clone();
        e_step(&mut ds, &scorer, Some(&sig), 1.0).unwrap();
        let s = &base.scenes[0];
        assert_eq!(
            ds.scenes[0].relations[0].label,
            scorer.predict_candidates(s, &s.relations[0]).unwrap()
        );

        let mut ds = base.clone();
        e_step(&mut ds, &scorer, Some(&sig), 0.0).unwrap();
        assert_eq!(
            ds.scenes[0].relations[0].label,
            estimate_e(&sig, s, &s.relations[0], 4).unwrap()
        );

        let mut ds = base.clone();
        e_step(&mut ds, &scorer, Some(&sig), 0.9).unwrap();
        for rel in &ds.scenes[0].relations {
            crate::scene::check_label(&rel.label, &rel.candidates).unwrap();
        }
    }

    #[test]
    fn convex_combination_arithmetic() {
        let (w, f, e) = (0.9f64, 0.8f64, 0.6f64);
        assert!((w * f + (1.0 - w) * e - 0.78).abs() < 1e-15);
    }

    #[test]
    fn inactive_instances_keep_their_labels() {
        let scorer = RelationScorer::new(Architecture::Linear, 1, 3, 0).unwrap();
        let mut ds = Dataset::new(DatasetKind::Distant, vec![scene("a", &[vec![1, 2], vec![1, 2]])]);
        ds.scenes[0].relations[1].active = false;
        e_step(&mut ds, &scorer, None, 1.0).unwrap();
        assert!(ds.scenes[0].relations[0].has_label());
        assert!(!ds.scenes[0].relations[1].has_label());
    }

    /// Linear scorer whose NA logit equals the subject's normalized x1.
    fn na_from_x(num_relations: usize) -> RelationScorer {
        let mut s = RelationScorer::new(Architecture::Linear, 1, num_relations, 0).unwrap();
        s.params_mut().fill(0.0);
        s.params_mut()[0] = 1.0;
        s
    }

    #[test]
    fn elimination_removes_highest_na_logits() {
        // subject x1 / 100 gives NA logits [0.3, 0.1, 0.2, 0.0]
        let mut sc = Scene::new(
            "a",
            100.0,
            20.0,
            (0..8)
                .map(|k| obj([30.0, 10.0, 20.0, 0.0, 50.0, 60.0, 70.0, 80.0][k], 0))
                .collect(),
        );
        for k in 0..4 {
            sc.relations.push(RelationInstance::distant(k, k + 4, vec![1]));
        }
        let mut ds = Dataset::new(DatasetKind::Distant, vec![sc]);
        let removed = eliminate_noisy(&mut ds, &na_from_x(2), 0.5).unwrap();
        assert_eq!(removed, 2);
        let active: Vec<bool> = ds.scenes[0].relations.iter().map(|r| r.active).collect();
        assert_eq!(active, vec![false, true, false, true]);
        assert_eq!(eliminate_noisy(&mut ds, &na_from_x(2), 0.0).unwrap(), 0);
    }

    #[test]
    fn elimination_ties_break_by_scene_then_pair() {
        let mut ds = Dataset::new(
            DatasetKind::Distant,
            vec![scene("b", &[vec![1]]), scene("a", &[vec![1], vec![1]])],
        );
        let mut scorer = na_from_x(2);
        scorer.params_mut().fill(0.0);
        assert_eq!(eliminate_noisy(&mut ds, &scorer, 0.5).unwrap(), 2);
        assert!(ds.scenes[0].relations[0].active);
        assert!(!ds.scenes[1].relations[0].active && !ds.scenes[1].relations[1].active);
    }

    #[test]
    fn elimination_counts() {
        assert_eq!(elimination_count(100, 0.75), 75);
        assert_eq!(elimination_count(4, 0.5), 2);
        assert_eq!(elimination_count(5, 0.5), 3);
        assert_eq!(elimination_count(7, 0.0), 0);
        assert_eq!(elimination_count(0, 0.75), 0);
    }

    #[test]
    fn discretize_rules() {
        assert_eq!(
            discretize(&[0.0, 0.2, 0.7, 0.1], &[1, 2, 3]).unwrap(),
            vec![0.0, 0.0, 1.0, 0.0]
        );
        assert_eq!(discretize(&[0.0, 0.5, 0.5], &[1, 2]).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(discretize(&[0.0, 0.0, 1.0], &[2]).unwrap(), vec![0.0, 0.0, 1.0]);
        assert!(discretize(&[0.0, 1.0], &[]).is_err());
    }

    #[test]
    fn config_validation_and_parsing() {
        let mut c = EmConfig::distant();
        c.use_external_signal = false;
        assert!(c.validate().is_err());
        c.omega = 1.0;
        c.validate().unwrap();
        let flat = FlatConfig::parse("omega=0.5\ndiscard=0.25\narch=mlp\nhidden=8\ndecay=2,4\n", "t").unwrap();
        let c = EmConfig::from_flat(&flat, EmConfig::distant()).unwrap();
        assert_eq!(c.omega, 0.5);
        assert_eq!(c.discard_fraction, 0.25);
        assert_eq!(c.arch, Architecture::Mlp { hidden: 8 });
        assert_eq!(c.fit.decay_epochs, vec![2, 4]);
        assert!(EmConfig::from_flat(&FlatConfig::parse("bogus=1", "t").unwrap(), EmConfig::distant()).is_err());
        assert!(EmConfig::from_flat(&FlatConfig::parse("discard=1", "t").unwrap(), EmConfig::distant()).is_err());
    }

    #[test]
    fn phase_seeds_differ() {
        assert_eq!(phase_seed(7, 1, Phase::Distant), 7);
        let seeds = [
            phase_seed(7, 2, Phase::Distant),
            phase_seed(7, 0, Phase::Init),
            phase_seed(7, 1, Phase::Pretrain),
            phase_seed(7, 1, Phase::Finetune),
            phase_seed(7, 2, Phase::Pretrain),
        ];
        for i in 0..seeds.len() {
            for j in i + 1..seeds.len() {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
    }

    #[test]
    fn trace_csv_layout() {
        let trace = EmTrace {
            init_curve: vec![1.5],
            records: vec![IterationRecord {
                iteration: 1,
                active: 10,
                eliminated: 0,
                mean_entropy: 0.5,
                loss_curve: vec![0.9, 0.4],
                finetune_curve: vec![0.2],
                label_accuracy: Some(0.75),
            }],
        };
        assert_eq!(
            trace.to_csv(),
            "iteration,active,eliminated,mean_entropy,final_loss,label_accuracy\n1,10,0,0.5,0.4,0.75\n"
        );
        assert_eq!(
            trace.loss_csv(),
            "iteration,phase,epoch,loss\n0,init,0,1.5\n1,train,0,0.9\n1,train,1,0.4\n1,finetune,0,0.2\n"
        );
    }
}
