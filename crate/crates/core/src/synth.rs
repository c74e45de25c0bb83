//! Synthetic corpora with known relations.
//!
//! A seeded world table fixes one geometric relation per ordered category
//! pair. Scenes hold pairs of overlapping objects, each pair in its own
//! grid cell, laid out so that the geometry rule reproduces the world
//! table. The knowledge base counts the true triples and adds spurious
//! relations, so every distant candidate set contains the true relation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::align::{align_dataset, AlignStats};
use crate::config::FlatConfig;
use crate::error::{Error, Result};
use crate::eval::{GoldSet, GoldTriple};
use crate::kb::{build_kb, CategoryId, KnowledgeBase, RelationId, RelationTriple};
use crate::par;
use crate::scene::{BoundingBox, Dataset, DatasetKind, ObjectInstance, RelationInstance, Scene};

/// Relations decided by [`geometry_rule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GeomRelation {
    Above,
    Below,
    Inside,
    LeftOf,
    RightOf,
    Overlapping,
}

impl GeomRelation {
    pub const ALL: [GeomRelation; 6] = [
        GeomRelation::Above,
        GeomRelation::Below,
        GeomRelation::Inside,
        GeomRelation::LeftOf,
        GeomRelation::RightOf,
        GeomRelation::Overlapping,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeomRelation::Above => "above",
            GeomRelation::Below => "below",
            GeomRelation::Inside => "inside",
            GeomRelation::LeftOf => "left of",
            GeomRelation::RightOf => "right of",
            GeomRelation::Overlapping => "overlapping",
        }
    }

    /// Relation of the reversed pair. A container overlaps its content.
    pub fn inverse(self) -> Self {
        match self {
            GeomRelation::Above => GeomRelation::Below,
            GeomRelation::Below => GeomRelation::Above,
            GeomRelation::LeftOf => GeomRelation::RightOf,
            GeomRelation::RightOf => GeomRelation::LeftOf,
            GeomRelation::Inside | GeomRelation::Overlapping => GeomRelation::Overlapping,
        }
    }
}

impl fmt::Display for GeomRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeomRelation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace(['_', '-'], " ");
        GeomRelation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::input(format!("unknown geometric relation '{s}'")))
    }
}

/// Relation of `subject` to `object` in a `width`×`height` image.
///
/// Containment gives inside. Otherwise, with center offsets normalized by
/// the image size, offsets below `tau` on both axes give overlapping; the
/// dominant axis picks above/below or left of/right of.
pub fn geometry_rule(subject: &BoundingBox, object: &BoundingBox, width: f64, height: f64, tau: f64) -> GeomRelation {
    if object.contains(subject) {
        return GeomRelation::Inside;
    }
    let (dx, dy) = offsets(subject, object, width, height);
    if dx.abs().max(dy.abs()) < tau {
        GeomRelation::Overlapping
    } else if dy.abs() >= dx.abs() {
        if dy < 0.0 {
            GeomRelation::Above
        } else {
            GeomRelation::Below
        }
    } else if dx < 0.0 {
        GeomRelation::LeftOf
    } else {
        GeomRelation::RightOf
    }
}

fn offsets(s: &BoundingBox, o: &BoundingBox, width: f64, height: f64) -> (f64, f64) {
    let (sx, sy) = s.center();
    let (ox, oy) = o.center();
    ((sx - ox) / width, (sy - oy) / height)
}

const NOUNS: [&str; 24] = [
    "bag", "ball", "bench", "bike", "bird", "book", "bottle", "bowl", "car", "chair", "cup", "dog", "door", "fence",
    "horse", "lamp", "man", "person", "plate", "sign", "table", "tree", "vase", "window",
];

/// Category names in id order; sorted so that knowledge-base ids match.
pub fn category_names(n: usize) -> Vec<String> {
    if n <= NOUNS.len() {
        NOUNS[..n].iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|k| format!("obj{k:04}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_scenes: usize,
    pub num_categories: usize,
    /// Enabled relations; their count is the number of non-NA relations.
    pub rule_table: Vec<GeomRelation>,
    /// Inclusive range of objects per scene.
    pub objects_per_scene: (usize, usize),
    pub seed: u64,
    /// Probability that a spurious relation enters the knowledge base for a
    /// category pair seen in the corpus.
    pub extra_candidate_rate: f64,
    /// Spurious counts are the true count times `U(0, spurious_scale)`.
    pub spurious_scale: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Overlapping threshold on normalized center offsets.
    pub tau: f64,
    /// Minimum distance of generated geometry from every rule boundary.
    pub margin: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_scenes: 2000,
            num_categories: 10,
            rule_table: GeomRelation::ALL.to_vec(),
            objects_per_scene: (4, 8),
            seed: 0,
            extra_candidate_rate: 0.25,
            spurious_scale: 1.5,
            image_width: 640,
            image_height: 480,
            tau: 0.05,
            margin: 0.01,
        }
    }
}

/// Keys accepted by [`SynthConfig::from_flat`].
pub const CONFIG_KEYS: &[&str] = &[
    "num_scenes",
    "num_categories",
    "relations",
    "min_objects",
    "max_objects",
    "seed",
    "extra_candidate_rate",
    "spurious_scale",
    "image_width",
    "image_height",
    "tau",
    "margin",
];

const GRID_COLS: u32 = 3;
const GRID_ROWS: u32 = 2;
const MAX_TRIES: usize = 100_000;

impl SynthConfig {
    pub fn num_relations(&self) -> usize {
        self.rule_table.len()
    }

    pub fn from_flat(cfg: &FlatConfig) -> Result<Self> {
        cfg.check_known(CONFIG_KEYS)?;
        let mut c = Self::default();
        if let Some(v) = cfg.get("num_scenes")? {
            c.num_scenes = v;
        }
        if let Some(v) = cfg.get("num_categories")? {
            c.num_categories = v;
        }
        if let Some(v) = cfg.get_list("relations")? {
            c.rule_table = v;
        }
        if let Some(v) = cfg.get("min_objects")? {
            c.objects_per_scene.0 = v;
        }
        if let Some(v) = cfg.get("max_objects")? {
            c.objects_per_scene.1 = v;
        }
        if let Some(v) = cfg.get("seed")? {
            c.seed = v;
        }
        if let Some(v) = cfg.get("extra_candidate_rate")? {
            c.extra_candidate_rate = v;
        }
        if let Some(v) = cfg.get("spurious_scale")? {
            c.spurious_scale = v;
        }
        if let Some(v) = cfg.get("image_width")? {
            c.image_width = v;
        }
        if let Some(v) = cfg.get("image_height")? {
            c.image_height = v;
        }
        if let Some(v) = cfg.get("tau")? {
            c.tau = v;
        }
        if let Some(v) = cfg.get("margin")? {
            c.margin = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let has = |r| self.rule_table.contains(&r);
        let mut sorted = self.rule_table.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.rule_table.len() {
            return Err(Error::input("rule table lists a relation twice"));
        }
        if self.num_relations() < 2 {
            return Err(Error::input("at least two relations are required"));
        }
        for r in &self.rule_table {
            if !has(r.inverse()) {
                return Err(Error::input(format!(
                    "rule table has '{r}' but not its inverse '{}'",
                    r.inverse()
                )));
            }
        }
        if self.num_categories == 0 {
            return Err(Error::input("at least one category is required"));
        }
        if self.num_categories == 1 && !has(GeomRelation::Overlapping) {
            return Err(Error::input("a single category needs the overlapping relation"));
        }
        let (lo, hi) = self.objects_per_scene;
        if lo > hi {
            return Err(Error::input("min_objects exceeds max_objects"));
        }
        if hi > 2 * (GRID_COLS * GRID_ROWS) as usize {
            return Err(Error::input(format!(
                "at most {} objects per scene fit the layout grid",
                2 * GRID_COLS * GRID_ROWS
            )));
        }
        if !(0.0..=1.0).contains(&self.extra_candidate_rate) {
            return Err(Error::input("extra_candidate_rate must lie in [0, 1]"));
        }
        if !(self.spurious_scale.is_finite() && self.spurious_scale >= 0.0) {
            return Err(Error::input("spurious_scale must be non-negative"));
        }
        if self.image_width < 300 || self.image_height < 240 {
            return Err(Error::input("image must be at least 300x240"));
        }
        if !(self.tau > 0.0 && self.margin >= 0.0 && self.margin < self.tau && self.tau + self.margin < 0.1) {
            return Err(Error::input("need 0 <= margin < tau and tau + margin < 0.1"));
        }
        Ok(())
    }
}

/// Relation of every ordered category pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct World {
    table: Vec<Vec<GeomRelation>>,
}

impl World {
    /// Draws the table from `config.seed`.
    pub fn new(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let has = |r| config.rule_table.contains(&r);
        // orientation of each unordered pair (a < b), as T(a, b)
        let mut options = Vec::new();
        for r in [
            GeomRelation::Above,
            GeomRelation::Below,
            GeomRelation::LeftOf,
            GeomRelation::RightOf,
        ] {
            if has(r) {
                options.push((r, r.inverse()));
            }
        }
        if has(GeomRelation::Inside) {
            options.push((GeomRelation::Inside, GeomRelation::Overlapping));
            options.push((GeomRelation::Overlapping, GeomRelation::Inside));
        }
        if has(GeomRelation::Overlapping) {
            options.push((GeomRelation::Overlapping, GeomRelation::Overlapping));
        }
        let n = config.num_categories;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut table = vec![vec![GeomRelation::Overlapping; n]; n];
        for (a, b) in (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))) {
            let (ab, ba) = *options.choose(&mut rng).expect("validated rule table");
            table[a][b] = ab;
            table[b][a] = ba;
        }
        Ok(Self { table })
    }

    pub fn relation(&self, subject: CategoryId, object: CategoryId) -> GeomRelation {
        self.table[subject][object]
    }

    pub fn num_categories(&self) -> usize {
        self.table.len()
    }
}

/// A generated corpus. `gold` is never read by the denoising code.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    /// Scenes with objects only.
    pub scenes: Vec<Scene>,
    pub gold: GoldSet,
    pub kb: KnowledgeBase,
    /// Scenes aligned against `kb`.
    pub ds: Dataset,
    pub align_stats: AlignStats,
}

fn mix(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scene seed stream of the training corpus.
const TRAIN_STREAM: u64 = 1;
/// Scene seed stream of held-out corpora.
const TEST_STREAM: u64 = 2;

/// Generated scene with gold triples in relation-id space of `config`.
struct SceneDraw {
    scene: Scene,
    /// (subject, object, relation) with relations as [`GeomRelation`]
    gold: Vec<(usize, usize, GeomRelation)>,
}

fn draw_pair(rng: &mut ChaCha8Rng, rel: GeomRelation, config: &SynthConfig) -> Result<(BoundingBox, BoundingBox)> {
    let (w, h) = (config.image_width as f64, config.image_height as f64);
    let cell_w = config.image_width / GRID_COLS;
    let cell_h = config.image_height / GRID_ROWS;
    let max_base = (cell_w.min(cell_h) * 3 / 8).max(30);
    for _ in 0..MAX_TRIES {
        let ow = rng.gen_range(30..=max_base) as i64;
        let oh = rng.gen_range(30..=max_base) as i64;
        let scale = if rel == GeomRelation::Inside {
            0.3..0.6
        } else {
            0.75..1.33
        };
        let sw = ((ow as f64 * rng.gen_range(scale.clone())).round() as i64).max(2);
        let sh = ((oh as f64 * rng.gen_range(scale)).round() as i64).max(2);
        let (ox, oy) = if rel == GeomRelation::Inside {
            (rng.gen_range(0..=ow - sw), rng.gen_range(0..=oh - sh))
        } else {
            (rng.gen_range(-sw + 2..=ow - 2), rng.gen_range(-sh + 2..=oh - 2))
        };
        // local frame shifted by the subject size keeps coordinates positive
        let o = BoundingBox::new(sw as f64, sh as f64, (sw + ow) as f64, (sh + oh) as f64)?;
        let (x, y) = (sw + ox, sh + oy);
        let s = BoundingBox::new(x as f64, y as f64, (x + sw) as f64, (y + sh) as f64)?;
        if !accept(&s, &o, rel, w, h, config) {
            continue;
        }
        let u = s.union_box(&o);
        let (uw, uh) = (u.width() as i64, u.height() as i64);
        if uw + 2 > cell_w as i64 || uh + 2 > cell_h as i64 {
            continue;
        }
        return Ok((s, o));
    }
    Err(Error::input(format!(
        "could not place a '{rel}' pair; enlarge the image or reduce tau"
    )))
}

/// Whether `(s, o)` realizes `rel` both ways with the configured margin.
fn accept(s: &BoundingBox, o: &BoundingBox, rel: GeomRelation, w: f64, h: f64, config: &SynthConfig) -> bool {
    if s.intersection_area(o) <= 0.0 {
        return false;
    }
    if geometry_rule(s, o, w, h, config.tau) != rel || geometry_rule(o, s, w, h, config.tau) != rel.inverse() {
        return false;
    }
    let (dx, dy) = offsets(s, o, w, h);
    let (ax, ay) = (dx.abs(), dy.abs());
    let m = config.margin;
    match rel {
        GeomRelation::Inside | GeomRelation::Overlapping => ax.max(ay) < config.tau - m,
        _ => ax.max(ay) >= config.tau + m && (ay - ax).abs() >= m,
    }
}

fn draw_scene(world: &World, config: &SynthConfig, id: String, seed: u64) -> Result<SceneDraw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = config.objects_per_scene;
    let n = rng.gen_range(lo..=hi);
    let mut cells: Vec<u32> = (0..GRID_COLS * GRID_ROWS).collect();
    cells.shuffle(&mut rng);
    let cell_w = config.image_width / GRID_COLS;
    let cell_h = config.image_height / GRID_ROWS;
    let c = config.num_categories;
    let has_overlap = config.rule_table.contains(&GeomRelation::Overlapping);

    let mut objects = Vec::with_capacity(n);
    let mut gold = Vec::new();
    for (g, &cell) in cells.iter().enumerate().take(n.div_ceil(2)) {
        let x0 = (cell % GRID_COLS * cell_w) as f64;
        let y0 = (cell / GRID_COLS * cell_h) as f64;
        if 2 * g + 1 == n {
            let bw = rng.gen_range(30..cell_w / 2) as f64;
            let bh = rng.gen_range(30..cell_h / 2) as f64;
            let x = x0 + 1.0 + rng.gen_range(0..(cell_w - 2 - bw as u32)) as f64;
            let y = y0 + 1.0 + rng.gen_range(0..(cell_h - 2 - bh as u32)) as f64;
            objects.push(ObjectInstance {
                bbox: BoundingBox::new(x, y, x + bw, y + bh)?,
                category: rng.gen_range(0..c),
            });
            continue;
        }
        let a = rng.gen_range(0..c);
        let mut b = rng.gen_range(0..c);
        while a == b && !has_overlap {
            b = rng.gen_range(0..c);
        }
        let rel = world.relation(a, b);
        // a container is generated as the object of an inside pair
        let (sa, oa) = if world.relation(b, a) == GeomRelation::Inside {
            let (inner, outer) = draw_pair(&mut rng, GeomRelation::Inside, config)?;
            (outer, inner)
        } else {
            draw_pair(&mut rng, rel, config)?
        };
        let u = sa.union_box(&oa);
        let free_x = cell_w as f64 - 2.0 - u.width();
        let free_y = cell_h as f64 - 2.0 - u.height();
        let sx = x0 + 1.0 + rng.gen_range(0..=free_x as u32) as f64 - u.x1;
        let sy = y0 + 1.0 + rng.gen_range(0..=free_y as u32) as f64 - u.y1;
        let shift = |bb: &BoundingBox| BoundingBox::new(bb.x1 + sx, bb.y1 + sy, bb.x2 + sx, bb.y2 + sy);
        let i = objects.len();
        objects.push(ObjectInstance {
            bbox: shift(&sa)?,
            category: a,
        });
        objects.push(ObjectInstance {
            bbox: shift(&oa)?,
            category: b,
        });
        gold.push((i, i + 1, rel));
        gold.push((i + 1, i, world.relation(b, a)));
    }
    let scene = Scene::new(id, config.image_width as f64, config.image_height as f64, objects);
    Ok(SceneDraw { scene, gold })
}

fn draw_scenes(world: &World, config: &SynthConfig, n: usize, prefix: &str, stream: u64) -> Result<Vec<SceneDraw>> {
    let base = mix(config.seed, stream);
    par::map_range(n, |k| {
        draw_scene(world, config, format!("{prefix}{k:05}"), mix(base, k as u64))
    })
    .into_iter()
    .collect()
}

fn relation_ids(kb: &KnowledgeBase, config: &SynthConfig) -> Result<BTreeMap<GeomRelation, RelationId>> {
    config
        .rule_table
        .iter()
        .map(|&r| {
            kb.relation_id(r.name())
                .map(|id| (r, id))
                .ok_or_else(|| Error::input(format!("relation '{r}' never occurs; generate more scenes")))
        })
        .collect()
}

fn gold_of(draws: &[SceneDraw], ids: &BTreeMap<GeomRelation, RelationId>) -> GoldSet {
    let mut gold = GoldSet::new();
    for d in draws {
        gold.touch(&d.scene.id);
        for &(sub, obj, r) in &d.gold {
            gold.insert(
                &d.scene.id,
                GoldTriple {
                    sub,
                    obj,
                    relation: ids[&r],
                },
            );
        }
    }
    gold
}

/// Generates scenes, gold relations, the knowledge base and the aligned
/// distant dataset.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus> {
    let world = World::new(config)?;
    let draws = draw_scenes(&world, config, config.num_scenes, "s", TRAIN_STREAM)?;
    let names = category_names(config.num_categories);

    let mut counts: BTreeMap<(CategoryId, CategoryId), u64> = BTreeMap::new();
    for d in &draws {
        for &(s, o, _) in &d.gold {
            *counts
                .entry((d.scene.objects[s].category, d.scene.objects[o].category))
                .or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::input(
            "configuration yields no overlapping pairs; allow at least two objects per scene",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(config.seed, 0));
    let mut triples = Vec::new();
    for (&(a, b), &n) in &counts {
        let truth = world.relation(a, b);
        triples.push(RelationTriple::new(&names[a], truth.name(), &names[b], n));
        for &r in &config.rule_table {
            if r != truth && rng.gen_bool(config.extra_candidate_rate) {
                let c = (n as f64 * rng.gen_range(0.0..=config.spurious_scale)).round().max(1.0) as u64;
                triples.push(RelationTriple::new(&names[a], r.name(), &names[b], c));
            }
        }
    }
    let kb = build_kb(triples, 1)?;
    if kb.categories() != names.as_slice() {
        return Err(Error::input(
            "some categories never occur in a pair; generate more scenes",
        ));
    }
    let ids = relation_ids(&kb, config)?;
    let gold = gold_of(&draws, &ids);
    let scenes: Vec<Scene> = draws.into_iter().map(|d| d.scene).collect();
    let (ds, align_stats) = align_dataset(&kb, &scenes);
    for (scene, rel) in ds.instances() {
        let g = gold.relation(&scene.id, rel.subject_idx, rel.object_idx);
        if !g.is_some_and(|g| rel.candidates.binary_search(&g).is_ok()) {
            return Err(Error::validation(&scene.id, "gold relation missing from candidate set"));
        }
    }
    Ok(SynthCorpus {
        scenes,
        gold,
        kb,
        ds,
        align_stats,
    })
}

/// Held-out scenes from the same world as [`generate`], with ids
/// `t00000`, `t00001`, ... and gold in the relation ids of `kb`.
pub fn generate_test(config: &SynthConfig, kb: &KnowledgeBase, num_scenes: usize) -> Result<(Vec<Scene>, GoldSet)> {
    let world = World::new(config)?;
    let draws = draw_scenes(&world, config, num_scenes, "t", TEST_STREAM)?;
    let ids = relation_ids(kb, config)?;
    let gold = gold_of(&draws, &ids);
    Ok((draws.into_iter().map(|d| d.scene).collect(), gold))
}

/// Scene-level split into a human-labeled set carrying the gold relations
/// of every scene pair and the remaining distant scenes.
pub fn split(corpus: &SynthCorpus, human_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(human_fraction > 0.0 && human_fraction < 1.0) {
        return Err(Error::input(format!(
            "human fraction must lie in (0, 1), got {human_fraction}"
        )));
    }
    let n = corpus.ds.scenes.len();
    let k = (human_fraction * n as f64).round() as usize;
    if k == 0 || k == n {
        return Err(Error::input(format!(
            "a {human_fraction} split of {n} scenes leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut human = vec![false; n];
    for &i in &order[..k] {
        human[i] = true;
    }
    let r = corpus.kb.num_relations();
    let mut dl = Vec::with_capacity(k);
    let mut ds = Vec::with_capacity(n - k);
    for (i, scene) in corpus.ds.scenes.iter().enumerate() {
        if human[i] {
            let mut s = scene.clone();
            s.relations = corpus
                .gold
                .scene(&scene.id)
                .into_iter()
                .flatten()
                .map(|t| RelationInstance::human(t.sub, t.obj, t.relation, r))
                .collect();
            dl.push(s);
        } else {
            ds.push(scene.clone());
        }
    }
    Ok((
        Dataset::new(DatasetKind::Human, dl),
        Dataset::new(DatasetKind::Distant, ds),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::label_quality;

    fn small(seed: u64, rate: f64) -> SynthConfig {
        SynthConfig {
            num_scenes: 200,
            seed,
            extra_candidate_rate: rate,
            ..SynthConfig::default()
        }
    }

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn rule_cases() {
        let big = bb(100.0, 100.0, 200.0, 200.0);
        assert_eq!(
            geometry_rule(&bb(120.0, 120.0, 150.0, 150.0), &big, 640.0, 480.0, 0.05),
            GeomRelation::Inside
        );
        assert_eq!(
            geometry_rule(&big, &bb(120.0, 120.0, 150.0, 150.0), 640.0, 480.0, 0.05),
            GeomRelation::Overlapping
        );
        assert_eq!(
            geometry_rule(&bb(100.0, 50.0, 200.0, 150.0), &big, 640.0, 480.0, 0.05),
            GeomRelation::Above
        );
        assert_eq!(
            geometry_rule(&bb(100.0, 150.0, 200.0, 250.0), &big, 640.0, 480.0, 0.05),
            GeomRelation::Below
        );
        assert_eq!(
            geometry_rule(&bb(40.0, 100.0, 140.0, 200.0), &big, 640.0, 480.0, 0.05),
            GeomRelation::LeftOf
        );
        assert_eq!(
            geometry_rule(&bb(160.0, 100.0, 260.0, 200.0), &big, 640.0, 480.0, 0.05),
            GeomRelation::RightOf
        );
    }

    #[test]
    fn names_parse_back() {
        for r in GeomRelation::ALL {
            assert_eq!(r.name().parse::<GeomRelation>().unwrap(), r);
        }
        assert_eq!("left_of".parse::<GeomRelation>().unwrap(), GeomRelation::LeftOf);
        let names = category_names(10);
        assert!(names.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn world_is_consistent_under_inversion() {
        let w = World::new(&SynthConfig::default()).unwrap();
        for a in 0..10 {
            assert_eq!(w.relation(a, a), GeomRelation::Overlapping);
            for b in 0..10 {
                let (ab, ba) = (w.relation(a, b), w.relation(b, a));
                assert!(ab.inverse() == ba || ba.inverse() == ab);
            }
        }
    }

    #[test]
    fn gold_matches_geometry_and_candidates() {
        let cfg = small(3, 0.25);
        let corpus = generate(&cfg).unwrap();
        let mut n = 0;
        for scene in &corpus.scenes {
            scene.validate().unwrap();
            for t in corpus.gold.scene(&scene.id).unwrap() {
                let rule = geometry_rule(
                    &scene.objects[t.sub].bbox,
                    &scene.objects[t.obj].bbox,
                    640.0,
                    480.0,
                    cfg.tau,
                );
                assert_eq!(corpus.kb.relation_name(t.relation), Some(rule.name()));
                n += 1;
            }
        }
        assert_eq!(n, corpus.ds.num_instances());
        assert_eq!(corpus.align_stats.emitted, n);
    }

    #[test]
    fn noise_free_limit() {
        let corpus = generate(&small(5, 0.0)).unwrap();
        assert!(corpus.ds.instances().all(|(_, r)| r.candidates.len() == 1));
        assert_eq!(label_quality(&corpus.ds, &corpus.gold).unwrap(), 1.0);
    }

    #[test]
    fn seeded_determinism() {
        let a = generate(&small(9, 0.25)).unwrap();
        let b = generate(&small(9, 0.25)).unwrap();
        assert_eq!(a.ds, b.ds);
        assert_eq!(a.kb, b.kb);
        assert_eq!(a.gold, b.gold);
        let c = generate(&small(10, 0.25)).unwrap();
        assert_ne!(a.ds, c.ds);
    }

    #[test]
    fn split_partitions_scenes() {
        let corpus = generate(&small(1, 0.25)).unwrap();
        let (dl, ds) = split(&corpus, 0.1, 4).unwrap();
        assert_eq!(dl.scenes.len(), 20);
        assert_eq!(ds.scenes.len(), 180);
        dl.validate().unwrap();
        let mut ids: Vec<&str> = dl.scenes.iter().chain(&ds.scenes).map(|s| s.id.as_str()).collect();
        ids.sort();
        let mut all: Vec<&str> = corpus.scenes.iter().map(|s| s.id.as_str()).collect();
        all.sort();
        assert_eq!(ids, all);
        assert_eq!(split(&corpus, 0.1, 4).unwrap().0, dl);
        assert!(split(&corpus, 0.0, 4).is_err());
        assert!(split(&corpus, 0.001, 4).is_err());
    }

    #[test]
    fn test_scenes_share_the_world() {
        let cfg = small(2, 0.25);
        let corpus = generate(&cfg).unwrap();
        let (scenes, gold) = generate_test(&cfg, &corpus.kb, 50).unwrap();
        assert_eq!(scenes.len(), 50);
        let world = World::new(&cfg).unwrap();
        for s in &scenes {
            for t in gold.scene(&s.id).unwrap() {
                let r = world.relation(s.objects[t.sub].category, s.objects[t.obj].category);
                assert_eq!(corpus.kb.relation_id(r.name()), Some(t.relation));
            }
        }
    }

    #[test]
    fn bad_configs() {
        let mut c = SynthConfig {
            rule_table: vec![GeomRelation::Above],
            ..SynthConfig::default()
        };
        assert!(generate(&c).is_err());
        c.rule_table = vec![GeomRelation::Above, GeomRelation::LeftOf];
        assert!(c.validate().is_err());
        c.rule_table = vec![GeomRelation::Above, GeomRelation::Below];
        c.validate().unwrap();
        let mut c = small(0, 0.2);
        c.objects_per_scene = (1, 1);
        assert!(generate(&c).is_err());
        c.objects_per_scene = (2, 2);
        c.extra_candidate_rate = 1.5;
        assert!(generate(&c).is_err());
    }
}
