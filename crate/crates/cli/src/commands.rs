use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use vdsg::align::{align_dataset, coverage, AlignStats};
use vdsg::config::FlatConfig;
use vdsg::denoise::{run_distant, run_semi, EmConfig};
use vdsg::eval::{predict_all, GoldSet, RankingProtocol};
use vdsg::kb::{build_kb_from_captions, read_kb, write_kb, KnowledgeBase};
use vdsg::scene::{read_dataset, write_dataset, Dataset, DatasetKind};
use vdsg::scorer::{fit, read_scorer, write_scorer, LossKind, RelationScorer};
use vdsg::signal::{CooccurrenceSignal, ExternalSignal, FileSignal};
use vdsg::synth::{generate, generate_test, split, SynthConfig};

use crate::{CliError, CliResult, LossArg, Mode};

fn read_config(path: Option<&Path>) -> CliResult<FlatConfig> {
    Ok(match path {
        Some(p) => FlatConfig::read(p)?,
        None => FlatConfig::new(),
    })
}

/// Fills in the `--seed` flag unless the config file sets one.
fn seeded(mut cfg: FlatConfig, seed: u64) -> FlatConfig {
    if !cfg.contains("seed") {
        cfg.set("seed", seed);
    }
    cfg
}

fn stats_line(s: &AlignStats) -> String {
    format!(
        "pairs={} unknown_category={} no_overlap={} no_candidates={} emitted={}",
        s.pairs_considered, s.skipped_unknown_category, s.skipped_no_overlap, s.skipped_no_candidates, s.emitted
    )
}

pub fn build_kb(captions: &Path, out: &Path, min_count: u64) -> CliResult {
    let text = fs::read_to_string(captions)?;
    let kb = build_kb_from_captions(text.lines().filter(|l| !l.trim().is_empty()), min_count)?;
    write_kb(&kb, out)?;
    let s = kb.stats();
    println!(
        "categories={} relations={} triples={}",
        s.num_categories, s.num_relations, s.num_triples
    );
    Ok(())
}

pub fn align(kb: &Path, scenes: &Path, out: &Path, dl: Option<&Path>) -> CliResult {
    let kb = read_kb(kb)?;
    let input = read_dataset(scenes)?;
    let (ds, stats) = align_dataset(&kb, &input.scenes);
    write_dataset(&ds, out)?;
    println!("{}", stats_line(&stats));
    if let Some(dl) = dl {
        let dl = read_dataset(dl)?;
        println!("coverage={}", coverage(&ds, &dl)?);
    }
    Ok(())
}

pub fn synth(
    config: Option<&Path>,
    out: &Path,
    human_fraction: Option<f64>,
    test_scenes: Option<usize>,
    seed: u64,
) -> CliResult {
    let cfg = SynthConfig::from_flat(&seeded(read_config(config)?, seed))?;
    let corpus = generate(&cfg)?;
    fs::create_dir_all(out)?;
    write_dataset(
        &Dataset::new(DatasetKind::Distant, corpus.scenes.clone()),
        out.join("scenes.jsonl"),
    )?;
    corpus.gold.write(out.join("gold.jsonl"))?;
    write_kb(&corpus.kb, out.join("kb.tsv"))?;
    write_dataset(&corpus.ds, out.join("ds.jsonl"))?;
    if let Some(f) = human_fraction {
        let (dl, ds) = split(&corpus, f, cfg.seed)?;
        write_dataset(&dl, out.join("dl.jsonl"))?;
        write_dataset(&ds, out.join("ds_split.jsonl"))?;
    }
    if let Some(n) = test_scenes {
        let (scenes, gold) = generate_test(&cfg, &corpus.kb, n)?;
        write_dataset(
            &Dataset::new(DatasetKind::Distant, scenes),
            out.join("test_scenes.jsonl"),
        )?;
        gold.write(out.join("test_gold.jsonl"))?;
    }
    println!("scenes={} {}", corpus.scenes.len(), stats_line(&corpus.align_stats));
    Ok(())
}

fn check_vocab(data: &Dataset, kb: &KnowledgeBase) -> CliResult {
    data.check_categories(kb.num_categories())?;
    data.check_relations(kb.num_relations())?;
    Ok(())
}

pub fn train(data: &Path, kb: &Path, out: &Path, config: Option<&Path>, loss: Option<LossArg>, seed: u64) -> CliResult {
    let kb = read_kb(kb)?;
    let data = read_dataset(data)?;
    check_vocab(&data, &kb)?;
    let em = EmConfig::from_flat(&seeded(read_config(config)?, seed), EmConfig::semi())?;
    let loss = match loss {
        Some(LossArg::NoiseAware) => LossKind::NoiseAware,
        Some(LossArg::CrossEntropy) => LossKind::CrossEntropy,
        None if data.kind == DatasetKind::Human => LossKind::CrossEntropy,
        None => LossKind::NoiseAware,
    };
    let mut scorer = RelationScorer::new(em.arch, kb.num_categories(), kb.num_relations(), em.seed)?;
    let params = vdsg::scorer::FitParams {
        seed: em.seed,
        ..em.fit
    };
    let curve = fit(&mut scorer, &data, loss, &params)?;
    write_scorer(&scorer, out)?;
    if let Some(l) = curve.last() {
        println!("epochs={} final_loss={l}", curve.len());
    }
    Ok(())
}

pub struct DenoiseArgs<'a> {
    pub mode: Mode,
    pub ds: &'a Path,
    pub dl: Option<&'a Path>,
    pub kb: &'a Path,
    pub signal: Option<&'a str>,
    pub config: Option<&'a Path>,
    pub out: &'a Path,
    pub gold: Option<&'a Path>,
    pub seed: u64,
}

pub fn denoise(args: DenoiseArgs<'_>) -> CliResult {
    let kb = read_kb(args.kb)?;
    let mut ds = read_dataset(args.ds)?;
    check_vocab(&ds, &kb)?;
    let cfg = seeded(read_config(args.config)?, args.seed);
    let gold = args.gold.map(GoldSet::read).transpose()?;

    let (scorer, trace) = match args.mode {
        Mode::Distant => {
            if args.dl.is_some() {
                return Err(CliError::Usage("--dl is only used with --mode semi".into()));
            }
            let mut base = EmConfig::distant();
            if args.signal.is_none() {
                base.use_external_signal = false;
                base.omega = 1.0;
            }
            let em = EmConfig::from_flat(&cfg, base)?;
            let file_signal;
            let cooc;
            let signal: Option<&dyn ExternalSignal> = match args.signal {
                None if em.use_external_signal => {
                    return Err(CliError::Usage(
                        "config enables the external signal but --signal is missing".into(),
                    ))
                }
                None => None,
                Some("cooc") => {
                    cooc = CooccurrenceSignal::new(&kb);
                    Some(&cooc)
                }
                Some(path) => {
                    file_signal = FileSignal::read(path)?;
                    Some(&file_signal)
                }
            };
            run_distant(&mut ds, &kb, signal, &em, gold.as_ref())?
        }
        Mode::Semi => {
            let Some(dl) = args.dl else {
                return Err(CliError::Usage("--mode semi requires --dl".into()));
            };
            if args.signal.is_some() {
                return Err(CliError::Usage("--signal is not used with --mode semi".into()));
            }
            let dl = read_dataset(dl)?;
            check_vocab(&dl, &kb)?;
            let em = EmConfig::from_flat(&cfg, EmConfig::semi())?;
            run_semi(&mut ds, &dl, &kb, &em, gold.as_ref())?
        }
    };
    fs::create_dir_all(args.out)?;
    write_scorer(&scorer, args.out.join("scorer.ckpt"))?;
    write_dataset(&ds, args.out.join("ds.jsonl"))?;
    trace.write_csv(args.out.join("trace.csv"), args.out.join("loss.csv"))?;
    println!("iterations={} active={}", trace.records.len(), ds.num_active());
    Ok(())
}

pub fn eval(
    scorer: &Path,
    scenes: &Path,
    gold: &Path,
    ks: &[usize],
    out: &Path,
    kb: Option<&Path>,
    graph_constraint: bool,
) -> CliResult {
    let scorer = read_scorer(scorer)?;
    let data = read_dataset(scenes)?;
    data.check_categories(scorer.num_categories())?;
    let gold = GoldSet::read(gold)?;
    if gold.max_relation().is_some_and(|r| r >= scorer.num_relations()) {
        return Err(vdsg::Error::Input(format!(
            "gold relations exceed the scorer's {} relations",
            scorer.num_relations()
        ))
        .into());
    }
    let kb = kb.map(read_kb).transpose()?;
    if let Some(kb) = &kb {
        if kb.num_categories() != scorer.num_categories() || kb.num_relations() != scorer.num_relations() {
            return Err(vdsg::Error::Input("knowledge base and scorer vocabularies differ".into()).into());
        }
    }
    let preds = predict_all(&scorer, &data.scenes, kb.as_ref())?;
    let protocol = RankingProtocol { graph_constraint };
    let mut csv = String::from("metric,K,value\n");
    for &k in ks {
        let rows = [
            ("recall", protocol.recall_at_k(&preds, &gold, k)?),
            ("mean_recall", protocol.mean_recall_at_k(&preds, &gold, k)?),
            ("precision", protocol.precision_at_k(&preds, &gold, k)?),
            ("mean_precision", protocol.mean_precision_at_k(&preds, &gold, k)?),
        ];
        for (name, v) in rows {
            let _ = writeln!(csv, "{name},{k},{v}");
        }
    }
    fs::write(out, &csv)?;
    print!("{csv}");
    Ok(())
}
