//! Plain-text scorer checkpoints.
//!
//! ```text
//! #scorer v1
//! arch linear            (or: arch mlp <hidden>)
//! categories <C>
//! relations <R>
//! seed <S>
//! params <N>
//! <one line per parameter row, space-separated>
//! ```
//!
//! Parameter rows follow the row-major layout of each block (`W` rows, then
//! the bias row; for the MLP `W1`, `b1`, `W2`, `b2`). Values are written
//! with 17 significant digits and read back bit-exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Architecture, RelationScorer};
use crate::error::{Error, Result};

const HEADER: &str = "#scorer v1";

fn row_widths(scorer: &RelationScorer) -> Vec<usize> {
    let (f, r) = (scorer.feature_dim(), scorer.num_relations());
    match scorer.arch() {
        Architecture::Linear => std::iter::repeat_n(r, f + 1).collect(),
        Architecture::Mlp { hidden: h } => std::iter::repeat_n(h, f + 1)
            .chain(std::iter::repeat_n(r, h + 1))
            .collect(),
    }
}

pub fn write_scorer_to<W: Write>(scorer: &RelationScorer, mut out: W) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    match scorer.arch() {
        Architecture::Linear => writeln!(out, "arch linear")?,
        Architecture::Mlp { hidden } => writeln!(out, "arch mlp {hidden}")?,
    }
    writeln!(out, "categories {}", scorer.num_categories())?;
    writeln!(out, "relations {}", scorer.num_relations())?;
    writeln!(out, "seed {}", scorer.seed())?;
    writeln!(out, "params {}", scorer.num_params())?;
    let mut rest = scorer.params();
    for width in row_widths(scorer) {
        let (row, tail) = rest.split_at(width);
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", line.join(" "))?;
        rest = tail;
    }
    out.flush()?;
    Ok(())
}

pub fn write_scorer(scorer: &RelationScorer, path: impl AsRef<Path>) -> Result<()> {
    write_scorer_to(scorer, BufWriter::new(File::create(path)?))
}

pub fn read_scorer_from<R: BufRead>(input: R, origin: &str) -> Result<RelationScorer> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, line)) => Ok((i + 1, line?)),
            None => Err(Error::parse(
                origin,
                0,
                format!("unexpected end of file, expected {what}"),
            )),
        }
    };
    let (n, header) = next("header")?;
    if header.trim_end() != HEADER {
        return Err(Error::parse(origin, n, format!("expected '{HEADER}'")));
    }
    let mut field = |key: &str| -> Result<(usize, Vec<String>)> {
        let (n, line) = next(key)?;
        let mut parts = line.split_whitespace().map(str::to_owned);
        if parts.next().as_deref() != Some(key) {
            return Err(Error::parse(origin, n, format!("expected '{key}'")));
        }
        Ok((n, parts.collect()))
    };
    let int = |n: usize, v: Option<&String>| -> Result<u64> {
        v.and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(origin, n, "expected an integer"))
    };
    let (n, arch) = field("arch")?;
    let arch = match arch.first().map(String::as_str) {
        Some("linear") => Architecture::Linear,
        Some("mlp") => Architecture::Mlp {
            hidden: int(n, arch.get(1))? as usize,
        },
        _ => return Err(Error::parse(origin, n, "unknown architecture")),
    };
    let (n, v) = field("categories")?;
    let categories = int(n, v.first())? as usize;
    let (n, v) = field("relations")?;
    let relations = int(n, v.first())? as usize;
    let (n, v) = field("seed")?;
    let seed = int(n, v.first())?;
    let (n, v) = field("params")?;
    let count = int(n, v.first())? as usize;

    let mut params = Vec::with_capacity(count);
    for (i, line) in lines {
        let line = line?;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, format!("invalid number '{tok}'")))?;
            params.push(v);
        }
    }
    if params.len() != count {
        return Err(Error::parse(
            origin,
            0,
            format!("expected {count} parameters, found {}", params.len()),
        ));
    }
    RelationScorer::from_parts(arch, categories, relations, seed, params)
        .map_err(|e| Error::parse(origin, 0, e.to_string()))
}

pub fn read_scorer(path: impl AsRef<Path>) -> Result<RelationScorer> {
    let path = path.as_ref();
    read_scorer_from(BufReader::new(File::open(path)?), &path.display().to_string())
}
