use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{build_kb, KnowledgeBase, RelationTriple};
use crate::error::{Error, Result};

/// First line of every knowledge-base file.
pub const KB_HEADER: &str = "#kbv1";

/// Writes `subject\trelation\tobject\tcount` lines, sorted, after the header.
pub fn write_kb_to<W: Write>(kb: &KnowledgeBase, mut out: W) -> Result<()> {
    writeln!(out, "{KB_HEADER}")?;
    for t in kb.triples() {
        writeln!(out, "{}\t{}\t{}\t{}", t.subject, t.relation, t.object, t.count)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_kb(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<()> {
    write_kb_to(kb, BufWriter::new(File::create(path)?))
}

/// Reads a knowledge base file; stored counts are kept as-is.
pub fn read_kb_from<R: BufRead>(input: R, origin: &str) -> Result<KnowledgeBase> {
    let mut triples = Vec::new();
    let mut seen_header = false;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line.trim_end() != KB_HEADER {
                return Err(Error::parse(origin, lineno, format!("expected header '{KB_HEADER}'")));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [subject, relation, object, count] = fields[..] else {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        };
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("invalid count '{count}'")))?;
        if count == 0 {
            return Err(Error::parse(origin, lineno, "count must be at least 1"));
        }
        triples.push(RelationTriple::new(subject, relation, object, count));
    }
    if !seen_header {
        return Err(Error::parse(origin, 1, format!("missing header '{KB_HEADER}'")));
    }
    build_kb(triples, 1).map_err(|e| match e {
        Error::Input(msg) => Error::parse(origin, 0, msg),
        other => other,
    })
}

pub fn read_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    read_kb_from(BufReader::new(File::open(path)?), &path.display().to_string())
}
