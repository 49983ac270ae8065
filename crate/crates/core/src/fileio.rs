//! Text persistence: tree sample files, parameter files, and probability
//! tables.
//!
//! Tree sample files hold one record per line, either `<newick>` or
//! `<weight><TAB><newick>` with a positive integer repeat count; `#` lines
//! are comments. Parameter files are versioned TSV with the taxon order in
//! the header, which is authoritative on load (clade bits depend on it).
//! Probabilities are written with 17 significant digits so a round trip
//! reproduces every float bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::clade::Clade;
use crate::evaluation::{DiscreteDistribution, TreeSpace};
use crate::model::{CcdParams, FittedModel, ParentCpds, SbnParams, SrfParams};
use crate::newick::{parse_newick, NewickError, ParsedTree};
use crate::subsplit::Subsplit;
use crate::taxa::TaxonSet;
use crate::topology::{RootedTopology, UnrootedTopology};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum FileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Validation(String),
}

impl FileError {
    fn parse(line: usize, msg: impl Into<String>) -> Self {
        FileError::Parse {
            line,
            msg: msg.into(),
        }
    }

    fn newick(line: usize, e: NewickError) -> Self {
        FileError::Parse {
            line,
            msg: format!("column {}: {}", e.col, e.kind),
        }
    }
}

/// A parsed file: the (possibly inferred) taxon set plus per-record trees
/// with their weights or probabilities.
pub type TaxaRecords = (Arc<TaxonSet>, Vec<(ParsedTree, f64)>);

const SBN_HEADER: &str = "sbn-params v1";
const CCD_HEADER: &str = "ccd-params v1";

fn fmt_prob(p: f64) -> String {
    format!("{p:.16e}")
}

fn is_name_char(c: char) -> bool {
    !matches!(c, '(' | ')' | ',' | ':' | ';') && !c.is_whitespace()
}

/// Leaf names of one Newick record, in appearance order: a name token is a
/// leaf exactly when it follows `(` or `,` (or starts the record); tokens
/// after `)` are internal labels and tokens after `:` are branch lengths.
fn scan_leaf_names(record: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut chars = record.chars().peekable();
    let mut prev = '\0';
    while let Some(&c) = chars.peek() {
        if c == ':' {
            chars.next();
            while chars
                .peek()
                .is_some_and(|c| c.is_ascii_digit() || matches!(c, '.' | '+' | '-' | 'e' | 'E'))
            {
                chars.next();
            }
            prev = ':';
        } else if is_name_char(c) {
            let mut name = String::new();
            while chars.peek().is_some_and(|&c| is_name_char(c)) {
                name.push(chars.next().expect("peeked"));
            }
            if matches!(prev, '(' | ',' | '\0') {
                names.push(name);
            }
            prev = 'n';
        } else {
            chars.next();
            if !c.is_whitespace() {
                prev = c;
            }
        }
    }
    names
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Splits a sample line into (weight, newick). A tab separates a positive
/// integer repeat count from the tree; otherwise the whole line is a tree
/// of weight one.
fn split_weighted(line_no: usize, line: &str) -> Result<(f64, &str), FileError> {
    match line.split_once('\t') {
        None => Ok((1.0, line)),
        Some((w, rest)) => {
            let weight: u64 = w.trim().parse().map_err(|_| {
                FileError::parse(
                    line_no,
                    format!("bad weight {w:?}: expected a positive integer"),
                )
            })?;
            if weight == 0 {
                return Err(FileError::parse(line_no, "weight must be positive"));
            }
            Ok((weight as f64, rest.trim()))
        }
    }
}

/// Reads a tree sample file, inferring the taxon set from the first record
/// (names sorted lexicographically).
pub fn read_trees(text: &str) -> Result<TaxaRecords, FileError> {
    let first = content_lines(text)
        .next()
        .ok_or_else(|| FileError::Validation("no trees in input".into()))?;
    let (_, newick) = split_weighted(first.0, first.1)?;
    let names = scan_leaf_names(newick);
    let taxa =
        Arc::new(TaxonSet::sorted(names).map_err(|e| FileError::parse(first.0, e.to_string()))?);
    let trees = read_trees_with_taxa(text, &taxa)?;
    Ok((taxa, trees))
}

/// Reads a tree sample file against a fixed taxon set.
pub fn read_trees_with_taxa(
    text: &str,
    taxa: &Arc<TaxonSet>,
) -> Result<Vec<(ParsedTree, f64)>, FileError> {
    let mut out = Vec::new();
    for (line_no, line) in content_lines(text) {
        let (weight, newick) = split_weighted(line_no, line)?;
        let tree = parse_newick(newick, taxa).map_err(|e| FileError::newick(line_no, e))?;
        out.push((tree, weight));
    }
    if out.is_empty() {
        return Err(FileError::Validation("no trees in input".into()));
    }
    Ok(out)
}

/// Coerces parsed records to unrooted topologies, collapsing binary roots.
pub fn unrooted_sample(
    records: Vec<(ParsedTree, f64)>,
) -> Result<Vec<(UnrootedTopology, f64)>, FileError> {
    records
        .into_iter()
        .map(|(t, w)| {
            t.into_unrooted()
                .map(|u| (u, w))
                .map_err(|e| FileError::Validation(e.to_string()))
        })
        .collect()
}

/// Requires every record to be rooted (binary root).
pub fn rooted_sample(
    records: Vec<(ParsedTree, f64)>,
) -> Result<Vec<(RootedTopology, f64)>, FileError> {
    records
        .into_iter()
        .map(|(t, w)| match t {
            ParsedTree::Rooted(r) => Ok((r, w)),
            ParsedTree::Unrooted(_) => Err(FileError::Validation(
                "expected rooted trees (binary root), found a trifurcating root".into(),
            )),
        })
        .collect()
}

fn parse_clade(line_no: usize, text: &str, taxa: &TaxonSet) -> Result<Clade, FileError> {
    let mut clade = Clade::empty(taxa.len());
    for name in text.split(',') {
        let i = taxa
            .index_of(name)
            .ok_or_else(|| FileError::parse(line_no, format!("unknown taxon {name:?}")))?;
        clade.insert(i);
    }
    if clade.is_empty() {
        return Err(FileError::parse(line_no, "empty clade"));
    }
    Ok(clade)
}

fn parse_subsplit(line_no: usize, text: &str, taxa: &TaxonSet) -> Result<Subsplit, FileError> {
    let (y, z) = text
        .split_once('|')
        .ok_or_else(|| FileError::parse(line_no, format!("expected Y|Z subsplit, got {text:?}")))?;
    let y = parse_clade(line_no, y, taxa)?;
    let z = parse_clade(line_no, z, taxa)?;
    Subsplit::new(y, z).map_err(|e| FileError::parse(line_no, e.to_string()))
}

fn parse_prob(line_no: usize, text: &str) -> Result<f64, FileError> {
    let p: f64 = text
        .parse()
        .map_err(|_| FileError::parse(line_no, format!("bad probability {text:?}")))?;
    if !(0.0..=1.0 + 1e-9).contains(&p) {
        return Err(FileError::parse(
            line_no,
            format!("probability {p} out of range"),
        ));
    }
    Ok(p)
}

/// Serializes SBN parameters: header, taxa line, sorted `root` records,
/// then sorted `pcsp` records.
pub fn write_sbn_params(params: &SbnParams) -> String {
    let taxa = params.taxa();
    let mut out = String::new();
    let _ = writeln!(out, "{SBN_HEADER}");
    let _ = writeln!(out, "taxa\t{taxa}");
    for (s, p) in params.root_dist() {
        let _ = writeln!(out, "root\t{}\t{}", s.render(taxa), fmt_prob(*p));
    }
    for (parent, focal, child, p) in params.cond_entries() {
        let _ = writeln!(
            out,
            "pcsp\t{}\t{}\t{}\t{}",
            parent.render(taxa),
            focal.render(taxa),
            child.render(taxa),
            fmt_prob(p)
        );
    }
    out
}

pub fn parse_sbn_params(text: &str) -> Result<SbnParams, FileError> {
    let mut lines = content_lines(text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| FileError::Validation("empty parameter file".into()))?;
    if header != SBN_HEADER {
        return Err(FileError::parse(
            line_no,
            format!("expected {SBN_HEADER:?} header"),
        ));
    }
    let taxa = parse_taxa_line(lines.next())?;
    let mut root_dist: BTreeMap<Subsplit, f64> = BTreeMap::new();
    let mut cond: BTreeMap<Subsplit, ParentCpds> = BTreeMap::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["root", split, prob] => {
                let s = parse_subsplit(line_no, split, &taxa)?;
                let p = parse_prob(line_no, prob)?;
                if root_dist.insert(s, p).is_some() {
                    return Err(FileError::parse(line_no, "duplicate root record"));
                }
            }
            ["pcsp", parent, focal, child, prob] => {
                let parent = parse_subsplit(line_no, parent, &taxa)?;
                let focal = parse_clade(line_no, focal, &taxa)?;
                let child = parse_subsplit(line_no, child, &taxa)?;
                let p = parse_prob(line_no, prob)?;
                if child.clade() != focal {
                    return Err(FileError::parse(
                        line_no,
                        "child subsplit does not partition the focal clade",
                    ));
                }
                let side = if focal == *parent.y() {
                    true
                } else if focal == *parent.z() {
                    false
                } else {
                    return Err(FileError::parse(
                        line_no,
                        "focal clade is not a part of the parent subsplit",
                    ));
                };
                let cpds = cond.entry(parent).or_default();
                let table = if side { &mut cpds.y } else { &mut cpds.z };
                if table.insert(child, p).is_some() {
                    return Err(FileError::parse(line_no, "duplicate pcsp record"));
                }
            }
            _ => {
                return Err(FileError::parse(
                    line_no,
                    format!(
                        "unrecognized record {:?}",
                        fields.first().copied().unwrap_or("")
                    ),
                ))
            }
        }
    }
    SbnParams::new(taxa, root_dist, cond, 1e-9).map_err(|e| FileError::Validation(e.to_string()))
}

fn parse_taxa_line(line: Option<(usize, &str)>) -> Result<Arc<TaxonSet>, FileError> {
    let (line_no, line) = line.ok_or_else(|| FileError::Validation("missing taxa line".into()))?;
    let names = line
        .strip_prefix("taxa\t")
        .ok_or_else(|| FileError::parse(line_no, "expected 'taxa' line"))?;
    let taxa =
        TaxonSet::new(names.split(',')).map_err(|e| FileError::parse(line_no, e.to_string()))?;
    Ok(Arc::new(taxa))
}

/// Serializes CCD parameters as sorted `split` records; the clade of each
/// record is the union of the two sides.
pub fn write_ccd_params(params: &CcdParams) -> String {
    let taxa = params.taxa();
    let mut out = String::new();
    let _ = writeln!(out, "{CCD_HEADER}");
    let _ = writeln!(out, "taxa\t{taxa}");
    for dist in params.clade_dist().values() {
        for (s, p) in dist {
            let _ = writeln!(out, "split\t{}\t{}", s.render(taxa), fmt_prob(*p));
        }
    }
    out
}

pub fn parse_ccd_params(text: &str) -> Result<CcdParams, FileError> {
    let mut lines = content_lines(text);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| FileError::Validation("empty parameter file".into()))?;
    if header != CCD_HEADER {
        return Err(FileError::parse(
            line_no,
            format!("expected {CCD_HEADER:?} header"),
        ));
    }
    let taxa = parse_taxa_line(lines.next())?;
    let mut clade_dist: BTreeMap<Clade, BTreeMap<Subsplit, f64>> = BTreeMap::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["split", split, prob] => {
                let s = parse_subsplit(line_no, split, &taxa)?;
                let p = parse_prob(line_no, prob)?;
                if clade_dist
                    .entry(s.clade())
                    .or_default()
                    .insert(s, p)
                    .is_some()
                {
                    return Err(FileError::parse(line_no, "duplicate split record"));
                }
            }
            _ => {
                return Err(FileError::parse(
                    line_no,
                    format!(
                        "unrecognized record {:?}",
                        fields.first().copied().unwrap_or("")
                    ),
                ))
            }
        }
    }
    CcdParams::new(taxa, clade_dist, 1e-9).map_err(|e| FileError::Validation(e.to_string()))
}

/// SRF estimates as a probability table: `<prob><TAB><newick>` per line,
/// canonical Newick, sorted by tree id.
pub fn write_srf(params: &SrfParams) -> String {
    let mut out = String::new();
    for (id, p) in params.probs() {
        let _ = writeln!(out, "{}\t{}", fmt_prob(*p), id);
    }
    out
}

/// Reads a `<prob><TAB><newick>` table against a fixed taxon set. Returns
/// the records without normalization checks.
pub fn read_prob_table_with_taxa(
    text: &str,
    taxa: &Arc<TaxonSet>,
) -> Result<Vec<(ParsedTree, f64)>, FileError> {
    let mut out = Vec::new();
    for (line_no, line) in content_lines(text) {
        let (prob, newick) = line
            .split_once('\t')
            .ok_or_else(|| FileError::parse(line_no, "expected <prob><TAB><newick>"))?;
        let p: f64 = prob
            .trim()
            .parse()
            .map_err(|_| FileError::parse(line_no, format!("bad probability {prob:?}")))?;
        if p < 0.0 || !p.is_finite() {
            return Err(FileError::parse(
                line_no,
                format!("probability {p} out of range"),
            ));
        }
        let tree = parse_newick(newick.trim(), taxa).map_err(|e| FileError::newick(line_no, e))?;
        out.push((tree, p));
    }
    if out.is_empty() {
        return Err(FileError::Validation(
            "no records in probability table".into(),
        ));
    }
    Ok(out)
}

/// Reads a probability table, inferring taxa from the first record.
pub fn read_prob_table(text: &str) -> Result<TaxaRecords, FileError> {
    let first = content_lines(text)
        .next()
        .ok_or_else(|| FileError::Validation("no records in probability table".into()))?;
    let (_, newick) = first
        .1
        .split_once('\t')
        .ok_or_else(|| FileError::parse(first.0, "expected <prob><TAB><newick>"))?;
    let taxa = Arc::new(
        TaxonSet::sorted(scan_leaf_names(newick))
            .map_err(|e| FileError::parse(first.0, e.to_string()))?,
    );
    let records = read_prob_table_with_taxa(text, &taxa)?;
    Ok((taxa, records))
}

/// Builds a target distribution from a probability table: the raw sum must
/// be within `sum_tol` of one, then the table is normalized exactly.
pub fn target_from_table(
    records: Vec<(ParsedTree, f64)>,
    sum_tol: f64,
) -> Result<DiscreteDistribution, FileError> {
    let sum: f64 = records.iter().map(|(_, p)| p).sum();
    if (sum - 1.0).abs() > sum_tol {
        return Err(FileError::Validation(format!(
            "target probabilities sum to {sum}, expected 1 within {sum_tol}"
        )));
    }
    let mut trees = Vec::with_capacity(records.len());
    let mut probs = Vec::with_capacity(records.len());
    for (t, p) in records {
        trees.push(
            t.into_unrooted()
                .map_err(|e| FileError::Validation(e.to_string()))?,
        );
        probs.push(p);
    }
    let space = TreeSpace::from_trees(trees).map_err(|e| FileError::Validation(e.to_string()))?;
    DiscreteDistribution::from_weights(space, probs)
        .map_err(|e| FileError::Validation(e.to_string()))
}

fn srf_from_table(
    records: Vec<(ParsedTree, f64)>,
    taxa: Arc<TaxonSet>,
) -> Result<SrfParams, FileError> {
    let sum: f64 = records.iter().map(|(_, p)| p).sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(FileError::Validation(format!(
            "tree probabilities sum to {sum}, expected 1 within 1e-6"
        )));
    }
    let mut probs = BTreeMap::new();
    for (t, p) in records {
        let u = t
            .into_unrooted()
            .map_err(|e| FileError::Validation(e.to_string()))?;
        if probs.insert(u.tree_id(), p / sum).is_some() {
            return Err(FileError::Validation("duplicate tree in table".into()));
        }
    }
    SrfParams::new(taxa, probs, 1e-9).map_err(|e| FileError::Validation(e.to_string()))
}

/// Loads any estimate file, detecting the format from the first line:
/// `sbn-params v1`, `ccd-params v1`, or a headerless probability table
/// (treated as an SRF estimate).
pub fn load_model(text: &str) -> Result<FittedModel, FileError> {
    let Some((_, first)) = content_lines(text).next() else {
        return Err(FileError::Validation("empty estimate file".into()));
    };
    if first == SBN_HEADER {
        return Ok(FittedModel::Sbn(parse_sbn_params(text)?));
    }
    if first == CCD_HEADER {
        return Ok(FittedModel::Ccd(parse_ccd_params(text)?));
    }
    let (taxa, records) = read_prob_table(text)?;
    Ok(FittedModel::Srf(srf_from_table(records, taxa)?))
}

/// Serializes any fitted model in its native format.
pub fn write_model(model: &FittedModel) -> String {
    match model {
        FittedModel::Sbn(p) => write_sbn_params(p),
        FittedModel::Ccd(p) => write_ccd_params(p),
        FittedModel::Srf(p) => write_srf(p),
    }
}
