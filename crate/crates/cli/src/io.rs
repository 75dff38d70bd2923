//! Headered CSV formats for matrices, pairs, sparse priors and labels.
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces every value exactly.

use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sphalign::model::{Channel, LabeledPair, PriorMatrix, RelationalPairSet};

use crate::error::{read_failed, write_failed, CliError, CliResult};

fn writer(path: &Path) -> CliResult<csv::Writer<File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| write_failed(path, e))
}

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| read_failed(path, e))
}

/// Writes rows of string fields under a header.
pub fn write_rows<I>(path: &Path, header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| write_failed(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| write_failed(path, e))?;
    }
    w.flush().map_err(|e| write_failed(path, e))
}

/// Reads every record as strings, checking the header; errors carry line numbers.
fn read_rows(path: &Path, expect: &dyn Fn(&csv::StringRecord) -> Result<(), String>) -> CliResult<Vec<(u64, Vec<String>)>> {
    let mut r = reader(path)?;
    let header = r.headers().map_err(|e| read_failed(path, e))?.clone();
    expect(&header).map_err(|m| read_failed(path, format!("line 1: {m}")))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| read_failed(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(read_failed(path, format!("line {line}: expected {} fields, found {}", header.len(), rec.len())));
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(path: &Path, line: u64, field: &str, what: &str) -> CliResult<T> {
    field
        .trim()
        .parse()
        .map_err(|_| read_failed(path, format!("line {line}: cannot parse {what} from {field:?}")))
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn dim_header(id: &str, cols: usize) -> Vec<String> {
    std::iter::once(id.to_string()).chain((0..cols).map(|c| format!("dim_{c}"))).collect()
}

/// Writes `id, dim_0, ..., dim_{c-1}` rows.
pub fn write_matrix(path: &Path, id: &str, ids: &[usize], m: &DMatrix<f64>) -> CliResult<()> {
    assert_eq!(ids.len(), m.nrows(), "one id per row");
    let rows = (0..m.nrows()).map(|i| {
        std::iter::once(ids[i].to_string())
            .chain(m.row(i).iter().map(|&x| fmt_f64(x)))
            .collect()
    });
    write_rows(path, &dim_header(id, m.ncols()), rows)
}

/// Reads a matrix written by [`write_matrix`], returning the ids and rows in
/// file order.
pub fn read_matrix(path: &Path, id: &str) -> CliResult<(Vec<usize>, DMatrix<f64>)> {
    let mut cols = 0;
    let rows = read_rows(path, &|h| {
        if h.get(0) != Some(id) {
            return Err(format!("first column must be {id}"));
        }
        for (c, name) in h.iter().skip(1).enumerate() {
            if name != format!("dim_{c}") {
                return Err(format!("column {} must be dim_{c}, found {name}", c + 1));
            }
        }
        Ok(())
    })?;
    if let Some((_, first)) = rows.first() {
        cols = first.len() - 1;
    }
    let mut ids = Vec::with_capacity(rows.len());
    let mut m = DMatrix::zeros(rows.len(), cols);
    for (r, (line, fields)) in rows.iter().enumerate() {
        ids.push(parse(path, *line, &fields[0], id)?);
        for c in 0..cols {
            m[(r, c)] = parse(path, *line, &fields[c + 1], "a number")?;
        }
    }
    if rows.is_empty() {
        let h = reader(path)?.headers().map_err(|e| read_failed(path, e))?.len();
        m = DMatrix::zeros(0, h.saturating_sub(1));
    }
    Ok((ids, m))
}

/// Reads a matrix whose ids must be exactly `0..rows`, in order.
pub fn read_dense(path: &Path, id: &str) -> CliResult<DMatrix<f64>> {
    let (ids, m) = read_matrix(path, id)?;
    if let Some(bad) = ids.iter().enumerate().position(|(k, &i)| k != i) {
        return Err(read_failed(path, format!("row {} has {id} {}, expected {bad}", bad + 1, ids[bad])));
    }
    Ok(m)
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn check_header(names: &'static [&'static str]) -> impl Fn(&csv::StringRecord) -> Result<(), String> {
    move |h| {
        if h.iter().eq(names.iter().copied()) {
            Ok(())
        } else {
            Err(format!("header must be {}", names.join(",")))
        }
    }
}

const PAIR_HEADER: &[&str] = &["channel", "i", "j", "label"];

/// Writes similarity pairs, then relatedness pairs.
pub fn write_pairs(path: &Path, pairs: &RelationalPairSet) -> CliResult<()> {
    let rows = [Channel::Similarity, Channel::Relatedness].into_iter().flat_map(|c| {
        pairs.channel(c).iter().map(move |p| {
            vec![c.code().to_string(), p.i.to_string(), p.j.to_string(), u8::from(p.label).to_string()]
        })
    });
    write_rows(path, &header(PAIR_HEADER), rows)
}

pub fn read_pairs(path: &Path, n: usize) -> CliResult<RelationalPairSet> {
    let rows = read_rows(path, &check_header(PAIR_HEADER))?;
    let (mut sim, mut rel) = (Vec::new(), Vec::new());
    for (line, f) in rows {
        let i: usize = parse(path, line, &f[1], "i")?;
        let j: usize = parse(path, line, &f[2], "j")?;
        let label = match f[3].trim() {
            "1" => true,
            "0" => false,
            other => return Err(read_failed(path, format!("line {line}: label must be 0 or 1, found {other:?}"))),
        };
        if i == j || i >= n || j >= n {
            return Err(read_failed(path, format!("line {line}: pair ({i}, {j}) is invalid for n = {n}")));
        }
        let pair = LabeledPair::new(i, j, label);
        match f[0].trim() {
            "S" => sim.push(pair),
            "R" => rel.push(pair),
            other => return Err(read_failed(path, format!("line {line}: channel must be S or R, found {other:?}"))),
        }
    }
    RelationalPairSet::new(n, sim, rel).map_err(|e| read_failed(path, e))
}

const PRIOR_HEADER: &[&str] = &["feature_id", "cluster_id", "prob"];

/// Writes the nonzero entries of a prior or responsibility matrix.
pub fn write_priors(path: &Path, rows: &[Vec<(usize, f64)>]) -> CliResult<()> {
    let out = rows.iter().enumerate().flat_map(|(i, row)| {
        row.iter().map(move |&(c, p)| vec![i.to_string(), c.to_string(), fmt_f64(p)])
    });
    write_rows(path, &header(PRIOR_HEADER), out)
}

pub fn prior_rows(priors: &PriorMatrix<f64>) -> Vec<Vec<(usize, f64)>> {
    (0..priors.n()).map(|i| priors.support(i).to_vec()).collect()
}

/// Reads sparse triplets into per-feature rows, in file order.
pub fn read_triplets(path: &Path, n: usize, k: usize) -> CliResult<Vec<Vec<(usize, f64)>>> {
    let rows = read_rows(path, &check_header(PRIOR_HEADER))?;
    let mut support = vec![Vec::new(); n];
    for (line, f) in rows {
        let i: usize = parse(path, line, &f[0], "feature_id")?;
        let c: usize = parse(path, line, &f[1], "cluster_id")?;
        let p: f64 = parse(path, line, &f[2], "prob")?;
        if i >= n || c >= k {
            return Err(read_failed(path, format!("line {line}: entry ({i}, {c}) outside {n} x {k}")));
        }
        support[i].push((c, p));
    }
    Ok(support)
}

pub fn read_priors(path: &Path, n: usize, k: usize) -> CliResult<PriorMatrix<f64>> {
    PriorMatrix::new(k, read_triplets(path, n, k)?).map_err(|e| read_failed(path, e))
}

const LABEL_HEADER: &[&str] = &["feature_id", "cluster_id"];

pub fn write_labels(path: &Path, labels: &[usize]) -> CliResult<()> {
    let rows = labels.iter().enumerate().map(|(i, c)| vec![i.to_string(), c.to_string()]);
    write_rows(path, &header(LABEL_HEADER), rows)
}

/// Reads labels for features `0..n`, each listed exactly once.
pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let rows = read_rows(path, &check_header(LABEL_HEADER))?;
    let mut labels = vec![None; rows.len()];
    for (line, f) in rows {
        let i: usize = parse(path, line, &f[0], "feature_id")?;
        let c: usize = parse(path, line, &f[1], "cluster_id")?;
        match labels.get_mut(i) {
            Some(slot @ None) => *slot = Some(c),
            Some(Some(_)) => return Err(read_failed(path, format!("line {line}: feature {i} listed twice"))),
            None => return Err(read_failed(path, format!("line {line}: feature {i} out of range"))),
        }
    }
    Ok(labels.into_iter().map(|c| c.expect("every slot filled")).collect())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| write_failed(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| read_failed(path, e))?;
    serde_json::from_str(&text).map_err(|e| read_failed(path, e))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| write_failed(path, e))
}
