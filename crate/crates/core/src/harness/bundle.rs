//! CSV ingestion into a validated in-memory bundle, and the reverse export.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::config::{ClassifierEntry, RunConfig};
use crate::error::{Error, Result};
use crate::estimator::{ProbabilityTable, ValidationPool};
use crate::metrics::{Embeddings, MinMaxNormalizer};
use crate::portfolio::{ClassifierProfile, LabeledPoint};
use crate::rng::substream;
use crate::simulator::{softmax, softmax_predict, SyntheticClassifier};

/// Tolerance on probability rows read from disk.
pub const INGEST_PROBABILITY_TOLERANCE: f64 = 1e-6;

/// Everything a run needs, rows aligned across fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub ids: Vec<String>,
    /// Embeddings as read.
    pub embeddings: Embeddings,
    /// Embeddings min-max scaled per dimension with constants fitted on the
    /// pool, clamped to `[0, 1]`. All distances are taken on these.
    pub features: Embeddings,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub outputs: Vec<ProbabilityTable>,
    pub profiles: Vec<ClassifierProfile>,
    /// Indices of labelled pool points used by the estimator.
    pub pool: Vec<usize>,
    /// Indices of the query points that get assigned.
    pub queries: Vec<usize>,
}

impl Bundle {
    /// The labelled pool restricted to `indices`.
    pub fn validation_pool(&self, indices: &[usize]) -> Result<ValidationPool> {
        ValidationPool::new(
            indices.iter().map(|&i| self.ids[i].clone()).collect(),
            self.features.select(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.classes,
            self.outputs.iter().map(|t| t.select(indices)).collect(),
        )
    }

    pub fn query_ids(&self) -> Vec<String> {
        self.queries.iter().map(|&i| self.ids[i].clone()).collect()
    }

    pub fn query_embeddings(&self) -> Embeddings {
        self.features.select(&self.queries)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.profiles.iter().map(|p| p.cost).collect()
    }
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Rows of a headed CSV file with its 1-based line numbers.
struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| schema(path, 1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            schema(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        rows.push((line, record.iter().map(str::to_owned).collect()));
    }
    Ok(Table {
        path: path.to_path_buf(),
        header,
        rows,
    })
}

/// Checks `id,<prefix>0,<prefix>1,...` and returns the column count after `id`.
fn numbered_header(table: &Table, prefix: &str) -> Result<usize> {
    let h = &table.header;
    let ok = h.first().map(String::as_str) == Some("id")
        && h.len() > 1
        && h[1..]
            .iter()
            .enumerate()
            .all(|(k, name)| *name == format!("{prefix}{k}"));
    if !ok {
        return Err(schema(
            &table.path,
            1,
            format!(
                "expected header id,{prefix}0,{prefix}1,..., found {}",
                h.join(",")
            ),
        ));
    }
    Ok(h.len() - 1)
}

fn parse_floats(table: &Table, line: usize, fields: &[String]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| schema(&table.path, line, format!("not a finite number: '{f}'")))
        })
        .collect()
}

/// Rows keyed by id, rejecting duplicates.
fn keyed_rows(table: &Table) -> Result<HashMap<&str, (usize, &[String])>> {
    let mut map = HashMap::with_capacity(table.rows.len());
    for (line, row) in &table.rows {
        if map.insert(row[0].as_str(), (*line, &row[1..])).is_some() {
            return Err(schema(
                &table.path,
                *line,
                format!("duplicate id '{}'", row[0]),
            ));
        }
    }
    Ok(map)
}

fn read_embeddings(path: &Path) -> Result<(Vec<String>, Embeddings)> {
    let table = read_table(path)?;
    let dim = numbered_header(&table, "e")?;
    let mut ids = Vec::with_capacity(table.rows.len());
    let mut emb = Embeddings::new(dim);
    let mut seen = HashMap::new();
    for (line, row) in &table.rows {
        if seen.insert(row[0].clone(), *line).is_some() {
            return Err(schema(path, *line, format!("duplicate id '{}'", row[0])));
        }
        emb.push(&parse_floats(&table, *line, &row[1..])?)?;
        ids.push(row[0].clone());
    }
    if ids.is_empty() {
        return Err(schema(path, 1, "no rows"));
    }
    Ok((ids, emb))
}

fn read_labels(path: &Path, ids: &[String]) -> Result<Vec<usize>> {
    let table = read_table(path)?;
    if table.header != ["id", "label"] {
        return Err(schema(
            path,
            1,
            format!("expected header id,label, found {}", table.header.join(",")),
        ));
    }
    let rows = keyed_rows(&table)?;
    if rows.len() != ids.len() {
        return Err(schema(
            path,
            1,
            format!("{} labels for {} embedded points", rows.len(), ids.len()),
        ));
    }
    ids.iter()
        .map(|id| {
            let (line, fields) = rows
                .get(id.as_str())
                .ok_or_else(|| schema(path, 1, format!("no label for id '{id}'")))?;
            fields[0].parse::<usize>().map_err(|_| {
                schema(
                    path,
                    *line,
                    format!("label must be a non-negative integer, got '{}'", fields[0]),
                )
            })
        })
        .collect()
}

/// Stored outputs of one classifier, aligned with `ids`.
fn read_outputs(entry: &ClassifierEntry, ids: &[String], tau: f64) -> Result<ProbabilityTable> {
    let path = &entry.outputs_path;
    if !path.exists() {
        return Err(Error::MissingClassifierFile {
            name: entry.name.clone(),
            path: path.clone(),
        });
    }
    let logits = path
        .file_name()
        .and_then(|f| f.to_str())
        .is_some_and(|f| f.starts_with("logits_"));
    let table = read_table(path)?;
    let classes = numbered_header(&table, if logits { "z" } else { "p" })?;
    let rows = keyed_rows(&table)?;
    if rows.len() != ids.len() {
        return Err(schema(
            path,
            1,
            format!("{} rows for {} embedded points", rows.len(), ids.len()),
        ));
    }

    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let (line, fields) = rows
            .get(id.as_str())
            .ok_or_else(|| schema(path, 1, format!("no row for id '{id}'")))?;
        let values = parse_floats(&table, *line, fields)?;
        if logits {
            out.push(softmax(&values, tau)?);
            continue;
        }
        let row = line - 1;
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(schema(
                path,
                *line,
                format!("row {row}: probability {v} outside [0, 1]"),
            ));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > INGEST_PROBABILITY_TOLERANCE {
            return Err(schema(
                path,
                *line,
                format!("row {row}: probabilities sum to {total}"),
            ));
        }
        out.push(values);
    }
    ProbabilityTable::from_rows(&out, classes, INGEST_PROBABILITY_TOLERANCE)
}

fn read_splits(path: &Path, ids: &[String]) -> Result<(Vec<usize>, Vec<usize>)> {
    let table = read_table(path)?;
    if table.header != ["id", "split"] {
        return Err(schema(
            path,
            1,
            format!("expected header id,split, found {}", table.header.join(",")),
        ));
    }
    let rows = keyed_rows(&table)?;
    let (mut pool, mut queries) = (Vec::new(), Vec::new());
    for (i, id) in ids.iter().enumerate() {
        let (line, fields) = rows
            .get(id.as_str())
            .ok_or_else(|| schema(path, 1, format!("no split for id '{id}'")))?;
        match fields[0].as_str() {
            "pool" => pool.push(i),
            "query" => queries.push(i),
            other => {
                return Err(schema(
                    path,
                    *line,
                    format!("split must be pool or query, got '{other}'"),
                ))
            }
        }
    }
    Ok((pool, queries))
}

/// Seeded split of `n` points; both parts keep file order.
fn random_split(n: usize, query_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "splits", 0));
    let q = ((n as f64 * query_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut queries = order[..q].to_vec();
    let mut pool = order[q..].to_vec();
    queries.sort_unstable();
    pool.sort_unstable();
    (pool, queries)
}

/// Reads and validates every file referenced by `config`.
pub fn ingest(config: &RunConfig) -> Result<Bundle> {
    let (ids, embeddings) = read_embeddings(&config.embeddings_path)?;
    let labels = read_labels(&config.labels_path, &ids)?;
    let outputs = config
        .classifiers
        .iter()
        .map(|c| read_outputs(c, &ids, config.tau))
        .collect::<Result<Vec<_>>>()?;
    let classes = outputs[0].classes();
    for (c, t) in config.classifiers.iter().zip(&outputs) {
        if t.classes() != classes {
            return Err(Error::InvalidInput(format!(
                "classifier '{}' has {} classes, expected {classes}",
                c.name,
                t.classes()
            )));
        }
    }
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(schema(
            &config.labels_path,
            0,
            format!(
                "label {l} of id '{}' is not below the class count {classes}",
                ids[i]
            ),
        ));
    }
    let profiles = config
        .classifiers
        .iter()
        .enumerate()
        .map(|(i, c)| ClassifierProfile::new(i, c.name.clone(), c.cost))
        .collect::<Result<Vec<_>>>()?;

    let (pool, queries) = match &config.splits_path {
        Some(p) => read_splits(p, &ids)?,
        None => random_split(ids.len(), config.query_fraction, config.seed),
    };
    if pool.is_empty() || queries.is_empty() {
        return Err(Error::InvalidInput(format!(
            "need both pool and query points, got {} and {}",
            pool.len(),
            queries.len()
        )));
    }
    let features = MinMaxNormalizer::fit(&embeddings.select(&pool))?.apply(&embeddings)?;
    Ok(Bundle {
        ids,
        embeddings,
        features,
        labels,
        classes,
        outputs,
        profiles,
        pool,
        queries,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `embeddings.csv`, `labels.csv` and `splits.csv` for `pool` and
/// `queries`, plus `outputs_<name>.csv` per classifier. Floats are written in
/// shortest round-trip form, so re-ingesting reproduces them exactly.
pub fn export_synthetic(
    dir: &Path,
    pool: &[LabeledPoint],
    queries: &[LabeledPoint],
    classifiers: &[SyntheticClassifier],
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let all: Vec<(&LabeledPoint, &str)> = pool
        .iter()
        .map(|p| (p, "pool"))
        .chain(queries.iter().map(|p| (p, "query")))
        .collect();
    let dim = all.first().map_or(0, |(p, _)| p.embedding.len());

    let path = dir.join("embeddings.csv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    write!(w, "id").map_err(io)?;
    for k in 0..dim {
        write!(w, ",e{k}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (p, _) in &all {
        write!(w, "{}", p.id).map_err(io)?;
        for v in &p.embedding {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    finish(w, &path)?;

    let path = dir.join("labels.csv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "id,label").map_err(io)?;
    for (p, _) in &all {
        writeln!(w, "{},{}", p.id, p.label).map_err(io)?;
    }
    finish(w, &path)?;

    let path = dir.join("splits.csv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "id,split").map_err(io)?;
    for (p, split) in &all {
        writeln!(w, "{},{split}", p.id).map_err(io)?;
    }
    finish(w, &path)?;

    for c in classifiers {
        let path = dir.join(format!("outputs_{}.csv", c.name));
        let mut w = create(&path)?;
        let io = |e| Error::io(&path, e);
        write!(w, "id").map_err(io)?;
        for k in 0..c.prototypes.len() {
            write!(w, ",p{k}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
        for (p, _) in &all {
            write!(w, "{}", p.id).map_err(io)?;
            for v in softmax_predict(c, &p.embedding)? {
                write!(w, ",{v}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        finish(w, &path)?;
    }
    Ok(())
}

/// Writes `config` as pretty JSON.
pub fn write_config(path: &Path, config: &RunConfig) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, config)?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    finish(w, path)
}
