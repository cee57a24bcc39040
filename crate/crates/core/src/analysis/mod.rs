//! Agreement and correlation statistics over run outputs and human labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Metric, MetricReport};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("item {item} has {got} ratings, expected {expected}")]
    UnbalancedRaters { item: String, expected: usize, got: usize },
    #[error("need at least 2 rated items, got {0}")]
    TooFewItems(usize),
    #[error("need at least 2 raters per item, got {0}")]
    TooFewRaters(usize),
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 observations, got {0}")]
    TooShort(usize),
    #[error("input is constant; rank correlation undefined")]
    DegenerateInput,
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("runs do not cover the same questions: {0}")]
    MismatchedRuns(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Consistent,
    Inconsistent,
}

/// One annotator's label for one answer pair. `pair_i < pair_j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub question_id: String,
    pub pair_i: usize,
    pub pair_j: usize,
    pub annotator_id: String,
    pub label: Label,
}

impl AnnotationRecord {
    pub fn new(
        question_id: impl Into<String>,
        i: usize,
        j: usize,
        annotator_id: impl Into<String>,
        label: Label,
    ) -> Self {
        Self {
            question_id: question_id.into(),
            pair_i: i.min(j),
            pair_j: i.max(j),
            annotator_id: annotator_id.into(),
            label,
        }
    }

    pub fn item(&self) -> (String, usize, usize) {
        (self.question_id.clone(), self.pair_i, self.pair_j)
    }
}

/// Reads annotations from CSV, or JSONL when the extension is `.jsonl`.
pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, AnalysisError> {
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    if is_jsonl {
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: AnnotationRecord = serde_json::from_str(&line).map_err(|e| AnalysisError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            out.push(canonical(r, n + 1)?);
        }
    } else {
        let mut rdr = csv::Reader::from_reader(file);
        for (n, row) in rdr.deserialize::<AnnotationRecord>().enumerate() {
            let r = row.map_err(|e| AnalysisError::Parse {
                line: n + 2,
                message: e.to_string(),
            })?;
            out.push(canonical(r, n + 2)?);
        }
    }
    Ok(out)
}

fn canonical(r: AnnotationRecord, line: usize) -> Result<AnnotationRecord, AnalysisError> {
    if r.pair_i == r.pair_j {
        return Err(AnalysisError::Parse {
            line,
            message: format!("pair ({}, {}) compares an answer with itself", r.pair_i, r.pair_j),
        });
    }
    Ok(AnnotationRecord::new(r.question_id, r.pair_i, r.pair_j, r.annotator_id, r.label))
}

/// Appends records in the format implied by the extension, writing a CSV
/// header when the file is new.
pub fn append_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<(), AnalysisError> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    if path.extension().is_some_and(|e| e == "jsonl") {
        for r in records {
            writeln!(file, "{}", serde_json::to_string(r).expect("record serializes"))?;
        }
    } else {
        let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        for r in records {
            w.serialize(r).map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Fleiss' kappa over a table of per-item category counts. Every row must sum
/// to the same number of raters.
pub fn fleiss_kappa_table(table: &[Vec<usize>]) -> Result<f64, AnalysisError> {
    if table.len() < 2 {
        return Err(AnalysisError::TooFewItems(table.len()));
    }
    let m: usize = table[0].iter().sum();
    if m < 2 {
        return Err(AnalysisError::TooFewRaters(m));
    }
    let categories = table.iter().map(Vec::len).max().unwrap_or(0);
    let mut totals = vec![0usize; categories];
    let mut p_bar = 0.0;
    for (idx, row) in table.iter().enumerate() {
        let raters: usize = row.iter().sum();
        if raters != m {
            return Err(AnalysisError::UnbalancedRaters {
                item: format!("#{idx}"),
                expected: m,
                got: raters,
            });
        }
        let agree: usize = row.iter().map(|c| c * c).sum::<usize>() - m;
        p_bar += agree as f64 / (m * (m - 1)) as f64;
        for (t, c) in totals.iter_mut().zip(row) {
            *t += c;
        }
    }
    let items = table.len() as f64;
    p_bar /= items;
    let p_e: f64 = totals
        .iter()
        .map(|&t| {
            let p = t as f64 / (items * m as f64);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        // Every rating fell in one category: agreement is perfect and chance
        // agreement is total.
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Fleiss' kappa over annotation records, one item per (question, pair).
/// A repeated (item, annotator) rating keeps the last label.
pub fn fleiss_kappa(records: &[AnnotationRecord]) -> Result<f64, AnalysisError> {
    let mut latest: BTreeMap<((String, usize, usize), &str), Label> = BTreeMap::new();
    for r in records {
        latest.insert((r.item(), r.annotator_id.as_str()), r.label);
    }
    let mut items: BTreeMap<(String, usize, usize), Vec<usize>> = BTreeMap::new();
    for ((item, _), label) in latest {
        let row = items.entry(item).or_insert_with(|| vec![0, 0]);
        row[if label == Label::Consistent { 0 } else { 1 }] += 1;
    }
    let mut expected = None;
    for ((q, i, j), row) in &items {
        let got = row[0] + row[1];
        let want = *expected.get_or_insert(got);
        if got != want {
            return Err(AnalysisError::UnbalancedRaters {
                item: format!("{q} ({i}, {j})"),
                expected: want,
                got,
            });
        }
    }
    fleiss_kappa_table(&items.into_values().collect::<Vec<_>>())
}

/// Per-question human consistency score: the fraction of "consistent"
/// labels over all pairs and annotators.
pub fn human_scores(records: &[AnnotationRecord]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = acc.entry(r.question_id.clone()).or_default();
        e.0 += usize::from(r.label == Label::Consistent);
        e.1 += 1;
    }
    acc.into_iter().map(|(q, (c, n))| (q, c as f64 / n as f64)).collect()
}

/// 1-based ranks, ties sharing the average of the positions they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::DegenerateInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(AnalysisError::TooShort(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// `None` where the pair had too few shared rows or a constant column.
    pub rho: Vec<Vec<Option<f64>>>,
    pub n: Vec<Vec<usize>>,
}

/// Spearman correlations between every pair of columns, deleting rows
/// pairwise where either value is missing.
pub fn correlation_matrix(columns: &[(String, Vec<Option<f64>>)]) -> CorrelationMatrix {
    let k = columns.len();
    let mut rho = vec![vec![None; k]; k];
    let mut n = vec![vec![0; k]; k];
    for a in 0..k {
        for b in a..k {
            let (xs, ys): (Vec<f64>, Vec<f64>) = columns[a]
                .1
                .iter()
                .zip(&columns[b].1)
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .unzip();
            n[a][b] = xs.len();
            n[b][a] = xs.len();
            let r = if a == b { Some(1.0) } else { spearman_rho(&xs, &ys).ok() };
            rho[a][b] = r;
            rho[b][a] = r;
        }
    }
    CorrelationMatrix {
        names: columns.iter().map(|c| c.0.clone()).collect(),
        rho,
        n,
    }
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.rho[i][j]
    }

    /// CSV with a header row of metric names; empty cells are undefined.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (name, row) in self.names.iter().zip(&self.rho) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.map(|x| format!("{x:.6}")).unwrap_or_default()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    /// Fixed-width text table with a shade glyph per cell.
    pub fn heat_table(&self) -> String {
        let width = self.names.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut out = format!("{:width$}", "");
        for name in &self.names {
            let _ = write!(out, " {name:>8}");
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.rho) {
            let _ = write!(out, "{name:width$}");
            for v in row {
                match v {
                    Some(r) => {
                        let _ = write!(out, " {:>6.2} {}", r, shade(*r));
                    }
                    None => out.push_str(&format!(" {:>8}", "-")),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn shade(r: f64) -> char {
    match r.abs() {
        a if a >= 0.8 => '█',
        a if a >= 0.6 => '▓',
        a if a >= 0.4 => '▒',
        a if a >= 0.2 => '░',
        _ => ' ',
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Change {
    Up,
    Down,
    Same,
}

impl Change {
    pub fn arrow(self) -> &'static str {
        match self {
            Change::Up => "↑",
            Change::Down => "↓",
            Change::Same => "=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: Metric,
    pub before: Option<f64>,
    pub after: Option<f64>,
    pub delta: Option<f64>,
    pub change: Option<Change>,
    /// Whether the change moves the metric in its better direction.
    pub improved: Option<bool>,
}

/// Aggregate before/after means per metric, with direction-aware
/// improvement flags.
pub fn compare_runs(before: &[MetricReport], after: &[MetricReport]) -> Result<Vec<ComparisonRow>, AnalysisError> {
    let ids = |rs: &[MetricReport]| rs.iter().map(|r| r.question_id.clone()).collect::<BTreeSet<_>>();
    let (b, a) = (ids(before), ids(after));
    if b != a || before.len() != after.len() {
        let only: Vec<String> = b.symmetric_difference(&a).cloned().collect();
        return Err(AnalysisError::MismatchedRuns(if only.is_empty() {
            format!("{} vs {} reports", before.len(), after.len())
        } else {
            only.join(", ")
        }));
    }
    Ok(Metric::ALL
        .into_iter()
        .map(|metric| {
            let (x, _) = MetricReport::mean_of(before, metric);
            let (y, _) = MetricReport::mean_of(after, metric);
            let delta = x.zip(y).map(|(x, y)| y - x);
            let change = delta.map(|d| {
                if d > 1e-12 {
                    Change::Up
                } else if d < -1e-12 {
                    Change::Down
                } else {
                    Change::Same
                }
            });
            let improved = change.map(|c| match c {
                Change::Up => metric.higher_is_better(),
                Change::Down => !metric.higher_is_better(),
                Change::Same => false,
            });
            ComparisonRow {
                metric,
                before: x,
                after: y,
                delta,
                change,
                improved,
            }
        })
        .collect())
}

pub fn render_comparison(title: &str, rows: &[ComparisonRow]) -> String {
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let mut out = format!("{title}\n{:<14} {:>10} {:>10}  change\n", "metric", "before", "after");
    for r in rows {
        let change = match (r.change, r.delta) {
            (Some(c), Some(d)) => {
                let tag = match r.improved {
                    Some(true) => " better",
                    _ if c == Change::Same => "",
                    _ => " worse",
                };
                format!("{} {:.4}{tag}", c.arrow(), d.abs())
            }
            _ => "-".into(),
        };
        let _ = writeln!(out, "{:<14} {:>10} {:>10}  {change}", r.metric.name(), fmt(r.before), fmt(r.after));
    }
    out
}
