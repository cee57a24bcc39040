use std::path::Path;

use serde::Serialize;

use super::record::{Branch, Status};
use super::run::{read_records, to_json_bytes};
use crate::analysis::{correlation_matrix, fleiss_kappa, human_scores, read_annotations, CorrelationMatrix};
use crate::metrics::Metric;

pub const CORRELATIONS: &str = "correlations.csv";
pub const CORRELATIONS_TEXT: &str = "correlations.txt";
pub const ANALYSIS: &str = "analysis.json";
pub const HUMAN: &str = "human";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HumanRho {
    pub metric: String,
    pub rho: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeOutcome {
    pub branch: Branch,
    pub matrix: CorrelationMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rho_vs_human: Vec<HumanRho>,
    pub notes: Vec<String>,
}

/// Correlations between every metric column of `branch` (plus a human
/// column when annotations are given), Fleiss' kappa and per-metric rho
/// against the human scores. Writes the results into the run directory.
pub fn analyze(dir: &Path, annotations: Option<&Path>, branch: Branch) -> anyhow::Result<AnalyzeOutcome> {
    let records = read_records(dir)?;
    let rows: Vec<_> = records
        .iter()
        .filter(|r| r.status == Status::Ok)
        .filter_map(|r| Some((r.question_id.as_str(), &r.branch(branch)?.report)))
        .collect();
    let mut columns: Vec<(String, Vec<Option<f64>>)> = Metric::ALL
        .into_iter()
        .map(|m| (m.name().to_string(), rows.iter().map(|(_, rep)| rep.get(m)).collect::<Vec<_>>()))
        .filter(|(_, v)| v.iter().any(Option::is_some))
        .collect();

    let mut notes = Vec::new();
    let mut kappa = None;
    if let Some(path) = annotations {
        let labels = read_annotations(path)?;
        match fleiss_kappa(&labels) {
            Ok(k) => kappa = Some(k),
            Err(e) => notes.push(format!("fleiss kappa: {e}")),
        }
        let human = human_scores(&labels);
        columns.push((HUMAN.to_string(), rows.iter().map(|(q, _)| human.get(*q).copied()).collect()));
    }

    let matrix = correlation_matrix(&columns);
    for (a, name_a) in matrix.names.iter().enumerate() {
        for (b, name_b) in matrix.names.iter().enumerate().skip(a + 1) {
            if matrix.rho[a][b].is_none() {
                notes.push(format!(
                    "rho({name_a}, {name_b}) undefined over {} rows (constant column or fewer than 3 rows)",
                    matrix.n[a][b]
                ));
            }
        }
    }
    let rho_vs_human = match matrix.names.iter().position(|n| n == HUMAN) {
        Some(h) => matrix
            .names
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != h)
            .map(|(i, name)| HumanRho {
                metric: name.clone(),
                rho: matrix.rho[i][h],
                n: matrix.n[i][h],
            })
            .collect(),
        None => Vec::new(),
    };
    let outcome = AnalyzeOutcome {
        branch,
        matrix,
        kappa,
        rho_vs_human,
        notes,
    };
    std::fs::write(dir.join(CORRELATIONS), outcome.matrix.to_csv())?;
    std::fs::write(dir.join(CORRELATIONS_TEXT), outcome.matrix.heat_table())?;
    std::fs::write(dir.join(ANALYSIS), to_json_bytes(&outcome))?;
    Ok(outcome)
}
