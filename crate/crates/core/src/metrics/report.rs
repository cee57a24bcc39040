use std::fmt;

use serde::{Deserialize, Serialize};

/// Metric columns reported per question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Lex,
    Pp,
    Entail,
    Contra,
    Judge,
    Entropy,
    R1C,
    Ner,
    R1A,
    Bleurt,
    PpGivenAcc,
}

impl Metric {
    pub const ALL: [Metric; 11] = [
        Metric::Lex,
        Metric::Pp,
        Metric::Entail,
        Metric::Contra,
        Metric::Judge,
        Metric::Entropy,
        Metric::R1C,
        Metric::Ner,
        Metric::R1A,
        Metric::Bleurt,
        Metric::PpGivenAcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Lex => "lex",
            Metric::Pp => "pp",
            Metric::Entail => "entail",
            Metric::Contra => "contra",
            Metric::Judge => "judge",
            Metric::Entropy => "entropy",
            Metric::R1C => "r1_c",
            Metric::Ner => "ner",
            Metric::R1A => "r1_a",
            Metric::Bleurt => "bleurt",
            Metric::PpGivenAcc => "pp_given_acc",
        }
    }

    pub fn from_name(name: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Contradiction and entropy fall as consistency rises.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Contra | Metric::Entropy)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Exclusions {
    /// Generations dropped before scoring because they were empty.
    pub empty_answers: usize,
    /// Oracle calls that failed; each counted as score 0.0.
    pub failed_pairs: usize,
    pub unparseable_judgments: usize,
    pub vacuous_ner_pairs: usize,
    /// True when fewer than two answers passed the accuracy cutoff.
    pub conditional_undefined: bool,
}

/// Metric values for one answer set. `None` means not computed (oracle not
/// selected, scorer absent, or conditional consistency undefined).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub question_id: String,
    pub n: usize,
    pub cons_lex: Option<f64>,
    pub cons_pp: Option<f64>,
    pub cons_entail: Option<f64>,
    pub cons_contra: Option<f64>,
    pub cons_judge: Option<f64>,
    pub entropy: Option<f64>,
    pub r1_c: Option<f64>,
    pub ner_overlap: Option<f64>,
    pub r1_a: Option<f64>,
    pub bleurt: Option<f64>,
    pub pp_given_acc: Option<f64>,
    pub exclusions: Exclusions,
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Lex => self.cons_lex,
            Metric::Pp => self.cons_pp,
            Metric::Entail => self.cons_entail,
            Metric::Contra => self.cons_contra,
            Metric::Judge => self.cons_judge,
            Metric::Entropy => self.entropy,
            Metric::R1C => self.r1_c,
            Metric::Ner => self.ner_overlap,
            Metric::R1A => self.r1_a,
            Metric::Bleurt => self.bleurt,
            Metric::PpGivenAcc => self.pp_given_acc,
        }
    }

    /// Unweighted mean of `metric` over the reports that carry it, together
    /// with the number of reports included.
    pub fn mean_of<'a>(
        reports: impl IntoIterator<Item = &'a MetricReport>,
        metric: Metric,
    ) -> (Option<f64>, usize) {
        let values: Vec<f64> = reports.into_iter().filter_map(|r| r.get(metric)).collect();
        if values.is_empty() {
            (None, 0)
        } else {
            (Some(values.iter().sum::<f64>() / values.len() as f64), values.len())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(Metric::from_name(m.name()), Some(m));
        }
        assert!(!Metric::Entropy.higher_is_better());
        assert!(!Metric::Contra.higher_is_better());
        assert!(Metric::R1C.higher_is_better());
    }

    #[test]
    fn mean_skips_missing() {
        let a = MetricReport { cons_lex: Some(1.0), ..Default::default() };
        let b = MetricReport { cons_lex: Some(0.5), ..Default::default() };
        let c = MetricReport::default();
        assert_eq!(MetricReport::mean_of([&a, &b, &c], Metric::Lex), (Some(0.75), 2));
        assert_eq!(MetricReport::mean_of([&c], Metric::Bleurt), (None, 0));
    }
}
