//! Ask-to-Choose: show the model its own candidate answers as a numbered
//! slate and keep the one it picks.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backend::{CompletionBackend, CompletionRequest, Role, Transcript};
use crate::generation::{paraphrase_once, VariationConfig};
use crate::metrics::{AnswerRecord, AnswerSet, MetricsError, Provenance};
use crate::prompts;
use crate::text::{contains_token_run, normalize_answer, tokenize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlateOption {
    pub text: String,
    /// Indices into the source `AnswerSet` whose answers normalize to `text`.
    pub source_slots: Vec<usize>,
}

/// Distinct candidates in first-occurrence order. The "Don't know" option is
/// implicit and always numbered last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionSlate {
    pub question: String,
    options: Vec<SlateOption>,
}

impl OptionSlate {
    pub fn new(question: impl Into<String>, answers: &AnswerSet) -> Result<Self, MetricsError> {
        let texts: Vec<&str> = answers.answers().iter().map(|a| a.text.as_str()).collect();
        Self::from_texts(question, &texts)
    }

    pub fn from_texts<S: AsRef<str>>(question: impl Into<String>, texts: &[S]) -> Result<Self, MetricsError> {
        let mut options: Vec<SlateOption> = Vec::new();
        let mut keys: Vec<String> = Vec::new();
        for (slot, text) in texts.iter().enumerate() {
            let text = text.as_ref();
            let key = normalize_answer(text);
            if key.is_empty() {
                return Err(MetricsError::EmptyAnswer);
            }
            match keys.iter().position(|k| *k == key) {
                Some(i) => options[i].source_slots.push(slot),
                None => {
                    keys.push(key);
                    options.push(SlateOption {
                        text: text.trim().to_string(),
                        source_slots: vec![slot],
                    });
                }
            }
        }
        if options.is_empty() {
            return Err(MetricsError::EmptyAnswer);
        }
        Ok(Self {
            question: question.into(),
            options,
        })
    }

    pub fn options(&self) -> &[SlateOption] {
        &self.options
    }

    /// 1-based number of the "Don't know" option.
    pub fn dont_know_number(&self) -> usize {
        self.options.len() + 1
    }

    pub fn option_text(&self, number: usize) -> Option<&str> {
        number
            .checked_sub(1)
            .and_then(|i| self.options.get(i))
            .map(|o| o.text.as_str())
    }
}

pub fn render_rank_prompt(slate: &OptionSlate) -> String {
    let texts: Vec<&str> = slate.options.iter().map(|o| o.text.as_str()).collect();
    prompts::rank_prompt(&slate.question, &texts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Choice {
    /// 1-based option number on the slate.
    Option { number: usize },
    DontKnow,
    ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct A2CSelection {
    /// Option text when the choice is a real option.
    pub chosen_text: Option<String>,
    pub choice: Choice,
    pub raw_completion: String,
}

fn leading_option() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^[^a-z0-9]*(?:option\s*)?[{(\[]?\s*(\d+)\b").unwrap())
}

fn dont_know_phrase() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:don'?t|do not|dont)\s+know\b").unwrap())
}

pub fn parse_selection(completion: &str, slate: &OptionSlate) -> A2CSelection {
    let pick = |choice: Choice| A2CSelection {
        chosen_text: match choice {
            Choice::Option { number } => slate.option_text(number).map(str::to_string),
            _ => None,
        },
        choice,
        raw_completion: completion.to_string(),
    };
    let trimmed = completion.trim_start();
    if let Some(number) = leading_option()
        .captures(trimmed)
        .and_then(|c| c[1].parse::<usize>().ok())
    {
        if number == slate.dont_know_number() {
            return pick(Choice::DontKnow);
        }
        if slate.option_text(number).is_some() {
            return pick(Choice::Option { number });
        }
    }
    let tokens = tokenize(completion);
    let mut best: Option<(usize, usize)> = None;
    for (i, option) in slate.options.iter().enumerate() {
        let needle = tokenize(&option.text);
        if contains_token_run(&tokens, &needle) && best.is_none_or(|(_, len)| needle.len() > len) {
            best = Some((i + 1, needle.len()));
        }
    }
    if let Some((number, _)) = best {
        return pick(Choice::Option { number });
    }
    if dont_know_phrase().is_match(completion) {
        return pick(Choice::DontKnow);
    }
    pick(Choice::ParseFailure)
}

/// What happened at one A2C slot; stored on the resulting answer record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSelection {
    /// Question text shown above the slate.
    pub ranked_with: String,
    /// `None` when the call itself failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice: Option<Choice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_completion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The slot kept its pre-selection answer.
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct A2CConfig {
    pub enabled: bool,
    /// Backend used to re-paraphrase the question in the context branch.
    pub reparaphrase_role: Role,
    pub rank_max_tokens: u32,
}

impl Default for A2CConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            reparaphrase_role: Role::Main,
            rank_max_tokens: 64,
        }
    }
}

impl A2CConfig {
    pub fn validate(&self) -> Result<(), String> {
        match self.reparaphrase_role {
            Role::Main | Role::Aux => Ok(()),
            other => Err(format!("reparaphrase_role must be main or aux, got {}", other.name())),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts {
    pub selected: usize,
    pub dont_know: usize,
    pub parse_failures: usize,
    pub backend_errors: usize,
}

impl SelectionCounts {
    fn add(&mut self, s: &SlotSelection) {
        match s.choice {
            Some(Choice::Option { .. }) => self.selected += 1,
            Some(Choice::DontKnow) => self.dont_know += 1,
            Some(Choice::ParseFailure) => self.parse_failures += 1,
            None => self.backend_errors += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2COutcome {
    pub context: AnswerSet,
    pub temperature: AnswerSet,
    pub context_counts: SelectionCounts,
    pub temperature_counts: SelectionCounts,
}

struct Ranking<'a> {
    backend: &'a dyn CompletionBackend,
    seed: Option<u64>,
    max_tokens: u32,
}

impl Ranking<'_> {
    fn select(
        &self,
        slate: &OptionSlate,
        original: &AnswerRecord,
        temperature: f64,
        top_p: f64,
        transcript: &mut Transcript,
    ) -> AnswerRecord {
        let req = CompletionRequest::new(render_rank_prompt(slate))
            .temperature(temperature)
            .top_p(top_p)
            .max_tokens(self.max_tokens)
            .seed(self.seed.filter(|_| self.backend.supports_seed()));
        let purpose = format!("rank {}", original.provenance.label());
        let selection = match transcript.call(Role::Main, purpose, self.backend, req) {
            Ok(c) => {
                let parsed = parse_selection(&c.text, slate);
                (parsed.chosen_text, SlotSelection {
                    ranked_with: slate.question.clone(),
                    choice: Some(parsed.choice),
                    raw_completion: Some(parsed.raw_completion),
                    error: None,
                    fell_back: false,
                })
            }
            Err(e) => (None, SlotSelection {
                ranked_with: slate.question.clone(),
                choice: None,
                raw_completion: None,
                error: Some(e.to_string()),
                fell_back: false,
            }),
        };
        finish_slot(original, selection.0, selection.1)
    }
}

fn finish_slot(original: &AnswerRecord, chosen: Option<String>, mut selection: SlotSelection) -> AnswerRecord {
    selection.fell_back = chosen.is_none();
    let mut record = AnswerRecord::new(chosen.unwrap_or_else(|| original.text.clone()), original.provenance.clone());
    record.asked = Some(selection.ranked_with.clone());
    record.selection = Some(selection);
    record
}

/// Runs both selection loops over the pre-selection answer sets.
///
/// Context slots re-paraphrase the question with their own rule and rank at
/// temperature 0; temperature slots rank with the original question at their
/// own temperature. Every slot yields exactly one answer.
#[allow(clippy::too_many_arguments)]
pub fn run_a2c(
    question: &str,
    y_c: &AnswerSet,
    y_t: &AnswerSet,
    variation: &VariationConfig,
    cfg: &A2CConfig,
    main: &dyn CompletionBackend,
    aux: &dyn CompletionBackend,
    transcript: &mut Transcript,
) -> Result<A2COutcome, MetricsError> {
    let ranking = Ranking {
        backend: main,
        seed: variation.seed,
        max_tokens: cfg.rank_max_tokens,
    };
    let (paraphraser, role) = match cfg.reparaphrase_role {
        Role::Aux => (aux, Role::Aux),
        _ => (main, Role::Main),
    };

    let mut context = AnswerSet::new(y_c.question_id.clone(), y_c.source_question.clone());
    let mut context_counts = SelectionCounts::default();
    for original in y_c.answers() {
        let record = match &original.provenance {
            Provenance::ContextRule { rule } => {
                match paraphrase_once(question, *rule, variation, paraphraser, role, transcript) {
                    Ok(p) => {
                        let slate = OptionSlate::new(p.text, y_c)?;
                        ranking.select(&slate, original, 0.0, 1.0, transcript)
                    }
                    Err(f) => finish_slot(original, None, SlotSelection {
                        ranked_with: question.to_string(),
                        choice: None,
                        raw_completion: None,
                        error: Some(f.error),
                        fell_back: true,
                    }),
                }
            }
            Provenance::Temperature { .. } => {
                let slate = OptionSlate::new(question, y_c)?;
                ranking.select(&slate, original, 0.0, 1.0, transcript)
            }
        };
        context_counts.add(record.selection.as_ref().expect("selection set"));
        context.push(record)?;
    }

    let mut temperature = AnswerSet::new(y_t.question_id.clone(), y_t.source_question.clone());
    let mut temperature_counts = SelectionCounts::default();
    let slate = OptionSlate::new(question, y_t)?;
    for original in y_t.answers() {
        let t = match original.provenance {
            Provenance::Temperature { value } => value,
            Provenance::ContextRule { .. } => variation.answer_temperature,
        };
        let record = ranking.select(&slate, original, t, variation.top_p, transcript);
        temperature_counts.add(record.selection.as_ref().expect("selection set"));
        temperature.push(record)?;
    }

    Ok(A2COutcome {
        context,
        temperature,
        context_counts,
        temperature_counts,
    })
}
