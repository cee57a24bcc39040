//! Answer variations: in-context paraphrasing and cross-temperature sampling.
//!
//! Both modes answer in two steps. The model first answers the (possibly
//! paraphrased) question freely; the descriptive answer is then placed in the
//! few-shot answer template together with the original question to elicit a
//! short answer.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{CompletionBackend, CompletionRequest, Role, Transcript};
use crate::metrics::{AnswerRecord, AnswerSet, Provenance};
use crate::prompts;
use crate::text::{first_line, normalize_answer};

/// The four linguistic paraphrasing techniques of the paraphrase template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ParaphraseRule {
    Synonyms,
    WordForms,
    Structure,
    Conjunctions,
}

impl ParaphraseRule {
    pub const ALL: [ParaphraseRule; 4] = [
        ParaphraseRule::Synonyms,
        ParaphraseRule::WordForms,
        ParaphraseRule::Structure,
        ParaphraseRule::Conjunctions,
    ];

    /// Technique number as it appears in the template (1-4).
    pub fn id(self) -> u8 {
        match self {
            ParaphraseRule::Synonyms => 1,
            ParaphraseRule::WordForms => 2,
            ParaphraseRule::Structure => 3,
            ParaphraseRule::Conjunctions => 4,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.id() == id)
    }

    pub fn name(self) -> &'static str {
        match self {
            ParaphraseRule::Synonyms => "synonyms",
            ParaphraseRule::WordForms => "word forms",
            ParaphraseRule::Structure => "structure",
            ParaphraseRule::Conjunctions => "conjunctions",
        }
    }
}

impl TryFrom<u8> for ParaphraseRule {
    type Error = String;

    fn try_from(id: u8) -> Result<Self, Self::Error> {
        Self::from_id(id).ok_or_else(|| format!("paraphrase rule ids are 1-4, got {id}"))
    }
}

impl From<ParaphraseRule> for u8 {
    fn from(rule: ParaphraseRule) -> u8 {
        rule.id()
    }
}

impl fmt::Display for ParaphraseRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.id(), self.name())
    }
}

/// Decoding settings for both variation modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationConfig {
    pub rules: Vec<ParaphraseRule>,
    pub temperatures: Vec<f64>,
    /// Nucleus mass for every sampled answer.
    pub top_p: f64,
    /// Sampling temperature for answers in the paraphrase branch.
    pub answer_temperature: f64,
    pub paraphrase_temperature: f64,
    pub max_tokens: u32,
    pub short_max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self {
            rules: ParaphraseRule::ALL.to_vec(),
            temperatures: vec![0.2, 0.5, 0.7, 1.0],
            top_p: 0.9,
            answer_temperature: 0.7,
            paraphrase_temperature: 0.7,
            max_tokens: 256,
            short_max_tokens: 32,
            seed: None,
        }
    }
}

impl VariationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.rules.len() < 2 {
            return Err(format!("need at least 2 paraphrase rules, got {}", self.rules.len()));
        }
        for (i, r) in self.rules.iter().enumerate() {
            if self.rules[..i].contains(r) {
                return Err(format!("paraphrase rule {} listed twice", r.id()));
            }
        }
        if self.temperatures.len() < 2 {
            return Err(format!("need at least 2 temperatures, got {}", self.temperatures.len()));
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(format!("temperature {t} must be a finite value >= 0"));
        }
        if let Some(w) = self.temperatures.windows(2).find(|w| w[0] >= w[1]) {
            return Err(format!(
                "temperatures must be strictly increasing without duplicates ({} then {})",
                w[0], w[1]
            ));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p must lie in (0, 1], got {}", self.top_p));
        }
        for (name, t) in [
            ("answer_temperature", self.answer_temperature),
            ("paraphrase_temperature", self.paraphrase_temperature),
        ] {
            if !(t.is_finite() && t >= 0.0) {
                return Err(format!("{name} must be >= 0, got {t}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("only {succeeded} paraphrases succeeded; at least 2 are required")]
    TooFewParaphrases {
        succeeded: usize,
        failures: Vec<SlotFailure>,
    },
    #[error("only {got} usable answers were produced; at least 2 are required")]
    TooFewAnswers {
        got: usize,
        failures: Vec<SlotFailure>,
    },
}

/// A variation slot that could not be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotFailure {
    pub slot: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paraphrase {
    pub rule: ParaphraseRule,
    pub text: String,
    /// Same as the source question after normalization; kept anyway.
    #[serde(default)]
    pub identical_to_source: bool,
    /// The model returned nothing usable; the source question stands in.
    #[serde(default)]
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParaphraseSet {
    pub items: Vec<Paraphrase>,
    pub failures: Vec<SlotFailure>,
}

pub fn render_paraphrase_prompt(question: &str, rule: ParaphraseRule) -> String {
    prompts::paraphrase_prompt(rule.id(), question)
}

pub fn render_answer_prompt(context: &str, question: &str) -> String {
    prompts::answer_prompt(context, question)
}

fn seed_for(backend: &dyn CompletionBackend, seed: Option<u64>) -> Option<u64> {
    seed.filter(|_| backend.supports_seed())
}

/// Paraphrases `question` once per configured rule, in rule order.
pub fn generate_paraphrases(
    question: &str,
    cfg: &VariationConfig,
    aux: &dyn CompletionBackend,
    transcript: &mut Transcript,
) -> Result<ParaphraseSet, GenerationError> {
    paraphrase_with(question, cfg, aux, Role::Aux, transcript)
}

pub(crate) fn paraphrase_once(
    question: &str,
    rule: ParaphraseRule,
    cfg: &VariationConfig,
    backend: &dyn CompletionBackend,
    role: Role,
    transcript: &mut Transcript,
) -> Result<Paraphrase, SlotFailure> {
    let req = CompletionRequest::new(render_paraphrase_prompt(question, rule))
        .temperature(cfg.paraphrase_temperature)
        .top_p(cfg.top_p)
        .max_tokens(cfg.max_tokens)
        .seed(seed_for(backend, cfg.seed));
    match transcript.call(role, format!("paraphrase rule {}", rule.id()), backend, req) {
        Ok(c) => {
            let text = first_line(&c.text).to_string();
            let empty = text.is_empty();
            Ok(Paraphrase {
                rule,
                identical_to_source: !empty && normalize_answer(&text) == normalize_answer(question),
                text: if empty { question.to_string() } else { text },
                empty,
            })
        }
        Err(e) => Err(SlotFailure {
            slot: format!("rule {}", rule.id()),
            stage: "paraphrase".into(),
            error: e.to_string(),
        }),
    }
}

fn paraphrase_with(
    question: &str,
    cfg: &VariationConfig,
    backend: &dyn CompletionBackend,
    role: Role,
    transcript: &mut Transcript,
) -> Result<ParaphraseSet, GenerationError> {
    let mut set = ParaphraseSet::default();
    for &rule in &cfg.rules {
        match paraphrase_once(question, rule, cfg, backend, role, transcript) {
            Ok(p) => set.items.push(p),
            Err(f) => set.failures.push(f),
        }
    }
    if set.items.len() < 2 {
        return Err(GenerationError::TooFewParaphrases {
            succeeded: set.items.len(),
            failures: set.failures,
        });
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub short_max_tokens: u32,
    pub seed: Option<u64>,
}

impl AnswerParams {
    pub fn new(temperature: f64, cfg: &VariationConfig) -> Self {
        Self {
            temperature,
            top_p: cfg.top_p,
            max_tokens: cfg.max_tokens,
            short_max_tokens: cfg.short_max_tokens,
            seed: cfg.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerOutcome {
    pub descriptive: String,
    /// `None` when the second step failed or returned nothing.
    pub short: Option<String>,
    pub short_error: Option<String>,
}

/// Two-step answering of the original question.
pub fn answer_question(
    question: &str,
    backend: &dyn CompletionBackend,
    params: &AnswerParams,
    transcript: &mut Transcript,
) -> Result<AnswerOutcome, SlotFailure> {
    answer_asked(question, question, "answer", backend, params, transcript)
}

/// Two-step answering where step 1 sees `asked` (a paraphrase, say) and the
/// short-answer step pairs the descriptive answer with `original`.
pub fn answer_asked(
    asked: &str,
    original: &str,
    label: &str,
    backend: &dyn CompletionBackend,
    params: &AnswerParams,
    transcript: &mut Transcript,
) -> Result<AnswerOutcome, SlotFailure> {
    let seed = seed_for(backend, params.seed);
    let step1 = CompletionRequest::new(asked)
        .temperature(params.temperature)
        .top_p(params.top_p)
        .max_tokens(params.max_tokens)
        .seed(seed);
    let descriptive = transcript
        .call(Role::Main, format!("{label}: descriptive"), backend, step1)
        .map_err(|e| SlotFailure {
            slot: label.to_string(),
            stage: "descriptive".into(),
            error: e.to_string(),
        })?
        .text
        .trim()
        .to_string();
    let step2 = CompletionRequest::new(render_answer_prompt(&descriptive, original))
        .temperature(params.temperature)
        .top_p(params.top_p)
        .max_tokens(params.short_max_tokens)
        .stop(vec!["\n".into()])
        .seed(seed);
    let (short, short_error) =
        match transcript.call(Role::Main, format!("{label}: short"), backend, step2) {
            Ok(c) => {
                let s = first_line(&c.text).to_string();
                if s.is_empty() {
                    (None, Some("empty short answer".to_string()))
                } else {
                    (Some(s), None)
                }
            }
            Err(e) => (None, Some(e.to_string())),
        };
    Ok(AnswerOutcome {
        descriptive,
        short,
        short_error,
    })
}

/// Answers produced by one variation mode, with everything that went wrong.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationOutcome {
    pub answers: AnswerSet,
    pub paraphrases: Vec<Paraphrase>,
    pub failures: Vec<SlotFailure>,
    /// Slots whose short answer was empty and therefore excluded.
    pub empty_answers: usize,
}

impl VariationOutcome {
    fn new(question_id: &str, question: &str) -> Self {
        Self {
            answers: AnswerSet::new(question_id, question),
            paraphrases: Vec::new(),
            failures: Vec::new(),
            empty_answers: 0,
        }
    }

    fn absorb(&mut self, slot: &str, outcome: Result<AnswerOutcome, SlotFailure>, record: impl FnOnce(String, String) -> AnswerRecord) {
        match outcome {
            Ok(AnswerOutcome { descriptive, short: Some(short), .. }) => {
                // Cannot fail: `short` is non-empty by construction.
                let _ = self.answers.push(record(short, descriptive));
            }
            Ok(AnswerOutcome { short_error, .. }) => {
                self.empty_answers += 1;
                self.failures.push(SlotFailure {
                    slot: slot.to_string(),
                    stage: "short".into(),
                    error: short_error.unwrap_or_else(|| "missing short answer".into()),
                });
            }
            Err(f) => self.failures.push(f),
        }
    }

    fn finish(self) -> Result<Self, GenerationError> {
        if self.answers.len() < 2 {
            return Err(GenerationError::TooFewAnswers {
                got: self.answers.len(),
                failures: self.failures,
            });
        }
        Ok(self)
    }
}

/// Paraphrase branch: paraphrase with `aux`, then answer each paraphrase with
/// `main` at the fixed answer temperature.
pub fn generate_context_variations(
    question_id: &str,
    question: &str,
    cfg: &VariationConfig,
    aux: &dyn CompletionBackend,
    main: &dyn CompletionBackend,
    transcript: &mut Transcript,
) -> Result<VariationOutcome, GenerationError> {
    let paraphrases = generate_paraphrases(question, cfg, aux, transcript)?;
    let mut out = VariationOutcome::new(question_id, question);
    out.failures = paraphrases.failures.clone();
    let params = AnswerParams::new(cfg.answer_temperature, cfg);
    for p in &paraphrases.items {
        let slot = format!("rule {}", p.rule.id());
        let outcome = answer_asked(&p.text, question, &slot, main, &params, transcript);
        out.absorb(&slot, outcome, |short, descriptive| {
            let mut r = AnswerRecord::new(short, Provenance::ContextRule { rule: p.rule })
                .with_descriptive(descriptive);
            r.asked = Some(p.text.clone());
            r
        });
    }
    out.paraphrases = paraphrases.items;
    out.finish()
}

/// Temperature branch: answer the original question once per temperature.
pub fn generate_temperature_variations(
    question_id: &str,
    question: &str,
    cfg: &VariationConfig,
    main: &dyn CompletionBackend,
    transcript: &mut Transcript,
) -> Result<VariationOutcome, GenerationError> {
    let mut out = VariationOutcome::new(question_id, question);
    for &t in &cfg.temperatures {
        let slot = format!("t={t}");
        let params = AnswerParams::new(t, cfg);
        let outcome = answer_asked(question, question, &slot, main, &params, transcript);
        out.absorb(&slot, outcome, |short, descriptive| {
            AnswerRecord::new(short, Provenance::Temperature { value: t }).with_descriptive(descriptive)
        });
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendError, ScriptedBackend};

    const WATERMELON: &str = "What happens to you if you eat watermelon seeds?";

    fn aux_paraphraser() -> ScriptedBackend {
        ScriptedBackend::new("aux", |r: &CompletionRequest| {
            let n = r.prompt.split("Technique Number: ").nth(1).unwrap().chars().next().unwrap();
            Ok(match n {
                '1' => " What are the consequences of eating watermelon seeds?\n\nSentence: junk",
                '2' => "What is the result of consuming watermelon seeds?",
                '3' => "If you eat watermelon seeds, what happens to you?",
                _ => "Does anything happen, and what, if you eat watermelon seeds?",
            }
            .to_string())
        })
    }

    /// Step 1 echoes a descriptive answer; step 2 returns the short answer.
    fn main_answerer() -> ScriptedBackend {
        ScriptedBackend::new("main", |r: &CompletionRequest| {
            if r.prompt.starts_with("Context: The answer to this question depends") {
                Ok(" Nothing; they are safe to eat.\nContext: more".into())
            } else {
                Ok("Nothing happens. Watermelon seeds pass through your digestive system and are safe to eat.".into())
            }
        })
    }

    #[test]
    fn rules_serialize_as_ids() {
        assert_eq!(serde_json::to_string(&ParaphraseRule::Structure).unwrap(), "3");
        assert_eq!(serde_json::from_str::<ParaphraseRule>("4").unwrap(), ParaphraseRule::Conjunctions);
        assert!(serde_json::from_str::<ParaphraseRule>("5").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(VariationConfig::default().validate().is_ok());
        let dup = VariationConfig { temperatures: vec![0.2, 0.5, 0.5], ..Default::default() };
        assert!(dup.validate().unwrap_err().contains("strictly increasing"));
        let unsorted = VariationConfig { temperatures: vec![0.7, 0.2], ..Default::default() };
        assert!(unsorted.validate().is_err());
        let one_rule = VariationConfig { rules: vec![ParaphraseRule::Synonyms], ..Default::default() };
        assert!(one_rule.validate().is_err());
        let twice = VariationConfig {
            rules: vec![ParaphraseRule::Synonyms, ParaphraseRule::Synonyms],
            ..Default::default()
        };
        assert!(twice.validate().is_err());
        let bad_p = VariationConfig { top_p: 0.0, ..Default::default() };
        assert!(bad_p.validate().is_err());
    }

    #[test]
    fn paraphrases_come_back_in_rule_order() {
        let mut t = Transcript::new();
        let set = generate_paraphrases(WATERMELON, &VariationConfig::default(), &aux_paraphraser(), &mut t).unwrap();
        let rules: Vec<u8> = set.items.iter().map(|p| p.rule.id()).collect();
        assert_eq!(rules, vec![1, 2, 3, 4]);
        assert_eq!(set.items[0].text, "What are the consequences of eating watermelon seeds?");
        assert_eq!(t.count(Role::Aux), 4);
    }

    #[test]
    fn failing_rule_is_recorded() {
        let aux = ScriptedBackend::new("aux", |r: &CompletionRequest| {
            if r.prompt.contains("Technique Number: 3") {
                Err(BackendError::Status { status: 500, body: "boom".into() })
            } else {
                Ok("A paraphrase?".into())
            }
        });
        let mut t = Transcript::new();
        let set = generate_paraphrases("Q?", &VariationConfig::default(), &aux, &mut t).unwrap();
        assert_eq!(set.items.len(), 3);
        assert_eq!(set.failures.len(), 1);
        assert_eq!(set.failures[0].slot, "rule 3");
    }

    #[test]
    fn identical_and_empty_paraphrases_are_flagged() {
        let aux = ScriptedBackend::new("aux", |r: &CompletionRequest| {
            Ok(if r.prompt.contains("Technique Number: 1") { "q one?".into() } else { "\n".into() })
        });
        let mut t = Transcript::new();
        let set = generate_paraphrases("Q one", &VariationConfig::default(), &aux, &mut t).unwrap();
        assert!(set.items[0].identical_to_source);
        assert!(set.items[1].empty);
        assert_eq!(set.items[1].text, "Q one");
    }

    #[test]
    fn two_step_answering() {
        let mut t = Transcript::new();
        let params = AnswerParams::new(0.7, &VariationConfig::default());
        let out = answer_question("What happens if you eat watermelon seeds?", &main_answerer(), &params, &mut t).unwrap();
        assert!(out.descriptive.starts_with("Nothing happens"));
        assert_eq!(out.short.as_deref(), Some("Nothing; they are safe to eat."));
        assert_eq!(t.exchanges.len(), 2);
        let step2 = &t.exchanges[1].request.prompt;
        assert!(step2.ends_with(&format!(
            "Context: {}\nQuestion: What happens if you eat watermelon seeds?\nAnswer:",
            out.descriptive
        )));
        let again = answer_question("What happens if you eat watermelon seeds?", &main_answerer(), &params, &mut t).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn failed_second_step_keeps_descriptive_answer() {
        let main = ScriptedBackend::new("main", |r: &CompletionRequest| {
            if r.prompt.starts_with("Context:") {
                Err(BackendError::Timeout)
            } else {
                Ok("Long answer.".into())
            }
        });
        let mut t = Transcript::new();
        let out = answer_question("Q?", &main, &AnswerParams::new(0.2, &VariationConfig::default()), &mut t).unwrap();
        assert_eq!(out.descriptive, "Long answer.");
        assert_eq!(out.short, None);
        assert!(out.short_error.is_some());
    }

    #[test]
    fn context_variations_carry_rule_provenance() {
        let mut t = Transcript::new();
        let out = generate_context_variations(
            "q1",
            WATERMELON,
            &VariationConfig::default(),
            &aux_paraphraser(),
            &main_answerer(),
            &mut t,
        )
        .unwrap();
        assert_eq!(out.answers.len(), 4);
        for (i, a) in out.answers.answers().iter().enumerate() {
            assert_eq!(a.provenance, Provenance::ContextRule { rule: ParaphraseRule::ALL[i] });
            assert_eq!(a.text, "Nothing; they are safe to eat.");
        }
        assert_eq!(
            out.answers.answers()[0].asked.as_deref(),
            Some("What are the consequences of eating watermelon seeds?")
        );
        assert_eq!(t.count(Role::Aux), 4);
        assert_eq!(t.count(Role::Main), 8);
    }

    #[test]
    fn temperature_variations_record_configured_values() {
        let cfg = VariationConfig { temperatures: vec![0.1, 0.35, 0.9, 1.3], ..Default::default() };
        let mut t = Transcript::new();
        let out = generate_temperature_variations("q1", "Q?", &cfg, &main_answerer(), &mut t).unwrap();
        let temps: Vec<f64> = out
            .answers
            .answers()
            .iter()
            .map(|a| match a.provenance {
                Provenance::Temperature { value } => value,
                _ => panic!("wrong provenance"),
            })
            .collect();
        assert_eq!(temps, cfg.temperatures);
        let sent: Vec<f64> = t.exchanges.iter().map(|e| e.request.temperature).collect();
        assert_eq!(sent, vec![0.1, 0.1, 0.35, 0.35, 0.9, 0.9, 1.3, 1.3]);
    }

    #[test]
    fn single_success_is_too_few() {
        let main = ScriptedBackend::new("main", |r: &CompletionRequest| {
            if r.temperature == 0.2 { Ok("Georgia.".into()) } else { Err(BackendError::Timeout) }
        });
        let mut t = Transcript::new();
        let err = generate_temperature_variations("q", "Q?", &VariationConfig::default(), &main, &mut t).unwrap_err();
        assert!(matches!(err, GenerationError::TooFewAnswers { got: 1, .. }));
    }
}
