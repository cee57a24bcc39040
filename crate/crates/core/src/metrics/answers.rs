use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::a2c::SlotSelection;
use crate::generation::ParaphraseRule;

/// Where an answer variation came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Answer to a paraphrase produced with one linguistic rule.
    ContextRule { rule: ParaphraseRule },
    /// Answer to the original question sampled at one temperature.
    Temperature { value: f64 },
}

impl Provenance {
    pub fn label(&self) -> String {
        match self {
            Provenance::ContextRule { rule } => format!("rule {}", rule.id()),
            Provenance::Temperature { value } => format!("t={value}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    /// The short answer that enters every consistency computation.
    pub text: String,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptive_text: Option<String>,
    /// Question text actually sent to the model (the paraphrase, for context
    /// variations).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asked: Option<String>,
    /// Present on answers produced by Ask-to-Choose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SlotSelection>,
}

impl AnswerRecord {
    pub fn new(text: impl Into<String>, provenance: Provenance) -> Self {
        Self {
            text: text.into(),
            provenance,
            descriptive_text: None,
            asked: None,
            selection: None,
        }
    }

    pub fn with_descriptive(mut self, descriptive: impl Into<String>) -> Self {
        self.descriptive_text = Some(descriptive.into());
        self
    }
}

/// The output variations generated for one source question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub question_id: String,
    pub source_question: String,
    answers: Vec<AnswerRecord>,
}

impl AnswerSet {
    pub fn new(question_id: impl Into<String>, source_question: impl Into<String>) -> Self {
        Self {
            question_id: question_id.into(),
            source_question: source_question.into(),
            answers: Vec::new(),
        }
    }

    /// Builds a set from plain texts, all tagged with the same provenance.
    /// Handy for tests and offline recomputation.
    pub fn from_texts<S: AsRef<str>>(
        texts: &[S],
        provenance: Provenance,
    ) -> Result<Self, MetricsError> {
        let mut set = Self::new("adhoc", "");
        for t in texts {
            set.push(AnswerRecord::new(t.as_ref(), provenance.clone()))?;
        }
        Ok(set)
    }

    /// Appends an answer; empty (after trimming) answers are rejected.
    pub fn push(&mut self, record: AnswerRecord) -> Result<(), MetricsError> {
        if record.text.trim().is_empty() {
            return Err(MetricsError::EmptyAnswer);
        }
        self.answers.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn answers(&self) -> &[AnswerRecord] {
        &self.answers
    }

    pub fn get(&self, index: usize) -> Option<&AnswerRecord> {
        self.answers.get(index)
    }

    pub fn texts(&self) -> Vec<&str> {
        self.answers.iter().map(|a| a.text.as_str()).collect()
    }

    /// Copy of the set restricted to the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            question_id: self.question_id.clone(),
            source_question: self.source_question.clone(),
            answers: indices.iter().map(|&i| self.answers[i].clone()).collect(),
        }
    }
}
