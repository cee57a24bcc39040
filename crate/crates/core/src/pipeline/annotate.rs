//! Terminal loop for labeling answer pairs as consistent or inconsistent.

use std::collections::{BTreeSet, VecDeque};
use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::{Branch, RunRecord, Status};
use crate::analysis::{append_annotations, read_annotations, AnnotationRecord, Label};

#[derive(Debug, Clone)]
pub struct AnnotateOptions {
    pub branch: Branch,
    pub annotator: String,
    pub sample: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AnnotateSummary {
    pub labeled: usize,
    pub skipped: usize,
    /// Pairs still unlabeled when input ended or the annotator quit.
    pub remaining: usize,
}

/// A pair to label: question id and two answer indices, `i < j`.
pub type PairKey = (String, usize, usize);

pub fn candidate_pairs(records: &[RunRecord], branch: Branch) -> Vec<PairKey> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| r.status == Status::Ok) {
        if let Some(b) = r.branch(branch) {
            let n = b.answers.len();
            for i in 0..n {
                for j in i + 1..n {
                    out.push((r.question_id.clone(), i, j));
                }
            }
        }
    }
    out
}

/// Seeded sample of `k` pairs, kept in their original order.
pub fn select_pairs(pairs: Vec<PairKey>, k: Option<usize>, seed: u64) -> Vec<PairKey> {
    match k {
        Some(k) if k < pairs.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, pairs.len(), k).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| pairs[i].clone()).collect()
        }
        _ => pairs,
    }
}

enum Input {
    Label(Label),
    Skip,
    Quit,
}

/// Comma- or whitespace-separated answers, read lazily.
struct Tokens<R> {
    input: R,
    queue: VecDeque<String>,
}

impl<R: BufRead> Tokens<R> {
    fn next(&mut self) -> io::Result<Option<String>> {
        loop {
            if let Some(t) = self.queue.pop_front() {
                return Ok(Some(t));
            }
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Ok(None);
            }
            self.queue.extend(
                line.split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|t| !t.is_empty())
                    .map(str::to_lowercase),
            );
        }
    }
}

fn parse_input(token: &str) -> Option<Input> {
    match token {
        "c" | "consistent" | "y" | "yes" => Some(Input::Label(Label::Consistent)),
        "i" | "inconsistent" | "n" | "no" => Some(Input::Label(Label::Inconsistent)),
        "s" | "skip" => Some(Input::Skip),
        "q" | "quit" => Some(Input::Quit),
        _ => None,
    }
}

/// Presents each unlabeled pair and appends every label to `opts.out` as it
/// is given, so an interrupted session resumes where it stopped.
pub fn annotate(
    records: &[RunRecord],
    opts: &AnnotateOptions,
    input: impl BufRead,
    mut output: impl Write,
) -> anyhow::Result<AnnotateSummary> {
    let done: BTreeSet<PairKey> = if opts.out.exists() {
        read_annotations(&opts.out)?
            .into_iter()
            .filter(|r| r.annotator_id == opts.annotator)
            .map(|r| r.item())
            .collect()
    } else {
        BTreeSet::new()
    };
    let pending: Vec<PairKey> = select_pairs(candidate_pairs(records, opts.branch), opts.sample, opts.seed)
        .into_iter()
        .filter(|p| !done.contains(p))
        .collect();
    let mut tokens = Tokens {
        input,
        queue: VecDeque::new(),
    };
    let mut summary = AnnotateSummary::default();
    let total = pending.len();
    for (pos, (qid, i, j)) in pending.iter().enumerate() {
        let record = records.iter().find(|r| &r.question_id == qid).expect("pair from records");
        let answers = &record.branch(opts.branch).expect("pair from branch").answers;
        writeln!(output, "\n[{}/{total}] {qid} ({}, answers {i} and {j})", pos + 1, opts.branch)?;
        writeln!(output, "Question: {}", record.question)?;
        writeln!(output, "Answer 1: {}", answers.answers()[*i].text)?;
        writeln!(output, "Answer 2: {}", answers.answers()[*j].text)?;
        loop {
            write!(output, "[c]onsistent / [i]nconsistent / [s]kip / [q]uit: ")?;
            output.flush()?;
            let Some(token) = tokens.next()? else {
                summary.remaining = total - pos;
                return Ok(summary);
            };
            match parse_input(&token) {
                Some(Input::Label(label)) => {
                    let rec = AnnotationRecord::new(qid.clone(), *i, *j, opts.annotator.clone(), label);
                    append_annotations(&opts.out, &[rec])?;
                    summary.labeled += 1;
                    break;
                }
                Some(Input::Skip) => {
                    summary.skipped += 1;
                    break;
                }
                Some(Input::Quit) => {
                    summary.remaining = total - pos;
                    return Ok(summary);
                }
                None => writeln!(output, "unrecognized input {token:?}")?,
            }
        }
    }
    Ok(summary)
}
