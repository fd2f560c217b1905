//! Per-token annotated corpora: parsing, tag statistics and conflation ladders.
//!
//! A corpus is a list of sentences, each a sequence of `(token, tag)` pairs.
//! Two input formats are understood: a two-column TSV (`token<TAB>tag`, blank
//! line between sentences) and CoNLL-U, from which the FORM column and either
//! UPOS or XPOS are read.
//!
//! A conflation ladder repeatedly merges the two least frequent tags of an
//! annotation until one tag is left, producing annotations that carry less and
//! less information about the text.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use indexmap::{IndexMap, IndexSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, tags: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::invalid("sentence has no tokens"));
        }
        if tokens.len() != tags.len() {
            return Err(Error::invalid(format!(
                "sentence has {} tokens but {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        if tokens.iter().any(String::is_empty) {
            return Err(Error::invalid("empty token"));
        }
        if tags.iter().any(String::is_empty) {
            return Err(Error::invalid("empty tag"));
        }
        Ok(Sentence { tokens, tags })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedCorpus {
    pub sentences: Vec<Sentence>,
    /// Tags in first-seen order.
    pub tagset: IndexSet<String>,
    pub source_name: String,
}

impl AnnotatedCorpus {
    /// Builds a corpus and derives its tagset from the sentences.
    pub fn from_sentences(sentences: Vec<Sentence>, source_name: impl Into<String>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::NoSentences);
        }
        let tagset = observed_tags(&sentences);
        Ok(AnnotatedCorpus { sentences, tagset, source_name: source_name.into() })
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// Number of distinct tags actually used.
    pub fn distinct_tags(&self) -> usize {
        observed_tags(&self.sentences).len()
    }

    pub fn token_sequences(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| s.tokens.clone()).collect()
    }

    pub fn tag_sequences(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| s.tags.clone()).collect()
    }

    /// Same tokens, every tag replaced by the token itself.
    pub fn with_token_tags(&self) -> AnnotatedCorpus {
        let sentences = self
            .sentences
            .iter()
            .map(|s| Sentence { tokens: s.tokens.clone(), tags: s.tokens.clone() })
            .collect::<Vec<_>>();
        let tagset = observed_tags(&sentences);
        AnnotatedCorpus { sentences, tagset, source_name: self.source_name.clone() }
    }

    /// Same tokens, every tag replaced by `tag`.
    pub fn with_single_tag(&self, tag: &str) -> AnnotatedCorpus {
        let sentences = self
            .sentences
            .iter()
            .map(|s| Sentence { tokens: s.tokens.clone(), tags: vec![tag.to_string(); s.len()] })
            .collect::<Vec<_>>();
        let tagset = observed_tags(&sentences);
        AnnotatedCorpus { sentences, tagset, source_name: self.source_name.clone() }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for sentence in &self.sentences {
            for (token, tag) in sentence.tokens.iter().zip(&sentence.tags) {
                let _ = writeln!(out, "{token}\t{tag}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_tsv<W: Write>(&self, mut writer: W) -> Result<()> {
        writer.write_all(self.to_tsv().as_bytes())?;
        Ok(())
    }
}

fn observed_tags(sentences: &[Sentence]) -> IndexSet<String> {
    let mut tags = IndexSet::new();
    for sentence in sentences {
        for tag in &sentence.tags {
            if !tags.contains(tag.as_str()) {
                tags.insert(tag.clone());
            }
        }
    }
    tags
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Conllu,
    Tsv,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conllu" => Ok(Format::Conllu),
            "tsv" => Ok(Format::Tsv),
            other => Err(Error::invalid(format!("unknown corpus format '{other}'"))),
        }
    }
}

/// Which CoNLL-U column supplies the tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TagColumn {
    #[default]
    Upos,
    Xpos,
}

impl TagColumn {
    fn index(self) -> usize {
        match self {
            TagColumn::Upos => 3,
            TagColumn::Xpos => 4,
        }
    }
}

impl std::str::FromStr for TagColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upos" => Ok(TagColumn::Upos),
            "xpos" | "fpos" => Ok(TagColumn::Xpos),
            other => Err(Error::invalid(format!("unknown tag column '{other}'"))),
        }
    }
}

/// Parses a whole corpus. `tag_column` is ignored for TSV input.
pub fn parse_corpus<R: BufRead>(
    reader: R,
    format: Format,
    tag_column: TagColumn,
    source_name: &str,
) -> Result<AnnotatedCorpus> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let mut start_line = 1;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);

        if line.trim().is_empty() {
            if !tokens.is_empty() {
                sentences.push(
                    Sentence::new(std::mem::take(&mut tokens), std::mem::take(&mut tags))
                        .map_err(|e| Error::parse(start_line, e.to_string()))?,
                );
            }
            continue;
        }
        if tokens.is_empty() {
            start_line = line_no;
        }

        match format {
            Format::Tsv => {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 2 {
                    return Err(Error::parse(line_no, format!("expected 2 columns, found {}", cols.len())));
                }
                if cols[0].is_empty() || cols[1].is_empty() {
                    return Err(Error::parse(line_no, "empty token or tag"));
                }
                tokens.push(cols[0].to_string());
                tags.push(cols[1].to_string());
            }
            Format::Conllu => {
                if line.starts_with('#') {
                    continue;
                }
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 10 {
                    return Err(Error::parse(line_no, format!("expected 10 columns, found {}", cols.len())));
                }
                let id = cols[0];
                // multi-word token ranges and empty nodes
                if id.contains('-') || id.contains('.') {
                    continue;
                }
                if id.parse::<u32>().is_err() {
                    return Err(Error::parse(line_no, format!("bad token id '{id}'")));
                }
                let tag = cols[tag_column.index()];
                if cols[1].is_empty() || tag.is_empty() || tag == "_" {
                    return Err(Error::parse(line_no, "missing form or tag"));
                }
                tokens.push(cols[1].to_string());
                tags.push(tag.to_string());
            }
        }
    }
    if !tokens.is_empty() {
        sentences.push(Sentence::new(tokens, tags).map_err(|e| Error::parse(start_line, e.to_string()))?);
    }

    AnnotatedCorpus::from_sentences(sentences, source_name)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagHistogram {
    /// Counts keyed by tag, in tagset order.
    pub counts: IndexMap<String, u64>,
    pub total: u64,
}

impl TagHistogram {
    pub fn count(&self, tag: &str) -> u64 {
        self.counts.get(tag).copied().unwrap_or(0)
    }

    /// Accuracy of always predicting the most frequent tag.
    pub fn majority_class_accuracy(&self) -> f64 {
        majority_class_accuracy(self)
    }
}

pub fn tag_histogram(corpus: &AnnotatedCorpus) -> TagHistogram {
    let mut counts: IndexMap<String, u64> = corpus.tagset.iter().map(|t| (t.clone(), 0)).collect();
    let mut total = 0;
    for sentence in &corpus.sentences {
        for tag in &sentence.tags {
            *counts.entry(tag.clone()).or_insert(0) += 1;
            total += 1;
        }
    }
    TagHistogram { counts, total }
}

pub fn majority_class_accuracy(hist: &TagHistogram) -> f64 {
    if hist.total == 0 {
        return 0.0;
    }
    let max = hist.counts.values().copied().max().unwrap_or(0);
    max as f64 / hist.total as f64
}

/// The two least frequent tags in use: ascending count, ties broken by byte order.
fn least_frequent_pair(corpus: &AnnotatedCorpus) -> Result<(String, String)> {
    let hist = tag_histogram(corpus);
    let mut used: Vec<(&String, u64)> = hist.counts.iter().filter(|(_, &c)| c > 0).map(|(t, &c)| (t, c)).collect();
    if used.len() < 2 {
        return Err(Error::LadderExhausted);
    }
    used.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.as_bytes().cmp(b.0.as_bytes())));
    Ok((used[0].0.clone(), used[1].0.clone()))
}

fn fresh_tag(corpus: &AnnotatedCorpus, k: usize) -> String {
    let mut name = format!("X{k}");
    while corpus.tagset.contains(&name) {
        name.push('\'');
    }
    name
}

/// Merges the two least frequent tags into a fresh tag `X{k}`.
pub fn conflate_step(corpus: &AnnotatedCorpus, k: usize) -> Result<AnnotatedCorpus> {
    conflate_step_detailed(corpus, k).map(|step| step.corpus)
}

fn conflate_step_detailed(corpus: &AnnotatedCorpus, k: usize) -> Result<LadderStep> {
    let (a, b) = least_frequent_pair(corpus)?;
    let new_tag = fresh_tag(corpus, k);
    let sentences = corpus
        .sentences
        .iter()
        .map(|s| Sentence {
            tokens: s.tokens.clone(),
            tags: s
                .tags
                .iter()
                .map(|t| if *t == a || *t == b { new_tag.clone() } else { t.clone() })
                .collect(),
        })
        .collect::<Vec<_>>();
    let tagset = observed_tags(&sentences);
    Ok(LadderStep {
        annotation_id: k,
        merged_pair: (a, b),
        new_tag,
        corpus: AnnotatedCorpus { sentences, tagset, source_name: corpus.source_name.clone() },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LadderStep {
    pub annotation_id: usize,
    pub merged_pair: (String, String),
    pub new_tag: String,
    pub corpus: AnnotatedCorpus,
}

/// Successive conflations `T^(1) .. T^(m-1)` of an `m`-tag annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflationLadder {
    pub steps: Vec<LadderStep>,
}

impl ConflationLadder {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub fn conflate_ladder(corpus: &AnnotatedCorpus) -> Result<ConflationLadder> {
    let m = corpus.distinct_tags();
    if m < 2 {
        return Err(Error::LadderExhausted);
    }
    let mut steps: Vec<LadderStep> = Vec::with_capacity(m - 1);
    for k in 1..m {
        let prev = steps.last().map(|s| &s.corpus).unwrap_or(corpus);
        steps.push(conflate_step_detailed(prev, k)?);
    }
    Ok(ConflationLadder { steps })
}

/// Number of token positions per `(token, tag)` pair, used to build probe data.
pub fn token_tag_counts(corpus: &AnnotatedCorpus) -> HashMap<(String, String), u64> {
    let mut counts = HashMap::new();
    for s in &corpus.sentences {
        for (tok, tag) in s.tokens.iter().zip(&s.tags) {
            *counts.entry((tok.clone(), tag.clone())).or_insert(0) += 1;
        }
    }
    counts
}
