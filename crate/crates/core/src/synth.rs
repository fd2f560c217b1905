//! Deterministic synthetic corpora with gold part-of-speech-like tags.
//!
//! Sentences are drawn from a hidden Markov grammar: tags follow a sparse random
//! transition matrix and each tag emits words from its own Zipfian lexicon,
//! occasionally from a pool of words shared between tags.

use std::fmt::Write as _;

use indexmap::IndexSet;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotations::{AnnotatedCorpus, Sentence};
use crate::error::{Error, Result};

const TAG_NAMES: [&str; 17] = [
    "NOUN", "VERB", "ADJ", "ADV", "DET", "ADP", "PRON", "AUX", "CCONJ", "SCONJ", "PART", "NUM", "PROPN", "INTJ",
    "PUNCT", "SYM", "X",
];

#[derive(Debug, Clone, PartialEq)]
pub struct GrammarConfig {
    pub seed: u64,
    pub tags: usize,
    pub words_per_tag: usize,
    pub shared_words: usize,
    /// Probability that a tag emits from the shared pool.
    pub shared_rate: f64,
    /// Likely successors per tag.
    pub successors: usize,
    /// Transition weight given to every tag pair.
    pub transition_floor: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            seed: 42,
            tags: 16,
            words_per_tag: 40,
            shared_words: 24,
            shared_rate: 0.1,
            successors: 3,
            transition_floor: 0.02,
            min_len: 4,
            max_len: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grammar {
    pub tags: Vec<String>,
    pub words: Vec<String>,
    start: WeightedIndex<f64>,
    transitions: Vec<WeightedIndex<f64>>,
    /// Word ids and emission sampler per tag.
    lexicons: Vec<(Vec<usize>, WeightedIndex<f64>)>,
    min_len: usize,
    max_len: usize,
}

fn pseudo_word<R: Rng>(rng: &mut R) -> String {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "tr"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
    let syllables = rng.random_range(1..=3);
    (0..syllables)
        .map(|_| format!("{}{}", ONSETS[rng.random_range(0..ONSETS.len())], VOWELS[rng.random_range(0..VOWELS.len())]))
        .collect()
}

impl Grammar {
    pub fn new(config: &GrammarConfig) -> Result<Self> {
        if config.tags < 1 || config.tags > TAG_NAMES.len() {
            return Err(Error::invalid(format!("tags must be in 1..={}", TAG_NAMES.len())));
        }
        if config.words_per_tag == 0 || config.min_len == 0 || config.min_len > config.max_len {
            return Err(Error::invalid("grammar needs words and a valid length range"));
        }
        if !(0.0..1.0).contains(&config.shared_rate) || (config.shared_rate > 0.0 && config.shared_words == 0) {
            return Err(Error::invalid("shared_rate must be in [0, 1) with a non-empty shared pool"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n_tags = config.tags;

        let mut words = IndexSet::new();
        while words.len() < n_tags * config.words_per_tag + config.shared_words {
            words.insert(pseudo_word(&mut rng));
        }
        let words: Vec<String> = words.into_iter().collect();
        let shared_start = n_tags * config.words_per_tag;

        let zipf = |n: usize| -> Vec<f64> { (0..n).map(|j| 1.0 / (j + 1) as f64).collect() };
        let mut lexicons = Vec::with_capacity(n_tags);
        for t in 0..n_tags {
            let own: Vec<usize> = (t * config.words_per_tag..(t + 1) * config.words_per_tag).collect();
            let mut weights: Vec<f64> = zipf(own.len()).into_iter().map(|w| w * (1.0 - config.shared_rate)).collect();
            let mut ids = own;
            if config.shared_rate > 0.0 {
                // each tag draws from a random third of the shared pool
                let pool: Vec<usize> =
                    (shared_start..words.len()).filter(|_| rng.random_range(0..3) == 0).collect();
                let pool = if pool.is_empty() { vec![shared_start] } else { pool };
                let zs = zipf(pool.len());
                let total: f64 = zs.iter().sum();
                weights.extend(zs.iter().map(|w| w / total * config.shared_rate * zipf(config.words_per_tag).iter().sum::<f64>()));
                ids.extend(pool);
            }
            lexicons.push((ids, WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?));
        }

        let mut transitions = Vec::with_capacity(n_tags);
        for _ in 0..n_tags {
            let mut w = vec![config.transition_floor; n_tags];
            for _ in 0..config.successors {
                w[rng.random_range(0..n_tags)] += rng.random_range(0.5..2.0);
            }
            transitions.push(WeightedIndex::new(&w).map_err(|e| Error::invalid(e.to_string()))?);
        }
        let start_w: Vec<f64> = (0..n_tags).map(|_| rng.random_range(0.1..1.0)).collect();

        Ok(Grammar {
            tags: TAG_NAMES[..n_tags].iter().map(|s| s.to_string()).collect(),
            words,
            start: WeightedIndex::new(&start_w).map_err(|e| Error::invalid(e.to_string()))?,
            transitions,
            lexicons,
            min_len: config.min_len,
            max_len: config.max_len,
        })
    }

    pub fn sample_sentence<R: Rng>(&self, rng: &mut R) -> Sentence {
        let len = rng.random_range(self.min_len..=self.max_len);
        let mut tokens = Vec::with_capacity(len);
        let mut tags = Vec::with_capacity(len);
        let mut tag = self.start.sample(rng);
        for i in 0..len {
            if i > 0 {
                tag = self.transitions[tag].sample(rng);
            }
            let (ids, emit) = &self.lexicons[tag];
            tokens.push(self.words[ids[emit.sample(rng)]].clone());
            tags.push(self.tags[tag].clone());
        }
        Sentence { tokens, tags }
    }

    /// Sentences until their space-joined text reaches `bytes`.
    pub fn generate<R: Rng>(&self, rng: &mut R, bytes: usize) -> Vec<Sentence> {
        let mut out = Vec::new();
        let mut size = 0;
        while size < bytes {
            let s = self.sample_sentence(rng);
            size += s.tokens.iter().map(|t| t.len() + 1).sum::<usize>();
            out.push(s);
        }
        out
    }
}

/// A raw text corpus whose first sentences also form a gold-tagged annotation.
#[derive(Debug, Clone)]
pub struct DeskCorpus {
    pub annotated: AnnotatedCorpus,
    /// One sentence per line, tokens separated by single spaces.
    pub raw_text: String,
}

impl DeskCorpus {
    pub fn raw_tokens(&self) -> Vec<String> {
        self.raw_text.split_whitespace().map(str::to_string).collect()
    }
}

/// Generates about `raw_bytes` of text; the first `annotated_bytes` of it are
/// also returned with their tags.
pub fn desk_corpus(grammar: &GrammarConfig, raw_bytes: usize, annotated_bytes: usize) -> Result<DeskCorpus> {
    let g = Grammar::new(grammar)?;
    let mut rng = ChaCha8Rng::seed_from_u64(grammar.seed.wrapping_add(1));
    let sentences = g.generate(&mut rng, raw_bytes.max(annotated_bytes));
    let mut raw_text = String::with_capacity(raw_bytes + 64);
    let mut annotated = Vec::new();
    let mut size = 0;
    for s in &sentences {
        if size < annotated_bytes {
            annotated.push(s.clone());
        }
        size += s.tokens.iter().map(|t| t.len() + 1).sum::<usize>();
        let _ = writeln!(raw_text, "{}", s.tokens.join(" "));
    }
    Ok(DeskCorpus {
        annotated: AnnotatedCorpus::from_sentences(annotated, format!("synthetic-seed{}", grammar.seed))?,
        raw_text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let a = desk_corpus(&GrammarConfig::default(), 20_000, 5_000).unwrap();
        let b = desk_corpus(&GrammarConfig::default(), 20_000, 5_000).unwrap();
        assert_eq!(a.raw_text, b.raw_text);
        assert_eq!(a.annotated, b.annotated);
        let c = desk_corpus(&GrammarConfig { seed: 7, ..GrammarConfig::default() }, 20_000, 5_000).unwrap();
        assert_ne!(a.raw_text, c.raw_text);
    }

    #[test]
    fn sizes_and_tags() {
        let cfg = GrammarConfig::default();
        let desk = desk_corpus(&cfg, 50_000, 10_000).unwrap();
        assert!(desk.raw_text.len() >= 50_000 && desk.raw_text.len() < 51_000);
        let annotated_tokens = desk.annotated.token_count();
        assert!(annotated_tokens > 1000 && annotated_tokens < desk.raw_tokens().len());
        assert_eq!(desk.annotated.distinct_tags(), cfg.tags);
        let first_line: Vec<&str> = desk.raw_text.lines().next().unwrap().split(' ').collect();
        assert_eq!(first_line, desk.annotated.sentences[0].tokens);
    }

    #[test]
    fn shared_words_are_ambiguous() {
        let desk = desk_corpus(&GrammarConfig::default(), 0, 100_000).unwrap();
        let mut tags_of: std::collections::HashMap<&str, std::collections::HashSet<&str>> = Default::default();
        for s in &desk.annotated.sentences {
            for (w, t) in s.tokens.iter().zip(&s.tags) {
                tags_of.entry(w).or_default().insert(t);
            }
        }
        assert!(tags_of.values().any(|t| t.len() > 1));
        assert!(tags_of.values().filter(|t| t.len() == 1).count() > 400);
    }

    #[test]
    fn bad_configs() {
        assert!(Grammar::new(&GrammarConfig { tags: 0, ..GrammarConfig::default() }).is_err());
        assert!(Grammar::new(&GrammarConfig { min_len: 5, max_len: 2, ..GrammarConfig::default() }).is_err());
    }
}
