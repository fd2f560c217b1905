//! Interpolated Kneser-Ney n-gram models and entropy-coefficient estimation.
//!
//! Each level below the highest order is estimated from continuation counts
//! (the number of distinct left extensions of an n-gram). Every level uses a
//! single absolute discount `D = n1 / (n1 + 2 n2)` from its count-of-counts,
//! and the unigram level interpolates with the uniform distribution over the
//! predictable vocabulary, so every in-vocabulary symbol has positive mass.

use std::collections::HashMap;
use std::fmt::Write as _;

use indexmap::{IndexMap, IndexSet};
use rayon::prelude::*;

use crate::annotations::AnnotatedCorpus;
use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

const MIN_DISCOUNT: f64 = 0.05;
const MAX_DISCOUNT: f64 = 0.95;

#[derive(Debug, Clone)]
pub struct KnConfig {
    /// Symbols seen fewer times than this in training become `<unk>`.
    pub min_count: u64,
    /// Worker threads for count accumulation; counts are merged exactly.
    pub threads: usize,
}

impl Default for KnConfig {
    fn default() -> Self {
        KnConfig { min_count: 1, threads: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Level {
    /// n-gram (length = level) -> raw count at the top level, continuation count below.
    counts: HashMap<Vec<u32>, u64>,
    /// context (length = level - 1) -> (sum of counts, number of distinct followers)
    contexts: HashMap<Vec<u32>, (u64, u64)>,
    discount: f64,
}

impl Level {
    fn from_counts(counts: HashMap<Vec<u32>, u64>) -> Self {
        let mut contexts: HashMap<Vec<u32>, (u64, u64)> = HashMap::new();
        let (mut n1, mut n2) = (0u64, 0u64);
        for (gram, &c) in &counts {
            let entry = contexts.entry(gram[..gram.len() - 1].to_vec()).or_insert((0, 0));
            entry.0 += c;
            entry.1 += 1;
            match c {
                1 => n1 += 1,
                2 => n2 += 1,
                _ => {}
            }
        }
        let discount = if n1 + 2 * n2 == 0 { 0.5 } else { n1 as f64 / (n1 + 2 * n2) as f64 };
        Level { counts, contexts, discount: discount.clamp(MIN_DISCOUNT, MAX_DISCOUNT) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    order: usize,
    vocab: IndexSet<String>,
    /// `levels[k - 1]` holds k-grams.
    levels: Vec<Level>,
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Vocabulary including the reserved `<s>`, `</s>` and `<unk>` symbols.
    pub fn vocab(&self) -> &IndexSet<String> {
        &self.vocab
    }

    pub fn discounts(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.discount).collect()
    }

    /// Number of symbols that can be predicted (everything but `<s>`).
    fn predictable(&self) -> usize {
        self.vocab.len() - 1
    }

    pub fn symbol_id(&self, symbol: &str) -> u32 {
        match self.vocab.get_index_of(symbol) {
            Some(i) if i as u32 != BOS_ID => i as u32,
            _ => UNK_ID,
        }
    }

    /// Maps a sentence to ids, padded with `order - 1` start symbols and one end symbol.
    fn padded_ids<S: AsRef<str>>(&self, seq: &[S]) -> Vec<u32> {
        let mut ids = vec![BOS_ID; self.order - 1];
        ids.extend(seq.iter().map(|s| self.symbol_id(s.as_ref())));
        ids.push(EOS_ID);
        ids
    }

    fn prob_ids(&self, context: &[u32], symbol: u32) -> f64 {
        debug_assert_eq!(context.len(), self.order - 1);
        self.prob_level(self.order, context, symbol)
    }

    fn prob_level(&self, level: usize, context: &[u32], symbol: u32) -> f64 {
        let ctx = &context[context.len() + 1 - level..];
        let lower = if level == 1 {
            1.0 / self.predictable() as f64
        } else {
            self.prob_level(level - 1, context, symbol)
        };
        let table = &self.levels[level - 1];
        match table.contexts.get(ctx) {
            Some(&(total, types)) => {
                let mut gram = Vec::with_capacity(level);
                gram.extend_from_slice(ctx);
                gram.push(symbol);
                let c = table.counts.get(&gram).copied().unwrap_or(0) as f64;
                let d = table.discount;
                ((c - d).max(0.0) + d * types as f64 * lower) / total as f64
            }
            None => lower,
        }
    }

    /// Conditional probability of `symbol` after `history`; only the last
    /// `order - 1` history symbols matter, and missing ones are start pads.
    pub fn prob<S: AsRef<str>>(&self, history: &[S], symbol: &str) -> f64 {
        let context = self.context_ids(history);
        let id = if symbol == EOS { EOS_ID } else { self.symbol_id(symbol) };
        self.prob_ids(&context, id)
    }

    fn context_ids<S: AsRef<str>>(&self, history: &[S]) -> Vec<u32> {
        let n = self.order - 1;
        let mut context = vec![BOS_ID; n];
        let take = history.len().min(n);
        for (slot, s) in context[n - take..].iter_mut().zip(&history[history.len() - take..]) {
            *slot = if s.as_ref() == BOS { BOS_ID } else { self.symbol_id(s.as_ref()) };
        }
        context
    }

    /// Full conditional distribution over the predictable vocabulary, in vocab order
    /// with `<s>` omitted.
    pub fn distribution<S: AsRef<str>>(&self, history: &[S]) -> Vec<(String, f64)> {
        let context = self.context_ids(history);
        self.vocab
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, s)| (s.clone(), self.prob_ids(&context, i as u32)))
            .collect()
    }

    pub fn to_text(&self) -> Result<String> {
        let mut out = String::new();
        let _ = writeln!(out, "KN {} {}", self.order, self.vocab.len());
        for symbol in &self.vocab {
            if symbol.is_empty() || symbol.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("symbol {symbol:?} cannot be serialized")));
            }
            let _ = writeln!(out, "{symbol}");
        }
        for (k, level) in self.levels.iter().enumerate() {
            let mut grams: Vec<(&Vec<u32>, &u64)> = level.counts.iter().collect();
            grams.sort();
            for (gram, count) in grams {
                let _ = write!(out, "{}", k + 1);
                for &id in gram {
                    let _ = write!(out, " {}", self.vocab[id as usize]);
                }
                let _ = writeln!(out, " {count}");
            }
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
        let head: Vec<&str> = header.split(' ').collect();
        if head.len() != 3 || head[0] != "KN" {
            return Err(Error::parse(1, "expected 'KN <order> <vocab_size>'"));
        }
        let order: usize = head[1].parse().map_err(|_| Error::parse(1, "bad order"))?;
        let vocab_size: usize = head[2].parse().map_err(|_| Error::parse(1, "bad vocab size"))?;
        if order < 1 || vocab_size < 3 {
            return Err(Error::parse(1, "order must be >= 1 and vocab must hold the reserved symbols"));
        }
        let mut vocab = IndexSet::with_capacity(vocab_size);
        for _ in 0..vocab_size {
            let (i, line) = lines.next().ok_or_else(|| Error::parse(vocab_size + 1, "truncated vocabulary"))?;
            if !vocab.insert(line.to_string()) {
                return Err(Error::parse(i + 1, "duplicate vocabulary symbol"));
            }
        }
        if vocab.get_index_of(BOS) != Some(0) || vocab.get_index_of(EOS) != Some(1) || vocab.get_index_of(UNK) != Some(2) {
            return Err(Error::parse(2, "reserved symbols must come first"));
        }
        let mut tables: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(' ').collect();
            let bad = || Error::parse(i + 1, "malformed n-gram line");
            let level: usize = fields.first().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
            if level < 1 || level > order || fields.len() != level + 2 {
                return Err(bad());
            }
            let mut gram = Vec::with_capacity(level);
            for sym in &fields[1..=level] {
                gram.push(vocab.get_index_of(*sym).ok_or_else(bad)? as u32);
            }
            let count: u64 = fields[level + 1].parse().map_err(|_| bad())?;
            tables[level - 1].insert(gram, count);
        }
        if tables.iter().any(HashMap::is_empty) {
            return Err(Error::parse(vocab_size + 2, "every level needs at least one n-gram"));
        }
        let levels = tables.into_iter().map(Level::from_counts).collect();
        Ok(NGramModel { order, vocab, levels })
    }
}

fn count_top_level(padded: &[Vec<u32>], order: usize, threads: usize) -> HashMap<Vec<u32>, u64> {
    let count_chunk = |chunk: &[Vec<u32>]| {
        let mut counts: HashMap<Vec<u32>, u64> = HashMap::new();
        for ids in chunk {
            for gram in ids.windows(order) {
                *counts.entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
        counts
    };
    if threads <= 1 || padded.len() < 2 * threads {
        return count_chunk(padded);
    }
    let chunk = padded.len().div_ceil(threads);
    let shards: Vec<HashMap<Vec<u32>, u64>> = padded.par_chunks(chunk).map(count_chunk).collect();
    let mut merged = HashMap::new();
    for shard in shards {
        for (gram, c) in shard {
            *merged.entry(gram).or_insert(0) += c;
        }
    }
    merged
}

pub fn train_kn<S: AsRef<str>>(train: &[Vec<S>], order: usize) -> Result<NGramModel> {
    train_kn_with(train, order, &KnConfig::default())
}

pub fn train_kn_with<S: AsRef<str>>(train: &[Vec<S>], order: usize, config: &KnConfig) -> Result<NGramModel> {
    if order < 1 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    if train.is_empty() {
        return Err(Error::invalid("empty training data"));
    }
    if train.iter().any(Vec::is_empty) {
        return Err(Error::invalid("training sequences must be non-empty"));
    }

    let mut freq: IndexMap<&str, u64> = IndexMap::new();
    for seq in train {
        for s in seq {
            *freq.entry(s.as_ref()).or_insert(0) += 1;
        }
    }
    let mut vocab: IndexSet<String> = [BOS, EOS, UNK].iter().map(|s| s.to_string()).collect();
    for (symbol, &count) in &freq {
        if count >= config.min_count.max(1) && !vocab.contains(*symbol) {
            vocab.insert(symbol.to_string());
        }
    }

    let mut model = NGramModel { order, vocab, levels: Vec::new() };
    let padded: Vec<Vec<u32>> = train.iter().map(|s| model.padded_ids(s)).collect();

    let mut tables = vec![count_top_level(&padded, order, config.threads)];
    for k in (1..order).rev() {
        let mut cont: HashMap<Vec<u32>, u64> = HashMap::new();
        for gram in tables.last().unwrap().keys() {
            *cont.entry(gram[1..].to_vec()).or_insert(0) += 1;
        }
        debug_assert!(cont.keys().all(|g| g.len() == k));
        tables.push(cont);
    }
    tables.reverse();
    model.levels = tables.into_iter().map(Level::from_counts).collect();
    Ok(model)
}

/// How sentence ends enter the cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EndPolicy {
    /// `</s>` is a predicted symbol like any other.
    #[default]
    Predict,
    /// Sentence lengths are treated as given: `</s>` positions are skipped and
    /// the remaining mass is renormalized over the other symbols.
    Condition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyEstimate {
    pub nats_per_token: f64,
    pub token_count: u64,
    pub model_order: usize,
}

impl EntropyEstimate {
    pub fn bits_per_token(&self) -> f64 {
        self.nats_per_token / std::f64::consts::LN_2
    }
}

pub fn cross_entropy<S: AsRef<str>>(model: &NGramModel, heldout: &[Vec<S>]) -> Result<EntropyEstimate> {
    cross_entropy_with(model, heldout, EndPolicy::Predict)
}

pub fn cross_entropy_with<S: AsRef<str>>(
    model: &NGramModel,
    heldout: &[Vec<S>],
    policy: EndPolicy,
) -> Result<EntropyEstimate> {
    if heldout.is_empty() {
        return Err(Error::invalid("empty held-out data"));
    }
    let n = model.order - 1;
    let mut total = 0.0;
    let mut count = 0u64;
    for seq in heldout {
        let ids = model.padded_ids(seq);
        for i in n..ids.len() {
            let context = &ids[i - n..i];
            let symbol = ids[i];
            let p = match policy {
                EndPolicy::Predict => model.prob_ids(context, symbol),
                EndPolicy::Condition => {
                    if symbol == EOS_ID {
                        continue;
                    }
                    model.prob_ids(context, symbol) / (1.0 - model.prob_ids(context, EOS_ID))
                }
            };
            total -= p.ln();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("held-out data has no scored positions"));
    }
    Ok(EntropyEstimate { nats_per_token: total / count as f64, token_count: count, model_order: model.order })
}

/// Wraps a cross-entropy computed elsewhere, e.g. by a neural language model.
pub fn import_external_entropy(nats_per_token: f64, token_count: u64, name: &str) -> Result<EntropyEstimate> {
    if !nats_per_token.is_finite() || nats_per_token < 0.0 {
        return Err(Error::invalid(format!("entropy '{name}' must be finite and non-negative, got {nats_per_token}")));
    }
    Ok(EntropyEstimate { nats_per_token, token_count, model_order: 0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoEstimate {
    pub rho: f64,
    pub h_tags: EntropyEstimate,
    pub h_tokens: EntropyEstimate,
    pub estimator_name: String,
}

impl RhoEstimate {
    /// `H[T] / H[W]` before clamping to `[0, 1]`.
    pub fn raw_ratio(&self) -> f64 {
        self.h_tags.nats_per_token / self.h_tokens.nats_per_token
    }
}

pub fn rho_from_entropies(h_tags: EntropyEstimate, h_tokens: EntropyEstimate, name: &str) -> Result<RhoEstimate> {
    if !(h_tokens.nats_per_token > 0.0) {
        return Err(Error::invalid("token entropy must be positive"));
    }
    let rho = (h_tags.nats_per_token / h_tokens.nats_per_token).clamp(0.0, 1.0);
    Ok(RhoEstimate { rho, h_tags, h_tokens, estimator_name: name.to_string() })
}

#[derive(Debug, Clone)]
pub struct RhoConfig {
    pub order: usize,
    pub train_fraction: f64,
    pub heldout_fraction: f64,
    pub token_min_count: u64,
    pub tag_min_count: u64,
    pub end_policy: EndPolicy,
    pub threads: usize,
}

impl Default for RhoConfig {
    fn default() -> Self {
        RhoConfig {
            order: 3,
            train_fraction: 0.9,
            heldout_fraction: 0.1,
            token_min_count: 2,
            tag_min_count: 1,
            end_policy: EndPolicy::Condition,
            threads: 1,
        }
    }
}

/// Sentence-index split shared by the token and tag models.
pub fn split_sentences(n: usize, train_fraction: f64, heldout_fraction: f64) -> Result<(std::ops::Range<usize>, std::ops::Range<usize>)> {
    if !(train_fraction > 0.0 && heldout_fraction > 0.0 && train_fraction + heldout_fraction <= 1.0 + 1e-12) {
        return Err(Error::invalid(format!("invalid split {train_fraction}/{heldout_fraction}")));
    }
    let n_train = (n as f64 * train_fraction).floor() as usize;
    let n_held = ((n as f64 * heldout_fraction).floor() as usize).min(n - n_train.min(n));
    if n_train == 0 || n_held == 0 {
        return Err(Error::invalid(format!("degenerate split of {n} sentences into {n_train} train / {n_held} held-out")));
    }
    Ok((0..n_train, n_train..n_train + n_held))
}

/// Estimates `rho = H[T] / H[W]` with one KN model per sequence kind.
pub fn estimate_rho(corpus: &AnnotatedCorpus, config: &RhoConfig) -> Result<RhoEstimate> {
    if corpus.sentences.len() < 2 {
        return Err(Error::invalid("need at least two sentences to estimate rho"));
    }
    let (train, held) = split_sentences(corpus.sentences.len(), config.train_fraction, config.heldout_fraction)?;
    let tokens = corpus.token_sequences();
    let tags = corpus.tag_sequences();
    let h_tokens = fit_and_score(&tokens[train.clone()], &tokens[held.clone()], config, config.token_min_count)?;
    let h_tags = fit_and_score(&tags[train], &tags[held], config, config.tag_min_count)?;
    rho_from_entropies(h_tags, h_tokens, &format!("KN-{}", config.order))
}

/// Like [`estimate_rho`] but reuses a token entropy that does not change along a ladder.
pub fn estimate_rho_given_tokens(corpus: &AnnotatedCorpus, h_tokens: EntropyEstimate, config: &RhoConfig) -> Result<RhoEstimate> {
    let (train, held) = split_sentences(corpus.sentences.len(), config.train_fraction, config.heldout_fraction)?;
    let tags = corpus.tag_sequences();
    let h_tags = fit_and_score(&tags[train], &tags[held], config, config.tag_min_count)?;
    rho_from_entropies(h_tags, h_tokens, &format!("KN-{}", config.order))
}

pub fn token_entropy(corpus: &AnnotatedCorpus, config: &RhoConfig) -> Result<EntropyEstimate> {
    let (train, held) = split_sentences(corpus.sentences.len(), config.train_fraction, config.heldout_fraction)?;
    let tokens = corpus.token_sequences();
    fit_and_score(&tokens[train], &tokens[held], config, config.token_min_count)
}

fn fit_and_score(train: &[Vec<String>], held: &[Vec<String>], config: &RhoConfig, min_count: u64) -> Result<EntropyEstimate> {
    let model = train_kn_with(train, config.order, &KnConfig { min_count, threads: config.threads })?;
    cross_entropy_with(&model, held, config.end_policy)
}

/// `sequence_kind<TAB>nats_per_token<TAB>tokens` rows; `bits` rescales by `1/ln 2`.
pub fn entropy_report(rows: &[(&str, EntropyEstimate)], bits: bool) -> String {
    let mut out = String::new();
    for (kind, est) in rows {
        let value = if bits { est.bits_per_token() } else { est.nats_per_token };
        let _ = writeln!(out, "{kind}\t{value:.6}\t{}", est.token_count);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seqs(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| l.split_whitespace().map(String::from).collect()).collect()
    }

    #[test]
    fn rejects_bad_training_input() {
        let empty: Vec<Vec<String>> = Vec::new();
        assert!(train_kn(&empty, 3).is_err());
        assert!(train_kn(&seqs(&["a b"]), 0).is_err());
    }

    #[test]
    fn single_symbol_smoke() {
        let m = train_kn(&seqs(&["a"]), 1).unwrap();
        let none: [&str; 0] = [];
        assert!(m.prob(&none, "a") > 0.0);
        assert!(m.prob(&none, EOS) > 0.0);
    }

    #[test]
    fn repeated_pattern_trigram_has_one_ambiguous_context() {
        // After "a b" the trigram sees both "a" and "</s>" equally often, so two of the
        // five predicted positions cost ln 2 each; everything else is near certain.
        let train = seqs(&vec!["a b a b"; 200]);
        let held = seqs(&["a b a b"]);
        let m = train_kn(&train, 3).unwrap();
        let h = cross_entropy(&m, &held).unwrap();
        let exact = 2.0 * std::f64::consts::LN_2 / 5.0;
        assert!((h.nats_per_token - exact).abs() < 0.01, "{}", h.nats_per_token);

        let m4 = train_kn(&train, 4).unwrap();
        let h4 = cross_entropy(&m4, &held).unwrap();
        assert!(h4.nats_per_token <= 0.1, "{}", h4.nats_per_token);
    }

    #[test]
    fn uniform_source_unigram_approaches_ln4() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alphabet = ["a", "b", "c", "d"];
        let make = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<String>> {
            (0..n).map(|_| (0..200).map(|_| alphabet[rng.random_range(0..4)].to_string()).collect()).collect()
        };
        let train = make(&mut rng, 200);
        let held = make(&mut rng, 50);
        let m = train_kn(&train, 1).unwrap();
        let h = cross_entropy_with(&m, &held, EndPolicy::Condition).unwrap();
        assert!((h.nats_per_token - 4f64.ln()).abs() < 0.05, "{}", h.nats_per_token);
    }

    #[test]
    fn single_tag_sequences_are_nearly_free() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tags: Vec<Vec<String>> = (0..100).map(|_| vec!["X".to_string(); rng.random_range(5..40)]).collect();
        let m = train_kn(&tags[..90], 3).unwrap();
        let h = cross_entropy_with(&m, &tags[90..], EndPolicy::Condition).unwrap();
        assert!(h.nats_per_token <= 0.02, "{}", h.nats_per_token);
    }

    #[test]
    fn distributions_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let alphabet = ["a", "b", "c", "d", "e", "f"];
        let train: Vec<Vec<String>> = (0..60)
            .map(|_| (0..rng.random_range(1..12)).map(|_| alphabet[rng.random_range(0..6)].to_string()).collect())
            .collect();
        for order in 1..=4 {
            let m = train_kn(&train, order).unwrap();
            for d in m.discounts() {
                assert!((0.0..1.0).contains(&d));
            }
            for _ in 0..100 {
                let len = rng.random_range(0..5);
                let history: Vec<&str> = (0..len).map(|_| alphabet[rng.random_range(0..6)]).collect();
                let dist = m.distribution(&history);
                let sum: f64 = dist.iter().map(|(_, p)| p).sum();
                assert!((sum - 1.0).abs() < 1e-9, "order {order}: {sum}");
                assert!(dist.iter().all(|(_, p)| *p > 0.0));
            }
        }
    }

    #[test]
    fn unseen_symbols_score_as_unk() {
        let m = train_kn_with(&seqs(&["a a b", "a c"]), 2, &KnConfig { min_count: 2, threads: 1 }).unwrap();
        assert!(!m.vocab().contains("b"));
        assert_eq!(m.prob(&["a"], "zzz"), m.prob(&["a"], UNK));
        assert_eq!(m.prob(&["a"], "b"), m.prob(&["a"], UNK));
    }

    #[test]
    fn serialization_round_trips() {
        let m = train_kn(&seqs(&["the cat sat", "the dog sat down", "a cat"]), 3).unwrap();
        let text = m.to_text().unwrap();
        assert!(text.starts_with("KN 3 "));
        let back = NGramModel::from_text(&text).unwrap();
        assert_eq!(back.to_text().unwrap(), text);
        assert_eq!(back.prob(&["the", "cat"], "sat"), m.prob(&["the", "cat"], "sat"));
    }

    #[test]
    fn sharded_counting_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train: Vec<Vec<String>> =
            (0..400).map(|_| (0..rng.random_range(1..20)).map(|_| format!("w{}", rng.random_range(0..30))).collect()).collect();
        let single = train_kn_with(&train, 3, &KnConfig { min_count: 1, threads: 1 }).unwrap();
        let sharded = train_kn_with(&train, 3, &KnConfig { min_count: 1, threads: 4 }).unwrap();
        assert_eq!(single, sharded);
    }

    #[test]
    fn external_entropy_validation() {
        assert_eq!(import_external_entropy(0.0, 100, "const").unwrap().nats_per_token, 0.0);
        assert!(import_external_entropy(-1.0, 10, "bad").is_err());
    }

    #[test]
    fn external_estimates_combine_into_rho() {
        let tags = import_external_entropy(2.1, 1000, "tags").unwrap();
        let tokens = import_external_entropy(5.0, 1000, "tokens").unwrap();
        let r = rho_from_entropies(tags, tokens, "external").unwrap();
        assert!((r.rho - 0.42).abs() < 1e-12);
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        assert!(split_sentences(10, 0.9, 0.05).is_err());
        assert!(split_sentences(10, 0.0, 0.5).is_err());
        assert!(split_sentences(10, 0.8, 0.3).is_err());
        assert_eq!(split_sentences(10, 0.9, 0.1).unwrap(), (0..9, 9..10));
    }

    #[test]
    fn report_rows() {
        let e = EntropyEstimate { nats_per_token: std::f64::consts::LN_2, token_count: 5, model_order: 3 };
        assert_eq!(entropy_report(&[("tags", e)], true), "tags\t1.000000\t5\n");
    }
}
