//! Skip-gram with negative sampling, plus full-softmax evaluation and refitting
//! of the output layer against fixed input vectors.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Read};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Whether `sqrt(t/f) + t/f` is read as the probability of keeping a token or of
/// discarding it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubsampleRule {
    #[default]
    Keep,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Plain SGD with a linearly decaying learning rate.
    Sgd { learning_rate: f64 },
    /// Lazy Adam: moments of a row are only updated when the row is touched.
    Adam { learning_rate: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Sgd { learning_rate: 0.025 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub window: usize,
    pub min_count: u64,
    pub subsample_t: f64,
    pub batch: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub subsample_rule: SubsampleRule,
    /// More than one thread trains lock-free and is not reproducible.
    pub threads: usize,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 200,
            epochs: 15,
            negatives: 5,
            window: 5,
            min_count: 5,
            subsample_t: 1e-4,
            batch: 1024,
            seed: 42,
            optimizer: Optimizer::default(),
            subsample_rule: SubsampleRule::Keep,
            threads: 1,
        }
    }
}

impl SgnsConfig {
    fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::invalid(format!("dim must be at least 2, got {}", self.dim)));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("negatives", self.negatives),
            ("window", self.window),
            ("batch", self.batch),
            ("threads", self.threads),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.min_count == 0 || !(self.subsample_t > 0.0) {
            return Err(Error::invalid("min_count and subsample_t must be positive"));
        }
        let lr = match self.optimizer {
            Optimizer::Sgd { learning_rate } | Optimizer::Adam { learning_rate } => learning_rate,
        };
        if !(lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.threads > 1 && matches!(self.optimizer, Optimizer::Adam { .. }) {
            return Err(Error::invalid("Adam training is single-threaded"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vocab: Vec<String>,
    index: HashMap<String, usize>,
    /// `|V| x d` word vectors.
    pub input_vectors: DMatrix<f64>,
    /// `|V| x d` context vectors.
    pub output_vectors: DMatrix<f64>,
    /// Output bias, zero for negative-sampling training and learned by refitting.
    pub output_bias: DVector<f64>,
    pub unigram_counts: Vec<u64>,
}

impl EmbeddingSet {
    pub fn new(
        vocab: Vec<String>,
        input_vectors: DMatrix<f64>,
        output_vectors: DMatrix<f64>,
        output_bias: DVector<f64>,
        unigram_counts: Vec<u64>,
    ) -> Result<Self> {
        let v = vocab.len();
        for (rows, what) in [
            (input_vectors.nrows(), "input rows"),
            (output_vectors.nrows(), "output rows"),
            (output_bias.len(), "bias length"),
            (unigram_counts.len(), "count length"),
        ] {
            if rows != v {
                return Err(Error::invalid(format!("{what} {rows} != vocabulary size {v}")));
            }
        }
        if input_vectors.ncols() != output_vectors.ncols() {
            return Err(Error::DimensionMismatch { expected: input_vectors.ncols(), got: output_vectors.ncols() });
        }
        if input_vectors.iter().chain(output_vectors.iter()).chain(output_bias.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("embedding matrices"));
        }
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect::<HashMap<_, _>>();
        if index.len() != v {
            return Err(Error::invalid("duplicate vocabulary entries"));
        }
        Ok(EmbeddingSet { vocab, index, input_vectors, output_vectors, output_bias, unigram_counts })
    }

    pub fn dim(&self) -> usize {
        self.input_vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn with_input_vectors(&self, input: DMatrix<f64>) -> Result<EmbeddingSet> {
        if input.nrows() != self.len() || input.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.len() * self.dim(), got: input.nrows() * input.ncols() });
        }
        EmbeddingSet::new(
            self.vocab.clone(),
            input,
            self.output_vectors.clone(),
            self.output_bias.clone(),
            self.unigram_counts.clone(),
        )
    }

    /// Writes `input.vec`, `output.vec`, `bias.vec` and `vocab.tsv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("input.vec"), format_vectors(&self.vocab, &self.input_vectors))?;
        std::fs::write(dir.join("output.vec"), format_vectors(&self.vocab, &self.output_vectors))?;
        let bias = DMatrix::from_column_slice(self.len(), 1, self.output_bias.as_slice());
        std::fs::write(dir.join("bias.vec"), format_vectors(&self.vocab, &bias))?;
        let mut counts = String::new();
        for (w, c) in self.vocab.iter().zip(&self.unigram_counts) {
            let _ = writeln!(counts, "{w}\t{c}");
        }
        std::fs::write(dir.join("vocab.tsv"), counts)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<EmbeddingSet> {
        let (vocab, input) = parse_vectors(&std::fs::read_to_string(dir.join("input.vec"))?)?;
        let (out_vocab, output) = parse_vectors(&std::fs::read_to_string(dir.join("output.vec"))?)?;
        if out_vocab != vocab {
            return Err(Error::invalid("input and output vector files disagree on vocabulary"));
        }
        let bias = match std::fs::read_to_string(dir.join("bias.vec")) {
            Ok(text) => {
                let (bias_vocab, b) = parse_vectors(&text)?;
                if bias_vocab != vocab || b.ncols() != 1 {
                    return Err(Error::invalid("bias file does not match vocabulary"));
                }
                DVector::from_column_slice(b.as_slice())
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => DVector::zeros(vocab.len()),
            Err(e) => return Err(e.into()),
        };
        let counts = match std::fs::read_to_string(dir.join("vocab.tsv")) {
            Ok(text) => {
                let mut counts = Vec::with_capacity(vocab.len());
                for (i, line) in text.lines().enumerate() {
                    let (w, c) = line.split_once('\t').ok_or_else(|| Error::parse(i + 1, "expected token<TAB>count"))?;
                    if vocab.get(i).map(String::as_str) != Some(w) {
                        return Err(Error::parse(i + 1, "vocabulary order mismatch"));
                    }
                    counts.push(c.parse().map_err(|_| Error::parse(i + 1, "bad count"))?);
                }
                counts
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => vec![1; vocab.len()],
            Err(e) => return Err(e.into()),
        };
        EmbeddingSet::new(vocab, input, output, bias, counts)
    }
}

/// Classic text embedding format: `<vocab_size> <dim>` then `token v1 .. vd`.
pub fn format_vectors(vocab: &[String], m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", m.nrows(), m.ncols());
    for (i, w) in vocab.iter().enumerate() {
        out.push_str(w);
        for j in 0..m.ncols() {
            let _ = write!(out, " {}", m[(i, j)]);
        }
        out.push('\n');
    }
    out
}

pub fn parse_vectors(text: &str) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
    let mut head = header.split_whitespace();
    let (rows, cols) = match (head.next(), head.next(), head.next()) {
        (Some(r), Some(c), None) => (
            r.parse::<usize>().map_err(|_| Error::parse(1, "bad vocab size"))?,
            c.parse::<usize>().map_err(|_| Error::parse(1, "bad dimension"))?,
        ),
        _ => return Err(Error::parse(1, "expected '<vocab_size> <dim>'")),
    };
    let mut vocab = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default();
        let before = data.len();
        for f in fields {
            data.push(f.parse::<f64>().map_err(|_| Error::parse(i + 2, format!("bad number '{f}'")))?);
        }
        if data.len() - before != cols {
            return Err(Error::parse(i + 2, format!("expected {cols} values, found {}", data.len() - before)));
        }
        vocab.push(word.to_string());
    }
    if vocab.len() != rows {
        return Err(Error::parse(rows + 1, format!("expected {rows} rows, found {}", vocab.len())));
    }
    Ok((vocab, DMatrix::from_row_slice(rows, cols, &data)))
}

/// Whitespace tokenization of raw text.
pub fn read_raw_tokens<R: Read>(mut reader: R) -> Result<Vec<String>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    Ok(text.split_whitespace().map(String::from).collect())
}

pub fn read_raw_tokens_buffered<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for line in reader.lines() {
        tokens.extend(line?.split_whitespace().map(String::from));
    }
    Ok(tokens)
}

/// Probability of keeping a token of relative frequency `f`.
pub fn keep_probability(f: f64, t: f64, rule: SubsampleRule) -> f64 {
    let p = ((t / f).sqrt() + t / f).min(1.0);
    match rule {
        SubsampleRule::Keep => p,
        SubsampleRule::Discard => 1.0 - p,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStats {
    /// Mean negative-sampling loss per (center, context) pair, per epoch.
    pub epoch_losses: Vec<f64>,
}

fn build_vocab<S: AsRef<str>>(tokens: &[S], min_count: u64) -> (Vec<String>, Vec<u64>) {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.into_iter().map(|(w, c)| (w.to_string(), c)).unzip()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-ln sigmoid(x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Row-major parameter storage shared by the exact and lock-free trainers.
trait Rows {
    fn load(&self, row: usize, out: &mut [f64]);
    fn store(&mut self, row: usize, src: &[f64]);
}

struct PlainRows<'a> {
    data: &'a mut [f64],
    dim: usize,
}

impl Rows for PlainRows<'_> {
    fn load(&self, row: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.data[row * self.dim..(row + 1) * self.dim]);
    }

    fn store(&mut self, row: usize, src: &[f64]) {
        self.data[row * self.dim..(row + 1) * self.dim].copy_from_slice(src);
    }
}

struct SharedRows<'a> {
    data: &'a [AtomicU64],
    dim: usize,
}

impl Rows for SharedRows<'_> {
    fn load(&self, row: usize, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.data[row * self.dim..(row + 1) * self.dim]) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn store(&mut self, row: usize, src: &[f64]) {
        for (a, s) in self.data[row * self.dim..(row + 1) * self.dim].iter().zip(src) {
            a.store(s.to_bits(), Ordering::Relaxed);
        }
    }
}

struct AdamState {
    m_in: Vec<f64>,
    v_in: Vec<f64>,
    m_out: Vec<f64>,
    v_out: Vec<f64>,
    step: u64,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, step: u64) {
    let c1 = 1.0 - ADAM_B1.powi(step as i32);
    let c2 = 1.0 - ADAM_B2.powi(step as i32);
    for i in 0..param.len() {
        m[i] = ADAM_B1 * m[i] + (1.0 - ADAM_B1) * grad[i];
        v[i] = ADAM_B2 * v[i] + (1.0 - ADAM_B2) * grad[i] * grad[i];
        param[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
    }
}

struct Scratch {
    w: Vec<f64>,
    c: Vec<f64>,
    grad_w: Vec<f64>,
    grad_c: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch { w: vec![0.0; dim], c: vec![0.0; dim], grad_w: vec![0.0; dim], grad_c: vec![0.0; dim] }
    }
}

/// One positive pair plus `negatives` noise words. Returns the pair's loss.
#[allow(clippy::too_many_arguments)]
fn train_pair<R: Rows, G: Rng>(
    input: &mut R,
    output: &mut R,
    center: usize,
    context: usize,
    negatives: usize,
    noise: &WeightedIndex<f64>,
    rng: &mut G,
    lr: f64,
    adam: Option<&mut AdamState>,
    s: &mut Scratch,
) -> f64 {
    let dim = s.w.len();
    input.load(center, &mut s.w);
    s.grad_w.fill(0.0);
    let mut loss = 0.0;
    let mut adam = adam;
    if let Some(state) = adam.as_deref_mut() {
        state.step += 1;
    }
    for k in 0..=negatives {
        let (target, label) = if k == 0 {
            (context, 1.0)
        } else {
            let t = noise.sample(rng);
            if t == context {
                continue;
            }
            (t, 0.0)
        };
        output.load(target, &mut s.c);
        let f: f64 = s.w.iter().zip(&s.c).map(|(a, b)| a * b).sum();
        loss += if label > 0.0 { neg_log_sigmoid(f) } else { neg_log_sigmoid(-f) };
        // d loss / d f
        let g = sigmoid(f) - label;
        for i in 0..dim {
            s.grad_w[i] += g * s.c[i];
        }
        match adam.as_deref_mut() {
            None => {
                for i in 0..dim {
                    s.c[i] -= lr * g * s.w[i];
                }
            }
            Some(state) => {
                for i in 0..dim {
                    s.grad_c[i] = g * s.w[i];
                }
                let r = target * dim..(target + 1) * dim;
                let step = state.step;
                adam_update(&mut s.c, &s.grad_c, &mut state.m_out[r.clone()], &mut state.v_out[r], lr, step);
            }
        }
        output.store(target, &s.c);
    }
    match adam {
        None => {
            for i in 0..dim {
                s.w[i] -= lr * s.grad_w[i];
            }
        }
        Some(state) => {
            let r = center * dim..(center + 1) * dim;
            let step = state.step;
            adam_update(&mut s.w, &s.grad_w, &mut state.m_in[r.clone()], &mut state.v_in[r], lr, step);
        }
    }
    input.store(center, &s.w);
    loss
}

fn subsample<G: Rng>(ids: &[usize], keep: &[f64], rng: &mut G) -> Vec<usize> {
    ids.iter().copied().filter(|&w| keep[w] >= 1.0 || rng.random::<f64>() < keep[w]).collect()
}

/// Trains one pass over `kept`; returns (summed loss, pair count).
#[allow(clippy::too_many_arguments)]
fn train_span<R: Rows, G: Rng>(
    kept: &[usize],
    input: &mut R,
    output: &mut R,
    config: &SgnsConfig,
    noise: &WeightedIndex<f64>,
    rng: &mut G,
    lr_at: &dyn Fn(usize) -> f64,
    mut adam: Option<&mut AdamState>,
) -> (f64, u64) {
    let mut scratch = Scratch::new(config.dim);
    let mut loss = 0.0;
    let mut pairs = 0u64;
    let mut lr = lr_at(0);
    for (pos, &center) in kept.iter().enumerate() {
        if pos % config.batch == 0 {
            lr = lr_at(pos);
        }
        let b = rng.random_range(1..=config.window);
        let lo = pos.saturating_sub(b);
        let hi = (pos + b).min(kept.len() - 1);
        for ctx_pos in lo..=hi {
            if ctx_pos == pos {
                continue;
            }
            loss += train_pair(
                input,
                output,
                center,
                kept[ctx_pos],
                config.negatives,
                noise,
                rng,
                lr,
                adam.as_deref_mut(),
                &mut scratch,
            );
            pairs += 1;
        }
    }
    (loss, pairs)
}

pub fn train_sgns<S: AsRef<str>>(raw_tokens: &[S], config: &SgnsConfig) -> Result<EmbeddingSet> {
    train_sgns_with_stats(raw_tokens, config).map(|(e, _)| e)
}

pub fn train_sgns_with_stats<S: AsRef<str>>(raw_tokens: &[S], config: &SgnsConfig) -> Result<(EmbeddingSet, TrainStats)> {
    config.validate()?;
    let (vocab, counts) = build_vocab(raw_tokens, config.min_count);
    let index: HashMap<&str, usize> = vocab.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let ids: Vec<usize> = raw_tokens.iter().filter_map(|t| index.get(t.as_ref()).copied()).collect();
    if ids.len() < 10 * config.window || vocab.len() < 2 {
        return Err(Error::CorpusTooSmall(format!(
            "{} tokens over {} types after min_count={} filtering (need at least {} tokens)",
            ids.len(),
            vocab.len(),
            config.min_count,
            10 * config.window
        )));
    }

    let v = vocab.len();
    let dim = config.dim;
    let total: f64 = counts.iter().sum::<u64>() as f64;
    let keep: Vec<f64> =
        counts.iter().map(|&c| keep_probability(c as f64 / total, config.subsample_t, config.subsample_rule)).collect();
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75))).expect("positive counts");

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut input: Vec<f64> = (0..v * dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64).collect();
    let mut output = vec![0.0; v * dim];
    let mut adam = match config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m_in: vec![0.0; v * dim],
            v_in: vec![0.0; v * dim],
            m_out: vec![0.0; v * dim],
            v_out: vec![0.0; v * dim],
            step: 0,
        }),
        Optimizer::Sgd { .. } => None,
    };

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let kept = subsample(&ids, &keep, &mut rng);
        if kept.len() < 2 {
            epoch_losses.push(f64::NAN);
            continue;
        }
        let n_kept = kept.len();
        let epochs = config.epochs as f64;
        let (loss, pairs) = match config.optimizer {
            Optimizer::Adam { learning_rate } => {
                let lr_at = |_: usize| learning_rate;
                let mut inp = PlainRows { data: &mut input, dim };
                let mut out = PlainRows { data: &mut output, dim };
                train_span(&kept, &mut inp, &mut out, config, &noise, &mut rng, &lr_at, adam.as_mut())
            }
            Optimizer::Sgd { learning_rate } if config.threads <= 1 => {
                let lr_at = |pos: usize| {
                    let progress = (epoch as f64 + pos as f64 / n_kept as f64) / epochs;
                    learning_rate * (1.0 - progress).max(1e-4)
                };
                let mut inp = PlainRows { data: &mut input, dim };
                let mut out = PlainRows { data: &mut output, dim };
                train_span(&kept, &mut inp, &mut out, config, &noise, &mut rng, &lr_at, None)
            }
            Optimizer::Sgd { learning_rate } => {
                let seeds: Vec<u64> = (0..config.threads).map(|_| rng.random()).collect();
                hogwild_epoch(&kept, &mut input, &mut output, config, &noise, &seeds, |pos| {
                    let progress = (epoch as f64 + pos as f64 / n_kept as f64) / epochs;
                    learning_rate * (1.0 - progress).max(1e-4)
                })
            }
        };
        epoch_losses.push(if pairs > 0 { loss / pairs as f64 } else { f64::NAN });
    }

    let emb = EmbeddingSet::new(
        vocab,
        DMatrix::from_row_slice(v, dim, &input),
        DMatrix::from_row_slice(v, dim, &output),
        DVector::zeros(v),
        counts,
    )?;
    Ok((emb, TrainStats { epoch_losses }))
}

fn hogwild_epoch(
    kept: &[usize],
    input: &mut [f64],
    output: &mut [f64],
    config: &SgnsConfig,
    noise: &WeightedIndex<f64>,
    seeds: &[u64],
    lr_at: impl Fn(usize) -> f64 + Sync,
) -> (f64, u64) {
    let dim = config.dim;
    let shared_in: Vec<AtomicU64> = input.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
    let shared_out: Vec<AtomicU64> = output.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
    let chunk = kept.len().div_ceil(seeds.len());
    let results: Vec<(f64, u64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = kept
            .chunks(chunk)
            .zip(seeds)
            .enumerate()
            .map(|(t, (span, &seed))| {
                let (shared_in, shared_out, lr_at) = (&shared_in, &shared_out, &lr_at);
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut inp = SharedRows { data: shared_in, dim };
                    let mut out = SharedRows { data: shared_out, dim };
                    let offset = t * chunk;
                    let lr = |pos: usize| lr_at(offset + pos);
                    train_span(span, &mut inp, &mut out, config, noise, &mut rng, &lr, None)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    for (dst, a) in input.iter_mut().zip(&shared_in) {
        *dst = f64::from_bits(a.load(Ordering::Relaxed));
    }
    for (dst, a) in output.iter_mut().zip(&shared_out) {
        *dst = f64::from_bits(a.load(Ordering::Relaxed));
    }
    results.into_iter().fold((0.0, 0), |acc, r| (acc.0 + r.0, acc.1 + r.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    NegativeSampling,
    FullSoftmax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub objective: Objective,
    pub nats_per_prediction: f64,
    pub predictions: u64,
}

/// Aggregated (center, context) pair counts over a token stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Cooccurrence {
    /// Centers that occur in at least one pair, ascending.
    pub centers: Vec<usize>,
    /// `centers.len() x |V|` pair counts.
    pub counts: DMatrix<f64>,
    pub pairs: u64,
}

impl Cooccurrence {
    /// Counts every pair of in-vocabulary tokens at distance `1..=window`.
    pub fn from_tokens<S: AsRef<str>>(emb: &EmbeddingSet, tokens: &[S], window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("window must be positive"));
        }
        let ids: Vec<Option<usize>> = tokens.iter().map(|t| emb.id(t.as_ref())).collect();
        let mut sparse: HashMap<(usize, usize), u64> = HashMap::new();
        for (i, c) in ids.iter().enumerate() {
            let Some(c) = *c else { continue };
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(ids.len().saturating_sub(1));
            for (j, o) in ids.iter().enumerate().take(hi + 1).skip(lo) {
                if j == i {
                    continue;
                }
                if let Some(o) = *o {
                    *sparse.entry((c, o)).or_insert(0) += 1;
                }
            }
        }
        if sparse.is_empty() {
            return Err(Error::invalid("no in-vocabulary (center, context) pairs"));
        }
        let mut centers: Vec<usize> = sparse.keys().map(|k| k.0).collect();
        centers.sort_unstable();
        centers.dedup();
        let row: HashMap<usize, usize> = centers.iter().enumerate().map(|(r, &c)| (c, r)).collect();
        let mut counts = DMatrix::zeros(centers.len(), emb.len());
        let mut pairs = 0;
        for ((c, o), n) in sparse {
            counts[(row[&c], o)] = n as f64;
            pairs += n;
        }
        Ok(Cooccurrence { centers, counts, pairs })
    }

    fn center_totals(&self) -> DVector<f64> {
        DVector::from_iterator(self.centers.len(), self.counts.row_iter().map(|r| r.sum()))
    }
}

fn gather_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

/// Row-wise log-sum-exp of `logits`, overwriting `logits` with softmax probabilities.
fn softmax_rows(logits: &mut DMatrix<f64>) -> DVector<f64> {
    let mut lse = DVector::zeros(logits.nrows());
    for (r, mut row) in logits.row_iter_mut().enumerate() {
        let max = row.max();
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        row /= sum;
        lse[r] = max + sum.ln();
    }
    lse
}

fn logits(inputs: &DMatrix<f64>, output: &DMatrix<f64>, bias: &DVector<f64>) -> DMatrix<f64> {
    let mut z = inputs * output.transpose();
    for mut row in z.row_iter_mut() {
        row += bias.transpose();
    }
    z
}

/// Mean full-softmax cross-entropy of the pairs in `cooc`.
pub fn full_softmax_loss(input: &DMatrix<f64>, output: &DMatrix<f64>, bias: &DVector<f64>, cooc: &Cooccurrence) -> f64 {
    let w = gather_rows(input, &cooc.centers);
    let mut z = logits(&w, output, bias);
    let raw = z.clone();
    let lse = softmax_rows(&mut z);
    let mut total = 0.0;
    for r in 0..cooc.centers.len() {
        for (o, &n) in cooc.counts.row(r).iter().enumerate() {
            if n > 0.0 {
                total += n * (lse[r] - raw[(r, o)]);
            }
        }
    }
    total / cooc.pairs as f64
}

/// Negative-sampling loss with the noise term taken in expectation over the
/// `unigram^(3/4)` distribution, so the value is deterministic.
pub fn negative_sampling_loss(emb: &EmbeddingSet, cooc: &Cooccurrence, negatives: usize) -> f64 {
    let noise: Vec<f64> = emb.unigram_counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let z_noise: f64 = noise.iter().sum();
    let w = gather_rows(&emb.input_vectors, &cooc.centers);
    let scores = &w * emb.output_vectors.transpose();
    let mut total = 0.0;
    for r in 0..cooc.centers.len() {
        let row = scores.row(r);
        let expected_neg: f64 =
            row.iter().zip(&noise).map(|(&s, &q)| q / z_noise * neg_log_sigmoid(-s)).sum::<f64>() * negatives as f64;
        for (o, &n) in cooc.counts.row(r).iter().enumerate() {
            if n > 0.0 {
                total += n * (neg_log_sigmoid(row[o]) + expected_neg);
            }
        }
    }
    total / cooc.pairs as f64
}

pub fn eval_loss<S: AsRef<str>>(
    emb: &EmbeddingSet,
    heldout_tokens: &[S],
    objective: Objective,
    window: usize,
    negatives: usize,
) -> Result<LossReport> {
    let cooc = Cooccurrence::from_tokens(emb, heldout_tokens, window)?;
    Ok(eval_cooccurrence(emb, &cooc, objective, negatives))
}

pub fn eval_cooccurrence(emb: &EmbeddingSet, cooc: &Cooccurrence, objective: Objective, negatives: usize) -> LossReport {
    let nats = match objective {
        Objective::FullSoftmax => full_softmax_loss(&emb.input_vectors, &emb.output_vectors, &emb.output_bias, cooc),
        Objective::NegativeSampling => negative_sampling_loss(emb, cooc, negatives),
    };
    LossReport { objective, nats_per_prediction: nats, predictions: cooc.pairs }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefitConfig {
    pub window: usize,
    pub max_iters: usize,
    /// Stop once the gradient's max-abs entry falls below this.
    pub tolerance: f64,
    /// Keep the input vectors fixed (only the softmax layer is trained).
    pub frozen: bool,
    /// Input covariance eigenvalues at or below this are treated as zero.
    pub variance_floor: f64,
}

impl Default for RefitConfig {
    fn default() -> Self {
        RefitConfig { window: 5, max_iters: 400, tolerance: 1e-6, frozen: true, variance_floor: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefitOutcome {
    pub embeddings: EmbeddingSet,
    pub train_loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration for the top eigenvalue of a symmetric PSD matrix.
fn top_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = w / norm;
        if (next - lambda).abs() <= 1e-10 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Weighted centering and whitening of `rows` on their span: returns
/// `z = (rows - mean) S` with unit covariance, `S` (`d x rank`) and the mean.
fn whiten(rows: &DMatrix<f64>, weights: &DVector<f64>, total: f64, floor: f64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let d = rows.ncols();
    let mut mean = DVector::zeros(d);
    for (r, row) in rows.row_iter().enumerate() {
        mean += row.transpose() * (weights[r] / total);
    }
    let mut centered = rows.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut scaled = centered.clone();
    for (r, mut row) in scaled.row_iter_mut().enumerate() {
        row *= weights[r] / total;
    }
    let cov = centered.transpose() * scaled;
    let eig = SymmetricEigen::new(cov);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = (1e-10 * top).max(floor);
    let keep: Vec<usize> = (0..d).filter(|&i| top > 0.0 && eig.eigenvalues[i] > cutoff).collect();
    let s = DMatrix::from_fn(d, keep.len(), |i, k| eig.eigenvectors[(i, keep[k])] / eig.eigenvalues[keep[k]].sqrt());
    (centered * &s, s, mean)
}

/// Refits the softmax output layer (and bias) to predict context words from
/// `filtered_inputs`, by accelerated full-batch gradient descent on the
/// aggregated pair counts of `corpus`.
pub fn refit_output_layer<S: AsRef<str>>(
    emb: &EmbeddingSet,
    filtered_inputs: &DMatrix<f64>,
    corpus: &[S],
    config: &RefitConfig,
) -> Result<RefitOutcome> {
    let cooc = Cooccurrence::from_tokens(emb, corpus, config.window)?;
    refit_on_cooccurrence(emb, filtered_inputs, &cooc, config)
}

pub fn refit_on_cooccurrence(
    emb: &EmbeddingSet,
    filtered_inputs: &DMatrix<f64>,
    cooc: &Cooccurrence,
    config: &RefitConfig,
) -> Result<RefitOutcome> {
    if filtered_inputs.nrows() != emb.len() {
        return Err(Error::DimensionMismatch { expected: emb.len(), got: filtered_inputs.nrows() });
    }
    if filtered_inputs.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("filtered inputs"));
    }
    let v = emb.len();
    let n_pairs = cooc.pairs as f64;
    let totals = cooc.center_totals();
    let mut w = gather_rows(filtered_inputs, &cooc.centers);
    // With frozen inputs the optimum only depends on their affine span, so the
    // fit runs on whitened coordinates and is mapped back afterwards.
    let whitening = if config.frozen {
        let (z, s, mean) = whiten(&w, &totals, n_pairs, config.variance_floor);
        w = z;
        Some((s, mean))
    } else {
        None
    };
    let d = w.ncols();

    // Logit Hessian is bounded by I/2, so L <= lambda_max(E[x x^T]) / 2 with x = [w; 1].
    let mut second = DMatrix::zeros(d + 1, d + 1);
    for r in 0..w.nrows() {
        let mut x = DVector::zeros(d + 1);
        x.rows_mut(0, d).copy_from(&w.row(r).transpose());
        x[d] = 1.0;
        second += (&x * x.transpose()) * (totals[r] / n_pairs);
    }
    let lipschitz = 0.5 * top_eigenvalue(&second);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let mut out = DMatrix::<f64>::zeros(v, d);
    let mut bias = DVector::<f64>::zeros(v);
    let mut out_prev = out.clone();
    let mut bias_prev = bias.clone();
    let mut w_prev = w.clone();
    let mut momentum = 1.0f64;
    let mut last_loss = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..config.max_iters {
        iterations = it + 1;
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        let y_out = &out + (&out - &out_prev) * beta;
        let y_bias = &bias + (&bias - &bias_prev) * beta;
        let y_w = if config.frozen { w.clone() } else { &w + (&w - &w_prev) * beta };

        let mut probs = logits(&y_w, &y_out, &y_bias);
        let raw = probs.clone();
        let lse = softmax_rows(&mut probs);
        let mut loss = 0.0;
        // residual = (n_c * p - counts) / N
        let mut resid = probs;
        for r in 0..resid.nrows() {
            for o in 0..v {
                let n = cooc.counts[(r, o)];
                if n > 0.0 {
                    loss += n * (lse[r] - raw[(r, o)]);
                }
                resid[(r, o)] = (totals[r] * resid[(r, o)] - n) / n_pairs;
            }
        }
        loss /= n_pairs;
        let grad_out = resid.transpose() * &y_w;
        let grad_bias = DVector::from_iterator(v, resid.column_iter().map(|c| c.sum()));
        let grad_w = if config.frozen { None } else { Some(&resid * &y_out) };
        let gmax = grad_out
            .amax()
            .max(grad_bias.amax())
            .max(grad_w.as_ref().map(|g| g.amax()).unwrap_or(0.0));
        if gmax < config.tolerance {
            converged = true;
            out = y_out;
            bias = y_bias;
            w = y_w;
            break;
        }

        // adaptive restart when the objective goes up
        let restart = loss > last_loss;
        last_loss = loss;
        out_prev = std::mem::replace(&mut out, &y_out - grad_out * step);
        bias_prev = std::mem::replace(&mut bias, &y_bias - grad_bias * step);
        if let Some(gw) = grad_w {
            w_prev = std::mem::replace(&mut w, &y_w - gw * step);
        }
        momentum = if restart { 1.0 } else { next_momentum };
    }

    if let Some((s, mean)) = whitening {
        out = &out * s.transpose();
        bias -= &out * mean;
    }
    let mut inputs = filtered_inputs.clone();
    if !config.frozen {
        for (r, &c) in cooc.centers.iter().enumerate() {
            inputs.row_mut(c).copy_from(&w.row(r));
        }
    }
    let final_loss = full_softmax_loss(&inputs, &out, &bias, cooc);
    let embeddings = EmbeddingSet::new(emb.vocab.clone(), inputs, out, bias, emb.unigram_counts.clone())?;
    Ok(RefitOutcome { embeddings, train_loss: final_loss, iterations, converged })
}
