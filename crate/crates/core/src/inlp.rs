//! Iterative nullspace projection.
//!
//! A linear probe is trained to predict the tag from the vector; the vectors
//! are then projected onto the nullspace of the probe's weight matrix, and the
//! loop repeats until no probe beats the majority class by more than `epsilon`.
//! The product of the projections is the filter applied to every word vector
//! before the softmax layer is refit and the loss increase is measured.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::annotations::{token_tag_counts, AnnotatedCorpus};
use crate::error::{Error, Result};
use crate::seqmodel::RhoEstimate;
use crate::sgns::{refit_on_cooccurrence, Cooccurrence, EmbeddingSet, Objective, RefitConfig};

const RANK_CUTOFF: f64 = 1e-10;

/// Embedding rows paired with tag labels. A row of weight `k` stands for `k`
/// identical occurrences.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVectors {
    pub x: DMatrix<f64>,
    pub y: Vec<usize>,
    pub weights: Vec<f64>,
    pub tagset: Vec<String>,
}

impl LabeledVectors {
    pub fn new(x: DMatrix<f64>, labels: &[String]) -> Result<Self> {
        let weights = vec![1.0; labels.len()];
        Self::weighted(x, labels, weights)
    }

    pub fn weighted(x: DMatrix<f64>, labels: &[String], weights: Vec<f64>) -> Result<Self> {
        if x.nrows() != labels.len() || weights.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: labels.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("probe inputs"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("row weights must be positive"));
        }
        let mut tagset: Vec<String> = Vec::new();
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut y = Vec::with_capacity(labels.len());
        for label in labels {
            let id = *index.entry(label.as_str()).or_insert_with(|| {
                tagset.push(label.clone());
                tagset.len() - 1
            });
            y.push(id);
        }
        if tagset.is_empty() {
            return Err(Error::invalid("no labeled rows"));
        }
        Ok(LabeledVectors { x, y, weights, tagset })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn classes(&self) -> usize {
        self.tagset.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Weighted accuracy of always predicting the most frequent tag.
    pub fn majority(&self) -> f64 {
        let mut per_class = vec![0.0; self.classes()];
        for (&y, &w) in self.y.iter().zip(&self.weights) {
            per_class[y] += w;
        }
        per_class.iter().cloned().fold(0.0, f64::max) / self.total_weight()
    }

    fn with_x(&self, x: DMatrix<f64>) -> LabeledVectors {
        LabeledVectors { x, y: self.y.clone(), weights: self.weights.clone(), tagset: self.tagset.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeKind {
    /// Multinomial (or, for two classes, binary) logistic regression.
    #[default]
    Logistic,
    /// One-vs-rest squared hinge loss, an SVM-style linear classifier.
    Hinge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    pub l2: f64,
    pub max_epochs: usize,
    pub grad_tolerance: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { kind: ProbeKind::Logistic, l2: 1e-4, max_epochs: 500, grad_tolerance: 1e-5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    /// One row per class, or a single row for two classes.
    pub u: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub train_accuracy: f64,
    pub kind: ProbeKind,
    pub epochs: usize,
}

impl LinearProbe {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let scores = scores(x, &self.u, &self.bias);
        (0..scores.nrows())
            .map(|r| {
                if scores.ncols() == 1 {
                    usize::from(scores[(r, 0)] > 0.0)
                } else {
                    scores.row(r).transpose().argmax().0
                }
            })
            .collect()
    }

    pub fn accuracy(&self, data: &LabeledVectors) -> f64 {
        let correct: f64 = self
            .predict(&data.x)
            .iter()
            .zip(&data.y)
            .zip(&data.weights)
            .filter(|((p, y), _)| p == y)
            .map(|(_, w)| w)
            .sum();
        correct / data.total_weight()
    }
}

fn scores(x: &DMatrix<f64>, u: &DMatrix<f64>, bias: &DVector<f64>) -> DMatrix<f64> {
    let mut s = x * u.transpose();
    for mut row in s.row_iter_mut() {
        row += bias.transpose();
    }
    s
}

/// Weighted mean loss and its gradient with respect to the scores.
fn loss_and_score_grad(kind: ProbeKind, s: &DMatrix<f64>, data: &LabeledVectors) -> (f64, DMatrix<f64>) {
    let total = data.total_weight();
    let k = s.ncols();
    let mut grad = DMatrix::zeros(s.nrows(), k);
    let mut loss = 0.0;
    for r in 0..s.nrows() {
        let w = data.weights[r] / total;
        let y = data.y[r];
        match (kind, k) {
            (ProbeKind::Logistic, 1) => {
                let z = s[(r, 0)];
                let t = if y == 1 { 1.0 } else { 0.0 };
                let p = 1.0 / (1.0 + (-z).exp());
                loss += w * if t > 0.0 { softplus(-z) } else { softplus(z) };
                grad[(r, 0)] = w * (p - t);
            }
            (ProbeKind::Logistic, _) => {
                let row = s.row(r);
                let max = row.max();
                let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
                let lse = max + sum.ln();
                loss += w * (lse - s[(r, y)]);
                for j in 0..k {
                    let p = (s[(r, j)] - lse).exp();
                    grad[(r, j)] = w * (p - if j == y { 1.0 } else { 0.0 });
                }
            }
            (ProbeKind::Hinge, _) => {
                for j in 0..k {
                    let positive = if k == 1 { y == 1 } else { y == j };
                    let t = if positive { 1.0 } else { -1.0 };
                    let margin = (1.0 - t * s[(r, j)]).max(0.0);
                    loss += w * margin * margin;
                    grad[(r, j)] = -2.0 * w * t * margin;
                }
            }
        }
    }
    (loss, grad)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Weighted mean and covariance of the rows.
fn weighted_moments(data: &LabeledVectors) -> (DVector<f64>, DMatrix<f64>) {
    let total = data.total_weight();
    let mut mean = DVector::zeros(data.dim());
    for (r, row) in data.x.row_iter().enumerate() {
        mean += row.transpose() * (data.weights[r] / total);
    }
    let mut cov = DMatrix::zeros(data.dim(), data.dim());
    let mut centered = DVector::zeros(data.dim());
    for (r, row) in data.x.row_iter().enumerate() {
        centered.copy_from(&(row.transpose() - &mean));
        cov.ger(data.weights[r] / total, &centered, &centered, 1.0);
    }
    (mean, cov)
}

/// Fits a linear probe by accelerated full-batch gradient descent.
///
/// The objective is the weighted mean loss plus `l2/2 |U|^2`. It is minimized
/// over `U = V M` with `M = (cov + l2 I)^(-1/2)` on centered inputs; the bias
/// absorbs the mean, so the minimizer is unchanged but the problem is well
/// conditioned. Tolerance applies to the gradient in these coordinates.
pub fn train_probe(data: &LabeledVectors, config: &ProbeConfig) -> Result<LinearProbe> {
    if data.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe inputs"));
    }
    if data.len() < data.classes() {
        return Err(Error::invalid("fewer rows than classes"));
    }
    let d = data.dim();
    let c = data.classes();
    let rows = if c == 2 { 1 } else { c };
    if c == 1 {
        return Ok(LinearProbe { u: DMatrix::zeros(1, d), bias: DVector::zeros(1), train_accuracy: 1.0, kind: config.kind, epochs: 0 });
    }
    if !(config.l2 > 0.0) {
        return Err(Error::invalid("probe l2 must be positive"));
    }

    let (mean, cov) = weighted_moments(data);
    let eig = SymmetricEigen::new(cov);
    let inv_sqrt = DVector::from_iterator(d, eig.eigenvalues.iter().map(|&l| 1.0 / (l.max(0.0) + config.l2).sqrt()));
    let q = &eig.eigenvectors;
    let m = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    let m2 = q * DMatrix::from_diagonal(&inv_sqrt.map(|v| v * v)) * q.transpose();
    let mut z = data.x.clone();
    for mut row in z.row_iter_mut() {
        row -= mean.transpose();
    }
    let z = z * &m;
    let zdata = data.with_x(z);

    // M cov M <= I and l2 M^2 <= I; the bias column has unit second moment.
    let curvature = match (config.kind, rows) {
        (ProbeKind::Logistic, 1) => 0.25,
        (ProbeKind::Logistic, _) => 0.5,
        (ProbeKind::Hinge, _) => 2.0,
    };
    let top_reg = config.l2 * inv_sqrt.iter().map(|v| v * v).fold(0.0, f64::max);
    let step = 1.0 / (curvature + top_reg);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = Normal::new(0.0, 0.01).expect("valid normal");
    let mut v = DMatrix::from_fn(rows, d, |_, _| init.sample(&mut rng));
    let mut b = DVector::zeros(rows);
    let mut v_prev = v.clone();
    let mut b_prev = b.clone();
    let mut t = 1.0f64;
    let mut last = f64::INFINITY;
    let mut epochs = 0;
    for epoch in 0..config.max_epochs {
        epochs = epoch + 1;
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        let yv = &v + (&v - &v_prev) * beta;
        let yb = &b + (&b - &b_prev) * beta;
        let s = scores(&zdata.x, &yv, &yb);
        let (loss, gs) = loss_and_score_grad(config.kind, &s, &zdata);
        let reg_grad = &yv * &m2 * config.l2;
        let objective = loss + 0.5 * yv.dot(&reg_grad);
        let gv = gs.transpose() * &zdata.x + reg_grad;
        let gb = DVector::from_iterator(rows, gs.column_iter().map(|col| col.sum()));
        if gv.amax().max(gb.amax()) < config.grad_tolerance {
            v = yv;
            b = yb;
            break;
        }
        let restart = objective > last;
        last = objective;
        v_prev = std::mem::replace(&mut v, &yv - gv * step);
        b_prev = std::mem::replace(&mut b, &yb - gb * step);
        t = if restart { 1.0 } else { t_next };
    }

    let u = &v * &m;
    let bias = b - &u * &mean;
    let mut probe = LinearProbe { u, bias, train_accuracy: 0.0, kind: config.kind, epochs };
    if probe.u.iter().chain(probe.bias.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe weights"));
    }
    probe.train_accuracy = probe.accuracy(data);
    Ok(probe)
}

/// Orthogonal projector onto `null(U)`, from the SVD of `U`.
pub fn nullspace_projection(u: &DMatrix<f64>) -> DMatrix<f64> {
    let d = u.ncols();
    let basis = row_space_basis(u);
    let mut p = DMatrix::identity(d, d);
    for v in &basis {
        p.ger(-1.0, v, v, 1.0);
    }
    symmetrize(&mut p);
    p
}

fn row_space_basis(u: &DMatrix<f64>) -> Vec<DVector<f64>> {
    if u.nrows() == 0 || u.iter().all(|&x| x == 0.0) {
        return Vec::new();
    }
    let svd = u.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let max = svd.singular_values.max();
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > RANK_CUTOFF * max)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect()
}

pub fn matrix_rank(m: &DMatrix<f64>) -> usize {
    row_space_basis(m).len()
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

fn gram_top(x: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(x.transpose() * x).eigenvalues.amax()
}

/// Projector onto the span of the data rows. Directions whose Gram eigenvalue
/// is below `RANK_CUTOFF * scale` count as removed, where `scale` is the top
/// eigenvalue of the unprojected data; rounding residue of earlier
/// projections is not treated as signal.
fn span_projector(x: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let d = x.ncols();
    let gram = x.transpose() * x;
    let eig = SymmetricEigen::new(gram);
    let mut p = DMatrix::zeros(d, d);
    if scale == 0.0 {
        return p;
    }
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > RANK_CUTOFF * scale {
            let v = eig.eigenvectors.column(i).into_owned();
            p.ger(1.0, &v, &v, 1.0);
        }
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionStack {
    pub projections: Vec<DMatrix<f64>>,
    /// `P_k ... P_1`.
    pub composed: DMatrix<f64>,
}

impl ProjectionStack {
    pub fn identity(d: usize) -> Self {
        ProjectionStack { projections: Vec::new(), composed: DMatrix::identity(d, d) }
    }

    pub fn push(&mut self, p: DMatrix<f64>) {
        self.composed = &p * &self.composed;
        self.projections.push(p);
    }

    pub fn dim(&self) -> usize {
        self.composed.nrows()
    }

    /// Applies the filter to row vectors: `x~^T = x^T (P_k ... P_1)^T`.
    pub fn apply_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x * self.composed.transpose()
    }

    /// One `P <d>` block per projection, in application order.
    pub fn to_text(&self) -> String {
        self.projections.iter().map(format_projection).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut blocks = parse_projections(text)?;
        let d = match blocks.first() {
            Some(p) => p.nrows(),
            None => return Err(Error::parse(1, "no projection blocks")),
        };
        let mut stack = ProjectionStack::identity(d);
        for p in blocks.drain(..) {
            if p.nrows() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.nrows() });
            }
            stack.push(p);
        }
        Ok(stack)
    }
}

/// `P <d>` header followed by `d` rows of 17-significant-digit reals.
pub fn format_projection(p: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "P {}", p.nrows());
    for r in 0..p.nrows() {
        let row: Vec<String> = p.row(r).iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn parse_projections(text: &str) -> Result<Vec<DMatrix<f64>>> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    while let Some((i, header)) = lines.next() {
        let d: usize = header
            .strip_prefix("P ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::parse(i + 1, "expected 'P <d>'"))?;
        let mut data = Vec::with_capacity(d * d);
        for _ in 0..d {
            let (j, row) = lines.next().ok_or_else(|| Error::parse(i + 1, "truncated projection"))?;
            let before = data.len();
            for f in row.split_whitespace() {
                data.push(f.parse::<f64>().map_err(|_| Error::parse(j + 1, format!("bad number '{f}'")))?);
            }
            if data.len() - before != d {
                return Err(Error::parse(j + 1, format!("expected {d} values")));
            }
        }
        out.push(DMatrix::from_row_slice(d, d, &data));
    }
    Ok(out)
}

/// Diagnostics of a projector: `max|P^2 - P|`, `max|P - P^T|`, and the largest
/// distance of an eigenvalue from {0, 1}.
pub fn projector_defects(p: &DMatrix<f64>) -> (f64, f64, f64) {
    let idem = (p * p - p).amax();
    let sym = (p - p.transpose()).amax();
    let mut s = p.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s).eigenvalues;
    let spread = eig.iter().map(|&l| l.abs().min((l - 1.0).abs())).fold(0.0, f64::max);
    (idem, sym, spread)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlpConfig {
    pub epsilon: f64,
    /// Defaults to the embedding dimension.
    pub max_iters: Option<usize>,
    pub probe: ProbeConfig,
}

impl Default for InlpConfig {
    fn default() -> Self {
        InlpConfig { epsilon: 0.01, max_iters: None, probe: ProbeConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlpResult {
    pub stack: ProjectionStack,
    /// Number of projections applied.
    pub iterations: usize,
    pub final_probe_accuracy: f64,
    pub majority: f64,
    pub filtered: DMatrix<f64>,
    pub converged: bool,
    /// Probe accuracy at each iteration, including the final check.
    pub accuracies: Vec<f64>,
    /// Probe weights `U_i` behind each projection, restricted to the data span.
    pub directions: Vec<DMatrix<f64>>,
}

pub fn run_inlp(data: &LabeledVectors, config: &InlpConfig) -> Result<InlpResult> {
    let majority = data.majority();
    let max_iters = config.max_iters.unwrap_or(data.dim());
    let scale = gram_top(&data.x);
    let mut stack = ProjectionStack::identity(data.dim());
    let mut current = data.clone();
    let mut accuracies = Vec::new();
    let mut directions = Vec::new();
    let mut converged = false;

    for it in 0..=max_iters {
        let probe_cfg = ProbeConfig { seed: config.probe.seed.wrapping_add(it as u64), ..config.probe.clone() };
        let probe = train_probe(&current, &probe_cfg)?;
        accuracies.push(probe.train_accuracy);
        if probe.train_accuracy <= majority + config.epsilon {
            converged = true;
            break;
        }
        if it == max_iters {
            break;
        }
        // Components of U outside the data span do not affect the probe.
        let u = &probe.u * span_projector(&current.x, scale);
        if matrix_rank(&u) == 0 {
            break;
        }
        let p = nullspace_projection(&u);
        current = current.with_x(&current.x * &p);
        stack.push(p);
        directions.push(u);
    }

    Ok(InlpResult {
        iterations: stack.projections.len(),
        final_probe_accuracy: *accuracies.last().expect("at least one probe"),
        majority,
        filtered: current.x,
        stack,
        converged,
        accuracies,
        directions,
    })
}

/// Probe data from an annotation: each in-vocabulary `(token, tag)` pair becomes
/// one row holding the token's input vector, weighted by its occurrence count.
/// Returns the data and the fraction of annotated tokens that are in vocabulary.
pub fn labeled_from_annotation(emb: &EmbeddingSet, annotation: &AnnotatedCorpus) -> Result<(LabeledVectors, f64)> {
    let counts = token_tag_counts(annotation);
    let mut pairs: Vec<((String, String), u64)> = counts.into_iter().collect();
    pairs.sort();
    let total: u64 = pairs.iter().map(|p| p.1).sum();
    let mut covered = 0u64;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    for ((token, tag), n) in pairs {
        if let Some(id) = emb.id(&token) {
            covered += n;
            rows.push(id);
            labels.push(tag);
            weights.push(n as f64);
        }
    }
    let coverage = if total == 0 { 0.0 } else { covered as f64 / total as f64 };
    if rows.is_empty() {
        return Err(Error::Coverage { coverage, required: 0.0 });
    }
    let x = DMatrix::from_fn(rows.len(), emb.dim(), |r, c| emb.input_vectors[(rows[r], c)]);
    Ok((LabeledVectors::weighted(x, &labels, weights)?, coverage))
}

fn input_variance_top(emb: &EmbeddingSet) -> f64 {
    let x = &emb.input_vectors;
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    gram_top(&centered) / x.nrows().max(1) as f64
}

/// Held-out full-softmax loss of refit output layers, with the unfiltered
/// refit as the baseline.
#[derive(Debug, Clone)]
pub struct LossBench {
    pub embeddings: EmbeddingSet,
    refit_pairs: Cooccurrence,
    eval_pairs: Cooccurrence,
    pub refit: RefitConfig,
    pub baseline_loss: f64,
}

impl LossBench {
    pub fn new<S: AsRef<str>>(emb: EmbeddingSet, refit_tokens: &[S], heldout_tokens: &[S], refit: RefitConfig) -> Result<Self> {
        let refit_pairs = Cooccurrence::from_tokens(&emb, refit_tokens, refit.window)?;
        // variance left by projections below this is rounding residue
        let refit = RefitConfig { variance_floor: refit.variance_floor.max(RANK_CUTOFF * input_variance_top(&emb)), ..refit };
        let eval_pairs = Cooccurrence::from_tokens(&emb, heldout_tokens, refit.window)?;
        let mut bench = LossBench { embeddings: emb, refit_pairs, eval_pairs, refit, baseline_loss: 0.0 };
        bench.baseline_loss = bench.heldout_loss(&bench.embeddings.input_vectors.clone())?;
        Ok(bench)
    }

    /// Refits the softmax layer on `inputs` and returns the held-out loss.
    pub fn heldout_loss(&self, inputs: &DMatrix<f64>) -> Result<f64> {
        let fit = refit_on_cooccurrence(&self.embeddings, inputs, &self.refit_pairs, &self.refit)?;
        Ok(crate::sgns::eval_cooccurrence(&fit.embeddings, &self.eval_pairs, Objective::FullSoftmax, 0).nats_per_prediction)
    }

    pub fn delta_for(&self, stack: &ProjectionStack) -> Result<f64> {
        if stack.projections.is_empty() {
            return Ok(0.0);
        }
        let filtered = stack.apply_rows(&self.embeddings.input_vectors);
        Ok(self.heldout_loss(&filtered)? - self.baseline_loss)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaLoss {
    pub rho: RhoEstimate,
    pub delta: f64,
    pub result: InlpResult,
    pub coverage: f64,
}

#[derive(Debug, Clone)]
pub struct DeltaConfig {
    pub inlp: InlpConfig,
    pub min_coverage: f64,
}

impl Default for DeltaConfig {
    fn default() -> Self {
        DeltaConfig { inlp: InlpConfig::default(), min_coverage: 0.8 }
    }
}

/// Removes `annotation` from the bench's embeddings and measures the loss increase.
pub fn delta_loss(bench: &LossBench, annotation: &AnnotatedCorpus, rho: RhoEstimate, config: &DeltaConfig) -> Result<DeltaLoss> {
    let (data, coverage) = labeled_from_annotation(&bench.embeddings, annotation)?;
    if coverage < config.min_coverage {
        return Err(Error::Coverage { coverage, required: config.min_coverage });
    }
    let result = run_inlp(&data, &config.inlp)?;
    let delta = bench.delta_for(&result.stack)?;
    Ok(DeltaLoss { rho, delta, result, coverage })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn labels(ys: &[usize]) -> Vec<String> {
        ys.iter().map(|y| format!("c{y}")).collect()
    }

    #[test]
    fn separable_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200;
        let ys: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(n, 2, |r, c| {
            let centre = if ys[r] == 0 { -3.0 } else { 3.0 };
            if c == 0 { centre + rng.random::<f64>() - 0.5 } else { rng.random::<f64>() - 0.5 }
        });
        let data = LabeledVectors::new(x, &labels(&ys)).unwrap();
        let probe = train_probe(&data, &ProbeConfig::default()).unwrap();
        assert_eq!(probe.train_accuracy, 1.0);
        let hinge = train_probe(&data, &ProbeConfig { kind: ProbeKind::Hinge, ..ProbeConfig::default() }).unwrap();
        assert_eq!(hinge.train_accuracy, 1.0);
    }

    #[test]
    fn random_labels_stay_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 400;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let ys: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(n, 5, |_, _| normal.sample(&mut rng));
        let data = LabeledVectors::new(x, &labels(&ys)).unwrap();
        let probe = train_probe(&data, &ProbeConfig::default()).unwrap();
        assert!(probe.train_accuracy <= 0.5 + 3.0 / (n as f64).sqrt(), "{}", probe.train_accuracy);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 0.0, 1.0]);
        assert!(LabeledVectors::new(x, &labels(&[0, 1])).is_err());
    }

    #[test]
    fn axis_projection() {
        let p = nullspace_projection(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert!((p - DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).amax() < 1e-15);
        let id = nullspace_projection(&DMatrix::zeros(3, 4));
        assert_eq!(id, DMatrix::identity(4, 4));
    }

    #[test]
    fn random_full_rank_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let u = DMatrix::from_fn(3, 10, |_, _| normal.sample(&mut rng));
        let p = nullspace_projection(&u);
        assert_eq!(matrix_rank(&p), 7);
        for _ in 0..100 {
            let x = DVector::from_fn(10, |_, _| normal.sample(&mut rng));
            assert!((&u * (&p * x)).norm() <= 1e-8);
        }
        let (idem, sym, spread) = projector_defects(&p);
        assert!(idem <= 1e-8 && sym == 0.0 && spread <= 1e-6);
    }

    #[test]
    fn projection_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = DMatrix::from_fn(2, 5, |_, _| rng.random::<f64>());
        let mut stack = ProjectionStack::identity(5);
        stack.push(nullspace_projection(&u));
        stack.push(nullspace_projection(&DMatrix::from_row_slice(1, 5, &[0.0, 0.0, 1.0, 0.0, 0.0])));
        let text = stack.to_text();
        assert!(text.starts_with("P 5\n"));
        let back = ProjectionStack::from_text(&text).unwrap();
        assert_eq!(back, stack);
    }

    #[test]
    fn constant_labels_need_no_iterations() {
        let x = DMatrix::from_fn(10, 3, |r, c| (r * 3 + c) as f64);
        let data = LabeledVectors::new(x, &vec!["A".to_string(); 10]).unwrap();
        let res = run_inlp(&data, &InlpConfig::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.majority, 1.0);
        assert!(res.converged);
    }

    #[test]
    fn linear_labels_in_plane_leave_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 200;
        let x = DMatrix::from_fn(n, 2, |_, _| normal.sample(&mut rng));
        let ys: Vec<usize> = (0..n).map(|r| usize::from(x[(r, 0)] + 2.0 * x[(r, 1)] > 0.0)).collect();
        let data = LabeledVectors::new(x, &labels(&ys)).unwrap();
        let res = run_inlp(&data, &InlpConfig::default()).unwrap();
        assert!((1..=2).contains(&res.iterations), "{}", res.iterations);
        assert!(matrix_rank(&res.stack.composed) <= 1);
        assert!(res.final_probe_accuracy <= res.majority + 0.01);
    }

    #[test]
    fn composed_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 300;
        let x = DMatrix::from_fn(n, 6, |_, _| normal.sample(&mut rng));
        let ys: Vec<usize> = (0..n).map(|r| if x[(r, 0)] > 0.5 { 2 } else if x[(r, 1)] > 0.0 { 1 } else { 0 }).collect();
        let data = LabeledVectors::new(x, &labels(&ys)).unwrap();
        let res = run_inlp(&data, &InlpConfig::default()).unwrap();
        assert!(res.converged);
        let c = &res.stack.composed;
        assert!((c * c - c).amax() <= 1e-8);
        for p in &res.stack.projections {
            let (idem, sym, spread) = projector_defects(p);
            assert!(idem <= 1e-8 && sym <= 1e-12 && spread <= 1e-6);
        }
    }
}
