//! Exact information theory on small discrete worlds.
//!
//! A world is a distribution over sentence outcomes `w` together with
//! deterministic maps giving the annotation `T(w)`, the embedding `x(w)` and the
//! filtered embedding `x~(w)`. Everything is computed by enumeration in double
//! precision, in nats.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

pub use crate::stats::{slope_t_test, RegressionResult};

/// Tolerance for exact identities.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePMF {
    pub outcomes: Vec<String>,
    pub probs: Vec<f64>,
}

impl DiscretePMF {
    pub fn new(outcomes: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.len() != probs.len() || probs.is_empty() {
            return Err(Error::invalid("pmf needs one probability per outcome"));
        }
        check_probabilities(&probs)?;
        Ok(DiscretePMF { outcomes, probs })
    }

    /// Outcomes labelled `0..k`.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let outcomes = (0..probs.len()).map(|i| i.to_string()).collect();
        Self::new(outcomes, probs)
    }

    pub fn uniform(k: usize) -> Self {
        Self::from_probs(vec![1.0 / k as f64; k]).expect("uniform pmf is valid")
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn check_probabilities<'a>(probs: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    let mut total = 0.0;
    for &p in probs {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::invalid(format!("probability {p} is not a finite non-negative number")));
        }
        total += p;
    }
    if (total - 1.0).abs() > IDENTITY_TOL {
        return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    pub outcomes_x: Vec<String>,
    pub outcomes_y: Vec<String>,
    /// `|X| x |Y|`.
    pub probs: DMatrix<f64>,
}

impl DiscreteJoint {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty joint"));
        }
        check_probabilities(probs.iter())?;
        Ok(DiscreteJoint {
            outcomes_x: (0..probs.nrows()).map(|i| i.to_string()).collect(),
            outcomes_y: (0..probs.ncols()).map(|i| i.to_string()).collect(),
            probs,
        })
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.probs.row_iter().map(|r| r.sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        self.probs.column_iter().map(|c| c.sum()).collect()
    }

    /// Product of the marginals.
    pub fn independent_version(&self) -> DiscreteJoint {
        let px = self.marginal_x();
        let py = self.marginal_y();
        DiscreteJoint {
            outcomes_x: self.outcomes_x.clone(),
            outcomes_y: self.outcomes_y.clone(),
            probs: DMatrix::from_fn(px.len(), py.len(), |i, j| px[i] * py[j]),
        }
    }

    /// Joint of `X` and `f(Y)`.
    pub fn map_y(&self, f: &[usize]) -> Result<DiscreteJoint> {
        if f.len() != self.probs.ncols() {
            return Err(Error::invalid("map must be defined on every Y outcome"));
        }
        let k = f.iter().max().map_or(0, |m| m + 1);
        let mut probs = DMatrix::zeros(self.probs.nrows(), k);
        for i in 0..self.probs.nrows() {
            for (j, &fj) in f.iter().enumerate() {
                probs[(i, fj)] += self.probs[(i, j)];
            }
        }
        Ok(DiscreteJoint {
            outcomes_x: self.outcomes_x.clone(),
            outcomes_y: (0..k).map(|i| i.to_string()).collect(),
            probs,
        })
    }

    pub fn transpose(&self) -> DiscreteJoint {
        DiscreteJoint {
            outcomes_x: self.outcomes_y.clone(),
            outcomes_y: self.outcomes_x.clone(),
            probs: self.probs.transpose(),
        }
    }
}

fn plogp_sum<'a>(probs: impl IntoIterator<Item = &'a f64>) -> f64 {
    -probs.into_iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

pub fn entropy(p: &DiscretePMF) -> f64 {
    plogp_sum(&p.probs)
}

pub fn joint_entropy(j: &DiscreteJoint) -> f64 {
    plogp_sum(j.probs.iter())
}

/// `H[Y | X] = -sum p(x, y) ln p(y | x)`.
pub fn conditional_entropy(j: &DiscreteJoint) -> f64 {
    let px = j.marginal_x();
    let mut h = 0.0;
    for (i, &pxi) in px.iter().enumerate() {
        for &p in j.probs.row(i).iter() {
            if p > 0.0 {
                h -= p * (p / pxi).ln();
            }
        }
    }
    h
}

pub fn mutual_information(j: &DiscreteJoint) -> f64 {
    let px = j.marginal_x();
    let py = j.marginal_y();
    let mut mi = 0.0;
    for i in 0..px.len() {
        for (k, &pyk) in py.iter().enumerate() {
            let p = j.probs[(i, k)];
            if p > 0.0 {
                mi += p * (p / (px[i] * pyk)).ln();
            }
        }
    }
    mi
}

fn entropy_of(probs: &[f64]) -> f64 {
    plogp_sum(probs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).fold(0.0, f64::max)
    }
}

/// Checks the entropy and mutual-information properties on `(X, Y)` and the
/// deterministic map `f` applied to `Y`.
pub fn verify_properties(j: &DiscreteJoint, f: &[usize]) -> Result<PropertyReport> {
    let hx = entropy_of(&j.marginal_x());
    let hy = entropy_of(&j.marginal_y());
    let hxy = joint_entropy(j);
    let h_y_given_x = conditional_entropy(j);
    let h_x_given_y = conditional_entropy(&j.transpose());
    let mi = mutual_information(j);

    let xf = j.map_y(f)?;
    let hfy = entropy_of(&xf.marginal_y());
    let mi_f = mutual_information(&xf);
    // joint of (Y, f(Y))
    let ny = j.probs.ncols();
    let y_fy = DiscreteJoint::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(j.marginal_y())))
        .and_then(|d| d.map_y(&(0..ny).map(|k| f[k]).collect::<Vec<_>>()))?;
    let h_fy_given_y = conditional_entropy(&y_fy);
    let mi_indep = mutual_information(&j.independent_version());

    let mut checks = Vec::new();
    let mut push = |name, residual: f64| {
        checks.push(PropertyCheck { name, passed: residual <= IDENTITY_TOL, residual: residual.max(0.0) });
    };
    push("entropy_of_function", hfy - hy);
    push("function_has_zero_conditional_entropy", h_fy_given_y.abs());
    push("mi_equals_hx_minus_hx_given_y", (mi - (hx - h_x_given_y)).abs());
    push("mi_equals_hy_minus_hy_given_x", (mi - (hy - h_y_given_x)).abs());
    push("mi_nonnegative", -mi);
    push("independent_has_zero_mi", mi_indep.abs());
    push("data_processing", mi_f - mi);
    push("joint_entropy_identity", (hxy - (hx + hy - mi)).abs());
    Ok(PropertyReport { checks })
}

/// A distribution over sentence outcomes with deterministic annotation,
/// embedding and filtered-embedding maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWorld {
    pub w_pmf: DiscretePMF,
    pub f_t: Vec<usize>,
    pub g_x: Vec<usize>,
    pub h_xtilde: Vec<usize>,
}

impl DiscreteWorld {
    pub fn new(w_pmf: DiscretePMF, f_t: Vec<usize>, g_x: Vec<usize>, h_xtilde: Vec<usize>) -> Result<Self> {
        let k = w_pmf.len();
        for (name, map) in [("T", &f_t), ("X", &g_x), ("XT", &h_xtilde)] {
            if map.len() != k {
                return Err(Error::InvalidWorld(format!("map {name} has {} entries for {k} outcomes", map.len())));
            }
        }
        let world = DiscreteWorld { w_pmf, f_t, g_x, h_xtilde };
        if world.h_w() <= 0.0 {
            return Err(Error::InvalidWorld("H[W] must be positive".into()));
        }
        let leak = mutual_information(&world.joint(&world.f_t, &world.h_xtilde));
        if leak > IDENTITY_TOL {
            return Err(Error::InvalidWorld(format!("I[T; x~] = {leak:e} is not zero")));
        }
        Ok(world)
    }

    pub fn k(&self) -> usize {
        self.w_pmf.len()
    }

    pub fn identity_map(&self) -> Vec<usize> {
        (0..self.k()).collect()
    }

    /// Joint distribution of `(a(W), b(W))`.
    pub fn joint(&self, a: &[usize], b: &[usize]) -> DiscreteJoint {
        let na = a.iter().max().map_or(0, |m| m + 1);
        let nb = b.iter().max().map_or(0, |m| m + 1);
        let mut probs = DMatrix::zeros(na, nb);
        for (w, &p) in self.w_pmf.probs.iter().enumerate() {
            probs[(a[w], b[w])] += p;
        }
        DiscreteJoint {
            outcomes_x: (0..na).map(|i| i.to_string()).collect(),
            outcomes_y: (0..nb).map(|i| i.to_string()).collect(),
            probs,
        }
    }

    pub fn h_w(&self) -> f64 {
        entropy(&self.w_pmf)
    }

    pub fn rho(&self) -> f64 {
        mutual_information(&self.joint(&self.f_t, &self.identity_map())) / self.h_w()
    }

    pub fn sigma(&self) -> f64 {
        mutual_information(&self.joint(&self.identity_map(), &self.g_x)) / self.h_w()
    }

    pub fn to_text(&self) -> String {
        let join = |m: &[usize]| m.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let probs = self.w_pmf.probs.iter().map(|p| format!("{p:.17e}")).collect::<Vec<_>>().join(" ");
        format!(
            "W {} {probs}\nT {}\nX {}\nXT {}\n",
            self.k(),
            join(&self.f_t),
            join(&self.g_x),
            join(&self.h_xtilde)
        )
    }

    /// Parses `W <k> p1..pk`, `T ..`, `X ..`, `XT ..` lines.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut pmf = None;
        let mut maps: [Option<Vec<usize>>; 3] = [None, None, None];
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let key = fields.next().unwrap_or_default();
            let rest: Vec<&str> = fields.collect();
            let bad = |m: &str| Error::parse(i + 1, m.to_string());
            match key {
                "W" => {
                    let k: usize = rest.first().and_then(|s| s.parse().ok()).ok_or_else(|| bad("expected 'W <k> p1..pk'"))?;
                    if rest.len() != k + 1 {
                        return Err(bad("probability count does not match k"));
                    }
                    let probs = rest[1..].iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| bad("bad probability"))?;
                    pmf = Some(DiscretePMF::from_probs(probs).map_err(|e| bad(&e.to_string()))?);
                }
                "T" | "X" | "XT" => {
                    let map = rest.iter().map(|s| s.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| bad("bad outcome index"))?;
                    let slot = match key {
                        "T" => 0,
                        "X" => 1,
                        _ => 2,
                    };
                    maps[slot] = Some(map);
                }
                other => return Err(bad(&format!("unknown record '{other}'"))),
            }
        }
        let pmf = pmf.ok_or_else(|| Error::parse(1, "missing W line"))?;
        let [t, x, xt] = maps;
        let missing = |n: &str| Error::parse(1, format!("missing {n} line"));
        DiscreteWorld::new(pmf, t.ok_or_else(|| missing("T"))?, x.ok_or_else(|| missing("X"))?, xt.ok_or_else(|| missing("XT"))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma1Check {
    pub delta_i: f64,
    pub bound: f64,
    pub rho: f64,
    pub sigma: f64,
    /// `rho > 1 - sigma`.
    pub applicable: bool,
    pub holds: bool,
}

/// Compares `I[W;x] - I[W;x~]` with `(rho + sigma - 1) H[W]`.
pub fn lemma1_check(world: &DiscreteWorld) -> Lemma1Check {
    let id = world.identity_map();
    let h_w = world.h_w();
    let i_x = mutual_information(&world.joint(&id, &world.g_x));
    let i_xt = mutual_information(&world.joint(&id, &world.h_xtilde));
    let rho = world.rho();
    let sigma = i_x / h_w;
    let delta_i = i_x - i_xt;
    let bound = (rho + sigma - 1.0) * h_w;
    Lemma1Check {
        delta_i,
        bound,
        rho,
        sigma,
        applicable: rho > 1.0 - sigma,
        holds: delta_i >= bound - IDENTITY_TOL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Check {
    pub delta_i: f64,
    /// `loss(W | x~) - loss(W | x)` of fitted softmax decoders.
    pub delta_l: f64,
    pub gap: f64,
    pub loss_x: f64,
    pub loss_xtilde: f64,
    pub converged: bool,
}

/// Step size of the decoder fit. The logit Hessian is bounded by `I/2`.
const DECODER_STEP: f64 = 2.0;
const DECODER_TOL: f64 = 1e-3;

/// Fits `q(w | e) = softmax(theta[e])` to the exact joint of `(e, w)` by
/// full-batch gradient descent, one row per embedding outcome. Returns the
/// cross-entropy and whether the gradient fell below tolerance.
fn fit_decoder(joint_ew: &DiscreteJoint, iters: usize) -> (f64, bool) {
    let pe = joint_ew.marginal_x();
    let nw = joint_ew.probs.ncols();
    let mut loss = 0.0;
    let mut converged = true;
    let mut q = vec![0.0; nw];
    for (e, &p_e) in pe.iter().enumerate() {
        if p_e <= 0.0 {
            continue;
        }
        let target: Vec<f64> = joint_ew.probs.row(e).iter().map(|p| p / p_e).collect();
        let mut theta = vec![0.0; nw];
        let mut grad_max = f64::INFINITY;
        for _ in 0..iters {
            softmax_into(&theta, &mut q);
            grad_max = 0.0;
            for k in 0..nw {
                let g = q[k] - target[k];
                grad_max = f64::max(grad_max, g.abs());
                theta[k] -= DECODER_STEP * g;
            }
            if grad_max < DECODER_TOL * 1e-3 {
                break;
            }
        }
        softmax_into(&theta, &mut q);
        let row_loss: f64 = target.iter().zip(&q).filter(|(t, _)| **t > 0.0).map(|(t, q)| -t * q.ln()).sum();
        loss += p_e * row_loss;
        let final_grad = q.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        converged &= final_grad.min(grad_max) < DECODER_TOL;
    }
    (loss, converged)
}

fn softmax_into(theta: &[f64], out: &mut [f64]) {
    let max = theta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, t) in out.iter_mut().zip(theta) {
        *o = (t - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Compares the mutual-information drop with the cross-entropy increase of
/// softmax decoders fitted for `W` given `x` and given `x~`.
pub fn lemma2_check(world: &DiscreteWorld, decoder_fit_iters: usize) -> Lemma2Check {
    let id = world.identity_map();
    let i_x = mutual_information(&world.joint(&id, &world.g_x));
    let i_xt = mutual_information(&world.joint(&id, &world.h_xtilde));
    let (loss_x, conv_x) = fit_decoder(&world.joint(&world.g_x, &id), decoder_fit_iters);
    let (loss_xt, conv_xt) = fit_decoder(&world.joint(&world.h_xtilde, &id), decoder_fit_iters);
    let delta_i = i_x - i_xt;
    let delta_l = loss_xt - loss_x;
    Lemma2Check {
        delta_i,
        delta_l,
        gap: (delta_i - delta_l).abs(),
        loss_x,
        loss_xtilde: loss_xt,
        converged: conv_x && conv_xt,
    }
}

fn dirichlet_flat<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

fn random_map<R: Rng>(rng: &mut R, domain: usize, codomain: usize) -> Vec<usize> {
    (0..domain).map(|_| rng.random_range(0..codomain)).collect()
}

/// Joint over alphabets of the given sizes with flat-Dirichlet weights; about a
/// third of the cells are zeroed to exercise `0 ln 0`.
pub fn random_joint<R: Rng>(rng: &mut R, nx: usize, ny: usize) -> DiscreteJoint {
    let mut w: Vec<f64> = dirichlet_flat(rng, nx * ny);
    for v in w.iter_mut() {
        if rng.random::<f64>() < 0.3 {
            *v = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        w[0] = 1.0;
    } else {
        w.iter_mut().for_each(|v| *v /= total);
    }
    let probs = DMatrix::from_row_slice(nx, ny, &w);
    // renormalize once more so the total is 1 to rounding
    let s = probs.sum();
    DiscreteJoint::new(probs / s).expect("normalized joint")
}

/// Random world with at most `max_k` sentence outcomes and exact `I[T; x~] = 0`.
///
/// Half of the worlds are products of two independent coordinates `W = (A, B)`
/// with `T = f(A)` and `x~ = h(B)`. The rest have a generic distribution, where
/// a random `x~` is kept only if it is independent of `T` (in practice when
/// either is constant) and otherwise replaced by a constant.
pub fn random_world<R: Rng>(rng: &mut R, max_k: usize) -> DiscreteWorld {
    assert!(max_k >= 2);
    loop {
        let world = if rng.random::<bool>() {
            let ka = rng.random_range(1..=max_k.min(4));
            let kb = rng.random_range(1..=(max_k / ka).clamp(1, 4));
            if ka * kb < 2 {
                continue;
            }
            let pa = dirichlet_flat(rng, ka);
            let pb = dirichlet_flat(rng, kb);
            let k = ka * kb;
            let probs: Vec<f64> = (0..k).map(|w| pa[w / kb] * pb[w % kb]).collect();
            let s: f64 = probs.iter().sum();
            let pmf = DiscretePMF::from_probs(probs.into_iter().map(|p| p / s).collect()).expect("valid pmf");
            let ta = random_map(rng, ka, ka);
            let hb = random_map(rng, kb, kb);
            let f_t = (0..k).map(|w| ta[w / kb]).collect();
            let h = (0..k).map(|w| hb[w % kb]).collect();
            let g_x = random_x_map(rng, k);
            DiscreteWorld::new(pmf, f_t, g_x, h)
        } else {
            let k = rng.random_range(2..=max_k);
            let pmf = DiscretePMF::from_probs(dirichlet_flat(rng, k)).expect("valid pmf");
            let t_values = rng.random_range(1..=k);
            let f_t = random_map(rng, k, t_values);
            let g_x = random_x_map(rng, k);
            let mut attempt = DiscreteWorld::new(pmf.clone(), f_t.clone(), g_x.clone(), random_map(rng, k, k));
            for _ in 0..8 {
                if attempt.is_ok() {
                    break;
                }
                attempt = DiscreteWorld::new(pmf.clone(), f_t.clone(), g_x.clone(), random_map(rng, k, k));
            }
            attempt.or_else(|_| DiscreteWorld::new(pmf, f_t, g_x, vec![0; k]))
        };
        if let Ok(world) = world {
            return world;
        }
    }
}

fn random_x_map<R: Rng>(rng: &mut R, k: usize) -> Vec<usize> {
    if rng.random_range(0..3) == 0 {
        (0..k).collect()
    } else {
        let kx = rng.random_range(1..=k);
        random_map(rng, k, kx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldRow {
    pub world_id: usize,
    pub lemma1: Lemma1Check,
    pub lemma2: Lemma2Check,
    pub properties: PropertyReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub rows: Vec<WorldRow>,
    /// Tolerance on `|delta_I - delta_l|` for converged decoders.
    pub lemma2_tolerance: f64,
}

impl VerificationReport {
    pub fn property_failures(&self) -> usize {
        self.rows.iter().map(|r| r.properties.checks.iter().filter(|c| !c.passed).count()).sum()
    }

    pub fn lemma1_applicable(&self) -> usize {
        self.rows.iter().filter(|r| r.lemma1.applicable).count()
    }

    pub fn lemma1_violations(&self) -> usize {
        self.rows.iter().filter(|r| r.lemma1.applicable && !r.lemma1.holds).count()
    }

    pub fn lemma2_failures(&self) -> usize {
        self.rows.iter().filter(|r| r.lemma2.converged && r.lemma2.gap > self.lemma2_tolerance).count()
    }

    pub fn lemma2_converged(&self) -> usize {
        self.rows.iter().filter(|r| r.lemma2.converged).count()
    }

    pub fn max_property_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.properties.max_residual()).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.property_failures() == 0 && self.lemma1_violations() == 0 && self.lemma2_failures() == 0
    }

    /// `world_id<TAB>rho<TAB>sigma<TAB>delta_I<TAB>bound<TAB>holds`, where
    /// `holds` is `na` for worlds outside the lemma's precondition.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let l = &r.lemma1;
            let holds = if !l.applicable {
                "na"
            } else if l.holds {
                "1"
            } else {
                "0"
            };
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{:.9}\t{:.9}\t{holds}", r.world_id, l.rho, l.sigma, l.delta_i, l.bound);
        }
        out
    }
}

pub fn check_world(world_id: usize, world: &DiscreteWorld, decoder_iters: usize) -> Result<WorldRow> {
    // Properties on (T, x) with x~ as the post-processing map of x's outcomes
    // where it is a function of x; otherwise on (W, x) with a map of x.
    let joint = world.joint(&world.f_t, &world.g_x);
    let kx = joint.probs.ncols();
    let f: Vec<usize> = (0..kx).map(|v| v % 2.max(kx / 2)).collect();
    let properties = verify_properties(&joint, &f)?;
    Ok(WorldRow {
        world_id,
        lemma1: lemma1_check(world),
        lemma2: lemma2_check(world, decoder_iters),
        properties,
    })
}

/// Runs the property, Lemma-1 and Lemma-2 checks on `n` seeded random worlds,
/// plus the property checks on `n` random joints with random maps.
pub fn run_verification(n: usize, seed: u64, max_k: usize, decoder_iters: usize) -> Result<VerificationReport> {
    if n == 0 {
        return Err(Error::invalid("nothing to verify"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for id in 0..n {
        let world = random_world(&mut rng, max_k);
        let mut row = check_world(id, &world, decoder_iters)?;
        let nx = rng.random_range(2..=6);
        let ny = rng.random_range(2..=6);
        let joint = random_joint(&mut rng, nx, ny);
        let codomain = rng.random_range(1..=ny);
        let f = random_map(&mut rng, ny, codomain);
        row.properties.checks.extend(verify_properties(&joint, &f)?.checks);
        rows.push(row);
    }
    Ok(VerificationReport { rows, lemma2_tolerance: 0.01 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn two_bits(xt: Vec<usize>) -> DiscreteWorld {
        // w = 2 * bit1 + bit2
        DiscreteWorld::new(DiscretePMF::uniform(4), vec![0, 0, 1, 1], vec![0, 1, 2, 3], xt).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&DiscretePMF::uniform(4)) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&DiscretePMF::from_probs(vec![1.0, 0.0]).unwrap()), 0.0);
        let h = entropy(&DiscretePMF::from_probs(vec![0.5, 0.25, 0.25]).unwrap());
        assert!((h - 1.0397207708399179).abs() < 1e-15);
    }

    #[test]
    fn invalid_pmfs() {
        assert!(DiscretePMF::from_probs(vec![0.5, 0.6]).is_err());
        assert!(DiscretePMF::from_probs(vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        let indep = DiscreteJoint::new(DMatrix::from_fn(2, 3, |i, j| [0.3, 0.7][i] * [0.2, 0.3, 0.5][j])).unwrap();
        assert!(mutual_information(&indep).abs() < 1e-15);
        let diag = DiscreteJoint::new(DMatrix::from_diagonal_element(4, 4, 0.25)).unwrap();
        assert!((mutual_information(&diag) - 4f64.ln()).abs() < 1e-15);
        let bsc = DiscreteJoint::new(DMatrix::from_row_slice(2, 2, &[0.45, 0.05, 0.05, 0.45])).unwrap();
        assert!((mutual_information(&bsc) - 0.3680642071684971).abs() < 1e-12);
    }

    #[test]
    fn conditional_and_joint_entropy() {
        let diag = DiscreteJoint::new(DMatrix::from_diagonal_element(3, 3, 1.0 / 3.0)).unwrap();
        assert!(conditional_entropy(&diag).abs() < 1e-15);
        let indep = DiscreteJoint::new(DMatrix::from_fn(2, 2, |i, j| [0.3, 0.7][i] * [0.6, 0.4][j])).unwrap();
        let hx = entropy_of(&[0.3, 0.7]);
        let hy = entropy_of(&[0.6, 0.4]);
        assert!((joint_entropy(&indep) - (hx + hy)).abs() < 1e-12);
        let bsc = DiscreteJoint::new(DMatrix::from_row_slice(2, 2, &[0.45, 0.05, 0.05, 0.45])).unwrap();
        let chain = entropy_of(&bsc.marginal_x()) + conditional_entropy(&bsc);
        assert!((joint_entropy(&bsc) - chain).abs() < 1e-12);
    }

    #[test]
    fn properties_on_random_joints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let nx = rng.random_range(2..=6);
            let ny = rng.random_range(2..=6);
            let j = random_joint(&mut rng, nx, ny);
            let k = rng.random_range(1..=ny);
            let f = random_map(&mut rng, ny, k);
            let report = verify_properties(&j, &f).unwrap();
            assert!(report.all_passed(), "{report:?}");
        }
    }

    #[test]
    fn identity_and_constant_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let j = random_joint(&mut rng, 3, 4);
        let id: Vec<usize> = (0..4).collect();
        let r = verify_properties(&j, &id).unwrap();
        let dpi = r.checks.iter().find(|c| c.name == "data_processing").unwrap();
        assert!(dpi.residual == 0.0);
        let constant = j.map_y(&[0, 0, 0, 0]).unwrap();
        assert_eq!(mutual_information(&constant), 0.0);
    }

    #[test]
    fn lemma1_two_bits_equality() {
        let c = lemma1_check(&two_bits(vec![0, 1, 0, 1]));
        assert!((c.rho - 0.5).abs() < 1e-15);
        assert!((c.sigma - 1.0).abs() < 1e-15);
        assert!((c.delta_i - LN_2).abs() < 1e-15);
        assert!((c.bound - LN_2).abs() < 1e-15);
        assert!(c.applicable && c.holds);
    }

    #[test]
    fn lemma1_two_bits_constant_filter() {
        let c = lemma1_check(&two_bits(vec![0, 0, 0, 0]));
        assert!((c.delta_i - 2.0 * LN_2).abs() < 1e-15);
        assert!(c.delta_i > c.bound + 0.5);
        assert!(c.holds);
    }

    #[test]
    fn leaky_filter_is_rejected() {
        let err = DiscreteWorld::new(DiscretePMF::uniform(4), vec![0, 0, 1, 1], vec![0, 1, 2, 3], vec![0, 1, 2, 3]);
        assert!(matches!(err, Err(Error::InvalidWorld(_))));
    }

    #[test]
    fn lemma2_two_bits() {
        let c = lemma2_check(&two_bits(vec![0, 1, 0, 1]), 5000);
        assert!(c.converged);
        assert!(c.gap <= 0.01, "{c:?}");
        let flat = lemma2_check(&two_bits(vec![0, 0, 0, 0]), 5000);
        assert!((flat.loss_xtilde - 4f64.ln()).abs() < 1e-9);
        assert!(flat.gap <= 0.01);
        let rough = lemma2_check(&two_bits(vec![0, 1, 0, 1]), 1);
        assert!(rough.gap > 0.01 && !rough.converged);
    }

    #[test]
    fn lemma2_gap_shrinks_with_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let world = random_world(&mut rng, 12);
            let gaps: Vec<f64> = [50, 200, 1000, 5000].iter().map(|&n| lemma2_check(&world, n).gap).collect();
            for pair in gaps.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9, "{gaps:?}");
            }
        }
    }

    #[test]
    fn random_worlds_satisfy_lemma1() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut applicable = 0;
        for _ in 0..1000 {
            let world = random_world(&mut rng, 16);
            assert!(world.k() <= 16);
            let c = lemma1_check(&world);
            let unit = -1e-12..=1.0 + 1e-12;
            assert!(unit.contains(&c.rho) && unit.contains(&c.sigma), "{c:?}");
            if c.applicable {
                applicable += 1;
                assert!(c.holds, "{c:?}\n{}", world.to_text());
            }
        }
        assert!(applicable > 100, "{applicable}");
    }

    #[test]
    fn world_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let world = random_world(&mut rng, 16);
        let text = world.to_text();
        assert!(text.starts_with(&format!("W {} ", world.k())));
        let back = DiscreteWorld::from_text(&text).unwrap();
        assert_eq!(back.f_t, world.f_t);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn verification_needs_worlds() {
        assert!(run_verification(0, 1, 16, 100).is_err());
        let report = run_verification(20, 1, 16, 2000).unwrap();
        assert!(report.passed());
        assert_eq!(report.to_tsv().lines().count(), 20);
    }
}
