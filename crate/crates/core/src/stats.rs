//! Small statistics helpers: OLS slope test and rank correlation.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    /// Two-sided p-value for `slope = 0`.
    pub p_value: f64,
    pub t_statistic: f64,
    pub n: usize,
}

/// Ordinary least squares `y = intercept + slope * x` with a two-sided Student t
/// test of `slope = 0` on `n - 2` degrees of freedom.
pub fn slope_t_test(points: &[(f64, f64)]) -> Result<RegressionResult> {
    let n = points.len();
    if n < 3 {
        return Err(Error::invalid(format!("slope test needs at least 3 points, got {n}")));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite("regression points"));
    }
    let nf = n as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let scale = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(1.0);
    if sxx <= (f64::EPSILON * scale).powi(2) * nf {
        return Err(Error::DegenerateRegressor);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let dof = nf - 2.0;
    let se = (sse / dof / sxx).sqrt();

    let (t, p_value) = if se == 0.0 {
        if slope == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(slope), 0.0)
        }
    } else {
        let t = slope / se;
        let dist = StudentsT::new(0.0, 1.0, dof).expect("dof >= 1");
        (t, (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0))
    };
    Ok(RegressionResult { slope, intercept, p_value, t_statistic: t, n })
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation; NaN when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::invalid("rank correlation needs at least 2 points"));
    }
    Ok(pearson(&ranks(x), &ranks(y)))
}
