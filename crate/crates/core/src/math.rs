//! Special functions and log-space helpers shared by the variational updates.

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1, Axis};

/// Digamma function ψ(x) for x > 0.
///
/// Arguments below 10 are shifted up with ψ(x) = ψ(x + 1) − 1/x, then the
/// asymptotic expansion in 1/x² is applied. Returns NaN for x ≤ 0.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return if x == f64::INFINITY { f64::INFINITY } else { f64::NAN };
    }
    let mut x = x;
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_{2n} / (2n) for n = 1..7.
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - series
}

/// log Γ(x), delegated to statrs.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// E[log X] under a Dirichlet with parameter `alpha`: ψ(α_i) − ψ(Σ α).
pub fn dirichlet_expectation(alpha: ArrayView1<f64>) -> Array1<f64> {
    let total = digamma(alpha.sum());
    alpha.mapv(|a| digamma(a) - total)
}

/// Row-wise [`dirichlet_expectation`] of a matrix of Dirichlet parameters.
pub fn dirichlet_expectation_rows(params: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(params.raw_dim());
    for (row, mut dst) in params.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let total = digamma(row.sum());
        for (d, &p) in dst.iter_mut().zip(row.iter()) {
            *d = digamma(p) - total;
        }
    }
    out
}

/// Turns unnormalized log weights into a probability vector in place.
///
/// The maximum is subtracted before exponentiation. Returns the log
/// normalizer, or `None` if any entry is non-finite afterwards.
pub fn normalize_log_weights(mut weights: ArrayViewMut1<f64>) -> Option<f64> {
    let max = weights.fold(f64::NEG_INFINITY, |m, &w| m.max(w));
    if !max.is_finite() {
        return None;
    }
    let mut total = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    if weights.iter().all(|w| w.is_finite()) {
        Some(max + total.ln())
    } else {
        None
    }
}

/// Σ p log p with the 0 log 0 = 0 convention.
pub fn neg_entropy(p: ArrayView1<f64>) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum()
}

/// Normalizes each row of a nonnegative matrix to sum to one.
pub fn row_normalize(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let s = row.sum();
        row.mapv_inplace(|x| x / s);
    }
    out
}
