//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::sigmoid;

/// Score convergence: max |gradient component| below this.
const SCORE_TOLERANCE: f64 = 1e-8;
/// Alternative convergence: relative log-likelihood change below this.
const RELATIVE_LL_TOLERANCE: f64 = 1e-10;
/// Any coefficient beyond this magnitude without convergence reads as
/// complete or quasi-complete separation.
const SEPARATION_COEFFICIENT: f64 = 15.0;
const MAX_ITERATIONS: u32 = 50;
const MAX_HALVINGS: u32 = 30;

/// Fitted logistic model. When `separation` is set the likelihood kept
/// climbing toward a boundary: coefficients and covariance are the last
/// iterate and should not be interpreted.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub coefficients: DVector<f64>,
    /// Inverse observed information at the final coefficients.
    pub covariance: DMatrix<f64>,
    pub log_likelihood: f64,
    pub iterations: u32,
    pub converged: bool,
    pub separation: bool,
}

fn log_likelihood(eta: &DVector<f64>, y: &[bool]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // y*eta - log(1 + exp(eta)), computed without overflow.
            let softplus = e.max(0.0) + (-e.abs()).exp().ln_1p();
            if yi {
                e - softplus
            } else {
                -softplus
            }
        })
        .sum()
}

fn information(x: &DMatrix<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let mut h = DMatrix::zeros(p, p);
    for i in 0..x.nrows() {
        let w = mu[i] * (1.0 - mu[i]);
        for a in 0..p {
            let xa = x[(i, a)] * w;
            for b in a..p {
                h[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    // Mirror the upper triangle.
    for a in 0..p {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    h
}

/// Maximum-likelihood logistic fit of binary `y` on feature matrix `x`
/// (callers supply the intercept column).
///
/// Newton/IRLS steps with step-halving keep the log-likelihood non-
/// decreasing. Converges when the score's max component drops below 1e-8 or
/// the relative log-likelihood change drops below 1e-10. Errors: dimension
/// mismatch or n < p (E201), non-finite features (E201), rank-deficient
/// features (E203). Separation is not an error: the result comes back with
/// `converged = false` and `separation = true`.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[bool]) -> Result<FitResult> {
    let n = x.nrows();
    let p = x.ncols();
    if n != y.len() {
        return Err(Error::EstimatorPrecondition(format!(
            "feature matrix has {n} rows but y has {} entries",
            y.len()
        )));
    }
    if p == 0 || n < p {
        return Err(Error::EstimatorPrecondition(format!(
            "need at least as many observations as features (n = {n}, p = {p})"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::EstimatorPrecondition(
            "feature matrix contains non-finite values".into(),
        ));
    }
    // Rank check at the start, where weights are uniform: X'X singular
    // exactly when X is column-rank deficient.
    if Cholesky::new(x.transpose() * x).is_none() {
        return Err(Error::CollinearFeatures(format!(
            "feature matrix is rank deficient ({p} columns)"
        )));
    }

    let mut beta = DVector::zeros(p);
    let mut eta = x * &beta;
    let mut ll = log_likelihood(&eta, y);
    let mut iterations = 0;
    let mut converged = false;
    let mut separation = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mu = eta.map(sigmoid);
        let residual = DVector::from_iterator(
            n,
            y.iter().zip(mu.iter()).map(|(&yi, &m)| (yi as i8 as f64) - m),
        );
        let score = x.transpose() * &residual;
        if score.amax() < SCORE_TOLERANCE {
            converged = true;
            break;
        }

        let h = information(x, &mu);
        let delta = match Cholesky::new(h) {
            Some(chol) => chol.solve(&score),
            None => {
                // Information collapsed. With full-rank X this only happens
                // on a separation boundary where the weights underflow.
                separation = true;
                break;
            }
        };

        let mut step = 1.0;
        let mut candidate;
        let mut candidate_eta;
        let mut candidate_ll;
        let mut halvings = 0;
        loop {
            candidate = &beta + &delta * step;
            candidate_eta = x * &candidate;
            candidate_ll = log_likelihood(&candidate_eta, y);
            if candidate_ll >= ll || halvings >= MAX_HALVINGS {
                break;
            }
            step *= 0.5;
            halvings += 1;
        }

        let previous_ll = ll;
        beta = candidate;
        eta = candidate_eta;
        ll = candidate_ll;

        if beta.amax() > SEPARATION_COEFFICIENT {
            separation = true;
            break;
        }
        if (ll - previous_ll).abs() < RELATIVE_LL_TOLERANCE * (ll.abs() + 1e-10) {
            converged = true;
            break;
        }
    }

    let mu = eta.map(sigmoid);
    let covariance = match Cholesky::new(information(x, &mu)) {
        Some(chol) => chol.inverse(),
        // Boundary fits can exhaust the information entirely.
        None => DMatrix::from_diagonal_element(p, p, f64::INFINITY),
    };

    Ok(FitResult {
        coefficients: beta,
        covariance,
        log_likelihood: ll,
        iterations,
        converged,
        separation,
    })
}

/// Build the two-column design matrix (intercept, indicator) and outcome
/// vector for a treated-vs-control contrast.
pub(crate) fn contrast_matrix(
    treated_outcomes: &[bool],
    control_outcomes: &[bool],
) -> (DMatrix<f64>, Vec<bool>) {
    let n = treated_outcomes.len() + control_outcomes.len();
    let mut x = DMatrix::zeros(n, 2);
    let mut y = Vec::with_capacity(n);
    for (i, &outcome) in treated_outcomes.iter().enumerate() {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = 1.0;
        y.push(outcome);
    }
    for (j, &outcome) in control_outcomes.iter().enumerate() {
        let i = treated_outcomes.len() + j;
        x[(i, 0)] = 1.0;
        y.push(outcome);
    }
    (x, y)
}
