//! Ridge-penalized logistic regression by cyclic coordinate descent (CLG).
//!
//! Maximizes
//!
//! ```text
//! l(beta) = sum y_i log pi_i + (1 - y_i) log(1 - pi_i) - k ||beta||^2
//! ```
//!
//! one coordinate at a time. Labels are recoded to `y in {-1, +1}` and the
//! linear scores `r_i = y_i (b0 + x_i' beta)` are maintained incrementally.
//! Each coordinate takes a Newton-like step whose curvature is an upper bound
//! of the logistic curvature over a per-coordinate trust region `[-D_j, D_j]`,
//! so every step increases the objective. The intercept is updated by the
//! same scheme without the penalty term.
//!
//! Also here: unpenalized logistic regression by Newton's method with step
//! halving (used for principal component logistic regression and the
//! univariate baselines), the logistic hat-matrix degrees of freedom and
//! probability prediction.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{gram_eigenvalues, solve_spd, Response, ResponseKind};
use crate::ridge::DfTriple;

const PROB_CLAMP: f64 = 1e-12;

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(-r))` without overflow.
fn log1p_exp_neg(r: f64) -> f64 {
    (-r).max(0.0) + (-r.abs()).exp().ln_1p()
}

fn require_binary(y: &Response) -> Result<()> {
    if y.kind() == ResponseKind::Binary {
        return Ok(());
    }
    // Continuous responses are accepted if they happen to be 0/1.
    Response::binary(y.values().to_owned()).map(|_| ())
}

/// Penalized log-likelihood with the penalty `k * sum beta_j^2` (intercept
/// unpenalized). Probabilities are clamped to `[1e-12, 1 - 1e-12]` before
/// taking logs.
pub fn penalized_loglik(
    beta: ArrayView1<f64>,
    intercept: f64,
    x: ArrayView2<f64>,
    y: &Response,
    k: f64,
) -> Result<f64> {
    require_binary(y)?;
    check_shapes(x, y, beta.len())?;
    let eta = x.dot(&beta) + intercept;
    let ll: f64 = eta
        .iter()
        .zip(y.values())
        .map(|(&e, &yi)| {
            let p = sigmoid(e).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            yi * p.ln() + (1.0 - yi) * (1.0 - p).ln()
        })
        .sum();
    Ok(ll - k * beta.dot(&beta))
}

fn check_shapes(x: ArrayView2<f64>, y: &Response, p: usize) -> Result<()> {
    if x.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: x.ncols(),
        });
    }
    y.check_len(x.nrows())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClgOptions {
    /// Relative change in the linear scores at which a sweep counts as converged.
    pub epsilon: f64,
    pub max_sweeps: usize,
}

impl Default for ClgOptions {
    fn default() -> Self {
        Self {
            epsilon: 5e-4,
            max_sweeps: 1000,
        }
    }
}

/// Per-coordinate trust-region half widths; index 0 is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionState {
    pub delta: Vec<f64>,
}

impl TrustRegionState {
    pub fn new(p: usize) -> Self {
        Self {
            delta: vec![1.0; p + 1],
        }
    }

    /// Clip a tentative step to the trust region of coordinate `slot`, then
    /// adapt the region: `D <- max(2 |step|, D / 2)`.
    pub fn clip_and_update(&mut self, slot: usize, tentative: f64) -> f64 {
        let d = self.delta[slot];
        let step = tentative.clamp(-d, d);
        self.delta[slot] = (2.0 * step.abs()).max(d / 2.0);
        step
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRidgeFit {
    pub k: f64,
    pub beta: Array1<f64>,
    pub intercept: f64,
    /// `r_i = y_i (b0 + x_i' beta)` with `y_i in {-1, +1}`.
    pub linear_scores: Array1<f64>,
    pub probabilities: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized log-likelihood after each sweep.
    pub objective: Vec<f64>,
}

impl LogisticRidgeFit {
    pub fn predict_proba(&self, x_new: ArrayView2<f64>) -> Result<Array1<f64>> {
        predict_proba(self.intercept, self.beta.view(), x_new)
    }
}

/// Upper bound on the logistic curvature `pi (1 - pi)` over scores within
/// `delta` of `r`.
pub fn trust_region_curvature(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.25
    } else {
        1.0 / (2.0 + (a - delta).exp() + (delta - a).exp())
    }
}

/// Tentative step for one coordinate:
///
/// ```text
/// dv = [sum x_ij y_i / (1 + exp(r_i)) - beta_j / tau] / [sum x_ij^2 F(r_i, D_j |x_ij|) + 1 / tau]
/// ```
///
/// with `1 / tau = 2k`. Pass `inv_tau = 0` for the unpenalized intercept.
pub fn clg_update_term(
    column: ArrayView1<f64>,
    labels: ArrayView1<f64>,
    scores: ArrayView1<f64>,
    beta_j: f64,
    delta_j: f64,
    inv_tau: f64,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&x, &y), &r) in column.iter().zip(labels).zip(scores) {
        if x == 0.0 {
            continue;
        }
        num += x * y / (1.0 + r.exp());
        den += x * x * trust_region_curvature(r, delta_j * x.abs());
    }
    let num = num - beta_j * inv_tau;
    let den = den + inv_tau;
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn objective_from_scores(scores: &Array1<f64>, beta: &Array1<f64>, k: f64) -> f64 {
    -scores.iter().map(|&r| log1p_exp_neg(r)).sum::<f64>() - k * beta.dot(beta)
}

/// Fit ridge logistic regression with the CLG algorithm.
///
/// Coordinates are visited in ascending order (intercept first) starting from
/// zero. Stops when `sum |dr_i| / (1 + sum |r_i|) < epsilon` over a sweep or
/// after `max_sweeps` sweeps, in which case `converged` is false.
pub fn clg_fit(
    x: ArrayView2<f64>,
    y: &Response,
    k: f64,
    options: ClgOptions,
) -> Result<LogisticRidgeFit> {
    require_binary(y)?;
    if !(k > 0.0) {
        return Err(Error::NonPositiveK(k));
    }
    let (n, p) = x.dim();
    y.check_len(n)?;
    let labels = y.values().mapv(|v| if v == 1.0 { 1.0 } else { -1.0 });
    // column-major copy: each coordinate update walks one column
    let xt = x.t().as_standard_layout().into_owned();
    let ones = Array1::<f64>::ones(n);
    let inv_tau = 2.0 * k;

    let mut beta = Array1::<f64>::zeros(p);
    let mut intercept = 0.0;
    let mut scores = Array1::<f64>::zeros(n);
    let mut region = TrustRegionState::new(p);
    let mut objective = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < options.max_sweeps {
        sweeps += 1;
        let start = scores.clone();

        let dv = clg_update_term(ones.view(), labels.view(), scores.view(), intercept, region.delta[0], 0.0);
        let step = region.clip_and_update(0, dv);
        if step != 0.0 {
            scores.scaled_add(step, &labels);
            intercept += step;
        }

        for (j, col) in xt.axis_iter(Axis(0)).enumerate() {
            let dv = clg_update_term(col, labels.view(), scores.view(), beta[j], region.delta[j + 1], inv_tau);
            let step = region.clip_and_update(j + 1, dv);
            if step != 0.0 {
                ndarray::Zip::from(&mut scores)
                    .and(&col)
                    .and(&labels)
                    .for_each(|r, &xij, &yi| *r += step * xij * yi);
                beta[j] += step;
            }
        }

        objective.push(objective_from_scores(&scores, &beta, k));
        let change: f64 = scores.iter().zip(&start).map(|(a, b)| (a - b).abs()).sum();
        let size: f64 = scores.iter().map(|r| r.abs()).sum();
        if change / (1.0 + size) < options.epsilon {
            converged = true;
            break;
        }
    }

    let probabilities = ndarray::Zip::from(&scores)
        .and(&labels)
        .map_collect(|&r, &yi| sigmoid(r * yi));
    Ok(LogisticRidgeFit {
        k,
        beta,
        intercept,
        linear_scores: scores,
        probabilities,
        iterations: sweeps,
        converged,
        objective,
    })
}

pub fn predict_proba(
    intercept: f64,
    beta: ArrayView1<f64>,
    x_new: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    if x_new.ncols() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            found: x_new.ncols(),
        });
    }
    Ok((x_new.dot(&beta) + intercept).mapv(sigmoid))
}

/// Variance degrees of freedom `tr(HH')` of the logistic ridge smoother
/// `H = (X'WX + kI)^-1 X'WX`, `W = diag(pi (1 - pi))` at the fitted
/// probabilities. With `m_j` the nonzero eigenvalues of X'WX (from a thin SVD
/// of `sqrt(W) X`), `tr(HH') = sum m_j^2 / (m_j + k)^2`.
pub fn logistic_hat_df(x: ArrayView2<f64>, probabilities: ArrayView1<f64>, k: f64) -> Result<f64> {
    logistic_hat_traces(x, probabilities, k).map(|d| d.tr_hh)
}

/// All three traces of the logistic ridge smoother, from the same spectrum
/// as [`logistic_hat_df`].
pub fn logistic_hat_traces(x: ArrayView2<f64>, probabilities: ArrayView1<f64>, k: f64) -> Result<DfTriple> {
    if !(k >= 0.0) {
        return Err(Error::NegativeK(k));
    }
    if x.nrows() != probabilities.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: probabilities.len(),
        });
    }
    let w = probabilities.mapv(|p| p * (1.0 - p));
    if w.iter().all(|&v| v < PROB_CLAMP) {
        return Err(Error::DegenerateWeights);
    }
    let mut xw = x.to_owned();
    for (mut row, &wi) in xw.axis_iter_mut(Axis(0)).zip(&w) {
        row *= wi.sqrt();
    }
    let mu = gram_eigenvalues(xw.view())?;
    let mu_max = mu.first().copied().unwrap_or(0.0);
    let (n, p) = x.dim();
    let threshold = crate::linalg::default_zero_threshold(mu_max, n, p);
    Ok(DfTriple::from_shrinkage(
        mu.iter().filter(|&&m| m > threshold).map(|&m| m / (m + k)),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Convergence threshold on the infinity norm of the gradient.
    pub gradient_tol: f64,
    pub max_iterations: usize,
    /// Linear predictors beyond this magnitude are treated as separation.
    pub max_abs_eta: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-8,
            max_iterations: 100,
            max_abs_eta: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticMle {
    pub intercept: f64,
    pub coefficients: Array1<f64>,
    /// Inverse observed information, intercept first.
    pub covariance: Array2<f64>,
    pub iterations: usize,
}

fn loglik_eta(eta: &Array1<f64>, y: ArrayView1<f64>) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            let r = if yi == 1.0 { e } else { -e };
            -log1p_exp_neg(r)
        })
        .sum()
}

/// Unpenalized logistic regression with intercept by Newton's method with
/// step halving. Fails with [`Error::Separation`] when the fit diverges.
pub fn fit_logistic_mle(
    x: ArrayView2<f64>,
    y: &Response,
    options: NewtonOptions,
) -> Result<LogisticMle> {
    require_binary(y)?;
    let (n, p) = x.dim();
    y.check_len(n)?;
    let yv = y.values();
    let mut design = Array2::<f64>::ones((n, p + 1));
    design.slice_mut(ndarray::s![.., 1..]).assign(&x);

    let mut theta = Array1::<f64>::zeros(p + 1);
    let mut eta = Array1::<f64>::zeros(n);
    let mut ll = loglik_eta(&eta, yv);
    for iter in 1..=options.max_iterations {
        let pi = eta.mapv(sigmoid);
        let grad = design.t().dot(&(&yv - &pi));
        let w = pi.mapv(|v| v * (1.0 - v));
        let mut wd = design.clone();
        for (mut row, &wi) in wd.axis_iter_mut(Axis(0)).zip(&w) {
            row *= wi;
        }
        let info = design.t().dot(&wd);
        let gmax = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if gmax < options.gradient_tol {
            let covariance = invert_spd(&info).ok_or(Error::Separation { iterations: iter })?;
            return Ok(LogisticMle {
                intercept: theta[0],
                coefficients: theta.slice(ndarray::s![1..]).to_owned(),
                covariance,
                iterations: iter,
            });
        }
        let step = solve_spd(&info, &grad).ok_or(Error::Separation { iterations: iter })?;
        let mut scale = 1.0;
        loop {
            let cand = &theta + &(&step * scale);
            let cand_eta = design.dot(&cand);
            let cand_ll = loglik_eta(&cand_eta, yv);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                theta = cand;
                eta = cand_eta;
                ll = cand_ll;
                break;
            }
            scale *= 0.5;
            if scale < 1e-10 {
                // no ascent possible along the Newton direction; stationary to rounding
                return Err(Error::Separation { iterations: iter });
            }
        }
        if eta.iter().any(|e| e.abs() > options.max_abs_eta) {
            return Err(Error::Separation { iterations: iter });
        }
    }
    Err(Error::Separation {
        iterations: options.max_iterations,
    })
}

fn invert_spd(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut out = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = 1.0;
        out.column_mut(j).assign(&solve_spd(a, &e)?);
    }
    Some(out)
}
