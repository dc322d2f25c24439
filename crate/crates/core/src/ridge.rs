//! Linear ridge regression in canonical form.
//!
//! With eigenvalues `l_j` of X'X and ridge parameter `k`, the ridge smoother
//! shrinks each OLS component coefficient by `s_j = l_j / (l_j + k)`. The three
//! effective degrees of freedom are
//!
//! * `tr(H)       = sum s_j`
//! * `tr(HH')     = sum s_j^2`
//! * `tr(2H-HH')  = sum s_j (2 - s_j)`
//!
//! The response is centred before fitting; its training mean is the
//! (unpenalized) intercept.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{back_transform, CanonicalModel, EigenSystem, Response};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfTriple {
    /// tr(H), the effective number of parameters.
    pub tr_h: f64,
    /// tr(HH'), degrees of freedom for variance.
    pub tr_hh: f64,
    /// tr(2H - HH'), effective parameters in the degrees of freedom for error.
    pub tr_2h_minus_hh: f64,
}

impl DfTriple {
    pub fn get(&self, which: DfKind) -> f64 {
        match which {
            DfKind::Variance => self.tr_hh,
            DfKind::Effective => self.tr_h,
            DfKind::ErrorComplement => self.tr_2h_minus_hh,
        }
    }

    /// Traces of a smoother acting on each component with factor `s_j`.
    pub fn from_shrinkage(shrinkage: impl IntoIterator<Item = f64>) -> Self {
        let mut out = Self {
            tr_h: 0.0,
            tr_hh: 0.0,
            tr_2h_minus_hh: 0.0,
        };
        for s in shrinkage {
            out.tr_h += s;
            out.tr_hh += s * s;
            out.tr_2h_minus_hh += s * (2.0 - s);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DfKind {
    /// tr(HH')
    Variance,
    /// tr(H)
    Effective,
    /// tr(2H - HH')
    ErrorComplement,
}

pub fn df_from_eigenvalues(eigenvalues: ArrayView1<f64>, k: f64) -> DfTriple {
    DfTriple::from_shrinkage(eigenvalues.iter().map(|&l| l / (l + k)))
}

fn single_df(eigenvalues: ArrayView1<f64>, which: DfKind, k: f64) -> f64 {
    eigenvalues
        .iter()
        .map(|&l| {
            let s = l / (l + k);
            match which {
                DfKind::Variance => s * s,
                DfKind::Effective => s,
                DfKind::ErrorComplement => s * (2.0 - s),
            }
        })
        .sum()
}

pub fn df_triple(eigen: &EigenSystem, k: f64) -> Result<DfTriple> {
    if !(k >= 0.0) {
        return Err(Error::NegativeK(k));
    }
    Ok(df_from_eigenvalues(eigen.eigenvalues(), k))
}

/// Variance degrees of freedom tr(HH') for a ridge parameter.
pub fn df_variance(eigenvalues: ArrayView1<f64>, k: f64) -> f64 {
    single_df(eigenvalues, DfKind::Variance, k)
}

/// Find `k >= 0` with the chosen trace equal to `target`.
///
/// Every trace is strictly decreasing in `k` from `t` at `k = 0` to 0, so the
/// root is bracketed by growing an upper bound geometrically and refined by
/// bisection (at most 200 halvings, stopping at a relative width of 1e-12).
pub fn solve_k_for_df(eigen: &EigenSystem, which: DfKind, target: f64) -> Result<f64> {
    solve_k_for_df_spectrum(eigen.eigenvalues(), which, target)
}

pub fn solve_k_for_df_spectrum(
    eigenvalues: ArrayView1<f64>,
    which: DfKind,
    target: f64,
) -> Result<f64> {
    let t = eigenvalues.len();
    if !(target > 0.0 && target <= t as f64) {
        return Err(Error::TargetOutOfRange { target, max: t });
    }
    if target == t as f64 {
        return Ok(0.0);
    }
    let excess = |k: f64| single_df(eigenvalues, which, k) - target;

    let mut hi = eigenvalues.mean().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    while excess(hi) > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::TargetOutOfRange { target, max: t });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = excess(mid);
        if f == 0.0 {
            return Ok(mid);
        } else if f > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// OLS coefficients of the centred response on each component,
/// `alpha_j = z_j' y / l_j`.
pub fn ols_canonical(c: &CanonicalModel, y: &Response) -> Result<Array1<f64>> {
    y.check_len(c.n())?;
    let mean = y.mean();
    let zty = c.zty(y.values().mapv(|v| v - mean).view());
    Ok(&zty / &c.eigen().eigenvalues())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub k: f64,
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
    pub intercept: f64,
    pub df: DfTriple,
    /// OLS residual variance with denominator n - p; absent when p >= n.
    pub sigma2_hat: Option<f64>,
}

impl RidgeFit {
    pub fn predict(&self, x_new: ArrayView2<f64>) -> Result<Array1<f64>> {
        predict(self, x_new)
    }
}

pub fn fit_ridge(c: &CanonicalModel, y: &Response, k: f64) -> Result<RidgeFit> {
    if !(k >= 0.0) {
        return Err(Error::NegativeK(k));
    }
    let ols = ols_canonical(c, y)?;
    let eigenvalues = c.eigen().eigenvalues();
    let alpha = ndarray::Zip::from(&ols)
        .and(&eigenvalues)
        .map_collect(|&a, &l| l / (l + k) * a);
    let beta = back_transform(alpha.view(), c.eigen())?;
    let (n, p) = (c.n(), c.eigen().dim());
    let sigma2_hat = (n > p).then(|| {
        let rss = residual_ss(c, y, &ols, c.t());
        rss / (n - p) as f64
    });
    Ok(RidgeFit {
        k,
        alpha,
        beta,
        intercept: y.mean(),
        df: df_from_eigenvalues(eigenvalues, k),
        sigma2_hat,
    })
}

/// ||y_c - Z_r alpha_r||^2 for the centred response, built explicitly.
pub(crate) fn residual_ss(c: &CanonicalModel, y: &Response, ols: &Array1<f64>, r: usize) -> f64 {
    let mean = y.mean();
    let mut resid = y.values().mapv(|v| v - mean);
    let z = c.z();
    for j in 0..r {
        resid.scaled_add(-ols[j], &z.column(j));
    }
    resid.dot(&resid)
}

pub fn predict(fit: &RidgeFit, x_new: ArrayView2<f64>) -> Result<Array1<f64>> {
    if x_new.ncols() != fit.beta.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.beta.len(),
            found: x_new.ncols(),
        });
    }
    Ok(x_new.dot(&fit.beta) + fit.intercept)
}

/// A linear smoother expressed through the eigensystem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoother {
    /// G = (X'X + kI)^-1
    Ridge { k: f64 },
    /// G = sum_{j <= r} q_j q_j' / l_j
    Pcr { r: usize },
}

impl Smoother {
    pub fn shrinkage(&self, eigen: &EigenSystem) -> Result<Array1<f64>> {
        match *self {
            Smoother::Ridge { k } => {
                if !(k >= 0.0) {
                    return Err(Error::NegativeK(k));
                }
                Ok(eigen.eigenvalues().mapv(|l| l / (l + k)))
            }
            Smoother::Pcr { r } => {
                if r > eigen.t() {
                    return Err(Error::ROutOfRange { r, max: eigen.t() });
                }
                Ok(Array1::from_shape_fn(eigen.t(), |j| if j < r { 1.0 } else { 0.0 }))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseTerms {
    pub noise: f64,
    pub variance: f64,
    pub bias2: f64,
}

impl PseTerms {
    pub fn total(&self) -> f64 {
        self.noise + self.variance + self.bias2
    }
}

/// Split the expected in-sample prediction error of a smoother into noise,
/// variance `tr(HH') sigma^2 / n` and squared bias `b'b / n`, where
/// `b = [X - X G X'X] beta`.
///
/// `beta_true` must be on the standardized scale of the design that produced
/// `eigen`. Since X'X = Q L Q', `b'b = sum_j l_j (1 - s_j)^2 (q_j' beta)^2`,
/// so X itself is not needed.
pub fn pse_decomposition(
    eigen: &EigenSystem,
    smoother: Smoother,
    beta_true: ArrayView1<f64>,
    sigma2: f64,
    n: usize,
) -> Result<PseTerms> {
    if beta_true.len() != eigen.dim() {
        return Err(Error::DimensionMismatch {
            expected: eigen.dim(),
            found: beta_true.len(),
        });
    }
    let s = smoother.shrinkage(eigen)?;
    let proj = eigen.q().t().dot(&beta_true);
    let bb: f64 = ndarray::Zip::from(&s)
        .and(&eigen.eigenvalues())
        .and(&proj)
        .fold(0.0, |acc, &s, &l, &a| acc + l * (1.0 - s).powi(2) * a * a);
    let tr_hh: f64 = s.iter().map(|v| v * v).sum();
    let n = n as f64;
    Ok(PseTerms {
        noise: sigma2,
        variance: tr_hh * sigma2 / n,
        bias2: bb / n,
    })
}
