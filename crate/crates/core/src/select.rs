//! Estimators of the ridge parameter and rules for the number of components
//! they are built from.
//!
//! `k_r = r * s_r^2 / sum_{j<=r} a_j^2` where `a_j` are the OLS coefficients
//! of the centred response on the principal components and
//! `s_r^2 = ||y - Z_r a_r||^2 / (n - r)`. With `r = p` on full-rank data this
//! is the Hoerl-Kennard-Baldwin estimator. The number of components is
//! chosen either as the fixed point `tr(HH')(k_r) = r` or by cross-validated
//! prediction error.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    eigen_of, thin_svd, to_canonical, CanonicalModel, DesignMatrix, Response,
};
use crate::logistic::{
    clg_fit, fit_logistic_mle, logistic_hat_df, ClgOptions, LogisticRidgeFit, NewtonOptions,
};
use crate::ridge::{df_variance, ols_canonical};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    DofF,
    Press,
    Fixed,
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Rule::DofF => "doff",
            Rule::Press => "press",
            Rule::Fixed => "fixed",
        })
    }
}

/// One candidate of a scan over r. `k_r` is absent when the leading
/// components carry no signal (or, for logistic data, the component fit
/// failed); `criterion` is `|df - r|` for the fixed-point rule and the
/// cross-validated squared error for PRESS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub r: usize,
    pub k_r: Option<f64>,
    pub df_variance: Option<f64>,
    pub criterion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub r_chosen: usize,
    pub k: f64,
    pub rule: Rule,
    pub diagnostics: Vec<ScanRow>,
}

/// `k_r` for every `r = 1..=r_max` in one pass. Residuals are accumulated
/// explicitly: starting from the centred response, `a_j z_j` is subtracted
/// component by component.
pub fn k_r_path(c: &CanonicalModel, y: &Response, r_max: usize) -> Result<Vec<Option<f64>>> {
    let n = c.n();
    let max = c.t().min(n.saturating_sub(1));
    if r_max < 1 || r_max > max {
        return Err(Error::ROutOfRange { r: r_max, max });
    }
    let ols = ols_canonical(c, y)?;
    let mean = y.mean();
    let mut resid = y.values().mapv(|v| v - mean);
    let z = c.z();
    let mut signal = 0.0;
    let mut out = Vec::with_capacity(r_max);
    for r in 1..=r_max {
        let a = ols[r - 1];
        resid.scaled_add(-a, &z.column(r - 1));
        signal += a * a;
        let sigma2 = resid.dot(&resid) / (n - r) as f64;
        out.push((signal > 0.0).then(|| r as f64 * sigma2 / signal));
    }
    Ok(out)
}

/// The estimator built from the first `r` components. Requires
/// `1 <= r < n` and `r <= t`.
pub fn k_r(c: &CanonicalModel, y: &Response, r: usize) -> Result<f64> {
    let max = c.t().min(c.n().saturating_sub(1));
    if r < 1 || r > max {
        return Err(Error::ROutOfRange { r, max });
    }
    k_r_path(c, y, r)?[r - 1].ok_or(Error::ZeroSignal)
}

/// `p * s^2 / a'a` from the full OLS fit. Defined only for full-rank data
/// with `n > p`; computed as `k_r` at `r = p`.
pub fn k_hkb(c: &CanonicalModel, y: &Response) -> Result<f64> {
    let (n, p) = (c.n(), c.eigen().dim());
    if p >= n {
        return Err(Error::Undefined(format!(
            "OLS estimates do not exist with p = {p} >= n = {n}"
        )));
    }
    if c.t() < p {
        return Err(Error::Undefined(format!(
            "design has rank {} < p = {p}",
            c.t()
        )));
    }
    k_r(c, y, p)
}

/// Ridge-type penalty for logistic regression, `p / b'b`.
pub fn k_schaefer(beta_hat: &Array1<f64>) -> Result<f64> {
    norm_ratio(beta_hat.len(), beta_hat)
}

/// `r / a_r'a_r` from the coefficients of a logistic regression on the first
/// `r` component scores.
pub fn k_r_logistic(alpha_r: &Array1<f64>) -> Result<f64> {
    norm_ratio(alpha_r.len(), alpha_r)
}

fn norm_ratio(count: usize, v: &Array1<f64>) -> Result<f64> {
    let ss = v.dot(v);
    if !(ss > 0.0) {
        return Err(Error::ZeroNorm);
    }
    Ok(count as f64 / ss)
}

/// Smallest-r argmin of `criterion` among rows that have one.
fn argmin_row(rows: &[ScanRow]) -> Option<&ScanRow> {
    let mut best: Option<&ScanRow> = None;
    for row in rows {
        if let Some(v) = row.criterion {
            if best.and_then(|b| b.criterion).is_none_or(|b| v < b) {
                best = Some(row);
            }
        }
    }
    best
}

/// Scan `r = 1..t-1` and pick the r whose `k_r` gives variance degrees of
/// freedom (over all t components) closest to r. Ties go to the smaller r.
pub fn choose_r_doff(c: &CanonicalModel, y: &Response) -> Result<KSelection> {
    let t = c.t();
    if t < 2 {
        return Err(Error::Undefined(format!(
            "the fixed-point scan needs at least 2 components, found {t}"
        )));
    }
    let path = k_r_path(c, y, t - 1)?;
    let eigenvalues = c.eigen().eigenvalues();
    let diagnostics: Vec<ScanRow> = path
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let r = i + 1;
            let df = k.map(|k| df_variance(eigenvalues, k));
            ScanRow {
                r,
                k_r: k,
                df_variance: df,
                criterion: df.map(|d| (d - r as f64).abs()),
            }
        })
        .collect();
    let best = argmin_row(&diagnostics).ok_or(Error::ZeroSignal)?;
    Ok(KSelection {
        r_chosen: best.r,
        k: best.k_r.expect("rows with a criterion have k_r"),
        rule: Rule::DofF,
        diagnostics,
    })
}

/// `k_r` for a user-chosen r, reported in the same shape as the scans.
pub fn choose_r_fixed(c: &CanonicalModel, y: &Response, r: usize) -> Result<KSelection> {
    let k = k_r(c, y, r)?;
    let df = df_variance(c.eigen().eigenvalues(), k);
    Ok(KSelection {
        r_chosen: r,
        k,
        rule: Rule::Fixed,
        diagnostics: vec![ScanRow {
            r,
            k_r: Some(k),
            df_variance: Some(df),
            criterion: None,
        }],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PressOptions {
    /// Number of folds; `folds = n` is leave-one-out.
    pub folds: usize,
    /// Seed for the random assignment of observations to folds.
    pub seed: u64,
}

impl Default for PressOptions {
    fn default() -> Self {
        Self { folds: 10, seed: 0 }
    }
}

/// Random fold labels: a seeded permutation dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    // every training part must survive standardization
    if folds < 2 || folds > n || n - n.div_ceil(folds) < 2 {
        return Err(Error::FoldTooSmall { folds, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        label[i] = pos % folds;
    }
    Ok(label)
}

struct FoldModel {
    canonical: CanonicalModel,
    ols: Array1<f64>,
    path: Vec<Option<f64>>,
    y_mean: f64,
    z_test: Array2<f64>,
    y_test: Array1<f64>,
}

fn fit_fold(x: ArrayView2<f64>, y: &Response, train: &[usize], test: &[usize]) -> Result<FoldModel> {
    let x_train = x.select(Axis(0), train);
    let (design, kept) = DesignMatrix::standardize_nonconstant(x_train.view())?;
    let eigen = eigen_of(design.values(), None)?;
    let canonical = to_canonical(&design, eigen)?;
    let y_train = y.select(train);
    let max = canonical.t().min(train.len() - 1);
    let path = k_r_path(&canonical, &y_train, max)?;
    let x_test = x.select(Axis(0), test).select(Axis(1), &kept);
    let z_test = canonical.project(design.apply(x_test.view())?.view())?;
    Ok(FoldModel {
        ols: ols_canonical(&canonical, &y_train)?,
        path,
        y_mean: y_train.mean(),
        z_test,
        y_test: y.select(test).values().to_owned(),
        canonical,
    })
}

/// Choose r by K-fold cross-validated prediction error. Every training part
/// is restandardized and refactorized; for each candidate r, `k_r` is
/// estimated on the training part and the held-out squared errors summed.
/// Candidates run from 1 to the smallest `t - 1` over the full data and the
/// folds. Ties go to the smaller r. The returned k is `k_r` on the full data.
pub fn choose_r_press(
    x: &DesignMatrix,
    c: &CanonicalModel,
    y: &Response,
    options: PressOptions,
) -> Result<KSelection> {
    let n = x.nrows();
    y.check_len(n)?;
    let labels = fold_assignment(n, options.folds, options.seed)?;
    let mut models = Vec::with_capacity(options.folds);
    for f in 0..options.folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| labels[i] == f);
        models.push(fit_fold(x.values(), y, &train, &test)?);
    }
    let full_max = c.t().saturating_sub(1);
    let r_max = models.iter().map(|m| m.path.len()).fold(full_max, usize::min);
    if r_max < 1 {
        return Err(Error::Undefined(
            "cross-validation needs at least 2 components on the full data".into(),
        ));
    }

    let mut press = vec![0.0; r_max];
    for m in &models {
        let eigenvalues = m.canonical.eigen().eigenvalues();
        for (r, total) in (1..=r_max).zip(press.iter_mut()) {
            // without signal the fit is the training mean
            let coef = match m.path[r - 1] {
                Some(k) => ndarray::Zip::from(&m.ols)
                    .and(&eigenvalues)
                    .map_collect(|&a, &l| l / (l + k) * a),
                None => Array1::zeros(m.ols.len()),
            };
            let pred = m.z_test.dot(&coef) + m.y_mean;
            *total += (&m.y_test - &pred).mapv(|e| e * e).sum();
        }
    }

    let full = k_r_path(c, y, r_max)?;
    let eigenvalues = c.eigen().eigenvalues();
    let diagnostics: Vec<ScanRow> = (1..=r_max)
        .map(|r| {
            let k = full[r - 1];
            ScanRow {
                r,
                k_r: k,
                df_variance: k.map(|k| df_variance(eigenvalues, k)),
                criterion: Some(press[r - 1]),
            }
        })
        .collect();
    let r_chosen = argmin_row(&diagnostics).expect("press is always evaluated").r;
    let k = full[r_chosen - 1].ok_or(Error::ZeroSignal)?;
    Ok(KSelection {
        r_chosen,
        k,
        rule: Rule::Press,
        diagnostics,
    })
}

/// Leave-one-out prediction error of ridge with a fixed `k` on a fixed
/// (not restandardized) design, by explicit refits. The intercept is
/// unpenalized.
pub fn loo_press_fixed_k(x: ArrayView2<f64>, y: &Response, k: f64) -> Result<f64> {
    if !(k >= 0.0) {
        return Err(Error::NegativeK(k));
    }
    let n = x.nrows();
    y.check_len(n)?;
    let mut total = 0.0;
    for i in 0..n {
        let rows: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut xs = x.select(Axis(0), &rows);
        let means = xs.mean_axis(Axis(0)).expect("n >= 2");
        xs -= &means;
        let ys = y.select(&rows);
        let y_mean = ys.mean();
        let yc = ys.values().mapv(|v| v - y_mean);
        let svd = thin_svd(xs.view())?;
        let uty = svd.u.t().dot(&yc);
        let d = ndarray::Zip::from(&svd.singular_values)
            .and(&uty)
            .map_collect(|&s, &u| if s > 0.0 { s / (s * s + k) * u } else { 0.0 });
        let beta = svd.v.dot(&d);
        let pred = y_mean + (&x.row(i) - &means).dot(&beta);
        total += (y.values()[i] - pred).powi(2);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogisticScanOptions {
    pub clg: ClgOptions,
    pub newton: NewtonOptions,
    /// Upper bound on the scanned r (defaults to t - 1).
    pub r_max: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticSelection {
    pub selection: KSelection,
    /// Ridge logistic fit at the chosen k; `beta` is on the standardized
    /// predictor scale.
    pub fit: LogisticRidgeFit,
}

/// Ridge logistic regression on the design behind `c`, solved in component
/// coordinates. The ridge solution lies in the row space of X, so fitting
/// `Z = XQ` with the same k and mapping back through Q gives the same
/// maximizer on an n x t problem instead of n x p.
pub fn clg_fit_canonical(
    c: &CanonicalModel,
    y: &Response,
    k: f64,
    options: ClgOptions,
) -> Result<LogisticRidgeFit> {
    let mut fit = clg_fit(c.z(), y, k, options)?;
    fit.beta = c.eigen().q().dot(&fit.beta);
    Ok(fit)
}

/// Logistic version of the fixed-point rule. For each r, a logistic
/// regression on the first r component scores gives `k_r = r / a_r'a_r`;
/// the ridge logistic fit at that k gives `tr(HH')` from the eigenvalues of
/// Z'WZ. The scan stops at the first r whose component fit separates,
/// since every larger r separates too.
pub fn choose_r_doff_logistic(
    c: &CanonicalModel,
    y: &Response,
    options: LogisticScanOptions,
) -> Result<LogisticSelection> {
    let t = c.t();
    if t < 2 {
        return Err(Error::Undefined(format!(
            "the fixed-point scan needs at least 2 components, found {t}"
        )));
    }
    let r_max = options.r_max.unwrap_or(t - 1).clamp(1, t - 1);
    let z = c.z();
    let mut diagnostics = Vec::new();
    let mut best: Option<(f64, usize, LogisticRidgeFit)> = None;
    for r in 1..=r_max {
        let mle = match fit_logistic_mle(z.slice(s![.., ..r]), y, options.newton) {
            Ok(m) => m,
            Err(Error::Separation { .. }) => break,
            Err(e) => return Err(e),
        };
        let k = match k_r_logistic(&mle.coefficients) {
            Ok(k) => k,
            Err(Error::ZeroNorm) => {
                diagnostics.push(ScanRow { r, k_r: None, df_variance: None, criterion: None });
                continue;
            }
            Err(e) => return Err(e),
        };
        let fit = clg_fit(z, y, k, options.clg)?;
        let df = logistic_hat_df(z, fit.probabilities.view(), k)?;
        let criterion = (df - r as f64).abs();
        diagnostics.push(ScanRow {
            r,
            k_r: Some(k),
            df_variance: Some(df),
            criterion: Some(criterion),
        });
        if best.as_ref().is_none_or(|(b, _, _)| criterion < *b) {
            best = Some((criterion, r, fit));
        }
    }
    let (_, r_chosen, mut fit) = best.ok_or_else(|| {
        Error::Undefined("no component count admits a logistic fit".into())
    })?;
    fit.beta = c.eigen().q().dot(&fit.beta);
    Ok(LogisticSelection {
        selection: KSelection {
            r_chosen,
            k: fit.k,
            rule: Rule::DofF,
            diagnostics,
        },
        fit,
    })
}
