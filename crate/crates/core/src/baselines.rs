//! Comparators: principal components (logistic) regression and univariate
//! screening followed by a multiple regression on the selected predictors.

use ndarray::{s, Array1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::linalg::{back_transform, canonical_from, CanonicalModel, DesignMatrix, Response, ResponseKind};
use crate::logistic::{fit_logistic_mle, sigmoid, NewtonOptions};
use crate::ridge::{fit_ridge, ols_canonical};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Logistic,
}

/// Regression on the first `r` components; the remaining components get
/// coefficient zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PcrFit {
    pub r: usize,
    pub alpha_r: Array1<f64>,
    /// Coefficients on the standardized predictor scale, `Q_r alpha_r`.
    pub beta: Array1<f64>,
    pub intercept: f64,
    pub kind: ModelKind,
}

impl PcrFit {
    /// Linear predictor for the linear kind, probability for the logistic kind.
    pub fn predict(&self, x_new: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x_new.ncols() != self.beta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta.len(),
                found: x_new.ncols(),
            });
        }
        let eta = x_new.dot(&self.beta) + self.intercept;
        Ok(match self.kind {
            ModelKind::Linear => eta,
            ModelKind::Logistic => eta.mapv(sigmoid),
        })
    }
}

fn check_r(c: &CanonicalModel, r: usize) -> Result<()> {
    if r < 1 || r > c.t() {
        return Err(Error::ROutOfRange { r, max: c.t() });
    }
    Ok(())
}

fn beta_from_leading(c: &CanonicalModel, alpha_r: &Array1<f64>) -> Result<Array1<f64>> {
    let mut alpha = Array1::zeros(c.t());
    alpha.slice_mut(s![..alpha_r.len()]).assign(alpha_r);
    back_transform(alpha.view(), c.eigen())
}

pub fn fit_pcr(c: &CanonicalModel, y: &Response, r: usize) -> Result<PcrFit> {
    check_r(c, r)?;
    let alpha_r = ols_canonical(c, y)?.slice(s![..r]).to_owned();
    Ok(PcrFit {
        r,
        beta: beta_from_leading(c, &alpha_r)?,
        alpha_r,
        intercept: y.mean(),
        kind: ModelKind::Linear,
    })
}

/// Unpenalized logistic regression on the first `r` component scores.
pub fn fit_pclr(c: &CanonicalModel, y: &Response, r: usize, options: NewtonOptions) -> Result<PcrFit> {
    check_r(c, r)?;
    let mle = fit_logistic_mle(c.z().slice(s![.., ..r]), y, options)?;
    Ok(PcrFit {
        r,
        beta: beta_from_leading(c, &mle.coefficients)?,
        alpha_r: mle.coefficients,
        intercept: mle.intercept,
        kind: ModelKind::Logistic,
    })
}

/// Per-predictor association tests.
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariateScreen {
    /// t statistic of the slope (linear) or Wald z (logistic).
    pub statistics: Array1<f64>,
    pub p_values: Array1<f64>,
    /// Predictor indices, most significant first.
    pub order: Vec<usize>,
    pub kind: ModelKind,
}

/// One simple regression per column of a standardized design: a t-test on
/// the slope for continuous responses, a Wald test from a one-predictor
/// logistic fit for binary ones. A column whose logistic fit separates gets
/// statistic 0 and p-value 1.
pub fn univariate_screen(x: &DesignMatrix, y: &Response) -> Result<UnivariateScreen> {
    let (n, p) = (x.nrows(), x.ncols());
    y.check_len(n)?;
    if !x.is_standardized() {
        return Err(Error::InvalidInput("screening expects a standardized design".into()));
    }
    let (kind, statistics, p_values) = match y.kind() {
        ResponseKind::Continuous => {
            if n < 3 {
                return Err(Error::InvalidInput("the slope t-test needs n >= 3".into()));
            }
            let mean = y.mean();
            let yc = y.values().mapv(|v| v - mean);
            let syy = yc.dot(&yc);
            let dist = StudentsT::new(0.0, 1.0, (n - 2) as f64).expect("n >= 3");
            let slopes = x.values().t().dot(&yc);
            // unit-norm centred columns: slope = x'y, se^2 = rss / (n - 2)
            let stats: Array1<f64> = slopes.mapv(|b| {
                let rss = (syy - b * b).max(0.0);
                if rss == 0.0 {
                    if b == 0.0 { 0.0 } else { f64::INFINITY.copysign(b) }
                } else {
                    b / (rss / (n - 2) as f64).sqrt()
                }
            });
            let pv = stats.mapv(|t| 2.0 * dist.sf(t.abs()));
            (ModelKind::Linear, stats, pv)
        }
        ResponseKind::Binary => {
            let normal = Normal::standard();
            let values = x.values();
            let results: Vec<(f64, f64)> = (0..p)
                .into_par_iter()
                .map(|j| {
                    let col = values.slice(s![.., j..j + 1]);
                    match fit_logistic_mle(col, y, NewtonOptions::default()) {
                        Ok(m) => {
                            let z = m.coefficients[0] / m.covariance[[1, 1]].sqrt();
                            (z, 2.0 * normal.sf(z.abs()))
                        }
                        Err(_) => (0.0, 1.0),
                    }
                })
                .collect();
            let stats = results.iter().map(|r| r.0).collect();
            let pv = results.iter().map(|r| r.1).collect();
            (ModelKind::Logistic, stats, pv)
        }
    };
    let mut order: Vec<usize> = (0..p).collect();
    // |statistic| rather than p-value so that underflowed p-values still rank
    order.sort_by(|&a, &b| {
        statistics[b]
            .abs()
            .total_cmp(&statistics[a].abs())
            .then(a.cmp(&b))
    });
    Ok(UnivariateScreen {
        statistics,
        p_values,
        order,
        kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Top `round(proportion * p)` predictors.
    Proportion(f64),
    /// Predictors with p-value at or below the cutoff.
    PValue(f64),
}

/// Multiple regression on the screened predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedFit {
    /// Columns of the full design used, most significant first.
    pub columns: Vec<usize>,
    pub intercept: f64,
    /// Coefficients of `columns` on the standardized scale.
    pub coefficients: Array1<f64>,
    pub kind: ModelKind,
}

impl SelectedFit {
    /// Prediction from the full standardized design (all p columns).
    pub fn predict(&self, x_new: ArrayView2<f64>) -> Result<Array1<f64>> {
        if let Some(&max) = self.columns.iter().max() {
            if max >= x_new.ncols() {
                return Err(Error::DimensionMismatch {
                    expected: max + 1,
                    found: x_new.ncols(),
                });
            }
        }
        let eta = x_new.select(Axis(1), &self.columns).dot(&self.coefficients) + self.intercept;
        Ok(match self.kind {
            ModelKind::Linear => eta,
            ModelKind::Logistic => eta.mapv(sigmoid),
        })
    }
}

/// Candidates passing the threshold, then greedy pruning in order of
/// significance: a candidate is dropped if its squared correlation with an
/// already kept predictor exceeds `ld_prune_r2`.
pub fn select_predictors(
    x: &DesignMatrix,
    screen: &UnivariateScreen,
    threshold: Threshold,
    ld_prune_r2: f64,
) -> Vec<usize> {
    let p = screen.order.len();
    let candidates: Vec<usize> = match threshold {
        Threshold::Proportion(f) => {
            let m = ((f * p as f64).round() as usize).min(p);
            screen.order[..m].to_vec()
        }
        Threshold::PValue(cut) => screen
            .order
            .iter()
            .copied()
            .filter(|&j| screen.p_values[j] <= cut)
            .collect(),
    };
    let values = x.values();
    let mut kept: Vec<usize> = Vec::new();
    for j in candidates {
        let col = values.column(j);
        let linked = kept.iter().any(|&i| {
            let r = col.dot(&values.column(i));
            r * r > ld_prune_r2
        });
        if !linked {
            kept.push(j);
        }
    }
    kept
}

pub fn fit_selected_multiple(
    x: &DesignMatrix,
    y: &Response,
    screen: &UnivariateScreen,
    threshold: Threshold,
    ld_prune_r2: f64,
) -> Result<SelectedFit> {
    y.check_len(x.nrows())?;
    let columns = select_predictors(x, screen, threshold, ld_prune_r2);
    let n = x.nrows();
    if columns.len() >= n {
        return Err(Error::TooManySelected {
            selected: columns.len(),
            n,
        });
    }
    let kind = screen.kind;
    if columns.is_empty() {
        let mean = y.mean();
        let intercept = match kind {
            ModelKind::Linear => mean,
            ModelKind::Logistic => {
                let m = mean.clamp(1e-12, 1.0 - 1e-12);
                (m / (1.0 - m)).ln()
            }
        };
        return Ok(SelectedFit {
            columns,
            intercept,
            coefficients: Array1::zeros(0),
            kind,
        });
    }
    let sub = x.select_columns(&columns);
    let (intercept, coefficients) = match kind {
        ModelKind::Linear => {
            let c = canonical_from(&sub)?;
            let fit = fit_ridge(&c, y, 0.0)?;
            (fit.intercept, fit.beta)
        }
        ModelKind::Logistic => {
            let m = fit_logistic_mle(sub.values(), y, NewtonOptions::default())?;
            (m.intercept, m.coefficients)
        }
    };
    Ok(SelectedFit {
        columns,
        intercept,
        coefficients,
        kind,
    })
}
