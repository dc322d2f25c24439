//! Standardization, the eigensystem of X'X and the canonical (principal
//! component) form shared by every fitting routine.
//!
//! Columns are centred and divided by `sqrt(sum (x - mean)^2)`, i.e. the
//! sample standard deviation times `sqrt(n - 1)`, so X'X has a unit diagonal.
//! The eigensystem is always obtained from a thin SVD of X; the p x p matrix
//! X'X is never formed.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: Array2<f64>,
    column_means: Array1<f64>,
    column_scales: Array1<f64>,
    standardized: bool,
}

impl DesignMatrix {
    /// Centre and scale `raw` so that X'X is in correlation form.
    pub fn standardize(raw: ArrayView2<f64>) -> Result<Self> {
        let (n, p) = raw.dim();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "standardization needs at least 2 rows, got {n}"
            )));
        }
        // fixed layout, so that reductions round the same way for any input
        let mut values = raw.as_standard_layout().into_owned();
        let mut column_means = Array1::zeros(p);
        let mut column_scales = Array1::zeros(p);
        for (j, mut col) in values.axis_iter_mut(Axis(1)).enumerate() {
            let mean = col.sum() / n as f64;
            col.mapv_inplace(|v| v - mean);
            let ss = col.dot(&col);
            let scale = ss.sqrt();
            if is_constant(scale, mean, n) {
                return Err(Error::ConstantColumn(j));
            }
            col.mapv_inplace(|v| v / scale);
            column_means[j] = mean;
            column_scales[j] = scale;
        }
        Ok(Self {
            values,
            column_means,
            column_scales,
            standardized: true,
        })
    }

    /// Standardize after dropping zero-variance columns. Returns the design
    /// and the indices of the kept columns in `raw`.
    pub fn standardize_nonconstant(raw: ArrayView2<f64>) -> Result<(Self, Vec<usize>)> {
        let n = raw.nrows();
        let kept: Vec<usize> = (0..raw.ncols())
            .filter(|&j| {
                let col = raw.column(j);
                let mean = col.sum() / n.max(1) as f64;
                let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
                !is_constant(ss.sqrt(), mean, n)
            })
            .collect();
        let design = Self::standardize(raw.select(Axis(1), &kept).view())?;
        Ok((design, kept))
    }

    /// Wrap a matrix without transforming it.
    pub fn unstandardized(values: Array2<f64>) -> Self {
        let p = values.ncols();
        Self {
            values,
            column_means: Array1::zeros(p),
            column_scales: Array1::ones(p),
            standardized: false,
        }
    }

    /// Apply the stored training transform to new rows.
    pub fn apply(&self, raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        if raw.ncols() != self.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                found: raw.ncols(),
            });
        }
        let mut out = raw.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.column_means[j], self.column_scales[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_means(&self) -> ArrayView1<'_, f64> {
        self.column_means.view()
    }

    pub fn column_scales(&self) -> ArrayView1<'_, f64> {
        self.column_scales.view()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Keep only the given columns (in the given order), carrying their
    /// transform along.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(1), columns),
            column_means: self.column_means.select(Axis(0), columns),
            column_scales: self.column_scales.select(Axis(0), columns),
            standardized: self.standardized,
        }
    }

    /// Map coefficients on the standardized scale back to raw predictor units.
    /// Returns `(intercept, beta)` such that `intercept + x_raw . beta` equals
    /// `standardized_intercept + x_std . standardized_beta`.
    pub fn destandardize(
        &self,
        standardized_intercept: f64,
        standardized_beta: ArrayView1<f64>,
    ) -> (f64, Array1<f64>) {
        let beta = &standardized_beta / &self.column_scales;
        let intercept = standardized_intercept - beta.dot(&self.column_means);
        (intercept, beta)
    }
}

// Relative test so that constant columns with large offsets are caught.
fn is_constant(scale: f64, mean: f64, n: usize) -> bool {
    !(scale > f64::EPSILON * mean.abs().max(1.0) * (n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    values: Array1<f64>,
    kind: ResponseKind,
}

impl Response {
    pub fn continuous(values: Array1<f64>) -> Self {
        Self {
            values,
            kind: ResponseKind::Continuous,
        }
    }

    /// Binary labels; every entry must be exactly 0 or 1.
    pub fn binary(values: Array1<f64>) -> Result<Self> {
        if let Some((row, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| v != 0.0 && v != 1.0)
        {
            return Err(Error::NonBinaryLabels { row, value });
        }
        Ok(Self {
            values,
            kind: ResponseKind::Binary,
        })
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn kind(&self) -> ResponseKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.mean().unwrap_or(0.0)
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            values: self.values.select(Axis(0), rows),
            kind: self.kind,
        }
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// Eigenvectors and (nonzero) eigenvalues of X'X, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    q: Array2<f64>,
    eigenvalues: Array1<f64>,
    zero_threshold: f64,
}

impl EigenSystem {
    /// Number of retained components.
    pub fn t(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn q(&self) -> ArrayView2<'_, f64> {
        self.q.view()
    }

    pub fn eigenvalues(&self) -> ArrayView1<'_, f64> {
        self.eigenvalues.view()
    }

    pub fn zero_threshold(&self) -> f64 {
        self.zero_threshold
    }

    /// Number of predictors p.
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Build directly from a spectrum. `q` must have orthonormal columns.
    pub fn from_parts(q: Array2<f64>, eigenvalues: Array1<f64>) -> Result<Self> {
        if q.ncols() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: q.ncols(),
                found: eigenvalues.len(),
            });
        }
        if eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::InvalidInput("eigenvalues must be positive".into()));
        }
        if eigenvalues.windows(2).into_iter().any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("eigenvalues must be sorted descending".into()));
        }
        Ok(Self {
            q,
            eigenvalues,
            zero_threshold: 0.0,
        })
    }

    /// Smallest index r with cumulative eigenvalue share >= `proportion`.
    pub fn components_for_variance(&self, proportion: f64) -> usize {
        let total = self.eigenvalues.sum();
        let mut acc = 0.0;
        for (j, &l) in self.eigenvalues.iter().enumerate() {
            acc += l;
            if acc >= proportion * total {
                return j + 1;
            }
        }
        self.t()
    }
}

/// Default numerical-rank threshold: lambda_max * max(n, p) * machine epsilon.
pub fn default_zero_threshold(lambda_max: f64, n: usize, p: usize) -> f64 {
    lambda_max * n.max(p) as f64 * f64::EPSILON
}

pub(crate) struct ThinSvd {
    pub u: Array2<f64>,
    pub singular_values: Array1<f64>,
    pub v: Array2<f64>,
}

pub(crate) fn thin_svd(x: ArrayView2<f64>) -> Result<ThinSvd> {
    let (n, p) = x.dim();
    let m = faer::Mat::<f64>::from_fn(n, p, |i, j| x[[i, j]]);
    let svd = m
        .thin_svd()
        .map_err(|e| Error::InvalidInput(format!("SVD failed to converge: {e:?}")))?;
    let k = n.min(p);
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    Ok(ThinSvd {
        u: Array2::from_shape_fn((n, k), |(i, j)| u[(i, j)]),
        singular_values: Array1::from_shape_fn(k, |j| s[j]),
        v: Array2::from_shape_fn((p, k), |(i, j)| v[(i, j)]),
    })
}

/// Eigenvalues of `x' x` from the singular values of `x`, descending.
pub(crate) fn gram_eigenvalues(x: ArrayView2<f64>) -> Result<Array1<f64>> {
    let (n, p) = x.dim();
    let m = faer::Mat::<f64>::from_fn(n, p, |i, j| x[[i, j]]);
    let s = m
        .singular_values()
        .map_err(|e| Error::InvalidInput(format!("SVD failed to converge: {e:?}")))?;
    Ok(s.into_iter().map(|v| v * v).collect())
}

/// Solve `a x = b` for symmetric positive definite `a` (Cholesky).
pub(crate) fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    use faer::linalg::solvers::Solve;
    let n = a.nrows();
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[[i, j]]);
    let llt = m.llt(faer::Side::Lower).ok()?;
    let rhs = faer::Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
    let x = llt.solve(&rhs);
    let out = Array1::from_shape_fn(n, |i| x[(i, 0)]);
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Flip each column so that its largest-magnitude entry is positive.
fn fix_signs(q: &mut Array2<f64>) {
    for mut col in q.axis_iter_mut(Axis(1)) {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

/// Eigensystem of X'X via a thin SVD of X, dropping eigenvalues at or below
/// `zero_threshold` (default [`default_zero_threshold`]).
pub fn eigendecompose(x: &DesignMatrix, zero_threshold: Option<f64>) -> Result<EigenSystem> {
    if !x.is_standardized() {
        return Err(Error::InvalidInput(
            "eigendecompose expects a standardized design matrix".into(),
        ));
    }
    eigen_of(x.values(), zero_threshold)
}

pub(crate) fn eigen_of(x: ArrayView2<f64>, zero_threshold: Option<f64>) -> Result<EigenSystem> {
    let (n, p) = x.dim();
    let svd = thin_svd(x)?;
    let eig = svd.singular_values.mapv(|s| s * s);
    let lambda_max = eig.first().copied().unwrap_or(0.0);
    let threshold = zero_threshold.unwrap_or_else(|| default_zero_threshold(lambda_max, n, p));
    let t = eig.iter().take_while(|&&l| l > threshold).count();
    if t == 0 {
        return Err(Error::RankZero { threshold });
    }
    let mut q = svd.v.slice(ndarray::s![.., ..t]).to_owned();
    fix_signs(&mut q);
    Ok(EigenSystem {
        q,
        eigenvalues: eig.slice(ndarray::s![..t]).to_owned(),
        zero_threshold: threshold,
    })
}

/// The model in principal-component coordinates: Z = XQ.
#[derive(Debug, Clone)]
pub struct CanonicalModel {
    z: Array2<f64>,
    eigen: EigenSystem,
}

impl CanonicalModel {
    pub fn z(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    pub fn eigen(&self) -> &EigenSystem {
        &self.eigen
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn t(&self) -> usize {
        self.eigen.t()
    }

    /// Project standardized rows onto the retained components.
    pub fn project(&self, x_new: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x_new.ncols() != self.eigen.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.eigen.dim(),
                found: x_new.ncols(),
            });
        }
        Ok(x_new.dot(&self.eigen.q))
    }

    /// `z_j' y` for every component.
    pub(crate) fn zty(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self.z.t().dot(&y)
    }
}

pub fn to_canonical(x: &DesignMatrix, eigen: EigenSystem) -> Result<CanonicalModel> {
    if x.ncols() != eigen.dim() {
        return Err(Error::DimensionMismatch {
            expected: eigen.dim(),
            found: x.ncols(),
        });
    }
    let z = x.values().dot(&eigen.q);
    Ok(CanonicalModel { z, eigen })
}

/// Standardized X straight to canonical form with the default threshold.
pub fn canonical_from(x: &DesignMatrix) -> Result<CanonicalModel> {
    let eigen = eigendecompose(x, None)?;
    to_canonical(x, eigen)
}

/// beta = Q alpha.
pub fn back_transform(alpha: ArrayView1<f64>, eigen: &EigenSystem) -> Result<Array1<f64>> {
    if alpha.len() != eigen.t() {
        return Err(Error::DimensionMismatch {
            expected: eigen.t(),
            found: alpha.len(),
        });
    }
    Ok(eigen.q.dot(&alpha))
}
