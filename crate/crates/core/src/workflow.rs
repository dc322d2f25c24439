//! End-to-end fitting on raw data: standardization, the choice of k, the
//! final fit and its persistence as a self-describing JSON document; and the
//! ridge trace over the scanned component counts.

use std::io::Write;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_pclr, ModelKind};
use crate::error::{Error, Result};
use crate::io::csv_error;
use crate::linalg::{canonical_from, CanonicalModel, DesignMatrix, Response};
use crate::logistic::{logistic_hat_traces, sigmoid, ClgOptions, LogisticRidgeFit, NewtonOptions};
use crate::ridge::{df_from_eigenvalues, fit_ridge, DfTriple};
use crate::select::{
    choose_r_doff, choose_r_doff_logistic, choose_r_fixed, choose_r_press, clg_fit_canonical,
    k_r_logistic, KSelection, LogisticScanOptions, PressOptions, Rule, ScanRow,
};
use crate::sim::{thin_predictors, Thinning};

pub const SCHEMA_VERSION: u32 = 1;

/// How the ridge parameter is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KChoice {
    Given(f64),
    /// `k_r` for a given r.
    FixedR(usize),
    /// `k_r` with r from the fixed-point rule.
    DofF,
    /// `k_r` with r from cross-validated prediction error (linear only).
    Press { folds: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitRequest {
    pub model: ModelKind,
    pub k: KChoice,
    pub clg: ClgOptions,
    pub newton: NewtonOptions,
    /// Estimate k from every `stride`-th predictor only; the final fit uses
    /// all of them.
    pub stride: usize,
}

impl FitRequest {
    pub fn new(model: ModelKind, k: KChoice) -> Self {
        Self {
            model,
            k,
            clg: ClgOptions::default(),
            newton: NewtonOptions::default(),
            stride: 1,
        }
    }
}

/// Standardization of the training predictors. Zero-variance columns are
/// dropped before fitting and get coefficient zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub kept_columns: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    /// Intercept and one coefficient per kept column on the standardized scale.
    pub intercept: f64,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClgReport {
    pub iterations: usize,
    pub converged: bool,
    pub epsilon: f64,
    pub max_sweeps: usize,
    pub penalized_loglik: Option<f64>,
}

/// A fitted model. `intercept` and `beta` are in the units of the input
/// columns, so predicting needs only this document and new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub schema_version: u32,
    pub model: ModelKind,
    /// Absent when k was given.
    pub rule: Option<Rule>,
    pub r: Option<usize>,
    pub k: f64,
    pub df: DfTriple,
    pub n: usize,
    pub p: usize,
    pub stride: usize,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub standardization: Standardization,
    pub clg: Option<ClgReport>,
}

impl FitArtifact {
    /// Fitted values for the linear model, probabilities for the logistic one.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.p || self.beta.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: x.ncols(),
            });
        }
        let eta = x.dot(&ArrayView1::from(&self.beta)) + self.intercept;
        Ok(match self.model {
            ModelKind::Linear => eta,
            ModelKind::Logistic => eta.mapv(sigmoid),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let artifact: Self = serde_json::from_str(text)?;
        if artifact.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "fit schema version {} is not supported (expected {SCHEMA_VERSION})",
                artifact.schema_version
            )));
        }
        Ok(artifact)
    }
}

struct Prepared {
    x: DesignMatrix,
    kept: Vec<usize>,
    p_raw: usize,
    c: CanonicalModel,
    y: Response,
    /// Design used to estimate k when `stride > 1`.
    thinned: Option<(DesignMatrix, CanonicalModel)>,
}

impl Prepared {
    fn new(x_raw: ArrayView2<f64>, y: ArrayView1<f64>, request: &FitRequest) -> Result<Self> {
        if x_raw.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x_raw.nrows(),
                found: y.len(),
            });
        }
        let y = match request.model {
            ModelKind::Linear => Response::continuous(y.to_owned()),
            ModelKind::Logistic => Response::binary(y.to_owned())?,
        };
        let (x, kept) = DesignMatrix::standardize_nonconstant(x_raw)?;
        let c = canonical_from(&x)?;
        let thinned = match request.stride {
            0 => return Err(Error::InvalidInput("stride must be at least 1".into())),
            1 => None,
            s => {
                let (xt, _) = thin_predictors(&x, &Thinning::Stride(s))?;
                let ct = canonical_from(&xt)?;
                Some((xt, ct))
            }
        };
        Ok(Self {
            x,
            kept,
            p_raw: x_raw.ncols(),
            c,
            y,
            thinned,
        })
    }

    fn selection_design(&self) -> (&DesignMatrix, &CanonicalModel) {
        match &self.thinned {
            Some((x, c)) => (x, c),
            None => (&self.x, &self.c),
        }
    }

    fn linear_selection(&self, choice: KChoice) -> Result<Option<KSelection>> {
        let (x, c) = self.selection_design();
        Ok(Some(match choice {
            KChoice::Given(_) => return Ok(None),
            KChoice::FixedR(r) => choose_r_fixed(c, &self.y, r)?,
            KChoice::DofF => choose_r_doff(c, &self.y)?,
            KChoice::Press { folds, seed } => {
                choose_r_press(x, c, &self.y, PressOptions { folds, seed })?
            }
        }))
    }

    /// The logistic choice of k, with the scan's fit on the selection design
    /// when there is one.
    fn logistic_selection(&self, request: &FitRequest) -> Result<Option<(KSelection, Option<LogisticRidgeFit>)>> {
        let (_, c) = self.selection_design();
        match request.k {
            KChoice::Given(_) => Ok(None),
            KChoice::FixedR(r) => {
                let pclr = fit_pclr(c, &self.y, r, request.newton)?;
                let k = k_r_logistic(&pclr.alpha_r)?;
                let row = ScanRow {
                    r,
                    k_r: Some(k),
                    df_variance: None,
                    criterion: None,
                };
                let selection = KSelection {
                    r_chosen: r,
                    k,
                    rule: Rule::Fixed,
                    diagnostics: vec![row],
                };
                Ok(Some((selection, None)))
            }
            KChoice::DofF => {
                let options = LogisticScanOptions {
                    clg: request.clg,
                    newton: request.newton,
                    r_max: None,
                };
                let s = choose_r_doff_logistic(c, &self.y, options)?;
                Ok(Some((s.selection, Some(s.fit))))
            }
            KChoice::Press { .. } => Err(Error::InvalidInput(
                "the PRESS rule is defined for continuous outcomes only".into(),
            )),
        }
    }

    /// Coefficients on the standardized scale mapped to input units, with
    /// zeros for dropped columns.
    fn raw_coefficients(&self, std_intercept: f64, std_beta: &Array1<f64>) -> (f64, Vec<f64>) {
        let (intercept, kept_beta) = self.x.destandardize(std_intercept, std_beta.view());
        let mut beta = vec![0.0; self.p_raw];
        for (&j, &b) in self.kept.iter().zip(&kept_beta) {
            beta[j] = b;
        }
        (intercept, beta)
    }
}

struct FinalFit {
    k: f64,
    df: DfTriple,
    intercept: f64,
    beta: Array1<f64>,
    clg: Option<ClgReport>,
}

fn clg_report(fit: &LogisticRidgeFit, options: ClgOptions) -> ClgReport {
    ClgReport {
        iterations: fit.iterations,
        converged: fit.converged,
        epsilon: options.epsilon,
        max_sweeps: options.max_sweeps,
        penalized_loglik: fit.objective.last().copied(),
    }
}

fn logistic_final(prep: &Prepared, k: f64, fit: LogisticRidgeFit, options: ClgOptions) -> Result<FinalFit> {
    let df = logistic_hat_traces(prep.c.z(), fit.probabilities.view(), k)?;
    Ok(FinalFit {
        k,
        df,
        intercept: fit.intercept,
        clg: Some(clg_report(&fit, options)),
        beta: fit.beta,
    })
}

/// Fit a linear or logistic ridge model to raw predictors and response,
/// choosing k as requested.
pub fn fit(x_raw: ArrayView2<f64>, y: ArrayView1<f64>, request: &FitRequest) -> Result<FitArtifact> {
    let prep = Prepared::new(x_raw, y, request)?;
    let (selection, result) = match request.model {
        ModelKind::Linear => {
            let selection = prep.linear_selection(request.k)?;
            let k = match (&selection, request.k) {
                (Some(s), _) => s.k,
                (None, KChoice::Given(k)) => k,
                (None, _) => unreachable!("only a given k skips selection"),
            };
            let f = fit_ridge(&prep.c, &prep.y, k)?;
            let result = FinalFit {
                k,
                df: f.df,
                intercept: f.intercept,
                beta: f.beta,
                clg: None,
            };
            (selection, result)
        }
        ModelKind::Logistic => match (prep.logistic_selection(request)?, request.k) {
            (None, KChoice::Given(k)) => {
                let f = clg_fit_canonical(&prep.c, &prep.y, k, request.clg)?;
                (None, logistic_final(&prep, k, f, request.clg)?)
            }
            (None, _) => unreachable!("only a given k skips selection"),
            (Some((s, scan_fit)), _) => {
                let f = match scan_fit {
                    Some(f) if prep.thinned.is_none() => f,
                    _ => clg_fit_canonical(&prep.c, &prep.y, s.k, request.clg)?,
                };
                let result = logistic_final(&prep, s.k, f, request.clg)?;
                (Some(s), result)
            }
        },
    };
    let (intercept, beta) = prep.raw_coefficients(result.intercept, &result.beta);
    let (folds, seed) = match request.k {
        KChoice::Press { folds, seed } => (Some(folds), Some(seed)),
        _ => (None, None),
    };
    Ok(FitArtifact {
        schema_version: SCHEMA_VERSION,
        model: request.model,
        rule: selection.as_ref().map(|s| s.rule),
        r: selection.as_ref().map(|s| s.r_chosen),
        k: result.k,
        df: result.df,
        n: prep.x.nrows(),
        p: prep.p_raw,
        stride: request.stride,
        folds,
        seed,
        intercept,
        beta,
        standardization: Standardization {
            kept_columns: prep.kept.clone(),
            means: prep.x.column_means().to_vec(),
            scales: prep.x.column_scales().to_vec(),
            intercept: result.intercept,
            beta: result.beta.to_vec(),
        },
        clg: result.clg,
    })
}

/// One scanned component count.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub r: usize,
    pub k_r: Option<f64>,
    /// `tr(HH')` at `k_r`.
    pub df_variance: Option<f64>,
    /// `tr(H)` at `k_r`.
    pub df_effective: Option<f64>,
    pub criterion: Option<f64>,
    pub chosen: bool,
    /// Coefficients (input units) of the snapshot columns; empty without `k_r`.
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub model: ModelKind,
    pub rule: Rule,
    /// Input columns whose coefficients are recorded in every row.
    pub columns: Vec<usize>,
    pub rows: Vec<TraceRow>,
}

/// The ridge trace: for each r scanned by the rule in `request`, `k_r`, its
/// degrees of freedom, the rule's criterion and the coefficients of the
/// first `snapshot_columns` input columns.
pub fn trace(
    x_raw: ArrayView2<f64>,
    y: ArrayView1<f64>,
    request: &FitRequest,
    snapshot_columns: usize,
) -> Result<TraceTable> {
    if matches!(request.k, KChoice::Given(_) | KChoice::FixedR(_)) {
        return Err(Error::InvalidInput(
            "a trace scans r; use the doff or press rule".into(),
        ));
    }
    let prep = Prepared::new(x_raw, y, request)?;
    let (_, sel_c) = prep.selection_design();
    let columns: Vec<usize> = (0..snapshot_columns.min(prep.p_raw)).collect();
    let snapshot = |intercept: f64, beta: &Array1<f64>| {
        let (_, raw) = prep.raw_coefficients(intercept, beta);
        columns.iter().map(|&j| raw[j]).collect::<Vec<f64>>()
    };
    let selection = match request.model {
        ModelKind::Linear => prep.linear_selection(request.k)?,
        ModelKind::Logistic => prep.logistic_selection(request)?.map(|(s, _)| s),
    }
    .expect("scanning rules always select");

    let mut rows = Vec::with_capacity(selection.diagnostics.len());
    for d in &selection.diagnostics {
        let mut row = TraceRow {
            r: d.r,
            k_r: d.k_r,
            df_variance: d.df_variance,
            df_effective: None,
            criterion: d.criterion,
            chosen: d.r == selection.r_chosen,
            coefficients: Vec::new(),
        };
        if let Some(k) = d.k_r {
            match request.model {
                ModelKind::Linear => {
                    row.df_effective = Some(df_from_eigenvalues(sel_c.eigen().eigenvalues(), k).tr_h);
                    let f = fit_ridge(&prep.c, &prep.y, k)?;
                    row.coefficients = snapshot(f.intercept, &f.beta);
                }
                ModelKind::Logistic => {
                    let on_sel = clg_fit_canonical(sel_c, &prep.y, k, request.clg)?;
                    row.df_effective = Some(logistic_hat_traces(sel_c.z(), on_sel.probabilities.view(), k)?.tr_h);
                    let f = match prep.thinned {
                        None => on_sel,
                        Some(_) => clg_fit_canonical(&prep.c, &prep.y, k, request.clg)?,
                    };
                    row.coefficients = snapshot(f.intercept, &f.beta);
                }
            }
        }
        rows.push(row);
    }
    Ok(TraceTable {
        model: request.model,
        rule: selection.rule,
        columns,
        rows,
    })
}

/// The trace as csv with columns
/// `r,k_r,df_variance,df_effective,criterion,chosen,beta_<j>...`, where `j`
/// is the 1-based input column and missing values are empty.
pub fn write_trace<W: Write>(writer: W, table: &TraceTable) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["r", "k_r", "df_variance", "df_effective", "criterion", "chosen"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(table.columns.iter().map(|j| format!("beta_{}", j + 1)));
    out.write_record(&header).map_err(csv_error)?;
    for row in &table.rows {
        let mut record = vec![
            row.r.to_string(),
            opt(row.k_r),
            opt(row.df_variance),
            opt(row.df_effective),
            opt(row.criterion),
            u8::from(row.chosen).to_string(),
        ];
        if row.coefficients.is_empty() {
            record.extend(table.columns.iter().map(|_| String::new()));
        } else {
            record.extend(row.coefficients.iter().map(f64::to_string));
        }
        out.write_record(&record).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::select::k_r;
    use ndarray::{Array2, Axis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(n: usize, p: usize, binary: bool, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |(_, j)| 10.0 * j as f64 + rng.random::<f64>() * (j + 1) as f64);
        let eta: Array1<f64> = x
            .axis_iter(Axis(0))
            .map(|row| 3.0 * (row[0] - 0.5) - 1.5 * (row[1] - 11.0))
            .collect();
        let y = if binary {
            eta.mapv(|e| if rng.random::<f64>() < sigmoid(e) { 1.0 } else { 0.0 })
        } else {
            eta.mapv(|e| e + 0.3 * (rng.random::<f64>() - 0.5))
        };
        (x, y)
    }

    #[test]
    fn linear_artifact_predicts_fitted_values() {
        let (x, y) = data(30, 12, false, 1);
        let a = fit(x.view(), y.view(), &FitRequest::new(ModelKind::Linear, KChoice::DofF)).unwrap();
        let xs = DesignMatrix::standardize(x.view()).unwrap();
        let c = canonical_from(&xs).unwrap();
        let f = fit_ridge(&c, &Response::continuous(y.clone()), a.k).unwrap();
        let fitted = f.predict(xs.values()).unwrap();
        let via_raw = a.predict(x.view()).unwrap();
        for (u, v) in fitted.iter().zip(&via_raw) {
            assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
        }
        assert!((a.df.tr_hh - a.r.unwrap() as f64).abs() < 0.5 + 1e-9 || a.r == Some(1));
        let back = FitArtifact::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn fixed_r_passes_k_through() {
        let (x, y) = data(30, 12, false, 2);
        let a = fit(x.view(), y.view(), &FitRequest::new(ModelKind::Linear, KChoice::FixedR(5))).unwrap();
        let xs = DesignMatrix::standardize(x.view()).unwrap();
        let c = canonical_from(&xs).unwrap();
        assert_eq!(a.k, k_r(&c, &Response::continuous(y), 5).unwrap());
        assert_eq!((a.rule, a.r), (Some(Rule::Fixed), Some(5)));
    }

    #[test]
    fn constant_columns_get_zero() {
        let (mut x, y) = data(25, 6, false, 3);
        x.column_mut(2).fill(4.0);
        let a = fit(x.view(), y.view(), &FitRequest::new(ModelKind::Linear, KChoice::Given(1.0))).unwrap();
        assert_eq!(a.beta[2], 0.0);
        assert_eq!(a.standardization.kept_columns, vec![0, 1, 3, 4, 5]);
        assert_eq!(a.rule, None);
    }

    #[test]
    fn logistic_given_k_converges() {
        let (x, y) = data(60, 4, true, 4);
        let a = fit(x.view(), y.view(), &FitRequest::new(ModelKind::Logistic, KChoice::Given(10.0))).unwrap();
        assert!(a.clg.as_ref().unwrap().converged);
        let p = a.predict(x.view()).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        let press = FitRequest::new(ModelKind::Logistic, KChoice::Press { folds: 5, seed: 0 });
        assert!(fit(x.view(), y.view(), &press).is_err());
    }

    #[test]
    fn trace_covers_scan_and_flags_choice() {
        let (x, y) = data(30, 12, false, 5);
        let request = FitRequest::new(ModelKind::Linear, KChoice::DofF);
        let table = trace(x.view(), y.view(), &request, 100).unwrap();
        let a = fit(x.view(), y.view(), &request).unwrap();
        assert_eq!(table.columns.len(), 12);
        let rs: Vec<usize> = table.rows.iter().map(|r| r.r).collect();
        assert_eq!(rs, (1..12).collect::<Vec<_>>());
        let chosen: Vec<&TraceRow> = table.rows.iter().filter(|r| r.chosen).collect();
        assert_eq!(chosen.len(), 1);
        assert_eq!(Some(chosen[0].r), a.r);
        assert_eq!(chosen[0].coefficients, a.beta);
        let mut buf = Vec::new();
        write_trace(&mut buf, &table).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,k_r,df_variance,df_effective,criterion,chosen,beta_1,"));
        assert_eq!(text.lines().count(), 12);
    }

    #[test]
    fn stride_estimates_k_on_a_subset() {
        let (x, y) = data(30, 12, false, 6);
        let mut request = FitRequest::new(ModelKind::Linear, KChoice::FixedR(3));
        request.stride = 2;
        let a = fit(x.view(), y.view(), &request).unwrap();
        let xs = DesignMatrix::standardize(x.select(Axis(1), &[0, 2, 4, 6, 8, 10]).view()).unwrap();
        let c = canonical_from(&xs).unwrap();
        assert_eq!(a.k, k_r(&c, &Response::continuous(y), 3).unwrap());
        assert_eq!(a.beta.len(), 12);
    }
}
