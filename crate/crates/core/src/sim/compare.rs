use std::sync::OnceLock;

use ndarray::{Array1, Axis};
use rayon::prelude::*;

use super::genotype::{generate_genotypes, GenotypeSpec};
use super::scenario::{generate_scenario, Dataset, Link, ScenarioSpec};
use super::{classification_error, mean_and_se, pse, replicate_seeds};
use crate::baselines::{fit_pclr, fit_selected_multiple, univariate_screen, Threshold, UnivariateScreen};
use crate::error::{Error, Result};
use crate::linalg::{canonical_from, CanonicalModel, DesignMatrix, Response};
use crate::logistic::{ClgOptions, NewtonOptions};
use crate::ridge::fit_ridge;
use crate::select::{
    choose_r_doff, choose_r_doff_logistic, choose_r_press, clg_fit_canonical, k_r, k_r_logistic,
    LogisticScanOptions, PressOptions,
};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Scenario(ScenarioSpec),
    Genotype(GenotypeSpec),
}

impl DataSpec {
    pub fn link(&self) -> Link {
        match self {
            DataSpec::Scenario(s) => s.link,
            DataSpec::Genotype(g) => g.link,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            DataSpec::Scenario(s) => s.seed,
            DataSpec::Genotype(g) => g.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            DataSpec::Scenario(s) => DataSpec::Scenario(ScenarioSpec { seed, ..s.clone() }),
            DataSpec::Genotype(g) => DataSpec::Genotype(GenotypeSpec { seed, ..g.clone() }),
        }
    }

    /// The dataset for one replicate, generated with `seed` in place of the
    /// spec's own seed.
    pub fn generate_with_seed(&self, seed: u64) -> Result<Dataset> {
        match self.with_seed(seed) {
            DataSpec::Scenario(s) => generate_scenario(&s),
            DataSpec::Genotype(g) => generate_genotypes(&g).map(|d| d.dataset),
        }
    }
}

/// A prediction method evaluated by [`run_comparison`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Ridge with `k_r`, r from the fixed-point rule.
    RidgeDofF,
    /// Ridge with `k_r`, r from cross-validated prediction error.
    RidgePress { folds: usize },
    RidgeFixedR(usize),
    /// r = the fewest components explaining this share of the variance.
    RidgeVarExplained(f64),
    /// r = every component with a nonzero eigenvalue.
    RidgeMax,
    /// Top proportion of univariately ranked predictors in a multiple
    /// regression, after LD pruning.
    Univariate { proportion: f64, ld_prune_r2: f64 },
}

impl Method {
    pub fn label(&self) -> String {
        match *self {
            Method::RidgeDofF => "ridge-doff".into(),
            Method::RidgePress { .. } => "ridge-press".into(),
            Method::RidgeFixedR(r) => format!("ridge-r{r}"),
            Method::RidgeVarExplained(v) => format!("ridge-var{}", fmt_percent(v)),
            Method::RidgeMax => "ridge-max".into(),
            Method::Univariate { proportion, .. } => format!("univariate-{}%", fmt_percent(proportion)),
        }
    }

    /// Parse a label as produced by [`Method::label`]. PRESS uses 10 folds and
    /// univariate selection prunes at r^2 > 0.9.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unknown method '{s}'"));
        let percent = |v: &str| -> Result<f64> {
            let x: f64 = v.parse().map_err(|_| bad())?;
            if !(x > 0.0 && x <= 100.0) {
                return Err(bad());
            }
            Ok(x / 100.0)
        };
        Ok(match s {
            "ridge-doff" => Method::RidgeDofF,
            "ridge-press" => Method::RidgePress { folds: 10 },
            "ridge-max" => Method::RidgeMax,
            _ => {
                if let Some(v) = s.strip_prefix("ridge-var") {
                    Method::RidgeVarExplained(percent(v)?)
                } else if let Some(v) = s.strip_prefix("ridge-r") {
                    Method::RidgeFixedR(v.parse().map_err(|_| bad())?)
                } else if let Some(v) = s.strip_prefix("univariate-") {
                    Method::Univariate {
                        proportion: percent(v.trim_end_matches('%'))?,
                        ld_prune_r2: 0.9,
                    }
                } else {
                    return Err(bad());
                }
            }
        })
    }
}

fn fmt_percent(v: f64) -> String {
    let p = v * 100.0;
    let rounded = (p * 1e6).round() / 1e6;
    format!("{rounded}")
}

/// Held-out performance of one method across replicates: PSE for
/// continuous outcomes, mean classification error for binary ones.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub method: String,
    pub metric: &'static str,
    /// One value per successful replicate, in replicate order.
    pub values: Vec<f64>,
    /// Replicates where the method failed, with the error message.
    pub failures: Vec<(usize, String)>,
    pub mean: f64,
    pub std_error: f64,
}

impl MetricReport {
    pub fn replicates(&self) -> usize {
        self.values.len()
    }
}

struct Replicate {
    x: DesignMatrix,
    c: CanonicalModel,
    y: Response,
    x_test: ndarray::Array2<f64>,
    y_test: Array1<f64>,
    link: Link,
    screen: OnceLock<Result<UnivariateScreen, String>>,
}

impl Replicate {
    fn new(data: Dataset, link: Link) -> Result<Self> {
        let (x, kept) = DesignMatrix::standardize_nonconstant(data.x_train.view())?;
        let x_test = x.apply(data.x_test.select(Axis(1), &kept).view())?;
        let y = match link {
            Link::Identity => Response::continuous(data.y_train),
            Link::Logistic => Response::binary(data.y_train)?,
        };
        let c = canonical_from(&x)?;
        Ok(Self {
            x,
            c,
            y,
            x_test,
            y_test: data.y_test,
            link,
            screen: OnceLock::new(),
        })
    }

    fn score(&self, prediction: &Array1<f64>) -> Result<f64> {
        match self.link {
            Link::Identity => pse(self.y_test.view(), prediction.view()),
            Link::Logistic => classification_error(self.y_test.view(), prediction.view()),
        }
    }

    fn component_count(&self, method: Method) -> usize {
        let max = self.c.t().min(self.c.n() - 1);
        match method {
            Method::RidgeFixedR(r) => r,
            Method::RidgeVarExplained(v) => self.c.eigen().components_for_variance(v).min(max),
            _ => max,
        }
    }

    fn evaluate(&self, method: Method) -> Result<f64> {
        let prediction = match (method, self.link) {
            (Method::Univariate { proportion, ld_prune_r2 }, _) => {
                let screen = self
                    .screen
                    .get_or_init(|| univariate_screen(&self.x, &self.y).map_err(|e| e.to_string()))
                    .as_ref()
                    .map_err(|e| Error::InvalidInput(e.clone()))?;
                let fit = fit_selected_multiple(
                    &self.x,
                    &self.y,
                    screen,
                    Threshold::Proportion(proportion),
                    ld_prune_r2,
                )?;
                fit.predict(self.x_test.view())?
            }
            (_, Link::Identity) => {
                let k = match method {
                    Method::RidgeDofF => choose_r_doff(&self.c, &self.y)?.k,
                    Method::RidgePress { folds } => {
                        let options = PressOptions { folds, seed: 0 };
                        choose_r_press(&self.x, &self.c, &self.y, options)?.k
                    }
                    _ => k_r(&self.c, &self.y, self.component_count(method))?,
                };
                fit_ridge(&self.c, &self.y, k)?.predict(self.x_test.view())?
            }
            (_, Link::Logistic) => {
                let fit = match method {
                    Method::RidgeDofF => {
                        choose_r_doff_logistic(&self.c, &self.y, LogisticScanOptions::default())?.fit
                    }
                    Method::RidgePress { .. } => {
                        return Err(Error::InvalidInput(
                            "the PRESS rule is defined for continuous outcomes only".into(),
                        ))
                    }
                    _ => {
                        let r = self.component_count(method);
                        let pclr = fit_pclr(&self.c, &self.y, r, NewtonOptions::default())?;
                        let k = k_r_logistic(&pclr.alpha_r)?;
                        clg_fit_canonical(&self.c, &self.y, k, ClgOptions::default())?
                    }
                };
                fit.predict_proba(self.x_test.view())?
            }
        };
        self.score(&prediction)
    }
}

/// Evaluate every method on `replicates` datasets drawn from `data`.
/// Replicate seeds derive from the spec's seed, replicates run in parallel,
/// and a method failing on a replicate is recorded rather than fatal.
pub fn run_comparison(data: &DataSpec, methods: &[Method], replicates: usize) -> Result<Vec<MetricReport>> {
    if methods.is_empty() {
        return Err(Error::InvalidInput("no methods to compare".into()));
    }
    let seeds = replicate_seeds(data.seed(), replicates);
    let link = data.link();
    let outcomes: Vec<Vec<Result<f64, String>>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<Result<f64, String>>> {
            let rep = Replicate::new(data.generate_with_seed(seed)?, link)?;
            Ok(methods
                .iter()
                .map(|&m| rep.evaluate(m).map_err(|e| e.to_string()))
                .collect())
        })
        .collect::<Result<_>>()?;
    let metric = match link {
        Link::Identity => "pse",
        Link::Logistic => "ce",
    };
    Ok(methods
        .iter()
        .enumerate()
        .map(|(m, method)| {
            let mut values = Vec::new();
            let mut failures = Vec::new();
            for (rep, row) in outcomes.iter().enumerate() {
                match &row[m] {
                    Ok(v) => values.push(*v),
                    Err(e) => failures.push((rep, e.clone())),
                }
            }
            let (mean, std_error) = mean_and_se(&values);
            MetricReport {
                method: method.label(),
                metric,
                values,
                failures,
                mean,
                std_error,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for m in [
            Method::RidgeDofF,
            Method::RidgePress { folds: 10 },
            Method::RidgeFixedR(7),
            Method::RidgeVarExplained(0.5),
            Method::RidgeMax,
            Method::Univariate { proportion: 0.001, ld_prune_r2: 0.9 },
            Method::Univariate { proportion: 0.03, ld_prune_r2: 0.9 },
        ] {
            assert_eq!(Method::parse(&m.label()).unwrap(), m, "{}", m.label());
        }
        assert_eq!(Method::Univariate { proportion: 0.005, ld_prune_r2: 0.9 }.label(), "univariate-0.5%");
        assert!(Method::parse("lasso").is_err());
        assert!(Method::parse("ridge-var0").is_err());
    }

    #[test]
    fn scenario_comparison_is_seeded() {
        let spec = DataSpec::Scenario(ScenarioSpec::table1(1).unwrap());
        let methods = [Method::RidgeDofF, Method::RidgeMax, Method::Univariate { proportion: 0.25, ld_prune_r2: 0.9 }];
        let a = run_comparison(&spec, &methods, 3).unwrap();
        let b = run_comparison(&spec, &methods, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        for report in &a {
            assert_eq!(report.replicates(), 3, "{:?}", report.failures);
            let mean = report.values.iter().sum::<f64>() / 3.0;
            assert!((report.mean - mean).abs() < 1e-12);
            // noise variance is 9
            assert!(report.mean > 4.0 && report.mean < 30.0);
        }
    }

    #[test]
    fn binary_press_failure_is_recorded() {
        let mut s = ScenarioSpec::table1(1).unwrap();
        s.link = Link::Logistic;
        let reports = run_comparison(&DataSpec::Scenario(s), &[Method::RidgePress { folds: 5 }, Method::RidgeDofF], 2).unwrap();
        assert_eq!(reports[0].failures.len(), 2);
        assert!(reports[0].mean.is_nan());
        assert_eq!(reports[1].metric, "ce");
        assert!(reports[1].values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
