use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::genotype::bernoulli_labels;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Identity,
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BetaPattern {
    Explicit(Vec<f64>),
    /// The same value for every coefficient.
    Constant(f64),
    /// 1 on the given inclusive, 1-based column ranges; 0 elsewhere.
    Ones(Vec<(usize, usize)>),
}

impl BetaPattern {
    pub fn resolve(&self, p: usize) -> Result<Array1<f64>> {
        match self {
            BetaPattern::Explicit(v) => {
                if v.len() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        found: v.len(),
                    });
                }
                Ok(Array1::from(v.clone()))
            }
            BetaPattern::Constant(c) => Ok(Array1::from_elem(p, *c)),
            BetaPattern::Ones(ranges) => {
                let mut beta = Array1::zeros(p);
                for &(a, b) in ranges {
                    if a < 1 || b < a || b > p {
                        return Err(Error::InvalidInput(format!(
                            "column range {a}-{b} outside 1-{p}"
                        )));
                    }
                    beta.slice_mut(ndarray::s![a - 1..b]).fill(1.0);
                }
                Ok(beta)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Independent,
    /// corr(i, j) = rho^|i - j|
    Autoregressive(f64),
    /// corr(i, j) = rho for every pair
    Constant(f64),
    /// The first `groups * size` columns form `groups` blocks of `size`
    /// columns `x_j = Z_g + e_j` with `Z_g ~ N(0, 1)`, `e_j ~ N(0, noise_sd^2)`;
    /// the rest are independent N(0, 1).
    Latent {
        groups: usize,
        size: usize,
        noise_sd: f64,
    },
}

/// A Gaussian-design regression scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub n_train: usize,
    pub n_test: usize,
    pub p: usize,
    pub beta_pattern: BetaPattern,
    pub correlation_structure: Correlation,
    pub noise_sigma: f64,
    pub link: Link,
    pub intercept: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// The four standard designs: (1) sparse and (2) dense coefficients under
    /// AR(0.5) correlation with n = 100, p = 8; (3) equicorrelated and
    /// (4) grouped latent-factor designs with n = 50, p = 40.
    pub fn table1(scenario: usize) -> Result<Self> {
        let (n, p, beta, corr, sigma) = match scenario {
            1 => (
                100,
                8,
                BetaPattern::Explicit(vec![3.0, 1.5, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0]),
                Correlation::Autoregressive(0.5),
                3.0,
            ),
            2 => (100, 8, BetaPattern::Constant(0.85), Correlation::Autoregressive(0.5), 3.0),
            3 => (
                50,
                40,
                BetaPattern::Ones(vec![(11, 20), (31, 40)]),
                Correlation::Constant(0.5),
                15.0,
            ),
            4 => (
                50,
                40,
                BetaPattern::Ones(vec![(16, 40)]),
                Correlation::Latent {
                    groups: 3,
                    size: 5,
                    noise_sd: 0.1,
                },
                15.0,
            ),
            _ => {
                return Err(Error::InvalidInput(format!(
                    "no standard scenario {scenario}; expected 1-4"
                )))
            }
        };
        Ok(Self {
            name: format!("table1-{scenario}"),
            n_train: n,
            n_test: n,
            p,
            beta_pattern: beta,
            correlation_structure: corr,
            noise_sigma: sigma,
            link: Link::Identity,
            intercept: 0.0,
            seed: scenario as u64,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n_train < 2 {
            return Err(Error::InvalidInput("need p >= 1 and n_train >= 2".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidInput("noise_sigma must be nonnegative".into()));
        }
        match self.correlation_structure {
            Correlation::Autoregressive(r) if !(r.abs() < 1.0) => {
                return Err(Error::InvalidInput("AR coefficient must lie in (-1, 1)".into()))
            }
            Correlation::Constant(r) if !(0.0..1.0).contains(&r) => {
                return Err(Error::InvalidInput("constant correlation must lie in [0, 1)".into()))
            }
            Correlation::Latent { groups, size, noise_sd } if groups * size > self.p || !(noise_sd >= 0.0) => {
                return Err(Error::InvalidInput(
                    "latent blocks exceed p or noise_sd is negative".into(),
                ))
            }
            _ => {}
        }
        self.beta_pattern.resolve(self.p).map(|_| ())
    }
}

/// Training and test data with the generating coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x_train: Array2<f64>,
    pub y_train: Array1<f64>,
    pub x_test: Array2<f64>,
    pub y_test: Array1<f64>,
    /// Coefficients on the raw predictor scale.
    pub beta: Array1<f64>,
    pub intercept: f64,
    /// Nonzero coefficients.
    pub causal: Vec<usize>,
}

fn gaussian_rows(n: usize, p: usize, corr: Correlation, rng: &mut impl Rng) -> Array2<f64> {
    let mut x = Array2::zeros((n, p));
    for mut row in x.rows_mut() {
        match corr {
            Correlation::Independent => {
                row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            }
            Correlation::Autoregressive(rho) => {
                let s = (1.0 - rho * rho).sqrt();
                let mut prev: f64 = rng.sample(StandardNormal);
                row[0] = prev;
                for j in 1..p {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = rho * prev + s * z;
                    row[j] = prev;
                }
            }
            Correlation::Constant(rho) => {
                let w: f64 = rng.sample(StandardNormal);
                let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                row.iter_mut().for_each(|v| {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = a * w + b * z;
                });
            }
            Correlation::Latent { groups, size, noise_sd } => {
                for g in 0..groups {
                    let zg: f64 = rng.sample(StandardNormal);
                    for j in g * size..(g + 1) * size {
                        let e: f64 = rng.sample(StandardNormal);
                        row[j] = zg + noise_sd * e;
                    }
                }
                for j in groups * size..p {
                    row[j] = rng.sample(StandardNormal);
                }
            }
        }
    }
    x
}

fn responses(x: &Array2<f64>, beta: &Array1<f64>, spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Array1<f64> {
    let eta = x.dot(beta) + spec.intercept;
    match spec.link {
        Link::Identity => eta.mapv(|e| {
            let z: f64 = rng.sample(StandardNormal);
            e + spec.noise_sigma * z
        }),
        Link::Logistic => bernoulli_labels(&eta, rng),
    }
}

/// Draw a training and a test set; a pure function of `spec`.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let beta = spec.beta_pattern.resolve(spec.p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let corr = spec.correlation_structure;
    let x_train = gaussian_rows(spec.n_train, spec.p, corr, &mut rng);
    let x_test = gaussian_rows(spec.n_test, spec.p, corr, &mut rng);
    let y_train = responses(&x_train, &beta, spec, &mut rng);
    let y_test = responses(&x_test, &beta, spec, &mut rng);
    let causal = (0..spec.p).filter(|&j| beta[j] != 0.0).collect();
    Ok(Dataset {
        x_train,
        y_train,
        x_test,
        y_test,
        beta,
        intercept: spec.intercept,
        causal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn correlation(x: &Array2<f64>, i: usize, j: usize) -> f64 {
        let a = x.column(i).mapv(|v| v) - x.column(i).mean().unwrap();
        let b = x.column(j).mapv(|v| v) - x.column(j).mean().unwrap();
        a.dot(&b) / (a.dot(&a) * b.dot(&b)).sqrt()
    }

    #[test]
    fn presets_match_table() {
        let s1 = ScenarioSpec::table1(1).unwrap();
        let d = generate_scenario(&s1).unwrap();
        assert_eq!(d.x_train.dim(), (100, 8));
        assert_eq!(d.causal, vec![0, 1, 4]);
        let s3 = ScenarioSpec::table1(3).unwrap();
        let b = s3.beta_pattern.resolve(40).unwrap();
        assert_eq!(b.sum(), 20.0);
        assert!(b.slice(ndarray::s![10..20]).iter().all(|&v| v == 1.0));
        assert!(b.slice(ndarray::s![30..40]).iter().all(|&v| v == 1.0));
        let b4 = ScenarioSpec::table1(4).unwrap().beta_pattern.resolve(40).unwrap();
        assert_eq!(b4.slice(ndarray::s![..15]).sum(), 0.0);
        assert_eq!(b4.sum(), 25.0);
        assert!(ScenarioSpec::table1(5).is_err());
    }

    #[test]
    fn ar_correlation_monte_carlo() {
        let mut spec = ScenarioSpec::table1(1).unwrap();
        spec.n_train = 10000;
        spec.n_test = 1;
        let d = generate_scenario(&spec).unwrap();
        for (i, j) in [(0, 1), (0, 2), (2, 5), (3, 4), (0, 7)] {
            let expected = 0.5f64.powi((j - i) as i32);
            assert!((correlation(&d.x_train, i, j) - expected).abs() < 0.05);
        }
    }

    #[test]
    fn constant_and_latent_correlation() {
        let mut spec = ScenarioSpec::table1(3).unwrap();
        spec.n_train = 5000;
        let d = generate_scenario(&spec).unwrap();
        assert!((correlation(&d.x_train, 0, 39) - 0.5).abs() < 0.05);
        let mut spec = ScenarioSpec::table1(4).unwrap();
        spec.n_train = 5000;
        let d = generate_scenario(&spec).unwrap();
        assert!(correlation(&d.x_train, 0, 4) > 0.95);
        assert!(correlation(&d.x_train, 0, 5).abs() < 0.05);
        assert!(correlation(&d.x_train, 20, 21).abs() < 0.05);
    }

    #[test]
    fn seeded_and_pure() {
        let spec = ScenarioSpec::table1(2).unwrap();
        assert_eq!(generate_scenario(&spec).unwrap(), generate_scenario(&spec).unwrap());
        let mut other = spec.clone();
        other.seed = 99;
        assert_ne!(generate_scenario(&spec).unwrap(), generate_scenario(&other).unwrap());
    }

    #[test]
    fn logistic_link_gives_labels() {
        let mut spec = ScenarioSpec::table1(1).unwrap();
        spec.link = Link::Logistic;
        let d = generate_scenario(&spec).unwrap();
        assert!(d.y_train.iter().all(|&v| v == 0.0 || v == 1.0));
    }
}
