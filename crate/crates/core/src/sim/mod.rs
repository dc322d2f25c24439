//! Data generators and experiment drivers: correlated Gaussian scenarios,
//! genotype-style designs with block LD, the ridge-parameter comparison on a
//! fixed design, and the prediction metrics.

mod compare;
mod genotype;
mod hkb;
mod scenario;

pub use compare::{run_comparison, DataSpec, Method, MetricReport};
pub use genotype::{
    bernoulli_labels, generate_genotypes, sample_case_control, GenotypeData, GenotypeSpec,
    HaplotypePool,
};
pub use hkb::{hkb_design, run_hkb_comparison, HkbOptions, HkbReport};
pub use scenario::{generate_scenario, BetaPattern, Correlation, Dataset, Link, ScenarioSpec};

use ndarray::ArrayView1;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::DesignMatrix;

/// Mean squared prediction error.
pub fn pse(y: ArrayView1<f64>, y_hat: ArrayView1<f64>) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

/// Classification error of one observation: 0 when `pi_hat` is on the side
/// of 0.5 matching the label, 1 when it is on the other side, 1/2 at 0.5.
pub fn classification_error_one(y: f64, pi_hat: f64) -> f64 {
    if pi_hat == 0.5 {
        0.5
    } else if (pi_hat > 0.5) == (y == 1.0) {
        0.0
    } else {
        1.0
    }
}

/// Mean classification error.
pub fn classification_error(y: ArrayView1<f64>, pi_hat: ArrayView1<f64>) -> Result<f64> {
    check_pair(y, pi_hat)?;
    let total: f64 = y
        .iter()
        .zip(pi_hat)
        .map(|(&a, &p)| classification_error_one(a, p))
        .sum();
    Ok(total / y.len() as f64)
}

fn check_pair(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("no observations to score".into()));
    }
    Ok(())
}

/// Per-replicate seeds drawn from a generator seeded with `master`.
pub fn replicate_seeds(master: u64, replicates: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..replicates).map(|_| rng.next_u64()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Thinning {
    /// Every `stride`-th column, starting with the first.
    Stride(usize),
    /// Greedily keep a column when it lies at least `min_gap` past the last
    /// kept one. `positions` must be nondecreasing.
    Positions { positions: Vec<f64>, min_gap: f64 },
}

/// Reduce the predictors used to estimate the ridge parameter. Returns the
/// reduced design and, for each of its columns, the index of the column in
/// `x`; the final fit can then use all columns with the estimated k.
pub fn thin_predictors(x: &DesignMatrix, thinning: &Thinning) -> Result<(DesignMatrix, Vec<usize>)> {
    let p = x.ncols();
    let map: Vec<usize> = match thinning {
        Thinning::Stride(0) => {
            return Err(Error::InvalidInput("stride must be at least 1".into()));
        }
        Thinning::Stride(s) => (0..p).step_by(*s).collect(),
        Thinning::Positions { positions, min_gap } => {
            if positions.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: positions.len(),
                });
            }
            if positions.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::InvalidInput("positions must be nondecreasing".into()));
            }
            let mut map = Vec::new();
            let mut last = f64::NEG_INFINITY;
            for (j, &pos) in positions.iter().enumerate() {
                if map.is_empty() || pos - last >= *min_gap {
                    map.push(j);
                    last = pos;
                }
            }
            map
        }
    };
    Ok((x.select_columns(&map), map))
}

/// Mean and standard error of a sample (standard error 0 for one value).
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let v = ndarray::ArrayView1::from(values);
    let mean = v.mean().expect("nonempty");
    if n == 1 {
        return (mean, 0.0);
    }
    let sd = v.std(1.0);
    (mean, sd / (n as f64).sqrt())
}
