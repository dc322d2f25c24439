//! Coefficient MSE of ridge with `k_r` against ridge with the HKB estimator
//! on a fixed full-rank design. In each replicate a coefficient vector of
//! fixed squared length and random direction is drawn, the response is
//! simulated at a given signal-to-noise ratio `||X beta||^2 / (n sigma^2)`,
//! and `||beta_hat - beta||^2` is compared between the two estimators.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::replicate_seeds;
use crate::error::{Error, Result};
use crate::linalg::{canonical_from, DesignMatrix, Response};
use crate::ridge::fit_ridge;
use crate::select::k_r_path;

#[derive(Debug, Clone, PartialEq)]
pub struct HkbOptions {
    pub snr_grid: Vec<f64>,
    pub replicates: usize,
    /// Squared length of the simulated coefficient vector (standardized scale).
    pub beta_sq_length: f64,
    pub seed: u64,
}

impl Default for HkbOptions {
    fn default() -> Self {
        Self {
            snr_grid: vec![0.1, 0.5, 1.0, 2.0, 5.0, 10.0],
            replicates: 1000,
            beta_sq_length: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HkbReport {
    pub snr: Vec<f64>,
    /// `win_fraction[s][r - 1]`: share of replicates at `snr[s]` in which
    /// `k_r` gives smaller coefficient MSE than HKB; ties count one half.
    pub win_fraction: Vec<Vec<f64>>,
    /// Mean coefficient MSE with `k_r`, indexed like `win_fraction`.
    pub mse_k_r: Vec<Vec<f64>>,
    pub mse_hkb: Vec<f64>,
}

/// A 36 x 10 design with three dominant latent factors plus independent
/// noise, giving strongly collinear columns of the kind found in process
/// data. Deterministic in `seed`.
pub fn hkb_design(seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, p, f) = (36, 10, 3);
    let loadings = Array2::from_shape_fn((f, p), |_| rng.random::<f64>() * 2.0 - 1.0);
    let factors = Array2::from_shape_fn((n, f), |_| rng.sample::<f64, _>(StandardNormal));
    let noise = Array2::from_shape_fn((n, p), |_| 0.3 * rng.sample::<f64, _>(StandardNormal));
    factors.dot(&loadings) + noise
}

pub fn run_hkb_comparison(design: ArrayView2<f64>, options: &HkbOptions) -> Result<HkbReport> {
    let (n, p) = design.dim();
    if n <= p {
        return Err(Error::Undefined(format!(
            "the HKB estimator needs n > p, got n = {n}, p = {p}"
        )));
    }
    let x = DesignMatrix::standardize(design)?;
    let c = canonical_from(&x)?;
    if c.t() < p {
        return Err(Error::Undefined("the design is rank deficient".into()));
    }
    let xv = x.values();
    let mut report = HkbReport {
        snr: options.snr_grid.clone(),
        win_fraction: Vec::new(),
        mse_k_r: Vec::new(),
        mse_hkb: Vec::new(),
    };
    for (s, &snr) in options.snr_grid.iter().enumerate() {
        if !(snr > 0.0) {
            return Err(Error::InvalidInput(format!("SNR must be positive, got {snr}")));
        }
        let seeds = replicate_seeds(options.seed.wrapping_add(s as u64), options.replicates);
        // per replicate: (MSE for r = 1..p, MSE for HKB)
        let per: Vec<(Vec<f64>, f64)> = seeds
            .par_iter()
            .map(|&seed| -> Result<(Vec<f64>, f64)> {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dir: Array1<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                let beta = &dir * (options.beta_sq_length / dir.dot(&dir)).sqrt();
                let signal = xv.dot(&beta);
                let sigma = (signal.dot(&signal) / (n as f64 * snr)).sqrt();
                let y = signal.mapv(|v| v + sigma * rng.sample::<f64, _>(StandardNormal));
                let y = Response::continuous(y);
                let path = k_r_path(&c, &y, p)?;
                let mse = |k: f64| -> Result<f64> {
                    let b = fit_ridge(&c, &y, k)?.beta - &beta;
                    Ok(b.dot(&b))
                };
                let hkb = mse(path[p - 1].ok_or(Error::ZeroSignal)?)?;
                let by_r = path
                    .iter()
                    .map(|k| mse(k.ok_or(Error::ZeroSignal)?))
                    .collect::<Result<Vec<f64>>>()?;
                Ok((by_r, hkb))
            })
            .collect::<Result<_>>()?;
        let reps = per.len().max(1) as f64;
        let mut wins = vec![0.0; p];
        let mut mse_r = vec![0.0; p];
        let mut mse_h = 0.0;
        for (by_r, hkb) in &per {
            mse_h += hkb;
            for r in 0..p {
                mse_r[r] += by_r[r];
                wins[r] += if by_r[r] < *hkb {
                    1.0
                } else if by_r[r] == *hkb {
                    0.5
                } else {
                    0.0
                };
            }
        }
        report.win_fraction.push(wins.iter().map(|w| w / reps).collect());
        report.mse_k_r.push(mse_r.iter().map(|m| m / reps).collect());
        report.mse_hkb.push(mse_h / reps);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r_equal_p_ties_exactly() {
        let design = hkb_design(1);
        let options = HkbOptions {
            snr_grid: vec![1.0, 5.0],
            replicates: 40,
            ..HkbOptions::default()
        };
        let report = run_hkb_comparison(design.view(), &options).unwrap();
        for s in 0..2 {
            assert_eq!(report.win_fraction[s][9], 0.5);
            assert_eq!(report.mse_k_r[s][9], report.mse_hkb[s]);
            assert!(report.win_fraction[s].iter().all(|w| (0.0..=1.0).contains(w)));
        }
    }

    #[test]
    fn deterministic() {
        let design = hkb_design(2);
        let options = HkbOptions {
            snr_grid: vec![2.0],
            replicates: 25,
            ..HkbOptions::default()
        };
        assert_eq!(
            run_hkb_comparison(design.view(), &options).unwrap(),
            run_hkb_comparison(design.view(), &options).unwrap()
        );
    }

    #[test]
    fn requires_more_rows_than_columns() {
        let design = Array2::from_shape_fn((5, 6), |(i, j)| ((i + 2 * j) as f64).cos());
        assert!(run_hkb_comparison(design.view(), &HkbOptions::default()).is_err());
    }
}
