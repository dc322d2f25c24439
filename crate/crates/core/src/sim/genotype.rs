//! Genotype-style designs. A pool of haplotypes is built block by block:
//! each block has a few founder haplotypes with random weights, and every
//! pool haplotype copies founders along the block, switching to a freshly
//! drawn founder with a small probability per SNP and mutating alleles at a
//! small rate. Nearby SNPs therefore share founders and are correlated,
//! while SNPs in different blocks are independent. An individual's dosage
//! vector is the sum of two haplotypes drawn from the pool.

use ndarray::{Array1, Array2};
use rand::distr::Uniform;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use super::scenario::{Dataset, Link};
use crate::error::{Error, Result};
use crate::logistic::sigmoid;

#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeSpec {
    pub p: usize,
    pub n_causal: usize,
    /// Inclusive range of minor allele frequency for causal SNPs.
    pub maf_range: (f64, f64),
    /// Causal effects are drawn uniformly from this range.
    pub effect_range: (f64, f64),
    pub haplotype_pool_size: usize,
    pub ld_block_length: usize,
    pub founders_per_block: usize,
    /// Per-SNP probability of switching founder within a block.
    pub switch_rate: f64,
    pub mutation_rate: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_sigma: f64,
    pub link: Link,
    pub intercept: f64,
    pub seed: u64,
}

impl GenotypeSpec {
    /// Desk-scale defaults: 2000 SNPs, 20 causal SNPs with MAF 10-15% and
    /// effects U[0.05, 0.1], 400 training and 200 test individuals. Binary
    /// outcomes use intercept -5 with balanced case-control sampling.
    pub fn desk(link: Link) -> Self {
        Self {
            p: 2000,
            n_causal: 20,
            maf_range: (0.10, 0.15),
            effect_range: (0.05, 0.1),
            haplotype_pool_size: 1000,
            ld_block_length: 25,
            founders_per_block: 6,
            switch_rate: 0.02,
            mutation_rate: 0.005,
            n_train: 400,
            n_test: 200,
            noise_sigma: 1.0,
            link,
            intercept: if link == Link::Logistic { -5.0 } else { 0.0 },
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        let (lo, hi) = self.maf_range;
        if self.p == 0 || self.n_causal > self.p {
            return bad("need 1 <= p and n_causal <= p");
        }
        if !(0.0 < lo && lo <= hi && hi <= 0.5) {
            return bad("maf_range must satisfy 0 < min <= max <= 0.5");
        }
        if !(self.effect_range.0 <= self.effect_range.1) {
            return bad("effect_range min exceeds max");
        }
        if self.haplotype_pool_size < 2 || self.ld_block_length == 0 || self.founders_per_block == 0 {
            return bad("pool size must be >= 2; block length and founders >= 1");
        }
        if !(0.0..=1.0).contains(&self.switch_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("switch_rate and mutation_rate must lie in [0, 1]");
        }
        if self.n_train < 2 {
            return bad("n_train must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HaplotypePool {
    /// One haplotype per row, alleles 0/1.
    pub haplotypes: Array2<u8>,
}

fn categorical(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

impl HaplotypePool {
    pub fn generate(spec: &GenotypeSpec, rng: &mut impl Rng) -> Self {
        let (h, p, f) = (spec.haplotype_pool_size, spec.p, spec.founders_per_block);
        let mut haplotypes = Array2::<u8>::zeros((h, p));
        for start in (0..p).step_by(spec.ld_block_length) {
            let len = spec.ld_block_length.min(p - start);
            let raw: Vec<f64> = (0..f).map(|_| rng.sample(Exp1)).collect();
            let total: f64 = raw.iter().sum();
            let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
            let mut founders = Array2::<u8>::zeros((f, len));
            for j in 0..len {
                let freq: f64 = rng.random();
                for a in 0..f {
                    founders[[a, j]] = (rng.random::<f64>() < freq) as u8;
                }
            }
            for mut hap in haplotypes.rows_mut() {
                let mut current = categorical(&weights, rng);
                for j in 0..len {
                    if j > 0 && rng.random::<f64>() < spec.switch_rate {
                        current = categorical(&weights, rng);
                    }
                    let mut allele = founders[[current, j]];
                    if rng.random::<f64>() < spec.mutation_rate {
                        allele ^= 1;
                    }
                    hap[start + j] = allele;
                }
            }
        }
        Self { haplotypes }
    }

    /// Minor allele frequency of every SNP in the pool.
    pub fn minor_allele_frequencies(&self) -> Array1<f64> {
        let h = self.haplotypes.nrows() as f64;
        self.haplotypes
            .columns()
            .into_iter()
            .map(|c| {
                let f = c.iter().map(|&a| a as f64).sum::<f64>() / h;
                f.min(1.0 - f)
            })
            .collect()
    }

    fn dosage_into(&self, a: usize, b: usize, out: &mut ndarray::ArrayViewMut1<f64>) {
        let (ha, hb) = (self.haplotypes.row(a), self.haplotypes.row(b));
        for ((o, &x), &y) in out.iter_mut().zip(&ha).zip(&hb) {
            *o = (x + y) as f64;
        }
    }

    fn linear_score(&self, a: usize, b: usize, causal: &[usize], beta: &Array1<f64>) -> f64 {
        causal
            .iter()
            .map(|&j| (self.haplotypes[[a, j]] + self.haplotypes[[b, j]]) as f64 * beta[j])
            .sum()
    }
}

/// Labels drawn independently with `P(y = 1) = sigmoid(eta)`.
pub fn bernoulli_labels(eta: &Array1<f64>, rng: &mut impl Rng) -> Array1<f64> {
    eta.mapv(|e| (rng.random::<f64>() < sigmoid(e)) as u8 as f64)
}

/// Rejection sampling for balanced case-control data. `draw` proposes a
/// candidate with linear predictor `eta`; the candidate is a case with
/// probability `sigmoid(eta)` and is kept only while its group's quota is
/// open. Returns the kept candidates in acceptance order and their labels.
pub fn sample_case_control<R: Rng, T>(
    rng: &mut R,
    n_cases: usize,
    n_controls: usize,
    max_draws: usize,
    mut draw: impl FnMut(&mut R) -> (f64, T),
) -> Result<(Vec<T>, Array1<f64>)> {
    let (mut cases, mut controls) = (0, 0);
    let mut kept = Vec::with_capacity(n_cases + n_controls);
    let mut labels = Vec::with_capacity(n_cases + n_controls);
    for _ in 0..max_draws {
        if cases == n_cases && controls == n_controls {
            break;
        }
        let (eta, item) = draw(rng);
        let is_case = rng.random::<f64>() < sigmoid(eta);
        if is_case && cases < n_cases {
            cases += 1;
            kept.push(item);
            labels.push(1.0);
        } else if !is_case && controls < n_controls {
            controls += 1;
            kept.push(item);
            labels.push(0.0);
        }
    }
    if cases < n_cases || controls < n_controls {
        return Err(Error::QuotaUnreachable { draws: max_draws });
    }
    Ok((kept, Array1::from(labels)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeData {
    pub dataset: Dataset,
    /// Minor allele frequency of every SNP in the haplotype pool.
    pub maf: Array1<f64>,
}

const MAX_DRAWS: usize = 50_000_000;

fn individuals(
    pool: &HaplotypePool,
    spec: &GenotypeSpec,
    n: usize,
    beta: &Array1<f64>,
    causal: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let h = pool.haplotypes.nrows();
    let pick = Uniform::new(0, h).expect("pool size >= 2");
    let pairs: Vec<(usize, usize)>;
    let y = match spec.link {
        Link::Identity => {
            pairs = (0..n).map(|_| (rng.sample(pick), rng.sample(pick))).collect();
            pairs
                .iter()
                .map(|&(a, b)| {
                    let z: f64 = rng.sample(StandardNormal);
                    spec.intercept + pool.linear_score(a, b, causal, beta) + spec.noise_sigma * z
                })
                .collect()
        }
        Link::Logistic => {
            let n_cases = n / 2;
            let (kept, labels) = sample_case_control(rng, n_cases, n - n_cases, MAX_DRAWS, |rng| {
                let (a, b) = (rng.sample(pick), rng.sample(pick));
                (spec.intercept + pool.linear_score(a, b, causal, beta), (a, b))
            })?;
            pairs = kept;
            labels
        }
    };
    let mut x = Array2::zeros((n, spec.p));
    for (mut row, &(a, b)) in x.rows_mut().into_iter().zip(&pairs) {
        pool.dosage_into(a, b, &mut row);
    }
    Ok((x, y))
}

/// Draw a haplotype pool, causal SNPs, effects, and training and test
/// individuals; a pure function of `spec`.
pub fn generate_genotypes(spec: &GenotypeSpec) -> Result<GenotypeData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pool = HaplotypePool::generate(spec, &mut rng);
    let maf = pool.minor_allele_frequencies();
    let (lo, hi) = spec.maf_range;
    let eligible: Vec<usize> = (0..spec.p).filter(|&j| maf[j] >= lo && maf[j] <= hi).collect();
    if eligible.len() < spec.n_causal {
        return Err(Error::InsufficientEligibleSnps {
            eligible: eligible.len(),
            needed: spec.n_causal,
        });
    }
    let mut causal: Vec<usize> = sample(&mut rng, eligible.len(), spec.n_causal)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    causal.sort_unstable();
    let mut beta = Array1::zeros(spec.p);
    let (e0, e1) = spec.effect_range;
    for &j in &causal {
        beta[j] = e0 + (e1 - e0) * rng.random::<f64>();
    }
    let (x_train, y_train) = individuals(&pool, spec, spec.n_train, &beta, &causal, &mut rng)?;
    let (x_test, y_test) = individuals(&pool, spec, spec.n_test, &beta, &causal, &mut rng)?;
    Ok(GenotypeData {
        dataset: Dataset {
            x_train,
            y_train,
            x_test,
            y_test,
            beta,
            intercept: spec.intercept,
            causal,
        },
        maf,
    })
}
