//! Seeded, chunked Monte Carlo reductions.
//!
//! Samples are split into fixed-size chunks; chunk `i` draws from the ChaCha
//! stream `i` of the run seed. Chunk results are merged in chunk order, so
//! an estimate depends only on `(seed, samples)` and never on the number of
//! worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type McRng = ChaCha8Rng;

/// Smallest sample budget accepted by stochastic estimators.
pub const MIN_MC_BUDGET: usize = 1000;
/// Default sample budget.
pub const DEFAULT_MC_BUDGET: usize = 100_000;
pub const CHUNK_SIZE: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McBudget {
    pub samples: usize,
    pub seed: u64,
}

impl McBudget {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed }
    }

    pub fn check(&self) -> Result<()> {
        if self.samples < MIN_MC_BUDGET {
            return Err(Error::BudgetTooSmall { requested: self.samples, minimum: MIN_MC_BUDGET });
        }
        Ok(())
    }

    /// Same sample count, independent seed.
    pub fn derive(&self, salt: u64) -> McBudget {
        McBudget { samples: self.samples, seed: derive_seed(self.seed, salt) }
    }

    pub fn with_samples(&self, samples: usize) -> McBudget {
        McBudget { samples, seed: self.seed }
    }
}

impl Default for McBudget {
    fn default() -> Self {
        Self { samples: DEFAULT_MC_BUDGET, seed: 42 }
    }
}

/// SplitMix64 finaliser applied to `seed ^ salt'`.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, stream: u64) -> McRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Running mean and second central moment.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Result of a chunked reduction over `N` simultaneously estimated values.
#[derive(Clone, Debug)]
pub struct McOutcome<const N: usize> {
    pub totals: [Moments; N],
    pub chunks: Vec<[Moments; N]>,
}

impl<const N: usize> McOutcome<N> {
    pub fn mean(&self, k: usize) -> f64 {
        self.totals[k].mean
    }

    pub fn std_error(&self, k: usize) -> f64 {
        self.totals[k].std_error()
    }

    /// Moments of the prefixes ending at every chunk boundary.
    pub fn prefixes(&self, k: usize) -> Vec<Moments> {
        let mut acc = Moments::default();
        self.chunks
            .iter()
            .map(|c| {
                acc = acc.merge(&c[k]);
                acc
            })
            .collect()
    }
}

/// Averages `f` over `samples` draws.
pub fn estimate<const N: usize, F>(samples: usize, seed: u64, f: F) -> Result<McOutcome<N>>
where
    F: Fn(&mut McRng) -> Result<[f64; N]> + Sync,
{
    let n_chunks = samples.div_ceil(CHUNK_SIZE);
    let chunks: Vec<[Moments; N]> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(seed, c as u64);
            let len = CHUNK_SIZE.min(samples - c * CHUNK_SIZE);
            let mut m = [Moments::default(); N];
            for _ in 0..len {
                let v = f(&mut rng)?;
                for k in 0..N {
                    m[k].push(v[k]);
                }
            }
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut totals = [Moments::default(); N];
    for c in &chunks {
        for k in 0..N {
            totals[k] = totals[k].merge(&c[k]);
        }
    }
    Ok(McOutcome { totals, chunks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        let merged = a.merge(&b);
        assert!((merged.mean - all.mean).abs() < 1e-14);
        assert!((merged.variance() - all.variance()).abs() < 1e-13);
    }

    #[test]
    fn estimate_is_deterministic() {
        let run = || estimate::<1, _>(5000, 7, |rng| Ok([rng.random::<f64>()])).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.mean(0).to_bits(), b.mean(0).to_bits());
        assert!((a.mean(0) - 0.5).abs() < 4.0 * a.std_error(0));
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let f = |rng: &mut McRng| Ok([rng.random::<f64>().ln()]);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| estimate::<1, _>(10_000, 3, f).unwrap());
        let b = three.install(|| estimate::<1, _>(10_000, 3, f).unwrap());
        assert_eq!(a.mean(0).to_bits(), b.mean(0).to_bits());
    }

    #[test]
    fn small_budget_rejected() {
        assert!(matches!(McBudget::new(10, 1).check(), Err(Error::BudgetTooSmall { .. })));
    }
}
