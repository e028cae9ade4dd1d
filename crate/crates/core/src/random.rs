//! Seeded generators for test suites: random laws, covariances and mixed laws.

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::laws::{DiscreteLaw, GaussianLaw, MixedLaw};
use crate::mc::McRng;

/// Exact law with weights `k_i / Σk` for counts `k_i ∈ 0..=max_count`.
pub fn exact_law(rng: &mut McRng, n: usize, max_count: u32) -> DiscreteLaw {
    loop {
        let counts: Vec<u32> = (0..n).map(|_| rng.random_range(0..=max_count)).collect();
        let total: u32 = counts.iter().sum();
        if total == 0 {
            continue;
        }
        let weights = counts.iter().map(|&k| BigRational::new(BigInt::from(k), BigInt::from(total))).collect();
        return DiscreteLaw::exact(weights).expect("normalised by construction");
    }
}

/// All laws on `n` outcomes with weights in `(1/den) Z`.
pub fn lattice_laws(n: usize, den: u32) -> Vec<DiscreteLaw> {
    fn rec(n: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(n, left - k, prefix, out);
            prefix.pop();
        }
    }
    let mut counts = Vec::new();
    rec(n, den, &mut Vec::new(), &mut counts);
    counts
        .into_iter()
        .map(|c| {
            let w = c.iter().map(|&k| BigRational::new(BigInt::from(k), BigInt::from(den))).collect();
            DiscreteLaw::exact(w).expect("sums to one")
        })
        .collect()
}

/// `A Aᵀ + I/d` with standard normal `A`; well conditioned for small `d`.
pub fn spd(rng: &mut McRng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(d, d) / d.max(1) as f64
}

pub fn gaussian(rng: &mut McRng, d: usize) -> GaussianLaw {
    let mean = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    GaussianLaw::new(mean, spd(rng, d)).expect("SPD by construction")
}

/// Flat-Dirichlet weights on `k` outcomes.
pub fn simplex_point(rng: &mut McRng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1) + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // Put the rounding error on the last weight so the sum is 1 to an ulp.
    let head: f64 = w[..k - 1].iter().sum();
    w[k - 1] = 1.0 - head;
    w
}

/// Mixed law with `k` blocks, gaussian conditionals on `R^d` with means
/// spread over a few standard deviations.
pub fn mixed_law(rng: &mut McRng, d: usize, k: usize) -> MixedLaw {
    let p = DiscreteLaw::float(simplex_point(rng, k)).expect("normalised");
    let gaussians = (0..k)
        .map(|_| {
            let mean = DVector::from_fn(d, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
            let cov = spd(rng, d) * 0.5;
            GaussianLaw::new(mean, cov).expect("SPD by construction")
        })
        .collect();
    MixedLaw::from_gaussians(p, gaussians).expect("shared full carrier")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::rng_for;

    #[test]
    fn lattice_law_count() {
        // Compositions of 4 into 4 nonnegative parts.
        assert_eq!(lattice_laws(4, 4).len(), 35);
        assert_eq!(lattice_laws(2, 1).len(), 2);
    }

    #[test]
    fn generators_are_valid() {
        let mut rng = rng_for(3, 0);
        for d in 1..=6 {
            let s = spd(&mut rng, d);
            assert!(s.clone().cholesky().is_some());
        }
        let w = simplex_point(&mut rng, 5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let l = exact_law(&mut rng, 6, 4);
        assert_eq!(l.len(), 6);
        let m = mixed_law(&mut rng, 2, 3);
        assert_eq!(m.n_blocks(), 3);
    }
}
