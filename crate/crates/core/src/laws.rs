//! Probability laws on each sector, their carriers, marginalisation along
//! arrows and disintegration.
//!
//! Every law is absolutely continuous with respect to the reference measure
//! of its carrier: counting measure for discrete laws, Lebesgue measure on an
//! affine subspace for gaussians and mixtures, and the sum of per-block
//! Lebesgue measures for mixed laws. Projections that lose rank demote the
//! carrier instead of failing.

use std::f64::consts::PI;
use std::ops::Div;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::linalg;
use crate::mc::{self, McBudget, McRng};
use crate::structures::{ArrowMap, BlockMap, InformationStructure, Arrow, Observable, Outcome};

const FLOAT_SUM_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-12;
/// Relative eigenvalue cutoff below which a covariance direction is dropped.
const DEMOTION_TOL: f64 = 1e-10;
/// Relative distance to the carrier beyond which a point is off-carrier.
const CARRIER_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Discrete laws
// ---------------------------------------------------------------------------

/// Weights in exact rational or floating-point arithmetic.
#[derive(Clone, Debug, PartialEq)]
pub enum Weights {
    Exact(Vec<BigRational>),
    Float(Vec<f64>),
}

/// A probability on the blocks of a discrete observable.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLaw {
    weights: Weights,
}

impl DiscreteLaw {
    pub fn exact(weights: Vec<BigRational>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidLaw("empty outcome set".into()));
        }
        if weights.iter().any(|w| w.is_negative()) {
            return Err(Error::InvalidLaw("negative weight".into()));
        }
        let total: BigRational = weights.iter().cloned().sum();
        if !total.is_one() {
            return Err(Error::InvalidLaw(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { weights: Weights::Exact(weights) })
    }

    /// Exact law from `(numerator, denominator)` pairs.
    pub fn from_ratios(ratios: &[(i64, i64)]) -> Result<Self> {
        let mut weights = Vec::with_capacity(ratios.len());
        for &(n, d) in ratios {
            if d == 0 {
                return Err(Error::InvalidLaw("zero denominator".into()));
            }
            weights.push(BigRational::new(BigInt::from(n), BigInt::from(d)));
        }
        Self::exact(weights)
    }

    pub fn float(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidLaw("empty outcome set".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidLaw("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > FLOAT_SUM_TOL {
            return Err(Error::InvalidLaw(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { weights: Weights::Float(weights) })
    }

    pub fn uniform(n: usize) -> Self {
        let w = BigRational::new(BigInt::one(), BigInt::from(n));
        Self { weights: Weights::Exact(vec![w; n]) }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut w = vec![BigRational::zero(); n];
        w[at] = BigRational::one();
        Self { weights: Weights::Exact(w) }
    }

    pub fn len(&self) -> usize {
        match &self.weights {
            Weights::Exact(w) => w.len(),
            Weights::Float(w) => w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.weights, Weights::Exact(_))
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn exact_weights(&self) -> Option<&[BigRational]> {
        match &self.weights {
            Weights::Exact(w) => Some(w),
            Weights::Float(_) => None,
        }
    }

    pub fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Weights::Exact(w) => w[i].to_f64().unwrap_or(f64::NAN),
            Weights::Float(w) => w[i],
        }
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn is_positive(&self, i: usize) -> bool {
        match &self.weights {
            Weights::Exact(w) => w[i].is_positive(),
            Weights::Float(w) => w[i] > 0.0,
        }
    }

    /// The carrier: outcomes of positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_positive(i)).collect()
    }

    pub fn to_float(&self) -> DiscreteLaw {
        DiscreteLaw { weights: Weights::Float(self.weights_f64()) }
    }

    /// Image law under a block map (sums over fibers).
    pub fn marginalize(&self, map: &BlockMap) -> Result<DiscreteLaw> {
        if map.source_size() != self.len() {
            return Err(Error::DimensionMismatch { expected: map.source_size(), found: self.len() });
        }
        let weights = match &self.weights {
            Weights::Exact(w) => Weights::Exact(push_weights(w, map)),
            Weights::Float(w) => Weights::Float(push_weights(w, map)),
        };
        Ok(DiscreteLaw { weights })
    }

    /// Restriction to the fiber over `target`, renormalised.
    pub fn condition(&self, map: &BlockMap, target: usize) -> Result<DiscreteLaw> {
        if map.source_size() != self.len() {
            return Err(Error::DimensionMismatch { expected: map.source_size(), found: self.len() });
        }
        if target >= map.target_size {
            return Err(Error::InvalidLaw(format!("outcome {target} outside target of size {}", map.target_size)));
        }
        let weights = match &self.weights {
            Weights::Exact(w) => Weights::Exact(condition_weights(w, map, target).ok_or(Error::ZeroMassFiber)?),
            Weights::Float(w) => Weights::Float(condition_weights(w, map, target).ok_or(Error::ZeroMassFiber)?),
        };
        Ok(DiscreteLaw { weights })
    }

    pub fn sample_one(&self, rng: &mut McRng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for i in 0..self.len() {
            let w = self.weight(i);
            if w > 0.0 {
                acc += w;
                last = i;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }
}

fn push_weights<W: Clone + Zero>(w: &[W], map: &BlockMap) -> Vec<W> {
    let mut out = vec![W::zero(); map.target_size];
    for (i, x) in w.iter().enumerate() {
        let t = map.map[i];
        out[t] = out[t].clone() + x.clone();
    }
    out
}

fn condition_weights<W>(w: &[W], map: &BlockMap, target: usize) -> Option<Vec<W>>
where
    W: Clone + Zero + PartialOrd + Div<Output = W>,
{
    let mass = w
        .iter()
        .enumerate()
        .filter(|(i, _)| map.map[*i] == target)
        .fold(W::zero(), |acc, (_, x)| acc + x.clone());
    if mass <= W::zero() {
        return None;
    }
    Some(
        w.iter()
            .enumerate()
            .map(|(i, x)| if map.map[i] == target { x.clone() / mass.clone() } else { W::zero() })
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Gaussian laws
// ---------------------------------------------------------------------------

/// A gaussian on an affine carrier `mean + span(carrier)` of `E_X`.
///
/// `carrier` has orthonormal columns (coordinates of `E_X` are orthonormal
/// for the metric) and `covariance` is positive-definite in that basis. A
/// zero-dimensional carrier is a point mass.
#[derive(Clone, Debug)]
pub struct GaussianLaw {
    mean: DVector<f64>,
    carrier: DMatrix<f64>,
    covariance: DMatrix<f64>,
    chol: DMatrix<f64>,
    logdet: f64,
}

impl GaussianLaw {
    /// Gaussian from a full covariance on `E_X`. Singular covariances demote
    /// the carrier to the range of the covariance.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, found: covariance.nrows() });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidLaw("non-finite parameter".into()));
        }
        let scale = covariance.amax().max(1.0);
        if linalg::asymmetry(&covariance) > SYMMETRY_TOL * scale {
            return Err(Error::InvalidLaw("covariance is not symmetric".into()));
        }
        if let Some(chol) = linalg::cholesky(&covariance) {
            let logdet = linalg::logdet_from_cholesky(&chol);
            return Ok(Self { mean, carrier: DMatrix::identity(d, d), covariance, chol, logdet });
        }
        let (carrier, reduced) = demote(&linalg::symmetrize(&covariance))?;
        Self::on_carrier(mean, carrier, reduced)
    }

    /// Gaussian on `mean + span(carrier)` with covariance `covariance` in the
    /// carrier basis.
    pub fn on_carrier(mean: DVector<f64>, carrier: DMatrix<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        let r = carrier.ncols();
        if carrier.nrows() != d || covariance.shape() != (r, r) {
            return Err(Error::InvalidLaw("carrier and covariance shapes disagree".into()));
        }
        let gram = carrier.transpose() * &carrier;
        if linalg::max_abs_diff(&gram, &DMatrix::identity(r, r)) > 1e-9 {
            return Err(Error::InvalidLaw("carrier basis is not orthonormal".into()));
        }
        let covariance = linalg::symmetrize(&covariance);
        let chol = linalg::cholesky(&covariance).ok_or(Error::SingularCovariance)?;
        let logdet = linalg::logdet_from_cholesky(&chol);
        Ok(Self { mean, carrier, covariance, chol, logdet })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d)).expect("identity is SPD")
    }

    pub fn point_mass(at: DVector<f64>) -> Self {
        let d = at.len();
        Self { mean: at, carrier: DMatrix::zeros(d, 0), covariance: DMatrix::zeros(0, 0), chol: DMatrix::zeros(0, 0), logdet: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn carrier_dim(&self) -> usize {
        self.carrier.ncols()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn carrier(&self) -> &DMatrix<f64> {
        &self.carrier
    }

    /// Covariance in the carrier basis.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn cholesky(&self) -> &DMatrix<f64> {
        &self.chol
    }

    /// Covariance as a (possibly singular) matrix on `E_X`.
    pub fn full_covariance(&self) -> DMatrix<f64> {
        &self.carrier * &self.covariance * self.carrier.transpose()
    }

    /// log det of the covariance on the carrier (0 for a point mass).
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Carrier coordinates of `x - mean`, or `None` when `x` is off-carrier.
    pub fn carrier_coordinates(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let offset = x - &self.mean;
        let w = self.carrier.transpose() * &offset;
        let residual = (&offset - &self.carrier * &w).norm();
        (residual <= CARRIER_TOL * (1.0 + offset.norm())).then_some(w)
    }

    /// Log of the density with respect to Lebesgue measure on the carrier.
    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let Some(w) = self.carrier_coordinates(x) else {
            return f64::NEG_INFINITY;
        };
        let r = self.carrier_dim();
        if r == 0 {
            return 0.0;
        }
        let z = self.chol.clone().solve_lower_triangular(&w).expect("positive diagonal");
        -0.5 * z.norm_squared() - 0.5 * (r as f64) * (2.0 * PI).ln() - 0.5 * self.logdet
    }

    pub fn density(&self, x: &DVector<f64>) -> f64 {
        self.log_density(x).exp()
    }

    pub fn sample_one(&self, rng: &mut McRng) -> DVector<f64> {
        let r = self.carrier_dim();
        if r == 0 {
            return self.mean.clone();
        }
        let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.carrier * (&self.chol * z)
    }

    /// Image under the linear map `a` (`dim Y x dim X`).
    pub fn push(&self, a: &DMatrix<f64>) -> Result<GaussianLaw> {
        if a.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: a.ncols() });
        }
        let mean = a * &self.mean;
        let dy = a.nrows();
        if self.carrier_dim() == 0 || dy == 0 {
            return Ok(GaussianLaw::point_mass(mean));
        }
        let l = a * &self.carrier;
        let image = linalg::column_space(&l, DEMOTION_TOL);
        let image = if image.ncols() == dy { DMatrix::identity(dy, dy) } else { image };
        let t = image.transpose() * &l;
        let cov = &t * &self.covariance * t.transpose();
        GaussianLaw::on_carrier(mean, image, cov)
    }

    /// Conditional law given `a x = y`, concentrated on that fiber.
    ///
    /// Splits carrier coordinates into the part seen by `a` and the kernel of
    /// `a` on the carrier; the kernel part is gaussian with the Schur
    /// complement covariance, independent of `y`.
    pub fn condition(&self, a: &DMatrix<f64>, y: &DVector<f64>) -> Result<GaussianLaw> {
        if a.ncols() != self.dim() || y.len() != a.nrows() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), found: y.len() });
        }
        let r = self.carrier_dim();
        let l = a * &self.carrier;
        let seen = linalg::column_space(&l.transpose(), DEMOTION_TOL);
        let hidden = linalg::complement(&seen, r);
        let rhs = y - a * &self.mean;
        let lj = &l * &seen;
        let s = linalg::least_squares(&lj, &rhs);
        if (&lj * &s - &rhs).norm() > CARRIER_TOL * (1.0 + rhs.norm()) {
            return Err(Error::ZeroMassFiber);
        }
        let sigma = &self.covariance;
        let (mu_t, cov_t) = if seen.ncols() == 0 {
            (DVector::zeros(hidden.ncols()), hidden.transpose() * sigma * &hidden)
        } else {
            let s_ss = seen.transpose() * sigma * &seen;
            let s_ts = hidden.transpose() * sigma * &seen;
            let s_tt = hidden.transpose() * sigma * &hidden;
            let chol = nalgebra::Cholesky::new(s_ss).ok_or(Error::SingularCovariance)?;
            let gain = chol.solve(&s_ts.transpose()).transpose();
            (&gain * &s, &s_tt - &gain * s_ts.transpose())
        };
        let mean = &self.mean + &self.carrier * (&seen * &s + &hidden * &mu_t);
        let carrier = &self.carrier * &hidden;
        if carrier.ncols() == self.dim() && hidden.ncols() == r && r == self.dim() {
            // Nothing was conditioned away; keep the canonical basis.
            return GaussianLaw::on_carrier(mean, self.carrier.clone(), self.covariance.clone());
        }
        GaussianLaw::on_carrier(mean, carrier, cov_t)
    }

    /// Same affine carrier (span and offset) as `other`.
    pub fn same_carrier(&self, other: &GaussianLaw) -> bool {
        if self.dim() != other.dim() || self.carrier_dim() != other.carrier_dim() {
            return false;
        }
        let p = &self.carrier * self.carrier.transpose();
        let q = &other.carrier * other.carrier.transpose();
        if linalg::max_abs_diff(&p, &q) > 1e-8 {
            return false;
        }
        self.carrier_coordinates(&other.mean).is_some()
    }

    /// Same mean and full covariance within `tol`.
    pub fn approx_eq(&self, other: &GaussianLaw, tol: f64) -> bool {
        self.dim() == other.dim()
            && self.carrier_dim() == other.carrier_dim()
            && (&self.mean - &other.mean).amax() <= tol
            && linalg::max_abs_diff(&self.full_covariance(), &other.full_covariance()) <= tol
    }
}

/// Range basis and reduced covariance of a PSD matrix.
fn demote(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = nalgebra::SymmetricEigen::new(cov.clone());
    let scale = eig.eigenvalues.iter().copied().fold(0.0_f64, |m, l| m.max(l.abs())).max(1e-300);
    if eig.eigenvalues.iter().any(|&l| l < -DEMOTION_TOL * scale.max(1.0)) {
        return Err(Error::InvalidLaw("covariance is not positive semidefinite".into()));
    }
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > DEMOTION_TOL * scale).collect();
    let basis = linalg::select_columns(&eig.eigenvectors, &keep);
    let reduced = basis.transpose() * cov * &basis;
    Ok((basis, reduced))
}

// ---------------------------------------------------------------------------
// Gaussian mixtures
// ---------------------------------------------------------------------------

/// Precomputed per-component data for fast density evaluation in a shared
/// carrier frame.
#[derive(Clone, Debug)]
struct MixtureFrame {
    origin: DVector<f64>,
    basis: DMatrix<f64>,
    r: usize,
    /// Component means in carrier coordinates, `k x r` row-major.
    means: Vec<f64>,
    /// Inverse Cholesky factors, `k x r x r` row-major.
    inv_chol: Vec<f64>,
    /// `log w_j - r/2 log 2π - 1/2 log det Σ_j`.
    log_coef: Vec<f64>,
}

impl MixtureFrame {
    fn new(weights: &[f64], components: &[GaussianLaw]) -> Self {
        let first = &components[0];
        let origin = first.mean.clone();
        let basis = first.carrier.clone();
        let r = first.carrier_dim();
        let k = components.len();
        let mut means = Vec::with_capacity(k * r);
        let mut inv_chol = Vec::with_capacity(k * r * r);
        let mut log_coef = Vec::with_capacity(k);
        for (w, c) in weights.iter().zip(components) {
            let t = basis.transpose() * &c.carrier;
            let cov = linalg::symmetrize(&(&t * &c.covariance * t.transpose()));
            let chol = linalg::cholesky(&cov).unwrap_or_else(|| c.chol.clone());
            let inv = linalg::lower_inverse(&chol);
            let m = basis.transpose() * (&c.mean - &origin);
            means.extend(m.iter());
            for i in 0..r {
                for j in 0..r {
                    inv_chol.push(inv[(i, j)]);
                }
            }
            log_coef.push(w.ln() - 0.5 * (r as f64) * (2.0 * PI).ln() - 0.5 * c.logdet);
        }
        Self { origin, basis, r, means, inv_chol, log_coef }
    }

    fn coordinates(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let offset = x - &self.origin;
        let w = self.basis.transpose() * &offset;
        let residual = (&offset - &self.basis * &w).norm();
        (residual <= CARRIER_TOL * (1.0 + offset.norm())).then_some(w)
    }

    /// `log(w_j G_j(x))` for every component.
    fn component_logs(&self, w: &DVector<f64>, out: &mut Vec<f64>) {
        out.clear();
        let r = self.r;
        let mut diff = vec![0.0; r];
        for (j, &coef) in self.log_coef.iter().enumerate() {
            let mean = &self.means[j * r..(j + 1) * r];
            for i in 0..r {
                diff[i] = w[i] - mean[i];
            }
            let inv = &self.inv_chol[j * r * r..(j + 1) * r * r];
            let mut quad = 0.0;
            for i in 0..r {
                let mut z = 0.0;
                for l in 0..=i {
                    z += inv[i * r + l] * diff[l];
                }
                quad += z * z;
            }
            out.push(coef - 0.5 * quad);
        }
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let Some(w) = self.coordinates(x) else {
            return f64::NEG_INFINITY;
        };
        let r = self.r;
        if r == 1 {
            // Hot path for one-dimensional kernel estimates.
            let (mut max, mut sum) = (f64::NEG_INFINITY, 0.0);
            for (j, &coef) in self.log_coef.iter().enumerate() {
                let z = self.inv_chol[j] * (w[0] - self.means[j]);
                let v = coef - 0.5 * z * z;
                if v > max {
                    sum = sum * (max - v).exp() + 1.0;
                    max = v;
                } else {
                    sum += (v - max).exp();
                }
            }
            return max + sum.ln();
        }
        let mut logs = Vec::with_capacity(self.log_coef.len());
        self.component_logs(&w, &mut logs);
        log_sum_exp(&logs)
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalised `exp` of log-weights.
pub(crate) fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| (x - lse).exp()).collect()
}

/// `Σ_j w_j G_j` with every component on one affine carrier.
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianLaw>,
    cumulative: Vec<f64>,
    frame: MixtureFrame,
}

impl GaussianMixture {
    /// Zero-weight components are dropped.
    pub fn new(weights: Vec<f64>, components: Vec<GaussianLaw>) -> Result<Self> {
        if weights.len() != components.len() {
            return Err(Error::InvalidLaw("weights and components differ in length".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidLaw("mixture weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidLaw(format!("mixture weights sum to {total}")));
        }
        let (weights, components): (Vec<f64>, Vec<GaussianLaw>) =
            weights.into_iter().zip(components).filter(|(w, _)| *w > 0.0).map(|(w, c)| (w / total, c)).unzip();
        let first = components.first().ok_or_else(|| Error::InvalidLaw("mixture has no components".into()))?;
        if components.iter().any(|c| !c.same_carrier(first)) {
            return Err(Error::InvalidLaw("mixture components do not share a carrier".into()));
        }
        let mut acc = 0.0;
        let cumulative = weights.iter().map(|w| {
            acc += w;
            acc
        }).collect();
        let frame = MixtureFrame::new(&weights, &components);
        Ok(Self { weights, components, cumulative, frame })
    }

    pub fn single(g: GaussianLaw) -> Self {
        Self::new(vec![1.0], vec![g]).expect("single component")
    }

    /// Uniform weights.
    pub fn uniform(components: Vec<GaussianLaw>) -> Result<Self> {
        let k = components.len();
        if k == 0 {
            return Err(Error::InvalidLaw("mixture has no components".into()));
        }
        Self::new(vec![1.0 / k as f64; k], components)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianLaw] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn carrier_dim(&self) -> usize {
        self.components[0].carrier_dim()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        if x.len() != self.dim() {
            return f64::NEG_INFINITY;
        }
        self.frame.log_density(x)
    }

    pub fn density(&self, x: &DVector<f64>) -> f64 {
        self.log_density(x).exp()
    }

    /// Posterior component probabilities `w_j G_j(x) / Σ_i w_i G_i(x)`.
    pub fn posterior(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        let w = self.frame.coordinates(x).ok_or(Error::ZeroMassFiber)?;
        let mut logs = Vec::with_capacity(self.len());
        self.frame.component_logs(&w, &mut logs);
        if logs.iter().all(|l| *l == f64::NEG_INFINITY) {
            return Err(Error::ZeroMassFiber);
        }
        Ok(softmax(&logs))
    }

    pub fn sample_component(&self, rng: &mut McRng) -> usize {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.len() - 1];
        self.cumulative.partition_point(|&c| c <= u).min(self.len() - 1)
    }

    /// Ancestral sampling: component index, then the component.
    pub fn sample_one(&self, rng: &mut McRng) -> DVector<f64> {
        let j = self.sample_component(rng);
        self.components[j].sample_one(rng)
    }

    pub fn push(&self, a: &DMatrix<f64>) -> Result<GaussianMixture> {
        let comps = self.components.iter().map(|c| c.push(a)).collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(self.weights.clone(), comps)
    }

    /// Conditional law given `a x = y`: posterior weights of the pushed
    /// components at `y`, each component conditioned.
    pub fn condition(&self, a: &DMatrix<f64>, y: &DVector<f64>) -> Result<GaussianMixture> {
        let mut logs = Vec::with_capacity(self.len());
        let mut comps = Vec::with_capacity(self.len());
        for (w, c) in self.weights.iter().zip(&self.components) {
            let lp = w.ln() + c.push(a)?.log_density(y);
            if lp == f64::NEG_INFINITY {
                continue;
            }
            logs.push(lp);
            comps.push(c.condition(a, y)?);
        }
        if comps.is_empty() {
            return Err(Error::ZeroMassFiber);
        }
        GaussianMixture::new(softmax(&logs), comps)
    }

    /// Merges numerically identical components.
    pub fn merged(&self) -> GaussianMixture {
        let mut weights: Vec<f64> = Vec::new();
        let mut comps: Vec<GaussianLaw> = Vec::new();
        for (w, c) in self.weights.iter().zip(&self.components) {
            match comps.iter().position(|d| d.approx_eq(c, 1e-12)) {
                Some(i) => weights[i] += w,
                None => {
                    weights.push(*w);
                    comps.push(c.clone());
                }
            }
        }
        GaussianMixture::new(weights, comps).expect("merging preserves validity")
    }

    /// The law as a single gaussian, when all components coincide.
    pub fn as_gaussian(&self) -> Option<GaussianLaw> {
        let first = &self.components[0];
        self.components.iter().all(|c| c.approx_eq(first, 1e-12)).then(|| first.clone())
    }
}

// ---------------------------------------------------------------------------
// Mixed laws
// ---------------------------------------------------------------------------

/// A law on `⟨X, Y⟩` with density `r(x, y) = p(y) m_y(x)`, where `p` is a
/// discrete law on `E_Y` and each `m_y` is a gaussian mixture on `E_X`.
///
/// Conditionals of positive-mass blocks share one affine carrier; entries
/// for zero-mass blocks are kept but never read as densities.
#[derive(Clone, Debug)]
pub struct MixedLaw {
    p: DiscreteLaw,
    conditionals: Vec<GaussianMixture>,
}

impl MixedLaw {
    pub fn new(p: DiscreteLaw, conditionals: Vec<GaussianMixture>) -> Result<Self> {
        if p.len() != conditionals.len() {
            return Err(Error::InvalidLaw("one conditional per discrete outcome is required".into()));
        }
        let d = conditionals[0].dim();
        if conditionals.iter().any(|c| c.dim() != d) {
            return Err(Error::InvalidLaw("conditionals live in different dimensions".into()));
        }
        let support = p.support();
        let anchor = &conditionals[support[0]].components()[0];
        for &y in &support {
            if !conditionals[y].components()[0].same_carrier(anchor) {
                return Err(Error::InvalidLaw("conditionals do not share a carrier".into()));
            }
        }
        Ok(Self { p, conditionals })
    }

    pub fn from_gaussians(p: DiscreteLaw, gaussians: Vec<GaussianLaw>) -> Result<Self> {
        Self::new(p, gaussians.into_iter().map(GaussianMixture::single).collect())
    }

    pub fn p(&self) -> &DiscreteLaw {
        &self.p
    }

    pub fn conditionals(&self) -> &[GaussianMixture] {
        &self.conditionals
    }

    pub fn dim(&self) -> usize {
        self.conditionals[0].dim()
    }

    pub fn n_blocks(&self) -> usize {
        self.p.len()
    }

    /// Conditionals when each is a single gaussian.
    pub fn gaussian_conditionals(&self) -> Option<Vec<GaussianLaw>> {
        self.conditionals.iter().map(|m| m.as_gaussian()).collect()
    }

    /// `x ↦ Σ_y p(y) m_y(x)`.
    pub fn continuous_marginal(&self) -> GaussianMixture {
        let mut weights = Vec::new();
        let mut comps = Vec::new();
        for y in self.p.support() {
            let py = self.p.weight(y);
            for (w, c) in self.conditionals[y].weights().iter().zip(self.conditionals[y].components()) {
                weights.push(py * w);
                comps.push(c.clone());
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        GaussianMixture::new(weights, comps).expect("components share a carrier")
    }

    pub fn density(&self, x: &DVector<f64>, y: usize) -> f64 {
        if y >= self.n_blocks() || !self.p.is_positive(y) {
            return 0.0;
        }
        self.p.weight(y) * self.conditionals[y].density(x)
    }

    /// `ρ_x(y) = p(y) m_y(x) / Σ_y' p(y') m_y'(x)`.
    pub fn posterior(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        let logs: Vec<f64> = (0..self.n_blocks())
            .map(|y| {
                if self.p.is_positive(y) {
                    self.p.weight(y).ln() + self.conditionals[y].log_density(x)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        if logs.iter().all(|l| *l == f64::NEG_INFINITY) {
            return Err(Error::ZeroMassFiber);
        }
        Ok(softmax(&logs))
    }

    pub fn sample_one(&self, rng: &mut McRng) -> (DVector<f64>, usize) {
        let y = self.p.sample_one(rng);
        (self.conditionals[y].sample_one(rng), y)
    }

    pub fn push(&self, linear: &DMatrix<f64>, blocks: &BlockMap) -> Result<MixedLaw> {
        let p = self.p.marginalize(blocks)?;
        let mut conditionals = Vec::with_capacity(blocks.target_size);
        for t in 0..blocks.target_size {
            let fiber: Vec<usize> = (0..self.n_blocks()).filter(|&y| blocks.map[y] == t).collect();
            let positive: Vec<usize> = fiber.iter().copied().filter(|&y| self.p.is_positive(y)).collect();
            if positive.is_empty() {
                conditionals.push(self.conditionals[fiber[0]].push(linear)?);
                continue;
            }
            let mass: f64 = positive.iter().map(|&y| self.p.weight(y)).sum();
            let mut weights = Vec::new();
            let mut comps = Vec::new();
            for y in positive {
                let pushed = self.conditionals[y].push(linear)?;
                let py = self.p.weight(y) / mass;
                for (w, c) in pushed.weights().iter().zip(pushed.components()) {
                    weights.push(py * w);
                    comps.push(c.clone());
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            conditionals.push(GaussianMixture::new(weights, comps)?);
        }
        MixedLaw::new(p, conditionals)
    }

    /// Conditional law given `(linear x, blocks y) = (x', y')`.
    pub fn condition(&self, linear: &DMatrix<f64>, blocks: &BlockMap, x: &DVector<f64>, y: usize) -> Result<MixedLaw> {
        if y >= blocks.target_size {
            return Err(Error::InvalidLaw("block outside the target".into()));
        }
        if linear.nrows() == 0 {
            // Only the discrete coordinate is observed.
            let p = self.p.condition(blocks, y)?;
            return MixedLaw::new(p, self.conditionals.clone());
        }
        let mut logs = vec![f64::NEG_INFINITY; self.n_blocks()];
        let mut conditionals = self.conditionals.clone();
        for src in 0..self.n_blocks() {
            if blocks.map[src] != y || !self.p.is_positive(src) {
                continue;
            }
            let lp = self.conditionals[src].push(linear)?.log_density(x);
            if lp == f64::NEG_INFINITY {
                continue;
            }
            logs[src] = self.p.weight(src).ln() + lp;
            conditionals[src] = self.conditionals[src].condition(linear, x)?;
        }
        if logs.iter().all(|l| *l == f64::NEG_INFINITY) {
            return Err(Error::ZeroMassFiber);
        }
        MixedLaw::new(DiscreteLaw::float(softmax(&logs))?, conditionals)
    }
}

// ---------------------------------------------------------------------------
// The law enum
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub enum Law {
    Discrete(DiscreteLaw),
    Gaussian(GaussianLaw),
    Mixture(GaussianMixture),
    Mixed(MixedLaw),
}

impl Law {
    pub fn kind(&self) -> &'static str {
        match self {
            Law::Discrete(_) => "discrete",
            Law::Gaussian(_) => "gaussian",
            Law::Mixture(_) => "mixture",
            Law::Mixed(_) => "mixed",
        }
    }

    /// Whether the law lives on `E_X` for the given observable.
    pub fn fits(&self, obs: &Observable) -> bool {
        match (self, obs) {
            (Law::Discrete(l), Observable::Discrete(o)) => l.len() == o.n_outcomes(),
            (Law::Gaussian(g), Observable::Continuous(o)) => g.dim() == o.dim(),
            (Law::Mixture(m), Observable::Continuous(o)) => m.dim() == o.dim(),
            (Law::Mixed(m), Observable::Product(o)) => {
                m.dim() == o.continuous.dim() && m.n_blocks() == o.discrete.n_outcomes()
            }
            _ => false,
        }
    }

    /// Image law `π_* ρ` under `E(π)`.
    pub fn marginalize(&self, map: &ArrowMap) -> Result<Law> {
        match (self, map) {
            (Law::Discrete(l), ArrowMap::Blocks(b)) => Ok(Law::Discrete(l.marginalize(b)?)),
            (Law::Gaussian(g), ArrowMap::Linear(a)) => Ok(Law::Gaussian(g.push(a)?)),
            (Law::Mixture(m), ArrowMap::Linear(a)) => Ok(Law::Mixture(m.push(a)?)),
            (Law::Mixed(m), ArrowMap::Product { linear, blocks }) => Ok(Law::Mixed(m.push(linear, blocks)?)),
            _ => Err(Error::InvalidArrow(format!("{} law", self.kind()), "arrow of another sector".into())),
        }
    }

    /// `ρ|_{Y=y}` as a law on the source, concentrated on the fiber of `y`.
    pub fn condition(&self, map: &ArrowMap, y: &Outcome) -> Result<Law> {
        match (self, map, y) {
            (Law::Discrete(l), ArrowMap::Blocks(b), Outcome::Block(t)) => Ok(Law::Discrete(l.condition(b, *t)?)),
            (Law::Gaussian(g), ArrowMap::Linear(a), Outcome::Point(p)) => Ok(Law::Gaussian(g.condition(a, p)?)),
            (Law::Mixture(m), ArrowMap::Linear(a), Outcome::Point(p)) => Ok(Law::Mixture(m.condition(a, p)?)),
            (Law::Mixed(m), ArrowMap::Product { linear, blocks }, Outcome::Pair(p, t)) => {
                Ok(Law::Mixed(m.condition(linear, blocks, p, *t)?))
            }
            _ => Err(Error::InvalidArrow(format!("{} law", self.kind()), "outcome of another sector".into())),
        }
    }

    /// Density with respect to the carrier's reference measure.
    pub fn density(&self, at: &Outcome) -> f64 {
        match (self, at) {
            (Law::Discrete(l), Outcome::Block(i)) if *i < l.len() => l.weight(*i),
            (Law::Gaussian(g), Outcome::Point(x)) if x.len() == g.dim() => g.density(x),
            (Law::Mixture(m), Outcome::Point(x)) => m.density(x),
            (Law::Mixed(m), Outcome::Pair(x, y)) if x.len() == m.dim() => m.density(x, *y),
            _ => 0.0,
        }
    }

    pub fn sample_one(&self, rng: &mut McRng) -> Outcome {
        match self {
            Law::Discrete(l) => Outcome::Block(l.sample_one(rng)),
            Law::Gaussian(g) => Outcome::Point(g.sample_one(rng)),
            Law::Mixture(m) => Outcome::Point(m.sample_one(rng)),
            Law::Mixed(m) => {
                let (x, y) = m.sample_one(rng);
                Outcome::Pair(x, y)
            }
        }
    }

    pub fn disintegrate(&self, map: &ArrowMap) -> Result<Disintegration<'_>> {
        let marginal = self.marginalize(map)?;
        Ok(Disintegration { law: self, map: map.clone(), marginal })
    }
}

/// The family `{ρ|_{Y=y}}` of a law along an arrow, with the marginal.
#[derive(Debug)]
pub struct Disintegration<'a> {
    law: &'a Law,
    map: ArrowMap,
    marginal: Law,
}

impl Disintegration<'_> {
    pub fn marginal(&self) -> &Law {
        &self.marginal
    }

    pub fn at(&self, y: &Outcome) -> Result<Law> {
        self.law.condition(&self.map, y)
    }

    /// For finite targets: `(y, mass, ρ|_{Y=y})` over outcomes of positive
    /// mass. Zero-mass fibers are excluded.
    pub fn fibers(&self) -> Option<Result<Vec<(Outcome, f64, Law)>>> {
        let outcomes = self.map.target_outcomes()?;
        let mut out = Vec::new();
        for y in outcomes {
            let mass = self.marginal.density(&y);
            if mass <= 0.0 {
                continue;
            }
            match self.at(&y) {
                Ok(c) => out.push((y, mass, c)),
                Err(Error::ZeroMassFiber) => continue,
                Err(e) => return Some(Err(e)),
            }
        }
        Some(Ok(out))
    }
}

/// `π_* ρ` for an arrow of `s`.
pub fn marginalize(law: &Law, s: &InformationStructure, arrow: Arrow) -> Result<Law> {
    law.marginalize(&s.arrow_map(arrow))
}

/// `n` independent draws, deterministic in `seed`.
pub fn sample(law: &Law, n: usize, seed: u64) -> Vec<Outcome> {
    let mut rng = mc::rng_for(seed, u64::MAX);
    (0..n).map(|_| law.sample_one(&mut rng)).collect()
}

/// Total variation distance `½ ∫ |f - g|`.
///
/// Exact for discrete laws. For continuous laws, importance sampling from
/// the balanced mixture `½(f + g)`, whose ratio `|f - g| / (½(f + g))` is
/// bounded by 2.
pub fn tv_distance(f: &Law, g: &Law, budget: &McBudget) -> Result<Estimate> {
    match (f, g) {
        (Law::Discrete(a), Law::Discrete(b)) => {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
            }
            let tv = match (a.weights(), b.weights()) {
                (Weights::Exact(x), Weights::Exact(y)) => {
                    let s: BigRational = x.iter().zip(y).map(|(p, q)| (p - q).abs()).sum();
                    (s / BigRational::from_integer(BigInt::from(2))).to_f64().unwrap_or(f64::NAN)
                }
                _ => 0.5 * a.weights_f64().iter().zip(b.weights_f64()).map(|(p, q)| (p - q).abs()).sum::<f64>(),
            };
            Ok(Estimate::exact(tv))
        }
        _ => {
            let (fm, gm) = (as_mixture(f)?, as_mixture(g)?);
            if fm.dim() != gm.dim() || fm.carrier_dim() != gm.carrier_dim() {
                return Err(Error::InvalidLaw("laws live on different carriers".into()));
            }
            budget.check()?;
            let out = mc::estimate::<1, _>(budget.samples, budget.seed, |rng| {
                let x = if rng.random::<bool>() { fm.sample_one(rng) } else { gm.sample_one(rng) };
                let (lf, lg) = (fm.log_density(&x), gm.log_density(&x));
                Ok([l1_ratio(lf, lg)])
            })?;
            Ok(Estimate::monte_carlo(0.5 * out.mean(0), 0.5 * out.std_error(0), budget.samples))
        }
    }
}

/// `|f - g| / (½(f + g))` from log densities, stable when both are tiny.
pub(crate) fn l1_ratio(lf: f64, lg: f64) -> f64 {
    if lf == f64::NEG_INFINITY && lg == f64::NEG_INFINITY {
        return 0.0;
    }
    let m = lf.max(lg);
    let (a, b) = ((lf - m).exp(), (lg - m).exp());
    2.0 * (a - b).abs() / (a + b)
}

pub(crate) fn as_mixture(law: &Law) -> Result<GaussianMixture> {
    match law {
        Law::Gaussian(g) => Ok(GaussianMixture::single(g.clone())),
        Law::Mixture(m) => Ok(m.clone()),
        other => Err(Error::NotGaussian(other.kind())),
    }
}
