//! Gaussian-kernel density estimates, L1 convergence runs and the slope test
//! for candidate cocycle constants.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohomology::Params;
use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::functionals::{gaussian_entropy, log_2pi_e, mixture_entropy};
use crate::laws::{l1_ratio, GaussianLaw, GaussianMixture};
use crate::mc::{self, McBudget, McRng};

/// Default bound on `J_n` at the largest scheduled `n`.
pub const DEFAULT_J_THRESHOLD: f64 = 0.1;
/// Default bound on `|S_n − S(target)|` at the largest scheduled `n`.
pub const DEFAULT_ENTROPY_GAP: f64 = 0.05;
/// Relative tolerance of the slope test.
pub const SLOPE_REL_TOL: f64 = 0.05;
/// Absolute tolerance of the slope test when the predicted slope is zero.
pub const SLOPE_ZERO_TOL: f64 = 1e-6;
const SAMPLE_STREAM: u64 = 0x6b_6465;

/// The density being estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Target {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    Mixture { weights: Vec<f64>, means: Vec<Vec<f64>>, covs: Vec<Vec<Vec<f64>>> },
    /// Uniform on the box `Π [lo_i, hi_i]`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
    /// Product of symmetric triangular densities on `[-1, 1]`.
    Triangular { dim: usize },
}

fn matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidLaw("covariance must be square".into()));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

/// A target prepared for sampling and density evaluation.
#[derive(Clone, Debug)]
pub enum TargetDensity {
    Mixture(GaussianMixture),
    UniformBox { lo: Vec<f64>, hi: Vec<f64>, log_volume: f64 },
    Triangular { dim: usize },
}

impl Target {
    pub fn standard_gaussian(d: usize) -> Self {
        let cov = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Target::Gaussian { mean: vec![0.0; d], cov }
    }

    pub fn dim(&self) -> usize {
        match self {
            Target::Gaussian { mean, .. } => mean.len(),
            Target::Mixture { means, .. } => means.first().map_or(0, |m| m.len()),
            Target::UniformBox { lo, .. } => lo.len(),
            Target::Triangular { dim } => *dim,
        }
    }

    pub fn prepare(&self) -> Result<TargetDensity> {
        let d = self.dim();
        if d == 0 || d > 3 {
            return Err(Error::InvalidLaw(format!("targets must have dimension 1 to 3, got {d}")));
        }
        match self {
            Target::Gaussian { mean, cov } => {
                let g = GaussianLaw::new(DVector::from_column_slice(mean), matrix(cov)?)?;
                if g.carrier_dim() != d {
                    return Err(Error::SingularCovariance);
                }
                Ok(TargetDensity::Mixture(GaussianMixture::single(g)))
            }
            Target::Mixture { weights, means, covs } => {
                if means.len() != covs.len() || means.iter().any(|m| m.len() != d) {
                    return Err(Error::InvalidLaw("mixture target shapes disagree".into()));
                }
                let comps = means
                    .iter()
                    .zip(covs)
                    .map(|(m, c)| GaussianLaw::new(DVector::from_column_slice(m), matrix(c)?))
                    .collect::<Result<Vec<_>>>()?;
                if comps.iter().any(|g| g.carrier_dim() != d) {
                    return Err(Error::SingularCovariance);
                }
                Ok(TargetDensity::Mixture(GaussianMixture::new(weights.clone(), comps)?))
            }
            Target::UniformBox { lo, hi } => {
                if hi.len() != d || lo.iter().zip(hi).any(|(l, h)| !(h > l)) {
                    return Err(Error::InvalidLaw("box needs lo < hi in every coordinate".into()));
                }
                let log_volume = lo.iter().zip(hi).map(|(l, h)| (h - l).ln()).sum();
                Ok(TargetDensity::UniformBox { lo: lo.clone(), hi: hi.clone(), log_volume })
            }
            Target::Triangular { dim } => Ok(TargetDensity::Triangular { dim: *dim }),
        }
    }
}

impl TargetDensity {
    pub fn dim(&self) -> usize {
        match self {
            TargetDensity::Mixture(m) => m.dim(),
            TargetDensity::UniformBox { lo, .. } => lo.len(),
            TargetDensity::Triangular { dim } => *dim,
        }
    }

    pub fn sample_one(&self, rng: &mut McRng) -> DVector<f64> {
        match self {
            TargetDensity::Mixture(m) => m.sample_one(rng),
            TargetDensity::UniformBox { lo, hi, .. } => {
                DVector::from_fn(lo.len(), |i, _| lo[i] + (hi[i] - lo[i]) * rng.random::<f64>())
            }
            TargetDensity::Triangular { dim } => {
                DVector::from_fn(*dim, |_, _| rng.random::<f64>() + rng.random::<f64>() - 1.0)
            }
        }
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        match self {
            TargetDensity::Mixture(m) => m.log_density(x),
            TargetDensity::UniformBox { lo, hi, log_volume } => {
                let inside = x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *v >= *l && *v <= *h);
                if inside {
                    -log_volume
                } else {
                    f64::NEG_INFINITY
                }
            }
            TargetDensity::Triangular { .. } => x.iter().map(|v| (1.0 - v.abs()).max(0.0).ln()).sum(),
        }
    }

    /// Differential entropy of the target.
    pub fn entropy(&self, budget: &McBudget) -> Result<Estimate> {
        match self {
            TargetDensity::Mixture(m) => mixture_entropy(m, budget),
            TargetDensity::UniformBox { log_volume, .. } => Ok(Estimate::closed(*log_volume)),
            // Each factor contributes 1/2 nat.
            TargetDensity::Triangular { dim } => Ok(Estimate::closed(0.5 * *dim as f64)),
        }
    }
}

/// `h_n` as a function of `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// `h_n = scale · n^(−exponent)`.
    Power { scale: f64, exponent: f64 },
    Constant { h: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandwidthValidity {
    /// `h_n → 0`.
    pub vanishes: bool,
    /// `n h_n^d → ∞`.
    pub mass_diverges: bool,
    pub valid: bool,
}

impl BandwidthRule {
    /// `n^(−1/(d+4))`.
    pub fn default_for(d: usize) -> Self {
        BandwidthRule::Power { scale: 1.0, exponent: 1.0 / (d as f64 + 4.0) }
    }

    pub fn bandwidth(&self, n: usize) -> f64 {
        match *self {
            BandwidthRule::Power { scale, exponent } => scale * (n as f64).powf(-exponent),
            BandwidthRule::Constant { h } => h,
        }
    }

    pub fn validity(&self, d: usize) -> BandwidthValidity {
        let (vanishes, mass_diverges) = match *self {
            BandwidthRule::Power { exponent, .. } => (exponent > 0.0, exponent * (d as f64) < 1.0),
            BandwidthRule::Constant { .. } => (false, true),
        };
        BandwidthValidity { vanishes, mass_diverges, valid: vanishes && mass_diverges }
    }

    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            BandwidthRule::Power { scale, exponent } => scale > 0.0 && exponent.is_finite(),
            BandwidthRule::Constant { h } => h > 0.0 && h.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLaw("bandwidth must be positive".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeConfig {
    pub target: Target,
    pub schedule: Vec<usize>,
    pub bandwidth: BandwidthRule,
    pub seed: u64,
    /// Sample budget of each Monte Carlo estimate in a row.
    pub budget: usize,
    /// Constants for which `Φ_abc` is recorded.
    pub candidates: Vec<Params>,
    pub j_threshold: f64,
    pub entropy_gap: f64,
}

impl KdeConfig {
    pub fn new(target: Target, schedule: Vec<usize>) -> Self {
        let d = target.dim();
        Self {
            target,
            schedule,
            bandwidth: BandwidthRule::default_for(d),
            seed: 42,
            budget: mc::DEFAULT_MC_BUDGET,
            candidates: vec![Params::new(1.0, 1.0, 0.0), Params::new(0.0, 1.0, 0.0), Params::new(0.5, 1.0, 0.0)],
            j_threshold: DEFAULT_J_THRESHOLD,
            entropy_gap: DEFAULT_ENTROPY_GAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateValue {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    /// `J_n = ∫ |f_n − f|`.
    pub j: Estimate,
    /// Differential entropy of the estimate.
    pub entropy: Estimate,
    pub phi: Vec<CandidateValue>,
}

/// Uniform mixture of `N(X_i, h² I)`.
pub fn kde_fit(samples: &[DVector<f64>], h: f64) -> Result<GaussianMixture> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidLaw(format!("bandwidth must be positive, got {h}")));
    }
    let d = samples.first().ok_or_else(|| Error::InvalidLaw("no samples".into()))?.len();
    if samples.iter().any(|x| x.len() != d) {
        return Err(Error::InvalidLaw("samples differ in dimension".into()));
    }
    let cov = DMatrix::identity(d, d) * (h * h);
    let comps = samples
        .iter()
        .map(|x| GaussianLaw::on_carrier(x.clone(), DMatrix::identity(d, d), cov.clone()))
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::uniform(comps)
}

/// Monte Carlo estimate of `∫ |f_n − f|`, sampling from `½(f_n + f)`.
pub fn l1_error(estimate: &GaussianMixture, target: &TargetDensity, budget: &McBudget) -> Result<Estimate> {
    if estimate.dim() != target.dim() || estimate.carrier_dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), found: estimate.carrier_dim() });
    }
    budget.check()?;
    let out = mc::estimate::<1, _>(budget.samples, budget.seed, |rng| {
        let x = if rng.random::<bool>() { estimate.sample_one(rng) } else { target.sample_one(rng) };
        Ok([l1_ratio(estimate.log_density(&x), target.log_density(&x))])
    })?;
    Ok(Estimate::monte_carlo(out.mean(0), out.std_error(0), budget.samples))
}

/// `2d(a − b/2) log h + c d − (b d/2) log 2πe + b S`, given `S`.
pub fn phi_from_entropy(params: Params, h: f64, d: usize, entropy: Estimate) -> Estimate {
    let Params { a, b, c } = params;
    let d = d as f64;
    let constant = 2.0 * d * (a - b / 2.0) * h.ln() + c * d - 0.5 * b * d * log_2pi_e();
    entropy.scale(b).shift(constant)
}

/// The candidate value `Φ_abc(ρ_n)` with `S` estimated from `ρ_n`.
pub fn phi_candidate(params: Params, estimate: &GaussianMixture, h: f64, d: usize, budget: &McBudget) -> Result<Estimate> {
    Ok(phi_from_entropy(params, h, d, mixture_entropy(estimate, budget)?))
}

/// Draws `max(schedule)` samples from one stream and evaluates every prefix.
pub fn run_convergence(cfg: &KdeConfig) -> Result<Vec<ConvergenceRow>> {
    cfg.bandwidth.check()?;
    if cfg.schedule.is_empty() || cfg.schedule.contains(&0) {
        return Err(Error::InvalidLaw("schedule needs positive sample counts".into()));
    }
    McBudget::new(cfg.budget, cfg.seed).check()?;
    let target = cfg.target.prepare()?;
    let d = target.dim();
    let n_max = *cfg.schedule.iter().max().expect("nonempty");
    let mut rng = mc::rng_for(cfg.seed, SAMPLE_STREAM);
    let samples: Vec<DVector<f64>> = (0..n_max).map(|_| target.sample_one(&mut rng)).collect();
    cfg.schedule
        .par_iter()
        .map(|&n| {
            let h = cfg.bandwidth.bandwidth(n);
            let fit = kde_fit(&samples[..n], h)?;
            let budget = McBudget::new(cfg.budget, mc::derive_seed(cfg.seed, n as u64));
            let j = l1_error(&fit, &target, &budget.derive(1))?;
            let entropy = if n == 1 {
                gaussian_entropy(&fit.components()[0])
            } else {
                mixture_entropy(&fit, &budget.derive(2))?
            };
            let phi = cfg
                .candidates
                .iter()
                .map(|&p| {
                    let v = phi_from_entropy(p, h, d, entropy);
                    CandidateValue { a: p.a, b: p.b, c: p.c, value: v.value, std_error: v.std_error }
                })
                .collect();
            Ok(ConvergenceRow { n, h, j, entropy, phi })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: usize,
    pub fitted: f64,
    /// Slope of `Φ_abc` itself, without removing `b S_n` (informational).
    pub raw_fitted: f64,
    pub theoretical: f64,
    /// `|fitted − theoretical| / |theoretical|`, or the absolute error when
    /// the theoretical slope is zero.
    pub error: f64,
    pub passed: bool,
}

/// Least-squares slope of `Φ_abc − b S_n` against `log h_n`.
pub fn slope_test(rows: &[ConvergenceRow], params: Params, d: usize) -> Result<SlopeReport> {
    if rows.len() < 4 {
        return Err(Error::DegenerateFit(format!("need at least 4 rows, got {}", rows.len())));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|r| phi_from_entropy(params, r.h, d, r.entropy).value - params.b * r.entropy.value)
        .collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 * (1.0 + mx * mx) {
        return Err(Error::DegenerateFit("all bandwidths are equal".into()));
    }
    let slope = |ys: &[f64]| {
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx
    };
    let fitted = slope(&ys);
    let raw: Vec<f64> = rows.iter().map(|r| phi_from_entropy(params, r.h, d, r.entropy).value).collect();
    let raw_fitted = slope(&raw);
    let theoretical = 2.0 * d as f64 * (params.a - params.b / 2.0);
    let (error, passed) = if theoretical == 0.0 {
        (fitted.abs(), fitted.abs() <= SLOPE_ZERO_TOL)
    } else {
        let e = (fitted - theoretical).abs() / theoretical.abs();
        (e, e <= SLOPE_REL_TOL)
    };
    Ok(SlopeReport { a: params.a, b: params.b, c: params.c, d, fitted, raw_fitted, theoretical, error, passed })
}

/// A convergence run with its summary checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdeReport {
    pub config: KdeConfig,
    pub validity: BandwidthValidity,
    pub target_entropy: Estimate,
    pub rows: Vec<ConvergenceRow>,
    pub slopes: Vec<SlopeReport>,
    pub j_decreasing: bool,
    pub final_j_below_threshold: bool,
    pub final_entropy_gap: f64,
    pub entropy_gap_ok: bool,
}

impl KdeReport {
    pub fn slopes_pass(&self) -> bool {
        self.slopes.iter().all(|s| s.passed)
    }
}

pub fn run_report(cfg: &KdeConfig) -> Result<KdeReport> {
    let rows = run_convergence(cfg)?;
    let d = cfg.target.dim();
    let target = cfg.target.prepare()?;
    let target_entropy = target.entropy(&McBudget::new(cfg.budget, mc::derive_seed(cfg.seed, u64::MAX)))?;
    let mut ordered: Vec<&ConvergenceRow> = rows.iter().collect();
    ordered.sort_by_key(|r| r.n);
    let j_decreasing = ordered.windows(2).all(|w| w[1].j.value < w[0].j.value);
    let last = ordered.last().expect("nonempty schedule");
    let final_entropy_gap = (last.entropy.value - target_entropy.value).abs();
    let slopes = if rows.len() >= 4 {
        cfg.candidates.iter().map(|&p| slope_test(&rows, p, d)).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(KdeReport {
        config: cfg.clone(),
        validity: cfg.bandwidth.validity(d),
        target_entropy,
        final_j_below_threshold: last.j.value < cfg.j_threshold,
        entropy_gap_ok: final_entropy_gap < cfg.entropy_gap,
        final_entropy_gap,
        j_decreasing,
        rows,
        slopes,
    })
}

fn candidate_column(c: &CandidateValue) -> String {
    format!("phi[a={},b={},c={}]", c.a, c.b, c.c)
}

/// One line per row: `n,h,j,j_se,entropy,entropy_se` then one column per
/// candidate.
pub fn write_rows_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string(), "h".into(), "j".into(), "j_se".into(), "entropy".into(), "entropy_se".into()];
    if let Some(first) = rows.first() {
        header.extend(first.phi.iter().map(candidate_column));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.n.to_string(),
            r.h.to_string(),
            r.j.value.to_string(),
            r.j.std_error.to_string(),
            r.entropy.value.to_string(),
            r.entropy.std_error.to_string(),
        ];
        rec.extend(r.phi.iter().map(|c| c.value.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready long format: `n,metric,value,std_error`.
pub fn write_rows_long_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "metric", "value", "std_error"])?;
    for r in rows {
        let n = r.n.to_string();
        w.write_record([n.as_str(), "h", &r.h.to_string(), "0"])?;
        w.write_record([n.as_str(), "j", &r.j.value.to_string(), &r.j.std_error.to_string()])?;
        w.write_record([n.as_str(), "entropy", &r.entropy.value.to_string(), &r.entropy.std_error.to_string()])?;
        for c in &r.phi {
            w.write_record([n.as_str(), &candidate_column(c), &c.value.to_string(), &c.std_error.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use statrs::function::erf::erf;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn single_sample_fit_is_standard_gaussian() {
        let m = kde_fit(&[v(&[0.0])], 1.0).unwrap();
        let g = m.as_gaussian().unwrap();
        assert!(g.approx_eq(&GaussianLaw::standard(1), 0.0));
    }

    #[test]
    fn weights_are_uniform() {
        let xs: Vec<_> = (0..7).map(|i| v(&[i as f64, -(i as f64)])).collect();
        let m = kde_fit(&xs, 0.3).unwrap();
        assert!(m.weights().iter().all(|w| (w - 1.0 / 7.0).abs() < 1e-15));
    }

    #[test]
    fn single_sample_entropy() {
        for (d, h) in [(1, 0.3), (2, 2.0), (3, 0.05)] {
            let m = kde_fit(&[DVector::zeros(d)], h).unwrap();
            let s = mixture_entropy(&m, &McBudget::default()).unwrap().value;
            assert_abs_diff_eq!(s, 0.5 * d as f64 * log_2pi_e() + d as f64 * h.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn l1_of_identical_densities_is_zero() {
        let m = kde_fit(&[v(&[0.0]), v(&[1.0])], 0.5).unwrap();
        let t = TargetDensity::Mixture(m.clone());
        assert_eq!(l1_error(&m, &t, &McBudget::new(2000, 1)).unwrap().value, 0.0);
    }

    #[test]
    fn l1_of_equal_mean_gaussians() {
        // N(0,1) vs N(0, 1+h²): the densities cross at ±x*, where
        // x*² = log(1+h²) (1+h²)/h². L1 = 4(Φ(x*) − Φ(x*/σ)).
        let h: f64 = 0.5;
        let s2 = 1.0 + h * h;
        let xstar = (s2.ln() * s2 / (h * h)).sqrt();
        let cdf = |x: f64| 0.5 * (1.0 + erf(x / 2f64.sqrt()));
        let exact = 4.0 * (cdf(xstar) - cdf(xstar / s2.sqrt()));
        let est = kde_fit(&[v(&[0.0])], s2.sqrt()).unwrap();
        let target = Target::standard_gaussian(1).prepare().unwrap();
        let j = l1_error(&est, &target, &McBudget::new(100_000, 5)).unwrap();
        assert!((j.value - exact).abs() <= 3.0 * j.std_error, "{j:?} vs {exact}");
        assert!(j.value <= 2.0);
    }

    #[test]
    fn bandwidth_validity() {
        for d in 1..=3 {
            assert!(BandwidthRule::default_for(d).validity(d).valid);
        }
        let fast = BandwidthRule::Power { scale: 1.0, exponent: 2.0 }.validity(1);
        assert!(fast.vanishes && !fast.mass_diverges && !fast.valid);
        let flat = BandwidthRule::Constant { h: 0.5 }.validity(1);
        assert!(!flat.vanishes && !flat.valid);
    }

    #[test]
    fn phi_candidate_examples() {
        let v = phi_from_entropy(Params::new(1.0, 1.0, 0.0), 0.1, 1, Estimate::closed(1.0)).value;
        assert_abs_diff_eq!(v, -2.721_523_626_198_718, epsilon = 1e-12);
        let a = phi_from_entropy(Params::new(0.5, 1.0, 0.3), 0.1, 2, Estimate::closed(1.0)).value;
        let b = phi_from_entropy(Params::new(0.5, 1.0, 0.3), 7.0, 2, Estimate::closed(1.0)).value;
        assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        let pure = phi_from_entropy(Params::new(0.7, 0.0, 0.2), 0.4, 3, Estimate::closed(5.0)).value;
        assert_abs_diff_eq!(pure, 6.0 * 0.7 * 0.4f64.ln() + 0.6, epsilon = 1e-14);
    }

    #[test]
    fn slope_needs_distinct_bandwidths() {
        let row = |n| ConvergenceRow { n, h: 0.5, j: Estimate::closed(0.1), entropy: Estimate::closed(1.0), phi: vec![] };
        let rows: Vec<_> = (1..=4).map(row).collect();
        assert!(matches!(slope_test(&rows, Params::new(1.0, 1.0, 0.0), 1), Err(Error::DegenerateFit(_))));
        assert!(matches!(slope_test(&rows[..3], Params::new(1.0, 1.0, 0.0), 1), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn targets_sample_inside_support_and_integrate() {
        let budget = McBudget::new(20_000, 3);
        for t in [
            Target::UniformBox { lo: vec![-1.0, 0.0], hi: vec![1.0, 0.5] },
            Target::Triangular { dim: 2 },
            Target::Mixture { weights: vec![0.3, 0.7], means: vec![vec![-1.0], vec![1.0]], covs: vec![vec![vec![0.5]], vec![vec![1.0]]] },
        ] {
            let td = t.prepare().unwrap();
            // -E[log f] under f is the entropy.
            let out = mc::estimate::<1, _>(budget.samples, budget.seed, |rng| {
                let x = td.sample_one(rng);
                Ok([-td.log_density(&x)])
            })
            .unwrap();
            let s = td.entropy(&budget.derive(9)).unwrap();
            let tol = 4.0 * out.std_error(0).hypot(s.std_error) + 1e-12;
            assert!((out.mean(0) - s.value).abs() <= tol, "{t:?}");
        }
        assert!(Target::Triangular { dim: 4 }.prepare().is_err());
    }

    #[test]
    fn csv_outputs() {
        let rows = vec![ConvergenceRow {
            n: 10,
            h: 0.5,
            j: Estimate::monte_carlo(0.2, 0.01, 1000),
            entropy: Estimate::monte_carlo(1.4, 0.02, 1000),
            phi: vec![CandidateValue { a: 1.0, b: 1.0, c: 0.0, value: -0.5, std_error: 0.02 }],
        }];
        let mut wide = Vec::new();
        write_rows_csv(&rows, &mut wide).unwrap();
        let wide = String::from_utf8(wide).unwrap();
        assert!(wide.starts_with("n,h,j,j_se,entropy,entropy_se,\"phi[a=1,b=1,c=0]\"\n"), "{wide}");
        let mut long = Vec::new();
        write_rows_long_csv(&rows, &mut long).unwrap();
        assert_eq!(String::from_utf8(long).unwrap().lines().count(), 1 + 4);
    }
}
