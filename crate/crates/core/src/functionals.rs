//! Entropy-type functionals on laws and the conditional-average action.

use std::f64::consts::{E, PI};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{Estimate, Method};
use crate::laws::{DiscreteLaw, GaussianLaw, GaussianMixture, Law, MixedLaw, Weights};
use crate::mc::{self, McBudget, MIN_MC_BUDGET};
use crate::structures::{ArrowMap, Outcome};

/// Default quadrature resolution per carrier axis.
pub const QUADRATURE_POINTS: usize = 2048;
/// Half-width of the quadrature box in component standard deviations.
pub const QUADRATURE_SIGMAS: f64 = 8.0;
/// Drift, in standard errors, between doubling windows that flags a
/// divergent action.
pub const DRIFT_SIGMAS: f64 = 10.0;

/// `log(2πe)`.
pub fn log_2pi_e() -> f64 {
    (2.0 * PI * E).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostHint {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

/// A real-valued functional on laws.
///
/// Implementations must depend on a law only through its density and the
/// reference measure of its carrier.
pub trait Functional: Sync {
    fn name(&self) -> String;

    fn cost_hint(&self) -> CostHint;

    /// Whether the value on a gaussian law depends only on its covariance.
    /// The action along a linear arrow is then closed-form.
    fn shift_invariant(&self) -> bool {
        false
    }

    fn evaluate(&self, law: &Law, budget: &McBudget) -> Result<Estimate>;
}

/// `-Σ ρ(w) log ρ(w)` with `0 log 0 = 0`.
pub fn shannon_entropy(law: &DiscreteLaw) -> Estimate {
    let h = match law.weights() {
        Weights::Exact(w) => w
            .iter()
            .filter(|x| x.numer().sign() == num_bigint::Sign::Plus)
            .map(|x| {
                let ln = ln_big(x.numer()) - ln_big(x.denom());
                let p = ln.exp();
                -p * ln
            })
            .sum(),
        Weights::Float(w) => w.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum(),
    };
    Estimate::exact(h)
}

/// Natural log of a positive big integer, accurate beyond `f64` range.
fn ln_big(n: &num_bigint::BigInt) -> f64 {
    let bits = n.bits();
    if bits <= 1000 {
        return num_traits::ToPrimitive::to_f64(n).unwrap_or(f64::NAN).ln();
    }
    let shift = bits - 60;
    let top: num_bigint::BigInt = n >> shift;
    num_traits::ToPrimitive::to_f64(&top).unwrap_or(f64::NAN).ln() + shift as f64 * std::f64::consts::LN_2
}

/// `½ log det Σ + (r/2) log(2πe)` on an `r`-dimensional carrier.
pub fn gaussian_entropy(law: &GaussianLaw) -> Estimate {
    Estimate::closed(0.5 * law.logdet() + 0.5 * law.carrier_dim() as f64 * log_2pi_e())
}

/// Differential entropy of a gaussian mixture on its carrier.
///
/// Single gaussians and point masses are closed-form; otherwise a Monte
/// Carlo estimate of `-E[log m(X)]`.
pub fn mixture_entropy(law: &GaussianMixture, budget: &McBudget) -> Result<Estimate> {
    if let Some(g) = law.as_gaussian() {
        return Ok(gaussian_entropy(&g));
    }
    mixture_entropy_mc(law, budget)
}

pub fn mixture_entropy_mc(law: &GaussianMixture, budget: &McBudget) -> Result<Estimate> {
    budget.check()?;
    let out = mc::estimate::<1, _>(budget.samples, budget.seed, |rng| {
        let x = law.sample_one(rng);
        Ok([-law.log_density(&x)])
    })?;
    Ok(Estimate::monte_carlo(out.mean(0), out.std_error(0), budget.samples))
}

/// Tensor-grid midpoint quadrature of `-∫ m log m` for carriers of dimension
/// at most 2, on the box `mean ± 8σ` covering every component.
///
/// The reported error is the difference against the half-resolution grid
/// plus a bound on the mass outside the box.
pub fn mixture_entropy_quadrature(law: &GaussianMixture, points: usize) -> Result<Estimate> {
    let r = law.carrier_dim();
    if r > 2 {
        return Err(Error::InvalidLaw(format!("quadrature supports carriers of dimension ≤ 2, got {r}")));
    }
    if points < 16 {
        return Err(Error::BudgetTooSmall { requested: points, minimum: 16 });
    }
    if r == 0 {
        return Ok(Estimate { value: 0.0, std_error: 0.0, method: Method::Quadrature, budget: 1 });
    }
    let first = &law.components()[0];
    let origin = first.mean().clone();
    let basis = first.carrier().clone();
    let mut lo = vec![f64::INFINITY; r];
    let mut hi = vec![f64::NEG_INFINITY; r];
    for c in law.components() {
        let t = basis.transpose() * c.carrier();
        let cov = &t * c.covariance() * t.transpose();
        let m = basis.transpose() * (c.mean() - &origin);
        for i in 0..r {
            let s = cov[(i, i)].sqrt();
            lo[i] = lo[i].min(m[i] - QUADRATURE_SIGMAS * s);
            hi[i] = hi[i].max(m[i] + QUADRATURE_SIGMAS * s);
        }
    }
    let integrate = |n: usize| -> f64 {
        let steps: Vec<f64> = (0..r).map(|i| (hi[i] - lo[i]) / n as f64).collect();
        let cell: f64 = steps.iter().product();
        let mut total = 0.0;
        let mut idx = vec![0usize; r];
        loop {
            let w = DVector::from_fn(r, |i, _| lo[i] + (idx[i] as f64 + 0.5) * steps[i]);
            let x = &origin + &basis * w;
            let l = law.log_density(&x);
            if l.is_finite() {
                total -= l.exp() * l;
            }
            let mut k = 0;
            loop {
                if k == r {
                    return total * cell;
                }
                idx[k] += 1;
                if idx[k] < n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    };
    let fine = integrate(points);
    let coarse = integrate(points / 2);
    // Gaussian tail outside ±8σ on each axis; the entropy integrand there is
    // bounded by a polynomial factor of the tail mass.
    let tail = r as f64 * 2.0 * (-0.5 * QUADRATURE_SIGMAS * QUADRATURE_SIGMAS).exp() * (1.0 + QUADRATURE_SIGMAS.powi(2));
    Ok(Estimate { value: fine, std_error: (fine - coarse).abs() + tail, method: Method::Quadrature, budget: points.pow(r as u32) })
}

/// Entropy of `r(x, y) = p(y) m_y(x)` against the product-sum reference
/// measure: `H(p) + Σ p(y) S(m_y)`.
pub fn mixed_law_entropy(law: &MixedLaw, budget: &McBudget) -> Result<Estimate> {
    let mut total = shannon_entropy(law.p());
    for y in law.p().support() {
        let s = mixture_entropy(&law.conditionals()[y], &budget.derive(y as u64))?;
        total = total.add(s.scale(law.p().weight(y)));
    }
    Ok(total)
}

/// Shannon or differential entropy, depending on the sector.
#[derive(Clone, Copy, Debug, Default)]
pub struct Entropy;

impl Functional for Entropy {
    fn name(&self) -> String {
        "entropy".into()
    }

    fn cost_hint(&self) -> CostHint {
        CostHint::MonteCarlo
    }

    fn shift_invariant(&self) -> bool {
        true
    }

    fn evaluate(&self, law: &Law, budget: &McBudget) -> Result<Estimate> {
        match law {
            Law::Discrete(l) => Ok(shannon_entropy(l)),
            Law::Gaussian(g) => Ok(gaussian_entropy(g)),
            Law::Mixture(m) => mixture_entropy(m, budget),
            Law::Mixed(m) => mixed_law_entropy(m, budget),
        }
    }
}

/// `ρ ↦ a log det Σ_ρ + c dim(carrier of ρ)` on gaussian laws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogDetDim {
    pub a: f64,
    pub c: f64,
}

pub fn logdet_dim_functional(a: f64, c: f64) -> LogDetDim {
    LogDetDim { a, c }
}

impl LogDetDim {
    pub fn value(&self, g: &GaussianLaw) -> f64 {
        let r = g.carrier_dim() as f64;
        // Avoid 0 * (-inf) when a vanishes.
        let ld = if self.a == 0.0 { 0.0 } else { self.a * g.logdet() };
        ld + self.c * r
    }
}

impl Functional for LogDetDim {
    fn name(&self) -> String {
        format!("logdet-dim(a={}, c={})", self.a, self.c)
    }

    fn cost_hint(&self) -> CostHint {
        CostHint::ClosedForm
    }

    fn shift_invariant(&self) -> bool {
        true
    }

    fn evaluate(&self, law: &Law, _budget: &McBudget) -> Result<Estimate> {
        match law {
            Law::Gaussian(g) => Ok(Estimate::closed(self.value(g))),
            Law::Mixture(m) => m.as_gaussian().map(|g| Estimate::closed(self.value(&g))).ok_or(Error::NotGaussian("mixture")),
            other => Err(Error::NotGaussian(other.kind())),
        }
    }
}

/// `Y.Φ(ρ) = ∫ Φ(ρ|_{Y=y}) dπ_*ρ(y)` along the arrow map `map: E_X -> E_Y`.
///
/// Finite targets give an exact sum over positive-mass fibers. A gaussian
/// law with a shift-invariant functional has identical conditionals up to
/// translation, so one evaluation suffices. Everything else is averaged by
/// Monte Carlo over `y ~ π_*ρ`, with a drift check across doubling windows.
pub fn act(phi: &dyn Functional, law: &Law, map: &ArrowMap, budget: &McBudget) -> Result<Estimate> {
    let dis = law.disintegrate(map)?;
    if let Some(fibers) = dis.fibers() {
        let mut total: Option<Estimate> = None;
        for (i, (_, mass, conditional)) in fibers?.into_iter().enumerate() {
            let v = phi.evaluate(&conditional, &budget.derive(i as u64))?.scale(mass);
            total = Some(match total {
                None => v,
                Some(t) => t.add(v),
            });
        }
        return Ok(total.unwrap_or_else(|| Estimate::exact(0.0)));
    }
    if let (Law::Gaussian(g), ArrowMap::Linear(a), true) = (law, map, phi.shift_invariant()) {
        let at = Outcome::Point(a * g.mean());
        return phi.evaluate(&law.condition(map, &at)?, budget);
    }
    budget.check()?;
    let inner = budget.with_samples(MIN_MC_BUDGET);
    let marginal = dis.marginal();
    let out = mc::estimate::<1, _>(budget.samples, budget.seed, |rng| {
        let y = marginal.sample_one(rng);
        let conditional = dis.at(&y)?;
        let seed: u64 = rand::Rng::random(rng);
        let v = phi.evaluate(&conditional, &McBudget { seed, ..inner })?.value;
        if !v.is_finite() {
            return Err(Error::DivergentAction(format!("{} is not finite on a conditional", phi.name())));
        }
        Ok([v])
    })?;
    check_drift(&out.prefixes(0), &phi.name())?;
    Ok(Estimate::monte_carlo(out.mean(0), out.std_error(0), budget.samples))
}

/// Flags running means that move by more than `DRIFT_SIGMAS` standard errors
/// between successive doubling windows.
pub(crate) fn check_drift(prefixes: &[mc::Moments], name: &str) -> Result<()> {
    let mut len = 1;
    while 2 * len <= prefixes.len() {
        let (a, b) = (&prefixes[len - 1], &prefixes[2 * len - 1]);
        let se = b.std_error();
        let drift = (a.mean - b.mean).abs();
        if se > 0.0 && drift > DRIFT_SIGMAS * se {
            return Err(Error::DivergentAction(format!(
                "running mean of {name} drifted by {drift:.3e} ({:.1} standard errors)",
                drift / se
            )));
        }
        len *= 2;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::MixedLaw;
    use crate::structures::BlockMap;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn gauss(mean: &[f64], cov: &[f64]) -> GaussianLaw {
        let d = mean.len();
        GaussianLaw::new(DVector::from_column_slice(mean), DMatrix::from_row_slice(d, d, cov)).unwrap()
    }

    #[test]
    fn shannon_examples() {
        assert_abs_diff_eq!(shannon_entropy(&DiscreteLaw::uniform(4)).value, 4f64.ln(), epsilon = 1e-15);
        assert_eq!(shannon_entropy(&DiscreteLaw::point_mass(3, 1)).value, 0.0);
        let l = DiscreteLaw::from_ratios(&[(1, 2), (1, 4), (1, 4)]).unwrap();
        assert_abs_diff_eq!(shannon_entropy(&l).value, 1.5 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(shannon_entropy(&l.to_float()).value, 1.039_720_770_839_917_9, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_entropy_examples() {
        assert_abs_diff_eq!(gaussian_entropy(&GaussianLaw::standard(1)).value, 1.418_938_533_204_672_7, epsilon = 1e-15);
        assert_abs_diff_eq!(gaussian_entropy(&GaussianLaw::standard(2)).value, 2.837_877_066_409_345_5, epsilon = 1e-14);
        let g = gauss(&[0.0, 0.0], &[2.0, 1.0, 1.0, 2.0]);
        let s = 3.0_f64;
        let scaled = gauss(&[0.0, 0.0], &[2.0 * s * s, s * s, s * s, 2.0 * s * s]);
        assert_abs_diff_eq!(gaussian_entropy(&scaled).value - gaussian_entropy(&g).value, 2.0 * s.ln(), epsilon = 1e-13);
    }

    #[test]
    fn logdet_dim_examples() {
        let g = Law::Gaussian(gauss(&[0.0, 0.0], &[2.0, 1.0, 1.0, 2.0]));
        let b = McBudget::default();
        assert_abs_diff_eq!(LogDetDim { a: 1.0, c: 0.0 }.evaluate(&g, &b).unwrap().value, 3f64.ln(), epsilon = 1e-14);
        assert_eq!(LogDetDim { a: 0.0, c: 1.0 }.evaluate(&g, &b).unwrap().value, 2.0);
        let c = 0.7;
        let diff = LogDetDim { a: 0.5, c }.evaluate(&g, &b).unwrap().value - Entropy.evaluate(&g, &b).unwrap().value;
        assert_abs_diff_eq!(diff, 2.0 * (c - 0.5 * log_2pi_e()), epsilon = 1e-14);
        let d = Law::Discrete(DiscreteLaw::uniform(2));
        assert!(matches!(LogDetDim { a: 1.0, c: 0.0 }.evaluate(&d, &b), Err(Error::NotGaussian(_))));
    }

    #[test]
    fn single_component_mixture_is_closed_form() {
        let g = gauss(&[1.0], &[2.0]);
        let m = GaussianMixture::single(g.clone());
        assert_eq!(mixture_entropy(&m, &McBudget::default()).unwrap(), gaussian_entropy(&g));
        let mc = mixture_entropy_mc(&m, &McBudget::default()).unwrap();
        assert!((mc.value - gaussian_entropy(&g).value).abs() <= 3.0 * mc.std_error);
    }

    #[test]
    fn far_separated_mixture_approaches_log_two_plus_gaussian() {
        let m = GaussianMixture::uniform(vec![gauss(&[-10.0], &[1.0]), gauss(&[10.0], &[1.0])]).unwrap();
        let est = mixture_entropy(&m, &McBudget::default()).unwrap();
        let limit = 2f64.ln() + 0.5 * log_2pi_e();
        assert!((est.value - limit).abs() <= 1e-3 + 3.0 * est.std_error, "{est:?}");
        let q = mixture_entropy_quadrature(&m, QUADRATURE_POINTS).unwrap();
        assert!((q.value - limit).abs() < 1e-6, "{q:?}");
    }

    #[test]
    fn mixture_entropy_bounded_by_joint() {
        let comps = vec![gauss(&[0.0], &[1.0]), gauss(&[1.0], &[0.5]), gauss(&[-0.5], &[2.0])];
        let w = vec![0.2, 0.5, 0.3];
        let m = GaussianMixture::new(w.clone(), comps.clone()).unwrap();
        let est = mixture_entropy(&m, &McBudget::default()).unwrap();
        let bound: f64 = w.iter().map(|p| -p * p.ln()).sum::<f64>()
            + w.iter().zip(&comps).map(|(p, g)| p * gaussian_entropy(g).value).sum::<f64>();
        assert!(est.value <= bound + 3.0 * est.std_error);
        let q = mixture_entropy_quadrature(&m, QUADRATURE_POINTS).unwrap();
        assert!((q.value - est.value).abs() <= 3.0 * est.std_error + q.std_error, "{q:?} {est:?}");
    }

    #[test]
    fn quadrature_in_two_dimensions() {
        let g = gauss(&[0.3, -0.2], &[1.0, 0.4, 0.4, 0.8]);
        let q = mixture_entropy_quadrature(&GaussianMixture::single(g.clone()), 256).unwrap();
        assert!((q.value - gaussian_entropy(&g).value).abs() < 1e-6, "{q:?}");
    }

    #[test]
    fn mixed_law_entropy_examples() {
        let g = GaussianLaw::standard(1);
        let b = McBudget::default();
        let point = MixedLaw::from_gaussians(DiscreteLaw::point_mass(2, 1), vec![g.clone(), gauss(&[3.0], &[4.0])]).unwrap();
        assert_abs_diff_eq!(mixed_law_entropy(&point, &b).unwrap().value, gaussian_entropy(&gauss(&[3.0], &[4.0])).value, epsilon = 1e-15);
        let same = MixedLaw::from_gaussians(DiscreteLaw::uniform(3), vec![g.clone(); 3]).unwrap();
        assert_abs_diff_eq!(mixed_law_entropy(&same, &b).unwrap().value, 3f64.ln() + gaussian_entropy(&g).value, epsilon = 1e-14);
        let two = MixedLaw::from_gaussians(DiscreteLaw::uniform(2), vec![g.clone(), g]).unwrap();
        assert_abs_diff_eq!(mixed_law_entropy(&two, &b).unwrap().value, 2.112_085_713_764_618, epsilon = 1e-12);
    }

    #[test]
    fn conditional_entropy_of_first_bit() {
        let law = Law::Discrete(DiscreteLaw::uniform(4));
        let first = ArrowMap::Blocks(BlockMap { map: vec![0, 0, 1, 1], target_size: 2 });
        let v = act(&Entropy, &law, &first, &McBudget::default()).unwrap();
        assert_abs_diff_eq!(v.value, 2f64.ln(), epsilon = 1e-15);
        assert_eq!(v.std_error, 0.0);
    }

    #[test]
    fn product_law_action_is_marginal_value() {
        // p(x, y) = q(x) r(y) on 2 x 3 outcomes, blocks ordered (x, y).
        let q = [0.25, 0.75];
        let r = [0.5, 0.3, 0.2];
        let w: Vec<f64> = q.iter().flat_map(|a| r.iter().map(move |b| a * b)).collect();
        let law = Law::Discrete(DiscreteLaw::float(w).unwrap());
        let on_x = ArrowMap::Blocks(BlockMap { map: vec![0, 0, 0, 1, 1, 1], target_size: 2 });
        let v = act(&Entropy, &law, &on_x, &McBudget::default()).unwrap();
        let hr = shannon_entropy(&DiscreteLaw::float(r.to_vec()).unwrap()).value;
        assert_abs_diff_eq!(v.value, hr, epsilon = 1e-14);
    }

    #[test]
    fn gaussian_action_is_schur_logdet() {
        let law = Law::Gaussian(gauss(&[0.0, 0.0], &[2.0, 1.0, 1.0, 2.0]));
        let second = ArrowMap::Linear(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        let v = act(&LogDetDim { a: 1.0, c: 0.0 }, &law, &second, &McBudget::default()).unwrap();
        assert_abs_diff_eq!(v.value, 1.5f64.ln(), epsilon = 1e-14);
        assert_eq!(v.method, Method::ClosedForm);
        // Constant in y: the Schur complement does not depend on the value.
        for y in [-2.0, 0.0, 5.0] {
            let c = law.condition(&second, &Outcome::Point(DVector::from_element(1, y))).unwrap();
            assert_abs_diff_eq!(LogDetDim { a: 1.0, c: 0.0 }.evaluate(&c, &McBudget::default()).unwrap().value, 1.5f64.ln(), epsilon = 1e-14);
        }
    }

    #[test]
    fn action_is_linear_in_functional() {
        let law = Law::Discrete(DiscreteLaw::from_ratios(&[(1, 8), (3, 8), (1, 4), (1, 4)]).unwrap());
        let map = ArrowMap::Blocks(BlockMap { map: vec![0, 1, 0, 1], target_size: 2 });
        struct Scaled(f64);
        impl Functional for Scaled {
            fn name(&self) -> String {
                "scaled".into()
            }
            fn cost_hint(&self) -> CostHint {
                CostHint::ClosedForm
            }
            fn evaluate(&self, law: &Law, b: &McBudget) -> Result<Estimate> {
                Ok(Entropy.evaluate(law, b)?.scale(self.0).shift(1.0))
            }
        }
        let b = McBudget::default();
        let base = act(&Entropy, &law, &map, &b).unwrap().value;
        assert_abs_diff_eq!(act(&Scaled(3.0), &law, &map, &b).unwrap().value, 3.0 * base + 1.0, epsilon = 1e-14);
        assert!(act(&Scaled(1.0), &law, &map, &b).unwrap().value >= base);
    }

    #[test]
    fn divergent_running_mean_is_flagged() {
        let mut steady = Vec::new();
        let mut m = mc::Moments::default();
        for i in 0..64 {
            for k in 0..100 {
                m.push(((i * 100 + k) as f64 * 0.618).fract());
            }
            steady.push(m);
        }
        assert!(check_drift(&steady, "steady").is_ok());
        let mut growing = Vec::new();
        let mut m = mc::Moments::default();
        for i in 0..64 {
            for k in 0..100 {
                m.push(i as f64 * 10.0 + (k as f64 * 0.618).fract());
            }
            growing.push(m);
        }
        assert!(matches!(check_drift(&growing, "growing"), Err(Error::DivergentAction(_))));
    }
}
