//! Local 1-cochains, the cocycle condition and the mixed-sector identities.
//!
//! A cochain is stored through its generators `Φ_Z` only. Components are
//! always derived as `φ_X[Z](ρ) = Φ_Z(π_* ρ)`, so locality holds by
//! construction.

mod nullspace;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use nullspace::{solve_discrete_nullspace, NullspaceProblem, NullspaceReport, DEFAULT_CLOSURE_CAP, DEFAULT_NULLSPACE_TOL};

use crate::error::{Error, Result};
use crate::estimate::Estimate;
use crate::functionals::{act, gaussian_entropy, log_2pi_e, mixture_entropy, shannon_entropy, CostHint, Functional};
use crate::laws::{GaussianLaw, GaussianMixture, Law, MixedLaw};
use crate::mc::{self, McBudget};
use crate::structures::{ArrowMap, InformationStructure, ObjId};

/// Absolute floor added to every identity tolerance.
pub const TOLERANCE_FLOOR: f64 = 1e-9;

/// The constants of the analytic family: `b` weighs Shannon entropy, `a`
/// the log-determinant and `c` the carrier dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Params {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// `(½, 1, ½ log 2πe)`: entropy on every sector.
    pub fn entropy() -> Self {
        Self { a: 0.5, b: 1.0, c: 0.5 * log_2pi_e() }
    }
}

/// How the generator extends from gaussians to mixtures of gaussians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixtureRule {
    /// The value forced by the cocycle condition on mixed laws:
    /// `Σ w_j((a − b/2) log det Σ_j + c r − (b r/2) log 2πe) + b S(m)`.
    #[default]
    Derived,
    /// Extend through the entropy instead: `2a S(m) + (c − a log 2πe) r`.
    /// Agrees with the gaussian value, but is a cocycle across sectors only
    /// when `a = b/2`.
    EntropyExtension,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cochain {
    pub params: Params,
    /// Per-generator parameters, replacing `params` at that observable.
    pub overrides: BTreeMap<ObjId, Params>,
    pub rule: MixtureRule,
}

pub fn make_cochain(a: f64, b: f64, c: f64) -> Cochain {
    Cochain { params: Params::new(a, b, c), overrides: BTreeMap::new(), rule: MixtureRule::Derived }
}

impl Cochain {
    pub fn entropy() -> Self {
        let p = Params::entropy();
        make_cochain(p.a, p.b, p.c)
    }

    pub fn with_rule(mut self, rule: MixtureRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_override(mut self, at: ObjId, params: Params) -> Self {
        self.overrides.insert(at, params);
        self
    }

    pub fn params_at(&self, z: ObjId) -> Params {
        self.overrides.get(&z).copied().unwrap_or(self.params)
    }

    /// `Φ_Z` for laws on `E_Z`.
    pub fn generator(&self, z: ObjId) -> Generator {
        Generator { params: self.params_at(z), rule: self.rule }
    }

    /// `φ_X[Z]` as a functional on laws on `E_X`.
    pub fn component(&self, s: &InformationStructure, x: ObjId, z: ObjId) -> Result<Component> {
        let map = s.arrow_map(s.arrow(x, z)?);
        Ok(Component { generator: self.generator(z), map })
    }

    /// `φ_X[Z](ρ)`.
    pub fn value(&self, s: &InformationStructure, x: ObjId, z: ObjId, law: &Law, budget: &McBudget) -> Result<Estimate> {
        self.component(s, x, z)?.evaluate(law, budget)
    }
}

/// The generator `Φ_Z` of the analytic family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Generator {
    pub params: Params,
    pub rule: MixtureRule,
}

impl Generator {
    pub fn gaussian_value(&self, g: &GaussianLaw) -> f64 {
        let Params { a, c, .. } = self.params;
        let logdet = if a == 0.0 { 0.0 } else { a * g.logdet() };
        logdet + c * g.carrier_dim() as f64
    }

    pub fn mixture_value(&self, m: &GaussianMixture, budget: &McBudget) -> Result<Estimate> {
        if let Some(g) = m.as_gaussian() {
            return Ok(Estimate::closed(self.gaussian_value(&g)));
        }
        let Params { a, b, c } = self.params;
        let r = m.carrier_dim() as f64;
        match self.rule {
            MixtureRule::Derived => {
                let s = if b == 0.0 { Estimate::closed(0.0) } else { mixture_entropy(m, budget)?.scale(b) };
                let constant: f64 = m
                    .weights()
                    .iter()
                    .zip(m.components())
                    .map(|(w, g)| w * ((a - b / 2.0) * g.logdet() + c * r - 0.5 * b * r * log_2pi_e()))
                    .sum();
                Ok(s.shift(constant))
            }
            MixtureRule::EntropyExtension => {
                let s = if a == 0.0 { Estimate::closed(0.0) } else { mixture_entropy(m, budget)?.scale(2.0 * a) };
                Ok(s.shift((c - a * log_2pi_e()) * r))
            }
        }
    }
}

impl Functional for Generator {
    fn name(&self) -> String {
        let Params { a, b, c } = self.params;
        format!("phi(a={a}, b={b}, c={c})")
    }

    fn cost_hint(&self) -> CostHint {
        CostHint::MonteCarlo
    }

    fn shift_invariant(&self) -> bool {
        true
    }

    fn evaluate(&self, law: &Law, budget: &McBudget) -> Result<Estimate> {
        let b = self.params.b;
        match law {
            Law::Discrete(l) => Ok(shannon_entropy(l).scale(b)),
            Law::Gaussian(g) => Ok(Estimate::closed(self.gaussian_value(g))),
            Law::Mixture(m) => self.mixture_value(m, budget),
            Law::Mixed(m) => {
                let mut total = shannon_entropy(m.p()).scale(b);
                for y in m.p().support() {
                    let v = self.mixture_value(&m.conditionals()[y], &budget.derive(y as u64))?;
                    total = total.add(v.scale(m.p().weight(y)));
                }
                Ok(total)
            }
        }
    }
}

/// `φ_X[Z]`: the generator at `Z` applied to the image law.
#[derive(Clone, Debug)]
pub struct Component {
    pub generator: Generator,
    pub map: ArrowMap,
}

impl Functional for Component {
    fn name(&self) -> String {
        self.generator.name()
    }

    fn cost_hint(&self) -> CostHint {
        self.generator.cost_hint()
    }

    fn shift_invariant(&self) -> bool {
        true
    }

    fn evaluate(&self, law: &Law, budget: &McBudget) -> Result<Estimate> {
        self.generator.evaluate(&law.marginalize(&self.map)?, budget)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCase {
    pub descriptor: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub residual: f64,
    pub residual_std_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityCase {
    /// Residual and standard error from independent sides.
    pub fn independent(descriptor: String, lhs: Estimate, rhs: Estimate, tol: f64) -> Self {
        let se = lhs.std_error.hypot(rhs.std_error);
        Self::paired(descriptor, lhs, rhs, lhs.value - rhs.value, se, tol)
    }

    /// Residual and standard error estimated jointly, e.g. from paired
    /// samples.
    pub fn paired(descriptor: String, lhs: Estimate, rhs: Estimate, residual: f64, se: f64, tol: f64) -> Self {
        let tolerance = tol + 3.0 * se;
        let passed = residual.is_finite() && residual.abs() <= tolerance;
        Self { descriptor, lhs, rhs, residual, residual_std_error: se, tolerance, passed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub tag: String,
    pub cases: Vec<IdentityCase>,
    pub max_residual: f64,
    pub passed: bool,
}

impl IdentityReport {
    pub fn new(tag: &str, cases: Vec<IdentityCase>) -> Self {
        let max_residual = cases.iter().map(|c| c.residual.abs()).fold(0.0, f64::max);
        let passed = cases.iter().all(|c| c.passed);
        Self { tag: tag.to_string(), cases, max_residual, passed }
    }

    pub fn merge(tag: &str, reports: Vec<IdentityReport>) -> Self {
        Self::new(tag, reports.into_iter().flat_map(|r| r.cases).collect())
    }
}

/// `φ_X[X1∧X2](ρ) − X1.φ_X[X2](ρ) − φ_X[X1](ρ)` for every law, in both
/// orders of `(X1, X2)`.
#[allow(clippy::too_many_arguments)]
pub fn check_cocycle(
    cochain: &Cochain,
    s: &InformationStructure,
    x: ObjId,
    x1: ObjId,
    x2: ObjId,
    laws: &[Law],
    tol: f64,
    budget: &McBudget,
) -> Result<IdentityReport> {
    let meet = s.meet(x1, x2)?;
    let orders = if x1 == x2 { vec![(x1, x2)] } else { vec![(x1, x2), (x2, x1)] };
    let cases = laws
        .par_iter()
        .enumerate()
        .map(|(i, law)| {
            if !law.fits(s.object(x)) {
                return Err(Error::InvalidLaw(format!("law {i} does not live on {}", s.name(x))));
            }
            let mut out = Vec::new();
            for (k, &(first, second)) in orders.iter().enumerate() {
                let b = budget.derive((i * 2 + k) as u64);
                let lhs = cochain.value(s, x, meet, law, &b.derive(1))?;
                let along_first = s.arrow_map(s.arrow(x, first)?);
                let acted = act(&cochain.component(s, x, second)?, law, &along_first, &b.derive(2))?;
                let rhs = acted.add(cochain.value(s, x, first, law, &b.derive(3))?);
                let descriptor = format!("law {i}: X1={}, X2={}", s.name(first), s.name(second));
                out.push(IdentityCase::independent(descriptor, lhs, rhs, tol));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IdentityReport::new("cocycle-condition", cases.into_iter().flatten().collect()))
}

/// Checks the cocycle condition over every pair of observables coarser
/// than `x`.
pub fn check_cocycle_all_pairs(
    cochain: &Cochain,
    s: &InformationStructure,
    x: ObjId,
    laws: &[Law],
    tol: f64,
    budget: &McBudget,
) -> Result<IdentityReport> {
    let coarser = s.coarser_monoid(x);
    let mut reports = Vec::new();
    for (i, &x1) in coarser.iter().enumerate() {
        for &x2 in &coarser[i..] {
            let salt = (x1.0 * s.len() + x2.0) as u64;
            reports.push(check_cocycle(cochain, s, x, x1, x2, laws, tol, &budget.derive(salt))?);
        }
    }
    Ok(IdentityReport::merge("cocycle-condition", reports))
}

fn gaussian_conditionals(law: &MixedLaw) -> Result<Vec<GaussianLaw>> {
    law.gaussian_conditionals().ok_or(Error::NotGaussian("mixed law with mixture conditionals"))
}

/// Shannon entropy of a probability vector, `0 log 0 = 0`.
fn entropy_of(p: &[f64]) -> f64 {
    p.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).sum()
}

/// Two evaluations of `φ` on a mixed law with gaussian conditionals:
/// directly, `−b Σ p log p + Σ p(y)(a log det Σ_y + c d)`, and through the
/// continuous factor, `Φ_X(m) + b ∫ H(ρ_x) dm(x)` with `m` the continuous
/// marginal and `ρ_x` the posterior on blocks.
pub fn check_mixture_identity(cochain: &Cochain, law: &MixedLaw, budget: &McBudget) -> Result<IdentityReport> {
    let gs = gaussian_conditionals(law)?;
    let gen = Generator { params: cochain.params, rule: cochain.rule };
    let Params { a, b, c } = cochain.params;
    let support = law.p().support();
    let p: Vec<f64> = law.p().weights_f64();
    let d = gs[support[0]].carrier_dim() as f64;
    let direct = b * entropy_of(&p) + support.iter().map(|&y| p[y] * gen.gaussian_value(&gs[y])).sum::<f64>();
    let lhs = Estimate::closed(direct);
    let mix = law.continuous_marginal();
    let (rhs, se) = if let Some(g) = mix.as_gaussian() {
        // Identical conditionals: the posterior is `p` everywhere.
        let v = gen.gaussian_value(&g) + b * entropy_of(&p);
        (Estimate::closed(v), 0.0)
    } else {
        budget.check()?;
        // Constant part of Φ_X(m), then paired samples of the random part.
        let (constant, s_weight) = match cochain.rule {
            MixtureRule::Derived => {
                let k: f64 = mix
                    .weights()
                    .iter()
                    .zip(mix.components())
                    .map(|(w, g)| w * ((a - b / 2.0) * g.logdet() + c * d - 0.5 * b * d * log_2pi_e()))
                    .sum();
                (k, b)
            }
            MixtureRule::EntropyExtension => ((c - a * log_2pi_e()) * d, 2.0 * a),
        };
        let out = mc::estimate::<1, _>(budget.samples, budget.seed, |rng| {
            let x = mix.sample_one(rng);
            let s = -mix.log_density(&x);
            let h = entropy_of(&law.posterior(&x)?);
            Ok([s_weight * s + b * h])
        })?;
        let est = Estimate::monte_carlo(constant + out.mean(0), out.std_error(0), budget.samples);
        (est, out.std_error(0))
    };
    let case = IdentityCase::paired(
        format!("k={}, d={}, (a,b,c)=({a}, {b}, {c})", support.len(), d),
        lhs,
        rhs,
        lhs.value - rhs.value,
        se,
        TOLERANCE_FLOOR,
    );
    Ok(IdentityReport::new("two-route-mixture", vec![case]))
}

/// `∫ Σ_y ρ_x(y) log ρ_x(y) dm(x) = Σ p log p − Σ p(y) S(G_y) + S(m)`.
pub fn check_integrated_identity(law: &MixedLaw, budget: &McBudget) -> Result<IdentityReport> {
    let gs = gaussian_conditionals(law)?;
    let support = law.p().support();
    let p = law.p().weights_f64();
    let constant = -entropy_of(&p) - support.iter().map(|&y| p[y] * gaussian_entropy(&gs[y]).value).sum::<f64>();
    let mix = law.continuous_marginal();
    let descriptor = format!("k={}, d={}", support.len(), gs[support[0]].carrier_dim());
    let case = if let Some(g) = mix.as_gaussian() {
        let lhs = Estimate::closed(-entropy_of(&p));
        let rhs = Estimate::closed(constant + gaussian_entropy(&g).value);
        IdentityCase::independent(descriptor, lhs, rhs, TOLERANCE_FLOOR)
    } else {
        budget.check()?;
        let out = mc::estimate::<3, _>(budget.samples, budget.seed, |rng| {
            let x = mix.sample_one(rng);
            let neg_h = -entropy_of(&law.posterior(&x)?);
            let s = -mix.log_density(&x);
            Ok([neg_h, s, neg_h - s])
        })?;
        let n = budget.samples;
        let lhs = Estimate::monte_carlo(out.mean(0), out.std_error(0), n);
        let rhs = Estimate::monte_carlo(constant + out.mean(1), out.std_error(1), n);
        IdentityCase::paired(descriptor, lhs, rhs, out.mean(2) - constant, out.std_error(2), TOLERANCE_FLOOR)
    };
    Ok(IdentityReport::new("posterior-entropy-identity", vec![case]))
}

/// Verifies `log det Σ = log det Σ_Y + log det(Schur complement)` for the
/// arrow `x → y` of a subspace structure, together with additivity of the
/// carrier dimension.
pub fn check_logdet_chain_rule(
    s: &InformationStructure,
    x: ObjId,
    y: ObjId,
    laws: &[GaussianLaw],
    tol: f64,
) -> Result<IdentityReport> {
    let map = s.arrow_map(s.arrow(x, y)?);
    let ArrowMap::Linear(a) = &map else {
        return Err(Error::InvalidSector("log-det chain rule needs a continuous arrow".into()));
    };
    let mut cases = Vec::new();
    for (i, g) in laws.iter().enumerate() {
        let marginal = g.push(a)?;
        let conditional = g.condition(a, marginal.mean())?;
        let lhs = Estimate::closed(g.logdet());
        let rhs = Estimate::closed(marginal.logdet() + conditional.logdet());
        cases.push(IdentityCase::independent(format!("law {i}: {} -> {} log det", s.name(x), s.name(y)), lhs, rhs, tol));
        let dims = (g.carrier_dim(), marginal.carrier_dim() + conditional.carrier_dim());
        cases.push(IdentityCase::independent(
            format!("law {i}: {} -> {} dimension", s.name(x), s.name(y)),
            Estimate::closed(dims.0 as f64),
            Estimate::closed(dims.1 as f64),
            0.0,
        ));
    }
    Ok(IdentityReport::new("logdet-chain-rule", cases))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::{DiscreteLaw, GaussianLaw};
    use crate::mc::rng_for;
    use crate::random;
    use crate::structures::{coordinate_lattice, partition_lattice, product_structure, ContinuousObservable, DiscreteObservable, Observable};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn singletons(s: &InformationStructure, n: usize) -> ObjId {
        s.find(&Observable::Discrete(DiscreteObservable::singletons(n))).unwrap()
    }

    #[test]
    fn entropy_cochain_matches_closed_forms() {
        let gen = Cochain::entropy().generator(ObjId(0));
        let b = McBudget::default();
        let g = GaussianLaw::new(DVector::from_vec(vec![0.0, 1.0]), DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        assert_abs_diff_eq!(gen.evaluate(&Law::Gaussian(g.clone()), &b).unwrap().value, gaussian_entropy(&g).value, epsilon = 1e-13);
        let d = DiscreteLaw::from_ratios(&[(1, 2), (1, 4), (1, 4)]).unwrap();
        assert_abs_diff_eq!(gen.evaluate(&Law::Discrete(d.clone()), &b).unwrap().value, shannon_entropy(&d).value, epsilon = 1e-15);
        let zero = make_cochain(0.0, 0.0, 0.0).generator(ObjId(0));
        assert_eq!(zero.evaluate(&Law::Gaussian(g.clone()), &b).unwrap().value, 0.0);
        let dim = make_cochain(0.0, 0.0, 1.0).generator(ObjId(0));
        assert_eq!(dim.evaluate(&Law::Gaussian(g), &b).unwrap().value, 2.0);
    }

    #[test]
    fn derived_mixture_rule_is_entropy_for_entropy_params() {
        let m = GaussianMixture::uniform(vec![GaussianLaw::standard(1), GaussianLaw::new(DVector::from_element(1, 2.0), DMatrix::identity(1, 1)).unwrap()]).unwrap();
        let b = McBudget::default();
        let gen = Cochain::entropy().generator(ObjId(0));
        let v = gen.evaluate(&Law::Mixture(m.clone()), &b).unwrap();
        let s = mixture_entropy(&m, &b).unwrap();
        assert_abs_diff_eq!(v.value, s.value, epsilon = 1e-12);
    }

    #[test]
    fn discrete_entropy_cocycle_on_four_set() {
        let s = partition_lattice(4).unwrap();
        let x = singletons(&s, 4);
        let mut rng = rng_for(11, 0);
        let laws: Vec<Law> = (0..5).map(|_| Law::Discrete(random::exact_law(&mut rng, 4, 6))).collect();
        let report = check_cocycle_all_pairs(&Cochain::entropy(), &s, x, &laws, 1e-12, &McBudget::default()).unwrap();
        assert!(report.passed, "max residual {}", report.max_residual);
        assert!(report.max_residual <= 1e-12);
    }

    #[test]
    fn corrupted_cochain_is_not_a_cocycle() {
        let s = partition_lattice(3).unwrap();
        let x = singletons(&s, 3);
        let top = s.terminal().unwrap();
        let some = s.ids().find(|&i| i != x && i != top).unwrap();
        let cochain = make_cochain(0.5, 1.0, 0.0).with_override(some, Params::new(0.5, 2.0, 0.0));
        let laws = vec![Law::Discrete(DiscreteLaw::from_ratios(&[(1, 2), (1, 3), (1, 6)]).unwrap())];
        let report = check_cocycle_all_pairs(&cochain, &s, x, &laws, 1e-9, &McBudget::default()).unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn gaussian_family_is_a_cocycle_on_coordinate_lattice() {
        let s = coordinate_lattice(3).unwrap();
        let x = s.find(&Observable::Continuous(ContinuousObservable::coordinate(3, &[0, 1, 2]))).unwrap();
        let mut rng = rng_for(5, 0);
        let laws: Vec<Law> = (0..4).map(|_| Law::Gaussian(random::gaussian(&mut rng, 3))).collect();
        let report = check_cocycle_all_pairs(&make_cochain(1.3, 0.4, -0.7), &s, x, &laws, 1e-10, &McBudget::default()).unwrap();
        assert!(report.passed, "max residual {}", report.max_residual);
    }

    #[test]
    fn logdet_chain_rule_and_dimensions() {
        let s = coordinate_lattice(3).unwrap();
        let x = s.find(&Observable::Continuous(ContinuousObservable::coordinate(3, &[0, 1, 2]))).unwrap();
        let y = s.find(&Observable::Continuous(ContinuousObservable::coordinate(3, &[1]))).unwrap();
        let mut rng = rng_for(9, 0);
        let laws: Vec<GaussianLaw> = (0..10).map(|_| random::gaussian(&mut rng, 3)).collect();
        let report = check_logdet_chain_rule(&s, x, y, &laws, 1e-10).unwrap();
        assert!(report.passed, "{}", report.max_residual);
    }

    #[test]
    fn single_component_routes_agree_exactly() {
        let g = GaussianLaw::new(DVector::from_vec(vec![0.5, -1.0]), DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.7])).unwrap();
        let law = MixedLaw::from_gaussians(DiscreteLaw::point_mass(1, 0), vec![g]).unwrap();
        for params in [Params::entropy(), Params::new(1.0, 1.0, 0.0), Params::new(0.2, 3.0, 1.0)] {
            let c = make_cochain(params.a, params.b, params.c);
            let r = check_mixture_identity(&c, &law, &McBudget::default()).unwrap();
            assert!(r.passed && r.max_residual <= 1e-9, "{r:?}");
        }
        let r = check_integrated_identity(&law, &McBudget::default()).unwrap();
        assert!(r.passed && r.max_residual <= 1e-9);
    }

    #[test]
    fn identical_components_give_minus_log_two() {
        let law = MixedLaw::from_gaussians(DiscreteLaw::uniform(2), vec![GaussianLaw::standard(1); 2]).unwrap();
        let r = check_integrated_identity(&law, &McBudget::default()).unwrap();
        assert_abs_diff_eq!(r.cases[0].lhs.value, -(2f64.ln()), epsilon = 1e-15);
        assert!(r.passed);
    }

    #[test]
    fn far_separated_mixture_routes_agree() {
        let law = MixedLaw::from_gaussians(
            DiscreteLaw::uniform(2),
            vec![
                GaussianLaw::new(DVector::from_element(1, -10.0), DMatrix::identity(1, 1)).unwrap(),
                GaussianLaw::new(DVector::from_element(1, 10.0), DMatrix::identity(1, 1)).unwrap(),
            ],
        )
        .unwrap();
        let r = check_mixture_identity(&Cochain::entropy(), &law, &McBudget::default()).unwrap();
        assert!(r.passed, "{r:?}");
        let r = check_integrated_identity(&law, &McBudget::default()).unwrap();
        assert!(r.passed, "{r:?}");
        // Posterior entropy is negligible when the components do not overlap.
        assert!(r.cases[0].lhs.value.abs() < 1e-6);
    }

    #[test]
    fn entropy_extension_fails_unless_a_is_half_b() {
        let mut rng = rng_for(21, 0);
        let law = random::mixed_law(&mut rng, 1, 3);
        let budget = McBudget::new(20_000, 1);
        let good = make_cochain(0.5, 1.0, 0.3).with_rule(MixtureRule::EntropyExtension);
        assert!(check_mixture_identity(&good, &law, &budget).unwrap().passed);
        let bad = make_cochain(1.0, 1.0, 0.0).with_rule(MixtureRule::EntropyExtension);
        assert!(!check_mixture_identity(&bad, &law, &budget).unwrap().passed);
        // The derived rule is a cocycle for any constants.
        assert!(check_mixture_identity(&make_cochain(1.0, 1.0, 0.0), &law, &budget).unwrap().passed);
    }

    #[test]
    fn mixed_sector_cocycle_through_the_action() {
        let sc = coordinate_lattice(1).unwrap();
        let sd = partition_lattice(2).unwrap();
        let s = product_structure(&sc, &sd).unwrap();
        let (nc, nd) = s.factor_sizes().unwrap();
        let full_c = sc.find(&Observable::Continuous(ContinuousObservable::coordinate(1, &[0]))).unwrap();
        let top_c = sc.terminal().unwrap();
        let fine_d = singletons(&sd, 2);
        let top_d = sd.terminal().unwrap();
        assert!(nc == 2 && nd == 2);
        let x = s.product_object(full_c.0, fine_d.0).unwrap();
        let x1 = s.product_object(full_c.0, top_d.0).unwrap();
        let x2 = s.product_object(top_c.0, fine_d.0).unwrap();
        // Separated components: the two mixture rules then differ by about
        // 2(a - b/2) log 2.
        let separated = MixedLaw::from_gaussians(
            DiscreteLaw::uniform(2),
            vec![
                GaussianLaw::new(DVector::from_element(1, -3.0), DMatrix::identity(1, 1)).unwrap(),
                GaussianLaw::new(DVector::from_element(1, 3.0), DMatrix::identity(1, 1)).unwrap(),
            ],
        )
        .unwrap();
        let laws = vec![Law::Mixed(separated)];
        let budget = McBudget::new(4000, 3);
        let derived = check_cocycle(&make_cochain(1.0, 1.0, 0.0), &s, x, x1, x2, &laws, TOLERANCE_FLOOR, &budget).unwrap();
        assert!(derived.passed, "{derived:?}");
        let extended = make_cochain(1.0, 1.0, 0.0).with_rule(MixtureRule::EntropyExtension);
        let report = check_cocycle(&extended, &s, x, x1, x2, &laws, TOLERANCE_FLOOR, &budget).unwrap();
        assert!(!report.passed, "{report:?}");
    }
}
