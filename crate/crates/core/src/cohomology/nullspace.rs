//! Finite-closure linear system for local cocycles on a discrete structure.
//!
//! Unknowns are the generator values `Φ_Z(σ)` at every point `(Z, σ)` of the
//! closure of the seed laws under marginalisation and conditioning. Each
//! closure point `(X, ρ)` and ordered pair `X1, X2` coarser than `X`
//! contributes the row
//!
//! `Φ_M(π^M ρ) − Φ_X1(π^X1 ρ) − Σ_y π^X1 ρ(y) Φ_X2(π^X2 (ρ|X1=y)) = 0`
//!
//! with `M = X1 ∧ X2`. Rows are assembled exactly, deduplicated, reduced to
//! an independent set by exact elimination, and the nullspace of that set
//! is read off an SVD with a relative singular-value cutoff.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::shannon_entropy;
use crate::laws::DiscreteLaw;
use crate::structures::{ArrowMap, BlockMap, InformationStructure, ObjId, Sector};

pub const DEFAULT_CLOSURE_CAP: usize = 100_000;
pub const DEFAULT_NULLSPACE_TOL: f64 = 1e-8;

type Row = Vec<(usize, BigRational)>;

#[derive(Clone, Debug)]
pub struct NullspaceProblem {
    /// Closure points `(Z, σ)`; index = unknown.
    pub points: Vec<(ObjId, DiscreteLaw)>,
    /// Deduplicated constraint rows.
    pub rows: Vec<Row>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullspaceReport {
    pub closure_size: usize,
    pub constraints: usize,
    pub rank: usize,
    pub dimension: usize,
    /// `max_r |Σ_j A_rj h_j|` for the entropy vector `h`.
    pub entropy_residual: f64,
    /// Relative distance from the entropy vector to the computed nullspace.
    pub entropy_projection_residual: f64,
    pub tol: f64,
    pub singular_values_min: f64,
    pub singular_values_max: f64,
    /// Orthonormal nullspace basis (one vector per entry).
    pub basis: Vec<Vec<f64>>,
}

struct Maps<'a> {
    s: &'a InformationStructure,
    cache: HashMap<(ObjId, ObjId), BlockMap>,
}

impl Maps<'_> {
    fn get(&mut self, x: ObjId, y: ObjId) -> Result<BlockMap> {
        if let Some(m) = self.cache.get(&(x, y)) {
            return Ok(m.clone());
        }
        let ArrowMap::Blocks(b) = self.s.arrow_map(self.s.arrow(x, y)?) else {
            return Err(Error::InvalidSector("nullspace solver needs a discrete structure".into()));
        };
        self.cache.insert((x, y), b.clone());
        Ok(b)
    }
}

struct Closure {
    points: Vec<(ObjId, DiscreteLaw)>,
    index: HashMap<(ObjId, Vec<BigRational>), usize>,
    cap: usize,
}

impl Closure {
    fn insert(&mut self, z: ObjId, law: DiscreteLaw) -> Result<(usize, bool)> {
        let key = (z, law.exact_weights().expect("exact mode").to_vec());
        if let Some(&i) = self.index.get(&key) {
            return Ok((i, false));
        }
        if self.points.len() >= self.cap {
            return Err(Error::ClosureExplosion { cap: self.cap });
        }
        let i = self.points.len();
        self.index.insert(key, i);
        self.points.push((z, law));
        Ok((i, true))
    }

    fn find(&self, z: ObjId, law: &DiscreteLaw) -> usize {
        self.index[&(z, law.exact_weights().expect("exact mode").to_vec())]
    }
}

impl NullspaceProblem {
    /// Builds the closure of `seeds` (laws on object `on`) and the
    /// constraint rows.
    pub fn build(s: &InformationStructure, on: ObjId, seeds: &[DiscreteLaw], cap: usize) -> Result<Self> {
        if s.sector() != Sector::Discrete {
            return Err(Error::InvalidSector("nullspace solver needs a discrete structure".into()));
        }
        let n_on = s.object(on).n_blocks();
        if seeds.iter().any(|l| !l.is_exact() || l.len() != n_on) {
            return Err(Error::InvalidLaw(format!("seeds must be exact laws on {} outcomes", n_on)));
        }
        let mut maps = Maps { s, cache: HashMap::new() };
        let mut closure = Closure { points: Vec::new(), index: HashMap::new(), cap };
        let mut queue = VecDeque::new();
        for l in seeds {
            let (i, new) = closure.insert(on, l.clone())?;
            if new {
                queue.push_back(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            let (x, law) = closure.points[i].clone();
            for y in s.coarser_monoid(x) {
                let map = maps.get(x, y)?;
                let marginal = law.marginalize(&map)?;
                let (j, new) = closure.insert(y, marginal.clone())?;
                if new {
                    queue.push_back(j);
                }
                for t in marginal.support() {
                    let (j, new) = closure.insert(x, law.condition(&map, t)?)?;
                    if new {
                        queue.push_back(j);
                    }
                }
            }
        }

        let mut rows = Vec::new();
        let mut seen: HashSet<Row> = HashSet::new();
        for i in 0..closure.points.len() {
            let (x, law) = closure.points[i].clone();
            let coarser = s.coarser_monoid(x);
            for &x1 in &coarser {
                let m1 = maps.get(x, x1)?;
                let marginal1 = law.marginalize(&m1)?;
                let w1 = marginal1.exact_weights().expect("exact").to_vec();
                let conditionals: Vec<(usize, DiscreteLaw)> =
                    marginal1.support().into_iter().map(|t| Ok((t, law.condition(&m1, t)?))).collect::<Result<_>>()?;
                for &x2 in &coarser {
                    let meet = s.meet(x1, x2)?;
                    let mut row: BTreeMap<usize, BigRational> = BTreeMap::new();
                    let mut add = |col: usize, v: BigRational| {
                        let e = row.entry(col).or_insert_with(BigRational::zero);
                        *e += v;
                    };
                    let mm = maps.get(x, meet)?;
                    add(closure.find(meet, &law.marginalize(&mm)?), BigRational::one());
                    add(closure.find(x1, &marginal1), -BigRational::one());
                    let m2 = maps.get(x, x2)?;
                    for (t, cond) in &conditionals {
                        add(closure.find(x2, &cond.marginalize(&m2)?), -w1[*t].clone());
                    }
                    let row: Row = row.into_iter().filter(|(_, v)| !v.is_zero()).collect();
                    if row.is_empty() {
                        continue;
                    }
                    let row = normalise(row);
                    if seen.insert(row.clone()) {
                        rows.push(row);
                    }
                }
            }
        }
        Ok(Self { points: closure.points, rows })
    }

    pub fn closure_size(&self) -> usize {
        self.points.len()
    }

    /// `−Σ σ log σ` at every closure point.
    pub fn entropy_vector(&self) -> Vec<f64> {
        self.points.iter().map(|(_, l)| shannon_entropy(l).value).collect()
    }

    /// `max_r |(A v)_r|`.
    pub fn residual(&self, v: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|(j, a)| a.to_f64().unwrap_or(f64::NAN) * v[*j]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Independent rows spanning the same row space, by exact elimination.
    pub fn independent_rows(&self) -> Vec<Row> {
        // Pivot column -> echelon row with unit leading coefficient.
        let mut pivots: BTreeMap<usize, Row> = BTreeMap::new();
        let mut basis = Vec::new();
        for r in &self.rows {
            let mut row: BTreeMap<usize, BigRational> = r.iter().cloned().collect();
            loop {
                let hit = row.iter().find(|(c, _)| pivots.contains_key(c)).map(|(c, v)| (*c, v.clone()));
                let Some((col, factor)) = hit else { break };
                for (j, v) in &pivots[&col] {
                    let e = row.entry(*j).or_insert_with(BigRational::zero);
                    *e -= &factor * v;
                    if e.is_zero() {
                        row.remove(j);
                    }
                }
            }
            let Some((&lead, lv)) = row.iter().next() else { continue };
            let lv = lv.clone();
            let reduced: Row = row.into_iter().map(|(j, v)| (j, v / &lv)).collect();
            pivots.insert(lead, reduced);
            basis.push(r.clone());
        }
        basis
    }

    /// Writes `row col value` lines, one per nonzero, after a header line
    /// `rows cols nonzeros`.
    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let nnz: usize = self.rows.iter().map(|r| r.len()).sum();
        writeln!(out, "{} {} {}", self.rows.len(), self.points.len(), nnz)?;
        for (i, r) in self.rows.iter().enumerate() {
            for (j, v) in r {
                writeln!(out, "{i} {j} {}", v.to_f64().unwrap_or(f64::NAN))?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn solve(&self, tol: f64) -> NullspaceReport {
        let n = self.points.len();
        let independent = self.independent_rows();
        let m = DMatrix::from_fn(independent.len(), n, |_, _| 0.0);
        let mut m = m;
        for (i, r) in independent.iter().enumerate() {
            for (j, v) in r {
                m[(i, *j)] = v.to_f64().unwrap_or(f64::NAN);
            }
        }
        // Pad to at least n rows so the SVD yields a full right basis.
        let padded = if m.nrows() < n { m.clone().resize_vertically(n, 0.0) } else { m.clone() };
        let svd = padded.svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let sigma = &svd.singular_values;
        let smax = sigma.iter().copied().fold(0.0, f64::max);
        let cutoff = tol * smax.max(f64::MIN_POSITIVE);
        let null: Vec<usize> = (0..n).filter(|&k| sigma[k] <= cutoff).collect();
        let basis: Vec<Vec<f64>> = null.iter().map(|&k| v_t.row(k).iter().copied().collect()).collect();
        let rank = n - null.len();

        let h = self.entropy_vector();
        let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut proj = vec![0.0; n];
        for b in &basis {
            let dot: f64 = b.iter().zip(&h).map(|(x, y)| x * y).sum();
            proj.iter_mut().zip(b).for_each(|(p, x)| *p += dot * x);
        }
        let dist = h.iter().zip(&proj).map(|(x, p)| (x - p).powi(2)).sum::<f64>().sqrt();
        let nonzero_min = (0..n).filter(|&k| sigma[k] > cutoff).map(|k| sigma[k]).fold(f64::INFINITY, f64::min);
        NullspaceReport {
            closure_size: n,
            constraints: self.rows.len(),
            rank,
            dimension: null.len(),
            entropy_residual: self.residual(&h),
            entropy_projection_residual: if norm > 0.0 { dist / norm } else { 0.0 },
            tol,
            singular_values_min: if nonzero_min.is_finite() { nonzero_min } else { 0.0 },
            singular_values_max: smax,
            basis,
        }
    }
}

/// Scales a row so its leading coefficient is 1 (exact dedupe key).
fn normalise(row: Row) -> Row {
    let first = row[0].1.clone();
    row.into_iter().map(|(j, v)| (j, v / &first)).collect()
}

/// Closure, constraints and nullspace for seeds on object `on`.
pub fn solve_discrete_nullspace(
    s: &InformationStructure,
    on: ObjId,
    seeds: &[DiscreteLaw],
    tol: f64,
    cap: usize,
) -> Result<(NullspaceProblem, NullspaceReport)> {
    let problem = NullspaceProblem::build(s, on, seeds, cap)?;
    let report = problem.solve(tol);
    Ok((problem, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::lattice_laws;
    use crate::structures::{discrete_structure, partition_lattice, DiscreteObservable, Observable};

    fn singletons(s: &InformationStructure, n: usize) -> ObjId {
        s.find(&Observable::Discrete(DiscreteObservable::singletons(n))).unwrap()
    }

    #[test]
    fn entropy_solves_the_three_set_system() {
        let s = partition_lattice(3).unwrap();
        let x = singletons(&s, 3);
        let (problem, report) = solve_discrete_nullspace(&s, x, &lattice_laws(3, 2), DEFAULT_NULLSPACE_TOL, DEFAULT_CLOSURE_CAP).unwrap();
        assert!(report.entropy_residual <= 1e-12, "{report:?}");
        assert!(report.entropy_projection_residual <= 1e-8);
        assert!(report.dimension >= 1);
        // Scaling the entropy vector keeps it a solution.
        let scaled: Vec<f64> = problem.entropy_vector().iter().map(|h| 2.5 * h).collect();
        assert!(problem.residual(&scaled) <= 1e-12);
        assert_eq!(problem.residual(&vec![0.0; problem.closure_size()]), 0.0);
    }

    #[test]
    fn closure_is_stable_under_marginalisation_and_conditioning() {
        let s = partition_lattice(3).unwrap();
        let x = singletons(&s, 3);
        let problem = NullspaceProblem::build(&s, x, &lattice_laws(3, 3), DEFAULT_CLOSURE_CAP).unwrap();
        let keys: HashSet<(ObjId, Vec<BigRational>)> =
            problem.points.iter().map(|(z, l)| (*z, l.exact_weights().unwrap().to_vec())).collect();
        for (z, law) in &problem.points {
            for y in s.coarser_monoid(*z) {
                let ArrowMap::Blocks(b) = s.arrow_map(s.arrow(*z, y).unwrap()) else { unreachable!() };
                let m = law.marginalize(&b).unwrap();
                assert!(keys.contains(&(y, m.exact_weights().unwrap().to_vec())));
                for t in m.support() {
                    let c = law.condition(&b, t).unwrap();
                    assert!(keys.contains(&(*z, c.exact_weights().unwrap().to_vec())));
                }
            }
        }
    }

    #[test]
    fn structure_without_joints() {
        // {⊤, X}: only the pairs (X, X), (X, ⊤), (⊤, X), (⊤, ⊤) exist. They
        // force Φ to vanish on point masses and leave every other point free.
        let x_obs = DiscreteObservable::singletons(3);
        let s = discrete_structure(3, vec![x_obs.clone()]).unwrap();
        let x = s.find(&Observable::Discrete(x_obs)).unwrap();
        let (problem, report) =
            solve_discrete_nullspace(&s, x, &lattice_laws(3, 2), DEFAULT_NULLSPACE_TOL, DEFAULT_CLOSURE_CAP).unwrap();
        let point_masses = problem.points.iter().filter(|(_, l)| l.support().len() == 1).count();
        assert_eq!(report.dimension, problem.closure_size() - point_masses);
        assert!(report.entropy_residual <= 1e-12);
    }

    #[test]
    fn cap_is_enforced() {
        let s = partition_lattice(4).unwrap();
        let x = singletons(&s, 4);
        assert!(matches!(
            NullspaceProblem::build(&s, x, &lattice_laws(4, 4), 10),
            Err(Error::ClosureExplosion { cap: 10 })
        ));
    }

    #[test]
    fn dimension_counts_primes_in_the_weights() {
        // On a finite rational closure, log p for distinct primes p are
        // independent unknowns; each prime contributes its own solution.
        let s = partition_lattice(3).unwrap();
        let x = singletons(&s, 3);
        let halves = solve_discrete_nullspace(&s, x, &lattice_laws(3, 2), DEFAULT_NULLSPACE_TOL, DEFAULT_CLOSURE_CAP).unwrap().1;
        assert_eq!(halves.dimension, 1);
        let thirds = solve_discrete_nullspace(&s, x, &lattice_laws(3, 3), DEFAULT_NULLSPACE_TOL, DEFAULT_CLOSURE_CAP).unwrap().1;
        assert_eq!(thirds.dimension, 2);
    }

    #[test]
    #[ignore]
    fn measure_four_set() {
        let s = partition_lattice(4).unwrap();
        let x = singletons(&s, 4);
        let t = std::time::Instant::now();
        let problem = NullspaceProblem::build(&s, x, &lattice_laws(4, 4), DEFAULT_CLOSURE_CAP).unwrap();
        eprintln!("closure {} rows {} in {:?}", problem.closure_size(), problem.rows.len(), t.elapsed());
        let t = std::time::Instant::now();
        let report = problem.solve(DEFAULT_NULLSPACE_TOL);
        eprintln!("rank {} dim {} resid {} proj {} in {:?}", report.rank, report.dimension, report.entropy_residual, report.entropy_projection_residual, t.elapsed());
    }
}
