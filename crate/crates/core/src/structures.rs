//! Information structures: posets of observables with conditional meets and
//! the outcome-space functor.
//!
//! Three sectors are supported. Discrete observables are partitions of a
//! finite sample set, continuous observables are linear subspaces of a
//! Euclidean space (the space an observable projects onto), and product
//! observables pair one of each. An arrow `X -> Y` means `Y` is coarser than
//! `X`; arrows are induced by refinement, subspace inclusion, or both
//! componentwise.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance for subspace equality, compared through projection matrices.
pub const SUBSPACE_TOL: f64 = 1e-10;
/// Tolerance for `B^T M B = I` on continuous observables.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Discrete observables
// ---------------------------------------------------------------------------

/// A partition of the sample set `{0, .., n-1}`.
///
/// Stored as a restricted growth string: `assignment[i]` is the block of
/// element `i`, and blocks are numbered by first appearance. The outcome set
/// `E_X` is the list of blocks in that order.
#[derive(Clone, Debug)]
pub struct DiscreteObservable {
    assignment: Vec<usize>,
    n_blocks: usize,
    label: String,
}

impl DiscreteObservable {
    pub fn from_blocks(omega: usize, blocks: &[Vec<usize>], label: impl Into<String>) -> Result<Self> {
        if omega == 0 {
            return Err(Error::InvalidObservable("empty sample set".into()));
        }
        let mut assignment = vec![usize::MAX; omega];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidObservable(format!("block {b} is empty")));
            }
            for &e in block {
                if e >= omega {
                    return Err(Error::InvalidObservable(format!(
                        "element {e} outside sample set of size {omega}"
                    )));
                }
                if assignment[e] != usize::MAX {
                    return Err(Error::InvalidObservable(format!("element {e} appears twice")));
                }
                assignment[e] = b;
            }
        }
        if let Some(missing) = assignment.iter().position(|&a| a == usize::MAX) {
            return Err(Error::InvalidObservable(format!("element {missing} is not covered")));
        }
        Ok(Self::from_assignment(&assignment, label))
    }

    /// Builds the partition whose blocks are the level sets of `assignment`.
    pub fn from_assignment(assignment: &[usize], label: impl Into<String>) -> Self {
        let mut relabel: HashMap<usize, usize> = HashMap::new();
        let canonical: Vec<usize> = assignment
            .iter()
            .map(|a| {
                let next = relabel.len();
                *relabel.entry(*a).or_insert(next)
            })
            .collect();
        let mut obs = Self { n_blocks: relabel.len(), assignment: canonical, label: String::new() };
        let label = label.into();
        obs.label = if label.is_empty() { obs.block_string() } else { label };
        obs
    }

    /// The one-block partition.
    pub fn trivial(omega: usize) -> Self {
        Self::from_assignment(&vec![0; omega], "1")
    }

    /// The partition into singletons.
    pub fn singletons(omega: usize) -> Self {
        Self::from_assignment(&(0..omega).collect::<Vec<_>>(), "")
    }

    pub fn omega_size(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_blocks
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn block_of(&self, element: usize) -> usize {
        self.assignment[element]
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.n_blocks];
        for (e, &b) in self.assignment.iter().enumerate() {
            blocks[b].push(e);
        }
        blocks
    }

    /// Map from blocks of `self` to blocks of `coarser`, if `self` refines it.
    pub fn block_map(&self, coarser: &DiscreteObservable) -> Option<Vec<usize>> {
        if coarser.omega_size() != self.omega_size() {
            return None;
        }
        let mut map = vec![usize::MAX; self.n_blocks];
        for (e, &b) in self.assignment.iter().enumerate() {
            let target = coarser.assignment[e];
            if map[b] == usize::MAX {
                map[b] = target;
            } else if map[b] != target {
                return None;
            }
        }
        Some(map)
    }

    pub fn refines(&self, coarser: &DiscreteObservable) -> bool {
        self.block_map(coarser).is_some()
    }

    pub fn common_refinement(&self, other: &DiscreteObservable) -> DiscreteObservable {
        let pairs: Vec<usize> = self
            .assignment
            .iter()
            .zip(&other.assignment)
            .map(|(a, b)| a * other.n_blocks + b)
            .collect();
        Self::from_assignment(&pairs, "")
    }

    fn block_string(&self) -> String {
        self.blocks()
            .iter()
            .map(|b| {
                let inner: Vec<String> = b.iter().map(|e| e.to_string()).collect();
                format!("{{{}}}", inner.join(","))
            })
            .collect()
    }
}

impl PartialEq for DiscreteObservable {
    fn eq(&self, other: &Self) -> bool {
        self.assignment == other.assignment
    }
}

impl Eq for DiscreteObservable {}

impl std::hash::Hash for DiscreteObservable {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.assignment.hash(state);
    }
}

/// Every partition of `{0, .., n-1}`, as restricted growth strings in
/// lexicographic order.
pub fn all_partitions(n: usize) -> Vec<DiscreteObservable> {
    fn extend(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let limit = if prefix.is_empty() { 0 } else { max + 1 };
        for b in 0..=limit {
            prefix.push(b);
            extend(prefix, max.max(b), n, out);
            prefix.pop();
        }
    }
    let mut raw = Vec::new();
    if n > 0 {
        extend(&mut Vec::with_capacity(n), 0, n, &mut raw);
    }
    raw.iter().map(|a| DiscreteObservable::from_assignment(a, "")).collect()
}

// ---------------------------------------------------------------------------
// Continuous observables
// ---------------------------------------------------------------------------

/// A linear subspace `W` of a Euclidean space `(E, M)`, given by a basis that
/// is orthonormal for `M`. Outcomes are coordinates in that basis.
#[derive(Clone, Debug)]
pub struct ContinuousObservable {
    basis: DMatrix<f64>,
    metric: DMatrix<f64>,
    label: String,
}

impl ContinuousObservable {
    /// Validates an `M`-orthonormal basis (columns of `basis`).
    pub fn new(basis: DMatrix<f64>, metric: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let n = metric.nrows();
        if metric.ncols() != n || basis.nrows() != n {
            return Err(Error::InvalidObservable("basis and metric shapes disagree".into()));
        }
        check_metric(&metric)?;
        if basis.ncols() > n {
            return Err(Error::InvalidObservable("more basis vectors than ambient dimension".into()));
        }
        let gram = basis.transpose() * &metric * &basis;
        let err = linalg::max_abs_diff(&gram, &DMatrix::identity(basis.ncols(), basis.ncols()));
        if err > ORTHONORMAL_TOL {
            return Err(Error::InvalidObservable(format!(
                "basis is not orthonormal under the metric (error {err:e})"
            )));
        }
        Ok(Self { basis, metric, label: label.into() })
    }

    /// Orthonormalises the span of the columns of `vectors` under `metric`.
    pub fn from_spanning(
        vectors: &DMatrix<f64>,
        metric: DMatrix<f64>,
        label: impl Into<String>,
    ) -> Result<Self> {
        let n = metric.nrows();
        if vectors.nrows() != n {
            return Err(Error::InvalidObservable("spanning vectors have the wrong length".into()));
        }
        check_metric(&metric)?;
        let basis = orthonormalize(vectors, &metric);
        Ok(Self { basis, metric, label: label.into() })
    }

    /// The span of the given coordinate axes of `R^ambient`, identity metric.
    pub fn coordinate(ambient: usize, axes: &[usize]) -> Self {
        let mut basis = DMatrix::zeros(ambient, axes.len());
        for (j, &a) in axes.iter().enumerate() {
            basis[(a, j)] = 1.0;
        }
        let names: Vec<String> = axes.iter().map(|a| format!("e{}", a + 1)).collect();
        let label = if axes.is_empty() { "0".to_string() } else { format!("span({})", names.join(",")) };
        Self { basis, metric: DMatrix::identity(ambient, ambient), label }
    }

    pub fn zero(metric: DMatrix<f64>) -> Self {
        let n = metric.nrows();
        Self { basis: DMatrix::zeros(n, 0), metric, label: "0".into() }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `M`-orthogonal projector onto `W`, as an ambient matrix.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose() * &self.metric
    }

    pub fn same_subspace(&self, other: &ContinuousObservable) -> bool {
        self.dim() == other.dim()
            && linalg::max_abs_diff(&self.projector(), &other.projector()) <= SUBSPACE_TOL
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &ContinuousObservable) -> bool {
        if other.ambient_dim() != self.ambient_dim() || other.dim() > self.dim() {
            return false;
        }
        let projected = self.projector() * &other.basis;
        linalg::max_abs_diff(&projected, &other.basis) <= SUBSPACE_TOL
    }

    /// `W_self + W_other`.
    pub fn sum(&self, other: &ContinuousObservable) -> ContinuousObservable {
        let mut vectors = DMatrix::zeros(self.ambient_dim(), self.dim() + other.dim());
        vectors.columns_mut(0, self.dim()).copy_from(&self.basis);
        vectors.columns_mut(self.dim(), other.dim()).copy_from(&other.basis);
        let basis = orthonormalize(&vectors, &self.metric);
        ContinuousObservable { basis, metric: self.metric.clone(), label: String::new() }
    }

    /// Matrix sending coordinates in `self` to coordinates in `coarser`
    /// (the `M`-orthogonal projection). Shape `coarser.dim() x self.dim()`.
    pub fn coordinate_map(&self, coarser: &ContinuousObservable) -> DMatrix<f64> {
        coarser.basis.transpose() * &self.metric * &self.basis
    }
}

fn check_metric(metric: &DMatrix<f64>) -> Result<()> {
    if linalg::asymmetry(metric) > 1e-12 || linalg::cholesky(metric).is_none() {
        return Err(Error::InvalidObservable("metric must be symmetric positive-definite".into()));
    }
    Ok(())
}

/// `M`-orthonormal basis of the span of the columns of `vectors`.
fn orthonormalize(vectors: &DMatrix<f64>, metric: &DMatrix<f64>) -> DMatrix<f64> {
    let n = metric.nrows();
    if vectors.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    // M = L L^T; x -> L^T x is an isometry onto the standard inner product.
    let l = linalg::cholesky(metric).expect("metric checked positive-definite");
    let whitened = l.transpose() * vectors;
    let u = linalg::column_space(&whitened, linalg::RANK_TOL);
    l.transpose().solve_upper_triangular(&u).expect("invertible factor")
}

// ---------------------------------------------------------------------------
// Products and the observable enum
// ---------------------------------------------------------------------------

/// `⟨X_c, X_d⟩`: outcomes are pairs (coordinates, block).
#[derive(Clone, Debug)]
pub struct ProductObservable {
    pub continuous: ContinuousObservable,
    pub discrete: DiscreteObservable,
}

#[derive(Clone, Debug)]
pub enum Observable {
    Discrete(DiscreteObservable),
    Continuous(ContinuousObservable),
    Product(ProductObservable),
}

impl Observable {
    pub fn label(&self) -> String {
        match self {
            Observable::Discrete(d) => d.label().to_string(),
            Observable::Continuous(c) => c.label().to_string(),
            Observable::Product(p) => format!("<{}, {}>", p.continuous.label(), p.discrete.label()),
        }
    }

    pub fn sector(&self) -> Sector {
        match self {
            Observable::Discrete(_) => Sector::Discrete,
            Observable::Continuous(_) => Sector::Continuous,
            Observable::Product(_) => Sector::Product,
        }
    }

    /// Same observable (partition equality, subspace equality, or both).
    pub fn same_as(&self, other: &Observable) -> bool {
        match (self, other) {
            (Observable::Discrete(a), Observable::Discrete(b)) => a == b,
            (Observable::Continuous(a), Observable::Continuous(b)) => a.same_subspace(b),
            (Observable::Product(a), Observable::Product(b)) => {
                a.discrete == b.discrete && a.continuous.same_subspace(&b.continuous)
            }
            _ => false,
        }
    }

    /// Whether there is an arrow `self -> coarser`.
    pub fn refines(&self, coarser: &Observable) -> bool {
        match (self, coarser) {
            (Observable::Discrete(a), Observable::Discrete(b)) => a.refines(b),
            (Observable::Continuous(a), Observable::Continuous(b)) => a.contains(b),
            (Observable::Product(a), Observable::Product(b)) => {
                a.discrete.refines(&b.discrete) && a.continuous.contains(&b.continuous)
            }
            _ => false,
        }
    }

    /// The joint observable: common refinement, subspace sum, or both.
    pub fn joint(&self, other: &Observable) -> Option<Observable> {
        match (self, other) {
            (Observable::Discrete(a), Observable::Discrete(b)) => {
                Some(Observable::Discrete(a.common_refinement(b)))
            }
            (Observable::Continuous(a), Observable::Continuous(b)) => {
                Some(Observable::Continuous(a.sum(b)))
            }
            (Observable::Product(a), Observable::Product(b)) => Some(Observable::Product(ProductObservable {
                continuous: a.continuous.sum(&b.continuous),
                discrete: a.discrete.common_refinement(&b.discrete),
            })),
            _ => None,
        }
    }

    /// `E(π)` for `π: self -> coarser`.
    pub fn arrow_map_to(&self, coarser: &Observable) -> Option<ArrowMap> {
        if !self.refines(coarser) {
            return None;
        }
        match (self, coarser) {
            (Observable::Discrete(a), Observable::Discrete(b)) => Some(ArrowMap::Blocks(BlockMap {
                map: a.block_map(b)?,
                target_size: b.n_outcomes(),
            })),
            (Observable::Continuous(a), Observable::Continuous(b)) => {
                Some(ArrowMap::Linear(a.coordinate_map(b)))
            }
            (Observable::Product(a), Observable::Product(b)) => Some(ArrowMap::Product {
                linear: a.continuous.coordinate_map(&b.continuous),
                blocks: BlockMap { map: a.discrete.block_map(&b.discrete)?, target_size: b.discrete.n_outcomes() },
            }),
            _ => None,
        }
    }

    /// Number of discrete outcomes (1 for a purely continuous observable).
    pub fn n_blocks(&self) -> usize {
        match self {
            Observable::Discrete(d) => d.n_outcomes(),
            Observable::Continuous(_) => 1,
            Observable::Product(p) => p.discrete.n_outcomes(),
        }
    }

    /// Dimension of the continuous part (0 for a discrete observable).
    pub fn continuous_dim(&self) -> usize {
        match self {
            Observable::Discrete(_) => 0,
            Observable::Continuous(c) => c.dim(),
            Observable::Product(p) => p.continuous.dim(),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Discrete,
    Continuous,
    Product,
}

/// An element of `E_X`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Block(usize),
    Point(DVector<f64>),
    Pair(DVector<f64>, usize),
}

/// Block-to-block surjection of a discrete arrow.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockMap {
    pub map: Vec<usize>,
    pub target_size: usize,
}

impl BlockMap {
    pub fn identity(n: usize) -> Self {
        Self { map: (0..n).collect(), target_size: n }
    }

    pub fn source_size(&self) -> usize {
        self.map.len()
    }

    pub fn compose(&self, then: &BlockMap) -> BlockMap {
        BlockMap { map: self.map.iter().map(|&b| then.map[b]).collect(), target_size: then.target_size }
    }
}

/// The measurable surjection `E(π): E_X -> E_Y` of an arrow.
#[derive(Clone, Debug)]
pub enum ArrowMap {
    Blocks(BlockMap),
    /// Coordinates in `X` to coordinates in `Y` (`dim Y x dim X`).
    Linear(DMatrix<f64>),
    Product { linear: DMatrix<f64>, blocks: BlockMap },
}

impl ArrowMap {
    pub fn apply(&self, outcome: &Outcome) -> Result<Outcome> {
        match (self, outcome) {
            (ArrowMap::Blocks(b), Outcome::Block(i)) if *i < b.source_size() => Ok(Outcome::Block(b.map[*i])),
            (ArrowMap::Linear(a), Outcome::Point(x)) if x.len() == a.ncols() => Ok(Outcome::Point(a * x)),
            (ArrowMap::Product { linear, blocks }, Outcome::Pair(x, i))
                if x.len() == linear.ncols() && *i < blocks.source_size() =>
            {
                Ok(Outcome::Pair(linear * x, blocks.map[*i]))
            }
            _ => Err(Error::InvalidLaw("outcome does not belong to the source of the arrow".into())),
        }
    }

    /// `self` followed by `then`.
    pub fn compose(&self, then: &ArrowMap) -> Result<ArrowMap> {
        match (self, then) {
            (ArrowMap::Blocks(a), ArrowMap::Blocks(b)) => Ok(ArrowMap::Blocks(a.compose(b))),
            (ArrowMap::Linear(a), ArrowMap::Linear(b)) => Ok(ArrowMap::Linear(b * a)),
            (ArrowMap::Product { linear: la, blocks: ba }, ArrowMap::Product { linear: lb, blocks: bb }) => {
                Ok(ArrowMap::Product { linear: lb * la, blocks: ba.compose(bb) })
            }
            _ => Err(Error::InvalidArrow("arrow".into(), "arrow of another sector".into())),
        }
    }

    /// Whether the target outcome set is finite.
    pub fn finite_target(&self) -> bool {
        match self {
            ArrowMap::Blocks(_) => true,
            ArrowMap::Linear(a) => a.nrows() == 0,
            ArrowMap::Product { linear, .. } => linear.nrows() == 0,
        }
    }

    /// Enumerates the target outcomes when the target is finite.
    pub fn target_outcomes(&self) -> Option<Vec<Outcome>> {
        match self {
            ArrowMap::Blocks(b) => Some((0..b.target_size).map(Outcome::Block).collect()),
            ArrowMap::Linear(a) if a.nrows() == 0 => Some(vec![Outcome::Point(DVector::zeros(0))]),
            ArrowMap::Product { linear, blocks } if linear.nrows() == 0 => {
                Some((0..blocks.target_size).map(|i| Outcome::Pair(DVector::zeros(0), i)).collect())
            }
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Information structures
// ---------------------------------------------------------------------------

/// Index of an object in an [`InformationStructure`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjId(pub usize);

impl fmt::Display for ObjId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// An arrow `source -> target` that exists in its structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Arrow {
    source: ObjId,
    target: ObjId,
}

impl Arrow {
    pub fn source(&self) -> ObjId {
        self.source
    }

    pub fn target(&self) -> ObjId {
        self.target
    }
}

/// A finite poset of observables with its outcome functor.
///
/// Immutable after construction. Arrows and meets are precomputed.
#[derive(Clone, Debug)]
pub struct InformationStructure {
    sector: Sector,
    objects: Vec<Observable>,
    arrows: Vec<Vec<bool>>,
    meets: Vec<Vec<Option<ObjId>>>,
    terminal: Option<ObjId>,
    factors: Option<(usize, usize)>,
}

impl InformationStructure {
    /// Builds a structure on the given objects; arrows are the refinement
    /// relation restricted to them.
    pub fn new(objects: Vec<Observable>) -> Result<Self> {
        let first = objects.first().ok_or_else(|| Error::InvalidStructure("no objects".into()))?;
        let sector = first.sector();
        for o in &objects {
            if o.sector() != sector {
                return Err(Error::InvalidStructure("objects from different sectors".into()));
            }
            compatible(first, o)?;
        }
        let n = objects.len();
        let arrows: Vec<Vec<bool>> =
            (0..n).map(|i| (0..n).map(|j| i == j || objects[i].refines(&objects[j])).collect()).collect();

        let lookup = Lookup::new(&objects);
        let mut meets = vec![vec![None; n]; n];
        for i in 0..n {
            for j in i..n {
                let m = if i == j {
                    Some(ObjId(i))
                } else {
                    objects[i].joint(&objects[j]).and_then(|o| lookup.find(&objects, &o))
                };
                meets[i][j] = m;
                meets[j][i] = m;
            }
        }
        let terminal = (0..n)
            .find(|&t| objects[t].n_blocks() == 1 && objects[t].continuous_dim() == 0 && (0..n).all(|i| arrows[i][t]))
            .map(ObjId);
        Ok(Self { sector, objects, arrows, meets, terminal, factors: None })
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjId> {
        (0..self.objects.len()).map(ObjId)
    }

    pub fn objects(&self) -> &[Observable] {
        &self.objects
    }

    pub fn object(&self, id: ObjId) -> &Observable {
        &self.objects[id.0]
    }

    pub fn terminal(&self) -> Option<ObjId> {
        self.terminal
    }

    pub fn find(&self, obs: &Observable) -> Option<ObjId> {
        self.objects.iter().position(|o| o.same_as(obs)).map(ObjId)
    }

    pub fn find_label(&self, label: &str) -> Option<ObjId> {
        self.objects.iter().position(|o| o.label() == label).map(ObjId)
    }

    pub fn has_arrow(&self, from: ObjId, to: ObjId) -> bool {
        self.arrows[from.0][to.0]
    }

    pub fn arrow(&self, from: ObjId, to: ObjId) -> Result<Arrow> {
        if from.0 < self.len() && to.0 < self.len() && self.arrows[from.0][to.0] {
            Ok(Arrow { source: from, target: to })
        } else {
            Err(Error::InvalidArrow(self.name(from), self.name(to)))
        }
    }

    /// `π' ∘ π` for `π: X -> Y`, `π': Y -> Z`.
    pub fn compose(&self, first: Arrow, then: Arrow) -> Result<Arrow> {
        if first.target != then.source {
            return Err(Error::InvalidArrow(self.name(first.target), self.name(then.source)));
        }
        self.arrow(first.source, then.target)
    }

    /// `E(π)`.
    pub fn arrow_map(&self, arrow: Arrow) -> ArrowMap {
        self.objects[arrow.source.0]
            .arrow_map_to(&self.objects[arrow.target.0])
            .expect("arrows are induced by refinement")
    }

    /// Applies `E(π)` to an outcome of the source.
    pub fn map_outcome(&self, arrow: Arrow, outcome: &Outcome) -> Result<Outcome> {
        self.arrow_map(arrow).apply(outcome)
    }

    /// `Y ∧ Z`, defined when `Y` and `Z` have a common refinement in the
    /// structure and their joint observable is itself an object.
    pub fn meet(&self, y: ObjId, z: ObjId) -> Result<ObjId> {
        let has_common = (0..self.len()).any(|x| self.arrows[x][y.0] && self.arrows[x][z.0]);
        if !has_common {
            return Err(Error::NoCommonRefinement(self.name(y), self.name(z)));
        }
        self.meets[y.0][z.0].ok_or_else(|| Error::MeetAbsent(self.name(y), self.name(z)))
    }

    /// `S_X = {Y : X -> Y}`.
    pub fn coarser_monoid(&self, x: ObjId) -> Vec<ObjId> {
        (0..self.len()).filter(|&y| self.arrows[x.0][y]).map(ObjId).collect()
    }

    /// For product structures, the object `⟨X_c, X_d⟩` by factor indices.
    pub fn product_object(&self, continuous: usize, discrete: usize) -> Option<ObjId> {
        let (nc, nd) = self.factors?;
        (continuous < nc && discrete < nd).then_some(ObjId(continuous * nd + discrete))
    }

    pub fn factor_sizes(&self) -> Option<(usize, usize)> {
        self.factors
    }

    pub fn name(&self, id: ObjId) -> String {
        self.objects.get(id.0).map(|o| o.label()).unwrap_or_else(|| id.to_string())
    }
}

fn compatible(a: &Observable, b: &Observable) -> Result<()> {
    let ok = match (a, b) {
        (Observable::Discrete(x), Observable::Discrete(y)) => x.omega_size() == y.omega_size(),
        (Observable::Continuous(x), Observable::Continuous(y)) => same_space(x, y),
        (Observable::Product(x), Observable::Product(y)) => {
            x.discrete.omega_size() == y.discrete.omega_size() && same_space(&x.continuous, &y.continuous)
        }
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidStructure("objects live on different sample spaces".into()))
    }
}

fn same_space(x: &ContinuousObservable, y: &ContinuousObservable) -> bool {
    x.ambient_dim() == y.ambient_dim() && linalg::max_abs_diff(x.metric(), y.metric()) <= 1e-12
}

/// Object lookup; hashed for discrete objects, linear scan otherwise.
struct Lookup {
    discrete: HashMap<Vec<usize>, usize>,
}

impl Lookup {
    fn new(objects: &[Observable]) -> Self {
        let mut discrete = HashMap::new();
        for (i, o) in objects.iter().enumerate() {
            if let Observable::Discrete(d) = o {
                discrete.entry(d.assignment().to_vec()).or_insert(i);
            }
        }
        Self { discrete }
    }

    fn find(&self, objects: &[Observable], target: &Observable) -> Option<ObjId> {
        match target {
            Observable::Discrete(d) => self.discrete.get(d.assignment()).copied().map(ObjId),
            _ => objects.iter().position(|o| o.same_as(target)).map(ObjId),
        }
    }
}

/// The full partition lattice of an `n`-set.
pub fn partition_lattice(n: usize) -> Result<InformationStructure> {
    if n == 0 {
        return Err(Error::InvalidStructure("sample set must be nonempty".into()));
    }
    InformationStructure::new(all_partitions(n).into_iter().map(Observable::Discrete).collect())
}

/// A discrete structure on the given partitions (the trivial partition is
/// added when missing).
pub fn discrete_structure(omega: usize, partitions: Vec<DiscreteObservable>) -> Result<InformationStructure> {
    let mut objects: Vec<Observable> = partitions.into_iter().map(Observable::Discrete).collect();
    let trivial = Observable::Discrete(DiscreteObservable::trivial(omega));
    if !objects.iter().any(|o| o.same_as(&trivial)) {
        objects.push(trivial);
    }
    InformationStructure::new(objects)
}

/// All coordinate subspaces of `R^n` (identity metric), ordered by axis bitmask.
pub fn coordinate_lattice(n: usize) -> Result<InformationStructure> {
    let objects = (0..1usize << n)
        .map(|mask| {
            let axes: Vec<usize> = (0..n).filter(|a| mask & (1 << a) != 0).collect();
            Observable::Continuous(ContinuousObservable::coordinate(n, &axes))
        })
        .collect();
    InformationStructure::new(objects)
}

/// The product `S_c × S_d` of a continuous and a discrete structure.
///
/// Object `⟨X_c, X_d⟩` has index `ic * |S_d| + id`.
pub fn product_structure(continuous: &InformationStructure, discrete: &InformationStructure) -> Result<InformationStructure> {
    if continuous.sector() != Sector::Continuous || discrete.sector() != Sector::Discrete {
        return Err(Error::InvalidSector("expected a continuous and a discrete structure".into()));
    }
    for (name, s) in [("continuous", continuous), ("discrete", discrete)] {
        let report = validate_structure(s);
        if !report.passed {
            let failed: Vec<&str> = report.checks.iter().filter(|c| c.required && !c.passed).map(|c| c.name.as_str()).collect();
            return Err(Error::InvalidSector(format!("{name} factor fails: {}", failed.join(", "))));
        }
    }
    let mut objects = Vec::with_capacity(continuous.len() * discrete.len());
    for c in continuous.objects() {
        for d in discrete.objects() {
            let (Observable::Continuous(c), Observable::Discrete(d)) = (c, d) else {
                unreachable!("sectors checked above")
            };
            objects.push(Observable::Product(ProductObservable { continuous: c.clone(), discrete: d.clone() }));
        }
    }
    let mut s = InformationStructure::new(objects)?;
    s.factors = Some((continuous.len(), discrete.len()));
    Ok(s)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub passed: bool,
    /// Informational checks do not affect the overall verdict.
    pub required: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckEntry>,
    pub passed: bool,
}

/// Checks the structure axioms and returns an itemised report.
pub fn validate_structure(s: &InformationStructure) -> ValidationReport {
    let n = s.len();
    let mut checks = Vec::new();
    let mut push = |name: &str, required: bool, failures: Vec<String>| {
        let detail = if failures.is_empty() {
            "ok".to_string()
        } else {
            let shown: Vec<String> = failures.iter().take(5).cloned().collect();
            format!("{} failure(s): {}", failures.len(), shown.join("; "))
        };
        checks.push(CheckEntry { name: name.into(), passed: failures.is_empty(), required, detail });
    };

    let reflexive: Vec<String> = (0..n).filter(|&i| !s.arrows[i][i]).map(|i| s.name(ObjId(i))).collect();
    push("reflexive", true, reflexive);

    let mut antisym = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if s.arrows[i][j] && s.arrows[j][i] {
                antisym.push(format!("{} and {} are mutually coarser", s.name(ObjId(i)), s.name(ObjId(j))));
            }
        }
    }
    push("antisymmetric", true, antisym);

    let mut trans = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if !s.arrows[i][j] {
                continue;
            }
            for k in 0..n {
                if s.arrows[j][k] && !s.arrows[i][k] {
                    trans.push(format!("{} -> {} -> {}", s.name(ObjId(i)), s.name(ObjId(j)), s.name(ObjId(k))));
                }
            }
        }
    }
    push("transitive", true, trans);

    let term = match s.terminal {
        Some(_) => Vec::new(),
        None => vec!["no object with a one-point outcome set receives every arrow".to_string()],
    };
    push("terminal", true, term);

    let mut meet_failures = Vec::new();
    let mut injective_failures = Vec::new();
    let mut commuting_failures = Vec::new();
    for y in 0..n {
        for z in y..n {
            let has_common = (0..n).any(|x| s.arrows[x][y] && s.arrows[x][z]);
            if !has_common {
                continue;
            }
            let Some(m) = s.meets[y][z] else {
                meet_failures.push(format!("MeetAbsent: {} ∧ {}", s.name(ObjId(y)), s.name(ObjId(z))));
                continue;
            };
            let to_y = s.objects[m.0].arrow_map_to(&s.objects[y]);
            let to_z = s.objects[m.0].arrow_map_to(&s.objects[z]);
            match (to_y, to_z) {
                (Some(a), Some(b)) => {
                    if !jointly_injective(&a, &b) {
                        injective_failures.push(format!("{} ∧ {}", s.name(ObjId(y)), s.name(ObjId(z))));
                    }
                }
                _ => meet_failures.push(format!("meet of {} and {} is not below both", s.name(ObjId(y)), s.name(ObjId(z)))),
            }
            if let (Some(py), Some(pz)) = (continuous_part(&s.objects[y]), continuous_part(&s.objects[z])) {
                let (py, pz) = (py.projector(), pz.projector());
                if linalg::max_abs_diff(&(&py * &pz), &(&pz * &py)) > SUBSPACE_TOL {
                    commuting_failures.push(format!("{} and {}", s.name(ObjId(y)), s.name(ObjId(z))));
                }
            }
        }
    }
    push("conditional_meets", true, meet_failures);

    let mut surj = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || !s.arrows[i][j] {
                continue;
            }
            let map = s.objects[i].arrow_map_to(&s.objects[j]).expect("arrow");
            if !surjective(&map) {
                surj.push(format!("{} -> {}", s.name(ObjId(i)), s.name(ObjId(j))));
            }
        }
    }
    push("surjective_arrow_maps", true, surj);
    push("meet_injects_into_product", true, injective_failures);
    // Fibers of the joint map are isometric to their images only when
    // the projections commute; log-det chain rules rely on it.
    push("commuting_projections", false, commuting_failures);

    let passed = checks.iter().all(|c| c.passed || !c.required);
    ValidationReport { checks, passed }
}

fn continuous_part(o: &Observable) -> Option<&ContinuousObservable> {
    match o {
        Observable::Discrete(_) => None,
        Observable::Continuous(c) => Some(c),
        Observable::Product(p) => Some(&p.continuous),
    }
}

fn surjective(map: &ArrowMap) -> bool {
    let blocks_onto = |b: &BlockMap| {
        let mut hit = vec![false; b.target_size];
        b.map.iter().for_each(|&t| hit[t] = true);
        hit.into_iter().all(|h| h)
    };
    let linear_onto = |a: &DMatrix<f64>| linalg::rank(a, linalg::RANK_TOL) == a.nrows();
    match map {
        ArrowMap::Blocks(b) => blocks_onto(b),
        ArrowMap::Linear(a) => linear_onto(a),
        ArrowMap::Product { linear, blocks } => blocks_onto(blocks) && linear_onto(linear),
    }
}

fn jointly_injective(a: &ArrowMap, b: &ArrowMap) -> bool {
    let blocks_inj = |x: &BlockMap, y: &BlockMap| {
        let mut seen = std::collections::HashSet::new();
        x.map.iter().zip(&y.map).all(|pair| seen.insert(pair))
    };
    let linear_inj = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
        let cols = x.ncols();
        let mut stacked = DMatrix::zeros(x.nrows() + y.nrows(), cols);
        stacked.rows_mut(0, x.nrows()).copy_from(x);
        stacked.rows_mut(x.nrows(), y.nrows()).copy_from(y);
        cols == 0 || linalg::rank(&stacked, linalg::RANK_TOL) == cols
    };
    match (a, b) {
        (ArrowMap::Blocks(x), ArrowMap::Blocks(y)) => blocks_inj(x, y),
        (ArrowMap::Linear(x), ArrowMap::Linear(y)) => linear_inj(x, y),
        (ArrowMap::Product { linear: lx, blocks: bx }, ArrowMap::Product { linear: ly, blocks: by }) => {
            blocks_inj(bx, by) && linear_inj(lx, ly)
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(omega: usize, blocks: &[&[usize]]) -> DiscreteObservable {
        let blocks: Vec<Vec<usize>> = blocks.iter().map(|b| b.to_vec()).collect();
        DiscreteObservable::from_blocks(omega, &blocks, "").unwrap()
    }

    /// Common refinement by enumerating all partitions and keeping the
    /// coarsest one below both.
    fn brute_force_meet(a: &DiscreteObservable, b: &DiscreteObservable) -> DiscreteObservable {
        let below: Vec<DiscreteObservable> =
            all_partitions(a.omega_size()).into_iter().filter(|p| p.refines(a) && p.refines(b)).collect();
        below.iter().find(|p| below.iter().all(|q| q.refines(p))).unwrap().clone()
    }

    #[test]
    fn bell_numbers() {
        let counts: Vec<usize> = (1..=6).map(|n| all_partitions(n).len()).collect();
        assert_eq!(counts, vec![1, 2, 5, 15, 52, 203]);
    }

    #[test]
    fn crossing_pairs_meet_in_singletons() {
        let s = partition_lattice(4).unwrap();
        let y = s.find(&Observable::Discrete(part(4, &[&[0, 1], &[2, 3]]))).unwrap();
        let z = s.find(&Observable::Discrete(part(4, &[&[0, 2], &[1, 3]]))).unwrap();
        let m = s.meet(y, z).unwrap();
        let Observable::Discrete(d) = s.object(m) else { panic!() };
        assert_eq!(d, &DiscreteObservable::singletons(4));
        let Observable::Discrete(dy) = s.object(y) else { panic!() };
        let Observable::Discrete(dz) = s.object(z) else { panic!() };
        assert_eq!(d, &brute_force_meet(dy, dz));
    }

    #[test]
    fn meet_with_terminal_and_self() {
        let s = partition_lattice(3).unwrap();
        let top = s.terminal().unwrap();
        for x in s.ids() {
            assert_eq!(s.meet(x, top).unwrap(), x);
            assert_eq!(s.meet(x, x).unwrap(), x);
        }
    }

    #[test]
    fn meets_agree_with_brute_force_on_four_set() {
        let s = partition_lattice(4).unwrap();
        for y in s.ids() {
            for z in s.ids() {
                let (Observable::Discrete(a), Observable::Discrete(b)) = (s.object(y), s.object(z)) else {
                    panic!()
                };
                let m = s.meet(y, z).unwrap();
                assert_eq!(s.object(m).label(), Observable::Discrete(brute_force_meet(a, b)).label());
            }
        }
    }

    #[test]
    fn missing_meet_is_reported() {
        let omega = 4;
        // {01|23} and {012|3} meet in {01|2|3}, which is absent.
        let s = discrete_structure(
            omega,
            vec![DiscreteObservable::singletons(omega), part(omega, &[&[0, 1], &[2, 3]]), part(omega, &[&[0, 1, 2], &[3]])],
        )
        .unwrap();
        let report = validate_structure(&s);
        assert!(!report.passed);
        let meets = report.checks.iter().find(|c| c.name == "conditional_meets").unwrap();
        assert!(meets.detail.contains("MeetAbsent"));
        assert!(matches!(s.meet(ObjId(1), ObjId(2)), Err(Error::MeetAbsent(..))));
    }

    #[test]
    fn full_lattice_of_four_set_validates() {
        let report = validate_structure(&partition_lattice(4).unwrap());
        assert!(report.passed, "{report:?}");
        assert!(report.checks.iter().all(|c| c.passed));
    }

    #[test]
    fn no_common_refinement_error() {
        let omega = 4;
        let s = InformationStructure::new(vec![
            Observable::Discrete(part(omega, &[&[0, 1], &[2, 3]])),
            Observable::Discrete(part(omega, &[&[0, 2], &[1, 3]])),
            Observable::Discrete(DiscreteObservable::trivial(omega)),
        ])
        .unwrap();
        assert!(matches!(s.meet(ObjId(0), ObjId(1)), Err(Error::NoCommonRefinement(..))));
    }

    #[test]
    fn block_arrow_map() {
        let s = discrete_structure(4, vec![part(4, &[&[0], &[1], &[2, 3]]), part(4, &[&[0, 1], &[2, 3]])]).unwrap();
        let arrow = s.arrow(ObjId(0), ObjId(1)).unwrap();
        assert_eq!(s.map_outcome(arrow, &Outcome::Block(0)).unwrap(), Outcome::Block(0));
        assert_eq!(s.map_outcome(arrow, &Outcome::Block(2)).unwrap(), Outcome::Block(1));
        assert!(matches!(s.arrow(ObjId(1), ObjId(0)), Err(Error::InvalidArrow(..))));
    }

    #[test]
    fn projection_onto_first_axis() {
        let s = coordinate_lattice(2).unwrap();
        let plane = s.find(&Observable::Continuous(ContinuousObservable::coordinate(2, &[0, 1]))).unwrap();
        let axis = s.find(&Observable::Continuous(ContinuousObservable::coordinate(2, &[0]))).unwrap();
        let arrow = s.arrow(plane, axis).unwrap();
        let out = s.map_outcome(arrow, &Outcome::Point(DVector::from_vec(vec![3.0, 4.0]))).unwrap();
        assert_eq!(out, Outcome::Point(DVector::from_vec(vec![3.0])));
    }

    #[test]
    fn subspace_lattice_validates() {
        let s = coordinate_lattice(2).unwrap();
        let report = validate_structure(&s);
        assert!(report.passed, "{report:?}");
        let e1 = s.find(&Observable::Continuous(ContinuousObservable::coordinate(2, &[0]))).unwrap();
        let e2 = s.find(&Observable::Continuous(ContinuousObservable::coordinate(2, &[1]))).unwrap();
        let m = s.meet(e1, e2).unwrap();
        assert_eq!(s.object(m).continuous_dim(), 2);
    }

    #[test]
    fn non_orthogonal_subspaces_flagged_informationally() {
        let metric = DMatrix::identity(2, 2);
        let diag = ContinuousObservable::from_spanning(&DMatrix::from_column_slice(2, 1, &[1.0, 1.0]), metric.clone(), "diag").unwrap();
        let s = InformationStructure::new(vec![
            Observable::Continuous(ContinuousObservable::coordinate(2, &[0, 1])),
            Observable::Continuous(ContinuousObservable::coordinate(2, &[0])),
            Observable::Continuous(diag),
            Observable::Continuous(ContinuousObservable::zero(metric)),
        ])
        .unwrap();
        let report = validate_structure(&s);
        assert!(report.passed);
        let c = report.checks.iter().find(|c| c.name == "commuting_projections").unwrap();
        assert!(!c.passed && !c.required);
    }

    #[test]
    fn product_componentwise() {
        let sc = coordinate_lattice(1).unwrap();
        let sd = partition_lattice(3).unwrap();
        assert_eq!(sc.len() * sd.len(), 10);
        let s = product_structure(&sc, &sd).unwrap();
        assert_eq!(s.len(), 10);
        assert!(validate_structure(&s).passed);
        for x in s.ids() {
            for y in s.ids() {
                let (ic, id) = (x.0 / sd.len(), x.0 % sd.len());
                let (jc, jd) = (y.0 / sd.len(), y.0 % sd.len());
                let componentwise = sc.has_arrow(ObjId(ic), ObjId(jc)) && sd.has_arrow(ObjId(id), ObjId(jd));
                assert_eq!(s.has_arrow(x, y), componentwise);
            }
        }
        let top = s.terminal().unwrap();
        assert_eq!(top, s.product_object(sc.terminal().unwrap().0, sd.terminal().unwrap().0).unwrap());
        // ⟨X, 1⟩ ∧ ⟨1, Y⟩ = ⟨X, Y⟩
        let x = s.product_object(1, sd.terminal().unwrap().0).unwrap();
        let y = s.product_object(0, 0).unwrap();
        assert_eq!(s.meet(x, y).unwrap(), s.product_object(1, 0).unwrap());
    }

    #[test]
    fn coarser_monoid_examples() {
        let s = partition_lattice(3).unwrap();
        let top = s.terminal().unwrap();
        assert_eq!(s.coarser_monoid(top), vec![top]);
        let bottom = s.find(&Observable::Discrete(DiscreteObservable::singletons(3))).unwrap();
        assert_eq!(s.coarser_monoid(bottom).len(), 5);
        for x in s.ids() {
            assert!(s.coarser_monoid(x).contains(&x));
        }
    }

    #[test]
    fn orthonormal_basis_is_checked() {
        let metric = DMatrix::identity(2, 2);
        let bad = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(ContinuousObservable::new(bad, metric, "bad").is_err());
    }
}
