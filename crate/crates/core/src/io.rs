//! JSON specifications of structures and laws, and report output.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{DiscreteLaw, GaussianLaw, GaussianMixture, Law, MixedLaw};
use crate::structures::{
    coordinate_lattice, discrete_structure, partition_lattice, product_structure, ContinuousObservable,
    DiscreteObservable, InformationStructure, Observable,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StructureSpec {
    /// Every partition of `{0, …, n-1}`.
    PartitionLattice { n: usize },
    /// Partitions given by their blocks; the trivial partition is added.
    Discrete { omega: usize, partitions: Vec<Vec<Vec<usize>>> },
    /// Every coordinate subspace of `R^n`.
    CoordinateLattice { n: usize },
    /// Subspaces given by spanning vectors, with an optional metric
    /// (identity by default). Must include the zero subspace.
    Subspaces {
        ambient: usize,
        #[serde(default)]
        metric: Option<Vec<Vec<f64>>>,
        subspaces: Vec<Vec<Vec<f64>>>,
    },
    Product { continuous: Box<StructureSpec>, discrete: Box<StructureSpec> },
}

fn square(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidLaw(format!("{what} must be square")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl StructureSpec {
    pub fn build(&self) -> Result<InformationStructure> {
        match self {
            StructureSpec::PartitionLattice { n } => partition_lattice(*n),
            StructureSpec::Discrete { omega, partitions } => {
                let parts = partitions
                    .iter()
                    .map(|blocks| {
                        let label = blocks
                            .iter()
                            .map(|b| format!("{{{}}}", b.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")))
                            .collect::<String>();
                        DiscreteObservable::from_blocks(*omega, blocks, label)
                    })
                    .collect::<Result<Vec<_>>>()?;
                discrete_structure(*omega, parts)
            }
            StructureSpec::CoordinateLattice { n } => coordinate_lattice(*n),
            StructureSpec::Subspaces { ambient, metric, subspaces } => {
                let metric = match metric {
                    Some(m) => square(m, "metric")?,
                    None => DMatrix::identity(*ambient, *ambient),
                };
                let objects = subspaces
                    .iter()
                    .enumerate()
                    .map(|(i, vectors)| {
                        if vectors.iter().any(|v| v.len() != *ambient) {
                            return Err(Error::InvalidObservable(format!("subspace {i}: vectors must have length {ambient}")));
                        }
                        let m = DMatrix::from_fn(*ambient, vectors.len(), |r, c| vectors[c][r]);
                        ContinuousObservable::from_spanning(&m, metric.clone(), format!("V{i}")).map(Observable::Continuous)
                    })
                    .collect::<Result<Vec<_>>>()?;
                InformationStructure::new(objects)
            }
            StructureSpec::Product { continuous, discrete } => product_structure(&continuous.build()?, &discrete.build()?),
        }
    }
}

/// Discrete weights as `[numerator, denominator]` pairs (exact) or floats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Exact(Vec<[i64; 2]>),
    Float(Vec<f64>),
}

impl WeightsSpec {
    pub fn build(&self) -> Result<DiscreteLaw> {
        match self {
            WeightsSpec::Exact(pairs) => {
                let mut w = Vec::with_capacity(pairs.len());
                for [n, d] in pairs {
                    if *d == 0 {
                        return Err(Error::InvalidLaw("zero denominator".into()));
                    }
                    w.push(BigRational::new(BigInt::from(*n), BigInt::from(*d)));
                }
                DiscreteLaw::exact(w)
            }
            WeightsSpec::Float(w) => DiscreteLaw::float(w.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl GaussianSpec {
    pub fn build(&self) -> Result<GaussianLaw> {
        let cov = square(&self.cov, "covariance")?;
        if cov.nrows() != self.mean.len() {
            return Err(Error::DimensionMismatch { expected: self.mean.len(), found: cov.nrows() });
        }
        GaussianLaw::new(DVector::from_column_slice(&self.mean), cov)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LawSpec {
    Discrete { weights: WeightsSpec },
    Gaussian(GaussianSpec),
    Mixture { weights: Vec<f64>, components: Vec<GaussianSpec> },
    /// Block weights `p` and one gaussian conditional per block.
    Mixed { p: WeightsSpec, conditionals: Vec<GaussianSpec> },
}

impl LawSpec {
    pub fn build(&self) -> Result<Law> {
        match self {
            LawSpec::Discrete { weights } => Ok(Law::Discrete(weights.build()?)),
            LawSpec::Gaussian(g) => Ok(Law::Gaussian(g.build()?)),
            LawSpec::Mixture { weights, components } => {
                let comps = components.iter().map(|c| c.build()).collect::<Result<Vec<_>>>()?;
                Ok(Law::Mixture(GaussianMixture::new(weights.clone(), comps)?))
            }
            LawSpec::Mixed { p, conditionals } => {
                let gs = conditionals.iter().map(|c| c.build()).collect::<Result<Vec<_>>>()?;
                Ok(Law::Mixed(MixedLaw::from_gaussians(p.build()?, gs)?))
            }
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let wrap = |e: Error| Error::Input { path: path.display().to_string(), source: Box::new(e) };
    let text = std::fs::read_to_string(path).map_err(|e| wrap(e.into()))?;
    serde_json::from_str(&text).map_err(|e| wrap(e.into()))
}

pub fn load_structure(path: &Path) -> Result<InformationStructure> {
    read_json::<StructureSpec>(path)?.build()
}

pub fn load_laws(path: &Path) -> Result<Vec<Law>> {
    read_json::<Vec<LawSpec>>(path)?.iter().map(|l| l.build()).collect()
}

/// Pretty JSON with a trailing newline; field order follows the types, so
/// equal values always serialise to equal bytes.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
