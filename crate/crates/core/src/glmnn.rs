//! Graph large-margin nearest-neighbour objective and its SDP form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphTopology;
use crate::ingest::Label;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Same-label edges and opposing-label triplets of a training graph.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TripletSet {
    /// `(i, j)` with `i < j`, both endpoints sharing a label.
    pub same_pairs: Vec<(usize, usize)>,
    /// `(i, j, l)`: `(i, j)` and `(i, l)` are edges, `y_i = y_j = −y_l`.
    pub triplets: Vec<(usize, usize, usize)>,
}

impl TripletSet {
    pub fn is_empty(&self) -> bool {
        self.same_pairs.is_empty() && self.triplets.is_empty()
    }
}

/// Exhaustive enumeration over the training edges of `topology`.
pub fn build_triplets(topology: &GraphTopology, labels: &[Label]) -> TripletSet {
    let n = topology.n_train.min(labels.len());
    let mut adj = vec![Vec::new(); n];
    let mut same_pairs = Vec::new();
    for e in topology.train_edges() {
        if e.b >= n {
            continue;
        }
        adj[e.a].push(e.b);
        adj[e.b].push(e.a);
        if labels[e.a] == labels[e.b] {
            same_pairs.push((e.a, e.b));
        }
    }
    let mut triplets = Vec::new();
    for (i, nb) in adj.iter_mut().enumerate() {
        nb.sort_unstable();
        for &j in nb.iter().filter(|&&j| labels[j] == labels[i]) {
            for &l in nb.iter().filter(|&&l| labels[l] != labels[i]) {
                triplets.push((i, j, l));
            }
        }
    }
    same_pairs.sort_unstable();
    TripletSet {
        same_pairs,
        triplets,
    }
}

/// Feature differences `f_i − f_j` for every pair the objective touches;
/// `F_ij = (f_i − f_j)(f_i − f_j)ᵀ` is formed on demand.
#[derive(Clone, Debug)]
pub struct OuterProductCache<T> {
    k: usize,
    diffs: BTreeMap<(usize, usize), Vec<T>>,
}

impl<T: Scalar> OuterProductCache<T> {
    pub fn build(features: &Matrix<T>, set: &TripletSet) -> Self {
        let mut diffs = BTreeMap::new();
        let mut add = |a: usize, b: usize| {
            let key = (a.min(b), a.max(b));
            diffs.entry(key).or_insert_with(|| {
                features
                    .row(key.0)
                    .iter()
                    .zip(features.row(key.1))
                    .map(|(&x, &y)| x - y)
                    .collect()
            });
        };
        for &(i, j) in &set.same_pairs {
            add(i, j);
        }
        for &(i, j, l) in &set.triplets {
            add(i, j);
            add(i, l);
        }
        Self {
            k: features.cols(),
            diffs,
        }
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.diffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.is_empty()
    }

    /// `f_min − f_max` for the unordered pair; `None` if not cached.
    pub fn diff(&self, i: usize, j: usize) -> Option<&[T]> {
        self.diffs.get(&(i.min(j), i.max(j))).map(Vec::as_slice)
    }

    pub fn matrix(&self, i: usize, j: usize) -> Option<Matrix<T>> {
        self.diff(i, j).map(|d| Matrix::outer(d, d))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<T>)> {
        self.diffs.iter()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlmnnConfig {
    pub rho: f64,
    pub gamma: f64,
    pub eps_trace: f64,
}

impl Default for GlmnnConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            gamma: 1.0,
            eps_trace: 1e-3,
        }
    }
}

impl GlmnnConfig {
    /// `ρ = 0` is accepted: the problem degenerates but stays well posed.
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Validation("rho must be non-negative".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Validation("gamma must be positive".into()));
        }
        if !(self.eps_trace >= 0.0 && self.eps_trace.is_finite()) {
            return Err(Error::Validation("eps_trace must be non-negative".into()));
        }
        Ok(())
    }
}

/// `tr(M F)`.
pub fn trace_form_distance<T: Scalar>(m: &Matrix<T>, f: &Matrix<T>) -> Result<T> {
    if m.rows() != f.rows() || m.cols() != f.cols() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            got: f.rows(),
        });
    }
    Ok(m.frobenius_dot(f))
}

fn cached_distance<T: Scalar>(m: &Matrix<T>, cache: &OuterProductCache<T>, i: usize, j: usize) -> T {
    let d = cache.diff(i, j).expect("pair missing from outer-product cache");
    m.quad_form(d)
}

/// `Σ_same d_ij + ρ Σ_triplets [d_ij + γ − d_il]₊` (no trace term).
pub fn glmnn_objective<T: Scalar>(
    m: &Matrix<T>,
    set: &TripletSet,
    cache: &OuterProductCache<T>,
    config: &GlmnnConfig,
) -> T {
    let gamma = T::c(config.gamma);
    let same: T = set
        .same_pairs
        .iter()
        .map(|&(i, j)| cached_distance(m, cache, i, j))
        .sum();
    let hinge: T = set
        .triplets
        .iter()
        .map(|&(i, j, l)| {
            (cached_distance(m, cache, i, j) + gamma - cached_distance(m, cache, i, l)).max(T::zero())
        })
        .sum();
    same + T::c(config.rho) * hinge
}

/// Everything a GLMNN solver needs: pairs, triplets, differences, weights.
#[derive(Clone, Debug)]
pub struct GlmnnProblem<T> {
    pub set: TripletSet,
    pub cache: OuterProductCache<T>,
    pub config: GlmnnConfig,
}

impl<T: Scalar> GlmnnProblem<T> {
    /// `features` holds one row per training node, in node order.
    pub fn new(
        features: &Matrix<T>,
        topology: &GraphTopology,
        labels: &[Label],
        config: GlmnnConfig,
    ) -> Result<Self> {
        config.validate()?;
        if features.rows() != topology.n_train || labels.len() != topology.n_train {
            return Err(Error::DimensionMismatch {
                expected: topology.n_train,
                got: features.rows().min(labels.len()),
            });
        }
        let set = build_triplets(topology, labels);
        Self::from_parts(features, set, config)
    }

    pub fn from_parts(features: &Matrix<T>, set: TripletSet, config: GlmnnConfig) -> Result<Self> {
        config.validate()?;
        if set.is_empty() {
            return Err(Error::EmptyProblem);
        }
        let cache = OuterProductCache::build(features, &set);
        Ok(Self { set, cache, config })
    }

    pub fn dim(&self) -> usize {
        self.cache.dim()
    }

    /// GLMNN value plus `ε·tr(M)`, the quantity every solver minimises.
    pub fn objective(&self, m: &Matrix<T>) -> T {
        glmnn_objective(m, &self.set, &self.cache, &self.config) + T::c(self.config.eps_trace) * m.trace()
    }

    pub fn diff(&self, i: usize, j: usize) -> &[T] {
        self.cache.diff(i, j).expect("pair missing from outer-product cache")
    }
}

/// Number of upper-triangle entries of a `k × k` matrix.
pub fn n_upper(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Position of `(a, b)`, `a ≤ b`, in the row-major upper-triangle vector.
pub fn upper_index(k: usize, a: usize, b: usize) -> usize {
    let (a, b) = (a.min(b), a.max(b));
    a * k - a * (a + 1) / 2 + b
}

pub fn vectorize_upper<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    let k = m.rows();
    let mut out = Vec::with_capacity(n_upper(k));
    for a in 0..k {
        for b in a..k {
            out.push(m[(a, b)]);
        }
    }
    out
}

pub fn devectorize_upper<T: Scalar>(x: &[T], k: usize) -> Matrix<T> {
    let mut m = Matrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = x[upper_index(k, a, b)];
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// Coefficients `c` with `tr(M F) = cᵀ vec(M)` for `F = Δ Δᵀ`.
pub fn trace_coefficients<T: Scalar>(delta: &[T]) -> Vec<T> {
    let k = delta.len();
    let two = T::two();
    let mut out = Vec::with_capacity(n_upper(k));
    for a in 0..k {
        for b in a..k {
            let p = delta[a] * delta[b];
            out.push(if a == b { p } else { two * p });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdpWarning {
    /// `ε = 0` and this feature dimension never appears in any `F`, so the
    /// objective is flat along its diagonal entry.
    UnboundedRisk(usize),
}

/// `aᵀx ≥ b`
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRow<T> {
    pub coeffs: Vec<T>,
    pub rhs: T,
}

/// Linear part of the SDP: variables are `vec(M)` (upper triangle) followed
/// by one `δ` per triplet; the PSD cone on `M` is implicit.
#[derive(Clone, Debug)]
pub struct SdpDescription<T> {
    pub k: usize,
    pub n_m: usize,
    pub n_delta: usize,
    pub objective: Vec<T>,
    pub constraints: Vec<LinearRow<T>>,
    pub warnings: Vec<SdpWarning>,
}

impl<T: Scalar> SdpDescription<T> {
    pub fn n_vars(&self) -> usize {
        self.n_m + self.n_delta
    }

    pub fn objective_at(&self, m: &Matrix<T>, delta: &[T]) -> T {
        let x = vectorize_upper(m);
        x.iter()
            .chain(delta)
            .zip(&self.objective)
            .map(|(&a, &c)| a * c)
            .sum()
    }
}

pub fn build_sdp<T: Scalar>(
    set: &TripletSet,
    cache: &OuterProductCache<T>,
    config: &GlmnnConfig,
) -> Result<SdpDescription<T>> {
    if set.is_empty() {
        return Err(Error::EmptyProblem);
    }
    let k = cache.dim();
    let n_m = n_upper(k);
    let n_delta = set.triplets.len();
    let mut objective = vec![T::zero(); n_m + n_delta];
    for &(i, j) in &set.same_pairs {
        let c = trace_coefficients(cache.diff(i, j).expect("cached pair"));
        for (o, v) in objective.iter_mut().zip(c) {
            *o = *o + v;
        }
    }
    let eps = T::c(config.eps_trace);
    for a in 0..k {
        let p = upper_index(k, a, a);
        objective[p] = objective[p] + eps;
    }
    for o in objective[n_m..].iter_mut() {
        *o = T::c(config.rho);
    }

    let mut constraints = Vec::with_capacity(2 * n_delta);
    for (t, &(i, j, l)) in set.triplets.iter().enumerate() {
        let cj = trace_coefficients(cache.diff(i, j).expect("cached pair"));
        let cl = trace_coefficients(cache.diff(i, l).expect("cached pair"));
        // δ − tr(M F_ij) + tr(M F_il) ≥ γ
        let mut coeffs: Vec<T> = cl.iter().zip(&cj).map(|(&a, &b)| a - b).collect();
        coeffs.resize(n_m + n_delta, T::zero());
        coeffs[n_m + t] = T::one();
        constraints.push(LinearRow {
            coeffs,
            rhs: T::c(config.gamma),
        });
        let mut nonneg = vec![T::zero(); n_m + n_delta];
        nonneg[n_m + t] = T::one();
        constraints.push(LinearRow {
            coeffs: nonneg,
            rhs: T::zero(),
        });
    }

    let mut warnings = Vec::new();
    if config.eps_trace == 0.0 {
        for a in 0..k {
            if cache.pairs().all(|(_, d)| d[a] == T::zero()) {
                warnings.push(SdpWarning::UnboundedRisk(a));
            }
        }
    }
    for w in &warnings {
        log::warn!("{w:?}");
    }
    Ok(SdpDescription {
        k,
        n_m,
        n_delta,
        objective,
        constraints,
        warnings,
    })
}
