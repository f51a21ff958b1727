//! Metric matrices, temporal-proximity topologies and similarity graphs.
//!
//! Nodes `0..n_train` are training nodes and `n_train..n_train + n_val` are
//! validation nodes. Within each group nodes are in temporal order, so
//! "temporally nearest" means nearest in the supplied `times`.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::Label;
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

/// Symmetric positive semi-definite matrix defining Mahalanobis distances.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricMatrix<T>(Matrix<T>);

impl<T: Scalar> MetricMatrix<T> {
    /// Validates symmetry (1e-12) and numerical PSD (`λ_min ≥ -1e-8`).
    pub fn new(m: Matrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                got: m.cols(),
            });
        }
        if !m.is_finite() {
            return Err(Error::Validation("metric matrix has non-finite entries".into()));
        }
        let scale = T::one().max(m.max_abs());
        if !m.is_symmetric(T::tol(1e-12) * scale) {
            return Err(Error::Validation("metric matrix is not symmetric".into()));
        }
        let lmin = linalg::lambda_min(&m)?;
        if lmin < -T::tol(1e-8) * scale {
            return Err(Error::Validation(format!(
                "metric matrix is not PSD (lambda_min = {lmin})"
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix the caller already knows to be symmetric PSD.
    pub fn new_unchecked(m: Matrix<T>) -> Self {
        Self(m)
    }

    pub fn identity(k: usize) -> Self {
        Self(Matrix::identity(k))
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<T> {
        self.0
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self(self.0.scale(alpha))
    }

    pub fn trace(&self) -> T {
        self.0.trace()
    }

    pub fn cast<U: Scalar>(&self) -> MetricMatrix<U> {
        MetricMatrix(self.0.cast())
    }
}

/// `(f_i - f_j)ᵀ M (f_i - f_j)`, clamped at zero.
pub fn mahalanobis_distance<T: Scalar>(fi: &[T], fj: &[T], m: &MetricMatrix<T>) -> Result<T> {
    let k = m.dim();
    for len in [fi.len(), fj.len()] {
        if len != k {
            return Err(Error::DimensionMismatch { expected: k, got: len });
        }
    }
    let diff: Vec<T> = fi.iter().zip(fj).map(|(&a, &b)| a - b).collect();
    Ok(m.matrix().quad_form(&diff).max(T::zero()))
}

/// Smallest weight an edge can carry.
pub fn weight_floor<T: Scalar>() -> T {
    let f = T::c(1e-300);
    if f > T::zero() {
        f
    } else {
        T::min_positive_value()
    }
}

/// `exp(-d)`, floored so no edge silently vanishes.
pub fn edge_weight<T: Scalar>(d: T) -> T {
    (-d).exp().max(weight_floor())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    TrainTrain,
    ValVal,
    TrainVal,
}

/// Undirected edge with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyMode {
    Sparse,
    Complete,
}

impl std::fmt::Display for TopologyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sparse => "sparse",
            Self::Complete => "complete",
        })
    }
}

impl std::str::FromStr for TopologyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sparse" => Ok(Self::Sparse),
            "complete" => Ok(Self::Complete),
            _ => Err(Error::Validation(format!("unknown topology mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GraphTopology {
    pub n_train: usize,
    pub n_val: usize,
    /// Time (bin index) of every node.
    pub times: Vec<usize>,
    edges: Vec<Edge>,
}

impl GraphTopology {
    /// Topology from an explicit edge list; kinds are derived from indices.
    pub fn from_edges(
        n_train: usize,
        n_val: usize,
        times: Vec<usize>,
        pairs: &[(usize, usize)],
    ) -> Result<Self> {
        if times.len() != n_train + n_val {
            return Err(Error::DimensionMismatch {
                expected: n_train + n_val,
                got: times.len(),
            });
        }
        let mut set = EdgeSet::new(n_train);
        for &(i, j) in pairs {
            if i == j {
                return Err(Error::Validation(format!("self-loop at node {i}")));
            }
            set.insert(i, j);
        }
        let t = Self {
            n_train,
            n_val,
            times,
            edges: set.finish(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_train + self.n_val
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn train_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::TrainTrain)
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|e| e.a == node || e.b == node)
            .count()
    }

    pub fn neighbors(&self, node: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.a == node {
                    Some(e.b)
                } else if e.b == node {
                    Some(e.a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Structural checks: no self-loops, no duplicate edges, node indices in
    /// range, edge kinds consistent with node groups.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        let mut seen = HashSet::new();
        for e in &self.edges {
            if e.a >= e.b {
                return Err(Error::Validation(format!("edge ({}, {}) not ordered", e.a, e.b)));
            }
            if e.b >= n {
                return Err(Error::IndexOutOfRange { index: e.b, len: n });
            }
            if !seen.insert((e.a, e.b)) {
                return Err(Error::Validation(format!("duplicate edge ({}, {})", e.a, e.b)));
            }
            let kind = match (e.a < self.n_train, e.b < self.n_train) {
                (true, true) => EdgeKind::TrainTrain,
                (false, false) => EdgeKind::ValVal,
                _ => EdgeKind::TrainVal,
            };
            if kind != e.kind {
                return Err(Error::Validation(format!("edge ({}, {}) mis-tagged", e.a, e.b)));
            }
        }
        Ok(())
    }

    /// Every validation node must see at least one training node of each label.
    pub fn validate_label_coverage(&self, train_labels: &[Label]) -> Result<()> {
        for v in self.n_train..self.n_nodes() {
            let mut has = [false, false];
            for u in self.neighbors(v) {
                if u < self.n_train {
                    has[(train_labels[u] == Label::Pos) as usize] = true;
                }
            }
            if !(has[0] && has[1]) {
                return Err(Error::Validation(format!(
                    "validation node {v} lacks a training neighbour of each label"
                )));
            }
        }
        Ok(())
    }

    /// Writes `i,j,weight` rows (weights optional).
    pub fn write_edge_list<T: Scalar>(&self, path: impl AsRef<Path>, weights: Option<&[T]>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "i,j,weight")?;
        for (k, e) in self.edges.iter().enumerate() {
            let wt = weights.map_or(1.0, |ws| ws[k].to_f64_lossy());
            writeln!(w, "{},{},{}", e.a, e.b, wt)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct EdgeSet {
    seen: HashSet<(usize, usize)>,
    edges: Vec<Edge>,
    n_train: usize,
}

impl EdgeSet {
    fn new(n_train: usize) -> Self {
        Self {
            seen: HashSet::new(),
            edges: Vec::new(),
            n_train,
        }
    }

    fn insert(&mut self, i: usize, j: usize) {
        if i == j {
            return;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if self.seen.insert((a, b)) {
            let kind = match (a < self.n_train, b < self.n_train) {
                (true, true) => EdgeKind::TrainTrain,
                (false, false) => EdgeKind::ValVal,
                _ => EdgeKind::TrainVal,
            };
            self.edges.push(Edge { a, b, kind });
        }
    }

    fn finish(mut self) -> Vec<Edge> {
        self.edges.sort_by_key(|e| (e.a, e.b));
        self.edges
    }
}

/// Number of earlier neighbours a node selects out of `d` (3:2 split at d = 5).
pub fn earlier_share(d: usize) -> usize {
    (3 * d).div_ceil(5)
}

/// Neighbour selection of position `t` within a temporally ordered group of
/// `n` nodes: the nearest `⌈3d/5⌉` earlier and the nearest remaining later
/// nodes. A side that runs short is topped up from the other side.
pub fn temporal_selection(n: usize, t: usize, d: usize) -> Vec<usize> {
    let d = d.min(n.saturating_sub(1));
    let want_before = earlier_share(d);
    let avail_before = t;
    let avail_after = n - 1 - t;
    let mut before = want_before.min(avail_before);
    let mut after = (d - before).min(avail_after);
    if before + after < d {
        before = (d - after).min(avail_before);
    }
    if before + after < d {
        after = (d - before).min(avail_after);
    }
    let mut out: Vec<usize> = (t - before..t).collect();
    out.extend(t + 1..=t + after);
    out
}

fn check_sorted(times: &[usize]) -> Result<()> {
    if times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation("node times must be strictly increasing".into()));
    }
    Ok(())
}

/// Training-node topology. Sparse mode takes the union of every node's
/// temporal selection; complete mode links every pair.
pub fn build_train_topology(times: &[usize], mode: TopologyMode, d_t: usize) -> Result<GraphTopology> {
    let n = times.len();
    if n < 2 {
        return Err(Error::Validation("need at least two training nodes".into()));
    }
    check_sorted(times)?;
    let mut set = EdgeSet::new(n);
    match mode {
        TopologyMode::Complete => {
            for i in 0..n {
                for j in (i + 1)..n {
                    set.insert(i, j);
                }
            }
        }
        TopologyMode::Sparse => {
            if d_t == 0 {
                return Err(Error::Validation("sparse mode needs D_t >= 1".into()));
            }
            for t in 0..n {
                for u in temporal_selection(n, t, d_t) {
                    set.insert(t, u);
                }
            }
        }
    }
    Ok(GraphTopology {
        n_train: n,
        n_val: 0,
        times: times.to_vec(),
        edges: set.finish(),
    })
}

/// `count` training nodes of `label` nearest in time to `time`; ties go to
/// the lower index.
fn nearest_of_label(
    train_times: &[usize],
    labels: &[Label],
    label: Label,
    time: usize,
    count: usize,
) -> Vec<usize> {
    let mut cands: Vec<(usize, usize)> = (0..train_times.len())
        .filter(|&i| labels[i] == label)
        .map(|i| (train_times[i].abs_diff(time), i))
        .collect();
    cands.sort_unstable();
    cands.into_iter().take(count).map(|(_, i)| i).collect()
}

/// Adds validation nodes to a training topology: val–val edges by temporal
/// selection (`d_v`), plus `d_vt` training neighbours per validation node,
/// split evenly between the labels and nearest in time within each label.
pub fn build_expanded_topology(
    train: &GraphTopology,
    train_labels: &[Label],
    val_times: &[usize],
    d_v: usize,
    d_vt: usize,
) -> Result<GraphTopology> {
    let n = train.n_train;
    if train_labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: train_labels.len(),
        });
    }
    for label in [Label::Pos, Label::Neg] {
        if !train_labels.contains(&label) {
            return Err(Error::LabelPoolEmpty(label.as_i8()));
        }
    }
    if d_vt < 2 {
        return Err(Error::Validation(
            "D_vt must be at least 2 so each validation node sees both labels".into(),
        ));
    }
    check_sorted(val_times)?;
    let m = val_times.len();
    let mut set = EdgeSet::new(n);
    for e in train.edges() {
        set.insert(e.a, e.b);
    }
    if d_v > 0 {
        for t in 0..m {
            for u in temporal_selection(m, t, d_v) {
                set.insert(n + t, n + u);
            }
        }
    }
    let train_times = &train.times[..n];
    for (v, &time) in val_times.iter().enumerate() {
        let pos = nearest_of_label(train_times, train_labels, Label::Pos, time, d_vt.div_ceil(2));
        let neg = nearest_of_label(train_times, train_labels, Label::Neg, time, d_vt / 2);
        for u in pos.into_iter().chain(neg) {
            set.insert(n + v, u);
        }
    }
    let mut times = train_times.to_vec();
    times.extend_from_slice(val_times);
    Ok(GraphTopology {
        n_train: n,
        n_val: m,
        times,
        edges: set.finish(),
    })
}

/// Topology with metric-dependent edge weights and Laplacian.
#[derive(Clone, Debug)]
pub struct SimilarityGraph<T> {
    pub topology: GraphTopology,
    /// Weight of each edge, aligned with `topology.edges()`.
    pub weights: Vec<T>,
    pub laplacian: Matrix<T>,
}

impl<T: Scalar> SimilarityGraph<T> {
    /// `yᵀ L y`
    pub fn glr(&self, y: &[T]) -> T {
        self.laplacian.quad_form(y)
    }
}

/// Assembles `L = diag(W 1) - W` with `w_ij = exp(-d_ij(M))`.
///
/// `node_features` holds one row per node in node order.
pub fn assemble_laplacian<T: Scalar>(
    topology: &GraphTopology,
    node_features: &Matrix<T>,
    m: &MetricMatrix<T>,
) -> Result<SimilarityGraph<T>> {
    let n = topology.n_nodes();
    if node_features.rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: node_features.rows(),
        });
    }
    let mut lap = Matrix::zeros(n, n);
    let mut weights = Vec::with_capacity(topology.edges().len());
    for e in topology.edges() {
        let d = mahalanobis_distance(node_features.row(e.a), node_features.row(e.b), m)?;
        let w = edge_weight(d);
        weights.push(w);
        lap[(e.a, e.b)] = lap[(e.a, e.b)] - w;
        lap[(e.b, e.a)] = lap[(e.b, e.a)] - w;
        lap[(e.a, e.a)] = lap[(e.a, e.a)] + w;
        lap[(e.b, e.b)] = lap[(e.b, e.b)] + w;
    }
    Ok(SimilarityGraph {
        topology: topology.clone(),
        weights,
        laplacian: lap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let i2 = MetricMatrix::<f64>::identity(2);
        assert_eq!(mahalanobis_distance(&[1.0, 0.0], &[0.0, 1.0], &i2).unwrap(), 2.0);
        let z = MetricMatrix::new(Matrix::zeros(2, 2)).unwrap();
        assert_eq!(mahalanobis_distance(&[3.0, -1.0], &[0.5, 7.0], &z).unwrap(), 0.0);
        let m = MetricMatrix::new(Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]])).unwrap();
        // (1,-1) [[2,1],[1,2]] (1,-1)ᵀ = 2 - 1 - 1 + 2
        assert_eq!(mahalanobis_distance(&[1.0, 0.0], &[0.0, 1.0], &m).unwrap(), 2.0);
        assert!(matches!(
            mahalanobis_distance(&[1.0], &[0.0, 1.0], &m),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn metric_rejects_indefinite_or_asymmetric() {
        assert!(MetricMatrix::new(Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]])).is_err());
        assert!(MetricMatrix::new(Matrix::from_rows(&[[1.0, 0.1], [0.0, 1.0]])).is_err());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(edge_weight(0.0f64), 1.0);
        assert_relative_eq!(edge_weight(2f64.ln()), 0.5, epsilon = 1e-15);
        assert_eq!(edge_weight(1e6f64), 1e-300);
        assert!(edge_weight(1e6f32) > 0.0);
    }

    #[test]
    fn interior_node_selects_three_before_two_after() {
        assert_eq!(temporal_selection(20, 10, 5), vec![7, 8, 9, 11, 12]);
    }

    #[test]
    fn boundary_node_takes_all_later() {
        assert_eq!(temporal_selection(20, 0, 5), vec![1, 2, 3, 4, 5]);
        assert_eq!(temporal_selection(20, 19, 5), vec![14, 15, 16, 17, 18]);
        assert_eq!(temporal_selection(20, 18, 5), vec![14, 15, 16, 17, 19]);
        assert_eq!(temporal_selection(3, 1, 5), vec![0, 2]);
    }

    #[test]
    fn complete_topology_counts() {
        let t = build_train_topology(&[0, 3, 5, 9], TopologyMode::Complete, 0).unwrap();
        assert_eq!(t.edges().len(), 6);
        t.validate().unwrap();
    }

    #[test]
    fn sparse_union_degree() {
        let times: Vec<usize> = (0..30).map(|i| 2 * i).collect();
        let t = build_train_topology(&times, TopologyMode::Sparse, 5).unwrap();
        t.validate().unwrap();
        // interior node: its own 3+2 plus the node three steps later
        assert_eq!(t.neighbors(15), vec![12, 13, 14, 16, 17, 18]);
        assert_eq!(t.degree(15), 2 * earlier_share(5));
    }

    fn labels(v: &[i64]) -> Vec<Label> {
        v.iter().map(|&x| Label::from_i64(x).unwrap()).collect()
    }

    #[test]
    fn expanded_balances_labels() {
        let times: Vec<usize> = (0..10).map(|i| 2 * i).collect();
        let y = labels(&[1, -1, 1, -1, 1, -1, 1, -1, 1, -1]);
        let t = build_train_topology(&times, TopologyMode::Sparse, 3).unwrap();
        let x = build_expanded_topology(&t, &y, &[5, 11], 2, 4).unwrap();
        x.validate().unwrap();
        x.validate_label_coverage(&y).unwrap();
        for v in [10, 11] {
            let tn: Vec<usize> = x.neighbors(v).into_iter().filter(|&u| u < 10).collect();
            let pos = tn.iter().filter(|&&u| y[u] == Label::Pos).count();
            assert_eq!((tn.len(), pos), (4, 2));
        }
        // time 5: nearest positives are at times 4 (node 2) and 8 (node 4)
        let tn: Vec<usize> = x.neighbors(10).into_iter().filter(|&u| u < 10).collect();
        assert_eq!(tn, vec![1, 2, 3, 4]);
        assert!(x.edges().iter().any(|e| e.kind == EdgeKind::ValVal));
    }

    #[test]
    fn no_val_val_edges_when_dv_zero() {
        let y = labels(&[1, -1, 1, -1]);
        let t = build_train_topology(&[0, 1, 2, 3], TopologyMode::Sparse, 2).unwrap();
        let x = build_expanded_topology(&t, &y, &[4, 5, 6], 0, 2).unwrap();
        assert!(x.edges().iter().all(|e| e.kind != EdgeKind::ValVal));
        assert_eq!(x.edges().iter().filter(|e| e.kind == EdgeKind::TrainVal).count(), 6);
    }

    #[test]
    fn one_label_pool_is_rejected() {
        let y = labels(&[1, 1, 1]);
        let t = build_train_topology(&[0, 1, 2], TopologyMode::Complete, 0).unwrap();
        assert!(matches!(
            build_expanded_topology(&t, &y, &[4], 0, 2),
            Err(Error::LabelPoolEmpty(-1))
        ));
    }

    #[test]
    fn laplacian_examples() {
        let t = build_train_topology(&[0, 1], TopologyMode::Complete, 0).unwrap();
        let f = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0]]);
        let g = assemble_laplacian(&t, &f, &MetricMatrix::identity(2)).unwrap();
        assert_eq!(g.laplacian, Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]));

        let lone = GraphTopology {
            n_train: 3,
            n_val: 0,
            times: vec![0, 1, 2],
            edges: vec![],
        };
        let g = assemble_laplacian(&lone, &Matrix::zeros(3, 1), &MetricMatrix::<f64>::identity(1)).unwrap();
        assert_eq!(g.laplacian, Matrix::zeros(3, 3));

        // path 0-1-2 with distances ln 2 and ln 4
        let path = build_train_topology(&[0, 1, 2], TopologyMode::Sparse, 1).unwrap();
        assert_eq!(path.edges().len(), 2);
        let f = Matrix::from_rows(&[[0.0], [2f64.ln().sqrt()], [2f64.ln().sqrt() + 4f64.ln().sqrt()]]);
        let g = assemble_laplacian(&path, &f, &MetricMatrix::identity(1)).unwrap();
        assert_relative_eq!(g.laplacian[(0, 1)], -0.5, epsilon = 1e-14);
        assert_relative_eq!(g.laplacian[(1, 2)], -0.25, epsilon = 1e-14);
        assert_eq!(g.laplacian[(0, 2)], 0.0);
        for i in 0..3 {
            assert!(g.laplacian.row(i).iter().sum::<f64>().abs() < 1e-15);
        }
    }

    fn psd_from(seed: &[f64], k: usize) -> MetricMatrix<f64> {
        let a = Matrix::from_fn(k, k, |i, j| seed[(i * k + j) % seed.len()]);
        MetricMatrix::new(a.transpose().matmul(&a).symmetrize()).unwrap()
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(v in proptest::collection::vec(-2.0f64..2.0, 9), a in proptest::collection::vec(-3.0f64..3.0, 3), b in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let m = psd_from(&v, 3);
            let d1 = mahalanobis_distance(&a, &b, &m).unwrap();
            let d2 = mahalanobis_distance(&b, &a, &m).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-12 * (1.0 + d1));
        }

        #[test]
        fn scaling_metric_up_never_raises_weights(v in proptest::collection::vec(-2.0f64..2.0, 4), a in proptest::collection::vec(-3.0f64..3.0, 2), b in proptest::collection::vec(-3.0f64..3.0, 2), alpha in 1.0f64..10.0) {
            let m = psd_from(&v, 2);
            let w1 = edge_weight(mahalanobis_distance(&a, &b, &m).unwrap());
            let w2 = edge_weight(mahalanobis_distance(&a, &b, &m.scaled(alpha)).unwrap());
            prop_assert!(w2 <= w1);
        }

        #[test]
        fn laplacian_rows_sum_to_zero(n in 2usize..12, d in 1usize..5, feats in proptest::collection::vec(-1.0f64..1.0, 24)) {
            let times: Vec<usize> = (0..n).collect();
            let t = build_train_topology(&times, TopologyMode::Sparse, d).unwrap();
            let f = Matrix::from_fn(n, 2, |i, j| feats[(2 * i + j) % feats.len()]);
            let g = assemble_laplacian(&t, &f, &MetricMatrix::identity(2)).unwrap();
            prop_assert!(g.laplacian.is_symmetric(0.0));
            for i in 0..n {
                prop_assert!(g.laplacian.row(i).iter().sum::<f64>().abs() <= 1e-10);
            }
        }
    }
}
