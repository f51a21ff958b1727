//! Harmonic label inference on the expanded graph.

use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::ingest::Label;
use crate::linalg::{cholesky, cholesky_solve, conjugate_gradient, Matrix};
use crate::scalar::Scalar;

/// Above this many validation nodes the grounded system is solved by CG.
pub const DIRECT_SOLVE_MAX: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceResult<T> {
    pub y_star: Vec<T>,
    pub y_hat: Vec<Label>,
    /// Present when ground truth was supplied.
    pub accuracy: Option<f64>,
}

/// Every validation component must touch a training node, otherwise the
/// grounded Laplacian block is singular.
fn check_grounded<T: Scalar>(graph: &SimilarityGraph<T>) -> Result<()> {
    let nt = graph.topology.n_train;
    let nv = graph.topology.n_val;
    let mut adj = vec![Vec::new(); nv];
    let mut grounded = vec![false; nv];
    for e in graph.topology.edges() {
        match (e.a >= nt, e.b >= nt) {
            (true, true) => {
                adj[e.a - nt].push(e.b - nt);
                adj[e.b - nt].push(e.a - nt);
            }
            (false, true) => grounded[e.b - nt] = true,
            (true, false) => grounded[e.a - nt] = true,
            (false, false) => {}
        }
    }
    let mut seen = vec![false; nv];
    for start in 0..nv {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut ok = false;
        while let Some(u) = stack.pop() {
            ok |= grounded[u];
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if !ok {
            return Err(Error::SingularSystem(nt + start));
        }
    }
    Ok(())
}

/// Minimiser of `yᵀLy` over the validation entries with training entries
/// fixed to `y_t`: solves `L_vv y_v = −L_vt y_t`.
pub fn harmonic_solve<T: Scalar>(graph: &SimilarityGraph<T>, y_t: &[T]) -> Result<Vec<T>> {
    let nt = graph.topology.n_train;
    let nv = graph.topology.n_val;
    if y_t.len() != nt {
        return Err(Error::DimensionMismatch { expected: nt, got: y_t.len() });
    }
    if nv == 0 {
        return Ok(Vec::new());
    }
    check_grounded(graph)?;
    let l = &graph.laplacian;
    let rhs: Vec<T> = (0..nv)
        .map(|v| {
            let row = l.row(nt + v);
            -row[..nt].iter().zip(y_t).map(|(&a, &b)| a * b).sum::<T>()
        })
        .collect();
    let lvv = Matrix::from_fn(nv, nv, |a, b| l[(nt + a, nt + b)]);

    let direct = if nv <= DIRECT_SOLVE_MAX {
        cholesky(&lvv).map(|c| cholesky_solve(&c, &rhs))
    } else {
        None
    };
    let mut y = match direct {
        Some(y) => y,
        None => conjugate_gradient(|x| lvv.matvec(x), &rhs, T::tol(1e-13), 10 * nv + 100)?,
    };

    let lo = y_t.iter().copied().fold(T::infinity(), T::min).min(T::zero());
    let hi = y_t.iter().copied().fold(T::neg_infinity(), T::max).max(T::zero());
    for v in y.iter_mut() {
        *v = v.max(lo).min(hi);
    }
    Ok(y)
}

/// `+1` for strictly positive entries, `−1` otherwise (zero included).
pub fn threshold_labels<T: Scalar>(y: &[T]) -> Vec<Label> {
    y.iter()
        .map(|&v| if v > T::zero() { Label::Pos } else { Label::Neg })
        .collect()
}

pub fn accuracy(y_hat: &[Label], y_true: &[Label]) -> Result<f64> {
    if y_hat.len() != y_true.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_hat.len(),
        });
    }
    if y_hat.is_empty() {
        return Ok(1.0);
    }
    let hits = y_hat.iter().zip(y_true).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_hat.len() as f64)
}

/// Harmonic solve, threshold and (optionally) score.
pub fn infer<T: Scalar>(
    graph: &SimilarityGraph<T>,
    train_labels: &[Label],
    truth: Option<&[Label]>,
) -> Result<InferenceResult<T>> {
    let y_t: Vec<T> = train_labels.iter().map(|l| l.value()).collect();
    let y_star = harmonic_solve(graph, &y_t)?;
    let y_hat = threshold_labels(&y_star);
    let accuracy = truth.map(|t| accuracy(&y_hat, t)).transpose()?;
    Ok(InferenceResult { y_star, y_hat, accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{assemble_laplacian, build_expanded_topology, build_train_topology, GraphTopology, MetricMatrix, TopologyMode};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn one_val(links: &[(f64, f64)]) -> (SimilarityGraph<f64>, Vec<f64>) {
        let nt = links.len();
        let pairs: Vec<(usize, usize)> = (0..nt).map(|t| (t, nt)).collect();
        let topology = GraphTopology::from_edges(nt, 1, (0..=nt).collect(), &pairs).unwrap();
        let mut lap = Matrix::zeros(nt + 1, nt + 1);
        for (t, &(w, _)) in links.iter().enumerate() {
            lap[(t, nt)] = -w;
            lap[(nt, t)] = -w;
            lap[(t, t)] = w;
            lap[(nt, nt)] += w;
        }
        let g = SimilarityGraph {
            topology,
            weights: links.iter().map(|l| l.0).collect(),
            laplacian: lap,
        };
        (g, links.iter().map(|l| l.1).collect())
    }

    #[test]
    fn harmonic_examples() {
        let (g, y) = one_val(&[(3.0, 1.0), (1.0, -1.0)]);
        assert_abs_diff_eq!(harmonic_solve(&g, &y).unwrap()[0], 0.5, epsilon = 1e-14);
        let (g, y) = one_val(&[(0.4, 1.0), (0.4, -1.0)]);
        assert_abs_diff_eq!(harmonic_solve(&g, &y).unwrap()[0], 0.0, epsilon = 1e-14);
        let (g, y) = one_val(&[(0.4, 1.0), (0.9, 1.0)]);
        assert_abs_diff_eq!(harmonic_solve(&g, &y).unwrap()[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn isolated_validation_component_is_singular() {
        let topology = GraphTopology::from_edges(2, 2, vec![0, 1, 2, 3], &[(0, 1), (2, 3)]).unwrap();
        let f = Matrix::zeros(4, 1);
        let g = assemble_laplacian(&topology, &f, &MetricMatrix::identity(1)).unwrap();
        assert!(matches!(harmonic_solve(&g, &[1.0, -1.0]), Err(Error::SingularSystem(2))));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_labels(&[0.5, 0.0, -0.3]), vec![Label::Pos, Label::Neg, Label::Neg]);
    }

    #[test]
    fn accuracy_examples() {
        let a = [Label::Pos, Label::Neg, Label::Pos, Label::Pos];
        assert_eq!(accuracy(&a, &a).unwrap(), 1.0);
        let opp: Vec<Label> = a.iter().map(|l| l.opposite()).collect();
        assert_eq!(accuracy(&a, &opp).unwrap(), 0.0);
        let three = [Label::Pos, Label::Neg, Label::Pos, Label::Neg];
        assert_eq!(accuracy(&a, &three).unwrap(), 0.75);
        assert!(accuracy(&a, &three[..3]).is_err());
    }

    proptest! {
        #[test]
        fn residual_and_maximum_principle(
            feats in proptest::collection::vec(-1.0f64..1.0, 60),
            ys in proptest::collection::vec(prop_oneof![Just(-1i64), Just(1i64)], 6..10),
            n_val in 1usize..6,
        ) {
            let nt = ys.len();
            let labels: Vec<Label> = ys.iter().map(|&v| Label::from_i64(v).unwrap()).collect();
            prop_assume!(labels.contains(&Label::Pos) && labels.contains(&Label::Neg));
            let train_times: Vec<usize> = (0..nt).map(|t| 2 * t).collect();
            let val_times: Vec<usize> = (0..n_val).map(|v| 2 * v + 1).collect();
            let tt = build_train_topology(&train_times, TopologyMode::Sparse, 3).unwrap();
            let topo = build_expanded_topology(&tt, &labels, &val_times, 2, 2).unwrap();
            let n = nt + n_val;
            let f = Matrix::from_fn(n, 3, |i, j| feats[(3 * i + j) % feats.len()]);
            let g = assemble_laplacian(&topo, &f, &MetricMatrix::identity(3)).unwrap();
            let y_t: Vec<f64> = labels.iter().map(|l| l.value()).collect();
            let y = harmonic_solve(&g, &y_t).unwrap();
            for v in 0..n_val {
                let r: f64 = (0..nt).map(|t| g.laplacian[(nt + v, t)] * y_t[t]).sum::<f64>()
                    + (0..n_val).map(|w| g.laplacian[(nt + v, nt + w)] * y[w]).sum::<f64>();
                prop_assert!(r.abs() <= 1e-9);
                prop_assert!((-1.0..=1.0).contains(&y[v]));
            }
        }
    }
}
