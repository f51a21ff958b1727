//! Slow reference solvers for tests and acceptance runs.

use crate::error::{Error, Result};
use crate::glmnn::{build_sdp, devectorize_upper, upper_index, GlmnnProblem};
use crate::graph::{MetricMatrix, SimilarityGraph};
use crate::ingest::Label;
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

/// Largest feature dimension the reference SDP solver accepts.
pub const ORACLE_MAX_K: usize = 12;
/// Largest number of validation nodes the brute-force check accepts.
pub const BRUTE_MAX_VAL: usize = 3;

#[derive(Clone, Debug)]
pub struct OracleReport<T> {
    /// Objective (GLMNN plus trace term) at `metric`.
    pub objective: T,
    pub metric: MetricMatrix<T>,
    /// Proven lower bound on the optimum.
    pub lower_bound: T,
    pub iterations: usize,
    /// `objective − lower_bound ≤ 1e-6`.
    pub certified: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct OracleOptions {
    pub max_iters: usize,
    /// Stop once the optimality gap falls below this.
    pub gap_tol: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            gap_tol: 1e-10,
        }
    }
}

pub const CERTIFY_GAP: f64 = 1e-6;

/// Primal log-barrier interior-point solver for the GLMNN SDP.
///
/// Variables are `vec(M)` and one `δ` per triplet; the barrier is
/// `−log det M − Σ log δ − Σ log(δ − γ − gᵀm) − log(B − tr M)` where `B`
/// is a trace bound that provably contains the optimum when `ε > 0`. The `δ`
/// block of the Hessian is diagonal and is eliminated, so each Newton step
/// is one Cholesky solve of size `K(K+1)/2`. The lower bound comes from a
/// Lagrangian dual point built from the barrier multipliers, so it is valid
/// whether or not the path was followed accurately.
pub fn sdp_reference_solve<T: Scalar>(problem: &GlmnnProblem<T>, opts: &OracleOptions) -> Result<OracleReport<T>> {
    let k = problem.dim();
    if k > ORACLE_MAX_K {
        return Err(Error::ScaleTooLarge { k, cap: ORACLE_MAX_K });
    }
    let cfg = &problem.config;
    let sdp = build_sdp(&problem.set, &problem.cache, cfg)?;
    let n_m = sdp.n_m;
    let c: Vec<f64> = sdp.objective[..n_m].iter().map(|x| x.to_f64_lossy()).collect();
    let rho = cfg.rho;
    let gamma = cfg.gamma;
    // rows are `δ_t − g_tᵀm ≥ γ` followed by `δ_t ≥ 0`; with ρ = 0 the
    // hinges carry no cost and are dropped
    let g: Vec<Vec<f64>> = sdp
        .constraints
        .iter()
        .step_by(2)
        .take(if rho > 0.0 { usize::MAX } else { 0 })
        .map(|r| r.coeffs[..n_m].iter().map(|x| -x.to_f64_lossy()).collect())
        .collect();
    let nd = g.len();
    let diag_idx: Vec<usize> = (0..k).map(|a| upper_index(k, a, a)).collect();

    // f(M) ≥ ε tr M and f(0) = ργ|T|, so tr M* ≤ ργ|T| / ε.
    let obj0 = rho * gamma * sdp.n_delta as f64;
    let bound = if cfg.eps_trace > 0.0 {
        obj0 / cfg.eps_trace * 1.01 + 1.0
    } else {
        1e6
    };

    let trace = |m: &[f64]| diag_idx.iter().map(|&p| m[p]).sum::<f64>();
    let slack2 = |m: &[f64], d: &[f64]| -> Vec<f64> {
        g.iter().zip(d).map(|(gt, &dt)| dt - gamma - linalg::dot(gt, m)).collect()
    };
    let in_domain = |m: &[f64], d: &[f64]| -> bool {
        bound - trace(m) > 0.0
            && d.iter().all(|&x| x > 0.0)
            && slack2(m, d).iter().all(|&x| x > 0.0)
            && linalg::cholesky(&devectorize_upper(m, k)).is_some()
    };
    let pairs = |p: usize| -> Vec<(usize, usize)> {
        let (a, b) = upper_pair(k, p);
        if a == b {
            vec![(a, a)]
        } else {
            vec![(a, b), (b, a)]
        }
    };
    let basis: Vec<Vec<(usize, usize)>> = (0..n_m).map(pairs).collect();

    let mut m = vec![0.0; n_m];
    let s0 = (bound / (2.0 * k as f64)).min(1.0);
    for &p in &diag_idx {
        m[p] = s0;
    }
    let mut d: Vec<f64> = g
        .iter()
        .map(|gt| (gamma + linalg::dot(gt, &m)).max(0.0) + 1.0)
        .collect();
    let n_barrier = (k + 2 * nd + 1) as f64;
    let f_start = linalg::dot(&c, &m) + rho * d.iter().sum::<f64>();
    let mut t = n_barrier / f_start.abs().max(1.0);

    let mut iterations = 0;
    let mut best: Option<(T, Matrix<T>, T)> = None;
    loop {
        // centering
        for _ in 0..200 {
            if iterations >= opts.max_iters {
                break;
            }
            let mm = devectorize_upper(&m, k);
            let Some(chol) = linalg::cholesky(&mm) else { break };
            let w = inverse_from_cholesky(&chol);
            let sb = bound - trace(&m);
            let s2 = slack2(&m, &d);

            let mut grad_m: Vec<f64> = c.iter().map(|x| t * x).collect();
            let mut h = vec![0.0; n_m * n_m];
            for p in 0..n_m {
                for &(i, j) in &basis[p] {
                    grad_m[p] -= w[(j, i)];
                }
                for q in p..n_m {
                    let mut s = 0.0;
                    for &(i, j) in &basis[p] {
                        for &(kk, l) in &basis[q] {
                            s += w[(j, kk)] * w[(l, i)];
                        }
                    }
                    h[p * n_m + q] = s;
                }
            }
            for &p in &diag_idx {
                grad_m[p] += 1.0 / sb;
                for &q in &diag_idx {
                    if q >= p {
                        h[p * n_m + q] += 1.0 / (sb * sb);
                    }
                }
            }
            let mut grad_d = vec![0.0; nd];
            let mut dd = vec![0.0; nd];
            let mut rhs = vec![0.0; n_m];
            for tt in 0..nd {
                let (s1, s2) = (d[tt], s2[tt]);
                let (i1, i2) = (1.0 / (s1 * s1), 1.0 / (s2 * s2));
                grad_d[tt] = t * rho - 1.0 / s1 - 1.0 / s2;
                dd[tt] = i1 + i2;
                let wt = i2 * i1 / dd[tt];
                let gt = &g[tt];
                for p in 0..n_m {
                    grad_m[p] += gt[p] / s2;
                    if gt[p] != 0.0 {
                        for q in p..n_m {
                            h[p * n_m + q] += wt * gt[p] * gt[q];
                        }
                    }
                }
                let coef = grad_d[tt] * i2 / dd[tt];
                for p in 0..n_m {
                    rhs[p] += coef * gt[p];
                }
            }
            for p in 0..n_m {
                rhs[p] = -(rhs[p] + grad_m[p]);
            }
            let hm = Matrix::from_fn(n_m, n_m, |p, q| h[p.min(q) * n_m + p.max(q)]);
            let Some(hl) = linalg::cholesky(&hm) else { break };
            let dm = linalg::cholesky_solve(&hl, &rhs);
            let ddelta: Vec<f64> = (0..nd)
                .map(|tt| -(grad_d[tt] - linalg::dot(&g[tt], &dm) / (s2[tt] * s2[tt])) / dd[tt])
                .collect();
            let decrement = -(linalg::dot(&grad_m, &dm) + linalg::dot(&grad_d, &ddelta));
            iterations += 1;
            if decrement / 2.0 <= 1e-10 {
                break;
            }
            // damped Newton step; self-concordance keeps it inside the domain
            let lam = decrement.max(0.0).sqrt();
            let mut alpha = if lam > 0.25 { 1.0 / (1.0 + lam) } else { 1.0 };
            let mut moved = false;
            while alpha > 1e-12 {
                let m1: Vec<f64> = m.iter().zip(&dm).map(|(x, y)| x + alpha * y).collect();
                let d1: Vec<f64> = d.iter().zip(&ddelta).map(|(x, y)| x + alpha * y).collect();
                if in_domain(&m1, &d1) {
                    m = m1;
                    d = d1;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }

        let cert = certificate(problem, &sdp, &g, &m, &d, t, bound)?;
        if best.as_ref().map_or(true, |b| cert.0 - cert.2 <= b.0 - b.2) {
            best = Some(cert);
        }
        let (obj, _, lower) = best.as_ref().expect("set above");
        let gap = (*obj - *lower).to_f64_lossy();
        if gap <= opts.gap_tol * obj.to_f64_lossy().abs().max(1.0) || iterations >= opts.max_iters || t > 1e16 {
            break;
        }
        t *= 20.0;
    }
    let (objective, mat, lower_bound) = best.expect("at least one stage");
    let metric = MetricMatrix::new(mat)?;
    Ok(OracleReport {
        objective,
        metric,
        lower_bound,
        iterations,
        certified: objective - lower_bound <= T::c(CERTIFY_GAP),
    })
}

fn upper_pair(k: usize, p: usize) -> (usize, usize) {
    let mut rest = p;
    for a in 0..k {
        let len = k - a;
        if rest < len {
            return (a, a + rest);
        }
        rest -= len;
    }
    unreachable!("index past the upper triangle")
}

fn inverse_from_cholesky(l: &Matrix<f64>) -> Matrix<f64> {
    let n = l.rows();
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = linalg::cholesky_solve(l, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    inv.symmetrize()
}

/// Objective at the current iterate and a Lagrangian lower bound built from
/// the hinge multipliers `λ_t = ρ − 1/(t δ_t)` clipped to `[0, ρ]` (read off
/// `δ` directly, which avoids the cancellation in the hinge slack):
/// `γΣλ + B·min(0, λ_min(Y))` with `⟨Y, M⟩ = (c + Σ λ_t g_t)ᵀm`.
fn certificate<T: Scalar>(
    problem: &GlmnnProblem<T>,
    sdp: &crate::glmnn::SdpDescription<T>,
    g: &[Vec<f64>],
    m: &[f64],
    d: &[f64],
    t: f64,
    bound: f64,
) -> Result<(T, Matrix<T>, T)> {
    let k = sdp.k;
    let n_m = sdp.n_m;
    let rho = problem.config.rho;
    let gamma = problem.config.gamma;
    let mut y: Vec<f64> = sdp.objective[..n_m].iter().map(|x| x.to_f64_lossy()).collect();
    let mut lower = 0.0;
    for (tt, gt) in g.iter().enumerate() {
        let lam = (rho - 1.0 / (t * d[tt])).clamp(0.0, rho);
        lower += gamma * lam;
        for (yp, &gp) in y.iter_mut().zip(gt) {
            *yp += lam * gp;
        }
    }
    let ym = Matrix::from_fn(k, k, |a, b| {
        let v = y[upper_index(k, a, b)];
        if a == b {
            v
        } else {
            v / 2.0
        }
    });
    lower += bound * linalg::lambda_min(&ym)?.min(0.0);
    let mat = devectorize_upper(m, k);
    let mat: Matrix<T> = linalg::project_psd(&mat)?.cast();
    let obj = problem.objective(&mat);
    Ok((obj, mat, T::c(lower)))
}

/// Minimises `yᵀLy` over the validation entries by grid refinement on
/// `[−1.5, 1.5]^m` followed by exact coordinate descent. Independent of the
/// linear-solve path in the inference module.
pub fn brute_force_inference_check<T: Scalar>(graph: &SimilarityGraph<T>, y_t: &[T]) -> Result<Vec<f64>> {
    let nt = graph.topology.n_train;
    let nv = graph.topology.n_val;
    if nv > BRUTE_MAX_VAL {
        return Err(Error::ScaleTooLarge { k: nv, cap: BRUTE_MAX_VAL });
    }
    if y_t.len() != nt {
        return Err(Error::DimensionMismatch { expected: nt, got: y_t.len() });
    }
    let n = nt + nv;
    let l: Vec<f64> = graph.laplacian.as_slice().iter().map(|x| x.to_f64_lossy()).collect();
    let lij = |i: usize, j: usize| l[i * n + j];
    for v in 0..nv {
        if lij(nt + v, nt + v) <= 0.0 {
            return Err(Error::SingularSystem(nt + v));
        }
    }
    let mut y: Vec<f64> = y_t.iter().map(|x| x.to_f64_lossy()).collect();
    y.resize(n, 0.0);
    let energy = |y: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            let mut r = 0.0;
            for j in 0..n {
                r += lij(i, j) * y[j];
            }
            s += y[i] * r;
        }
        s
    };

    let mut center = vec![0.0; nv];
    let mut half = 1.5;
    let mut pts = 31usize;
    while half > 1e-12 {
        let step = 2.0 * half / (pts - 1) as f64;
        let total = pts.pow(nv as u32);
        let mut best = (f64::INFINITY, center.clone());
        for idx in 0..total {
            let mut rem = idx;
            for (a, c) in center.iter().enumerate() {
                y[nt + a] = c - half + step * (rem % pts) as f64;
                rem /= pts;
            }
            let e = energy(&y);
            if e < best.0 {
                best = (e, y[nt..].to_vec());
            }
        }
        center = best.1;
        half = 2.0 * step;
        pts = 11;
    }
    y[nt..].copy_from_slice(&center);

    for _ in 0..100_000 {
        let mut moved = 0.0f64;
        for a in 0..nv {
            let i = nt + a;
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| lij(i, j) * y[j]).sum();
            let new = -off / lij(i, i);
            moved = moved.max((new - y[i]).abs());
            y[i] = new;
        }
        if moved <= 1e-15 {
            break;
        }
    }
    Ok(y[nt..].to_vec())
}

/// Majority vote over the `k` nearest training points under `M` (identity
/// when `None`). Distance ties go to the lower training index.
pub fn knn_baseline<T: Scalar>(
    train: &Matrix<T>,
    train_labels: &[Label],
    val: &Matrix<T>,
    k: usize,
    metric: Option<&MetricMatrix<T>>,
) -> Result<Vec<Label>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::Validation("kNN needs an odd k >= 1".into()));
    }
    if train.rows() != train_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: train.rows(),
            got: train_labels.len(),
        });
    }
    if train.cols() != val.cols() {
        return Err(Error::DimensionMismatch {
            expected: train.cols(),
            got: val.cols(),
        });
    }
    let ident;
    let m = match metric {
        Some(m) => m,
        None => {
            ident = MetricMatrix::identity(train.cols());
            &ident
        }
    };
    let mut out = Vec::with_capacity(val.rows());
    for v in 0..val.rows() {
        let mut d: Vec<(T, usize)> = (0..train.rows())
            .map(|t| Ok((crate::graph::mahalanobis_distance(val.row(v), train.row(t), m)?, t)))
            .collect::<Result<_>>()?;
        d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        let vote: i32 = d.iter().take(k).map(|&(_, t)| train_labels[t].as_i8() as i32).sum();
        out.push(if vote > 0 { Label::Pos } else { Label::Neg });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glmnn::{GlmnnConfig, TripletSet};
    use crate::graph::GraphTopology;
    use approx::assert_abs_diff_eq;

    fn scalar_problem(rho: f64, eps: f64) -> GlmnnProblem<f64> {
        // same pair with Δ² = 1, triplet with Δ_j² = 1, Δ_l² = 4
        let f = Matrix::from_rows(&[[0.0], [1.0], [2.0]]);
        let set = TripletSet {
            same_pairs: vec![(0, 1)],
            triplets: vec![(0, 1, 2)],
        };
        GlmnnProblem::from_parts(&f, set, GlmnnConfig { rho, gamma: 1.0, eps_trace: eps }).unwrap()
    }

    #[test]
    fn scalar_breakpoint() {
        let r = sdp_reference_solve(&scalar_problem(1.0, 0.0), &OracleOptions::default()).unwrap();
        assert_abs_diff_eq!(r.objective, 1.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.metric.matrix()[(0, 0)], 1.0 / 3.0, epsilon = 1e-9);
        assert!(r.certified);
    }

    #[test]
    fn zero_rho_gives_zero_metric() {
        let opts = OracleOptions { gap_tol: 1e-13, ..Default::default() };
        let r = sdp_reference_solve(&scalar_problem(0.0, 0.0), &opts).unwrap();
        assert_abs_diff_eq!(r.objective, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.metric.matrix()[(0, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn toy_two_dimensional() {
        let f = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let set = TripletSet {
            same_pairs: vec![(0, 1)],
            triplets: vec![(0, 1, 2)],
        };
        let p = GlmnnProblem::from_parts(&f, set, GlmnnConfig { rho: 1.0, gamma: 1.0, eps_trace: 0.1 }).unwrap();
        let r = sdp_reference_solve(&p, &OracleOptions::default()).unwrap();
        assert_abs_diff_eq!(r.objective, 0.1, epsilon = 1e-9);
        let m = r.metric.matrix();
        assert_abs_diff_eq!(m[(0, 0)], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(m[(1, 1)], 1.0, epsilon = 1e-6);
        assert!(r.lower_bound <= r.objective + 1e-12);
    }

    #[test]
    fn oversized_problem_rejected() {
        let f = Matrix::<f64>::zeros(2, 13);
        let set = TripletSet { same_pairs: vec![(0, 1)], triplets: vec![] };
        let p = GlmnnProblem::from_parts(&f, set, GlmnnConfig::default()).unwrap();
        assert!(matches!(
            sdp_reference_solve(&p, &OracleOptions::default()),
            Err(Error::ScaleTooLarge { k: 13, cap: 12 })
        ));
    }

    /// One validation node (index `nt`) linked to train nodes with given
    /// weights and labels.
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
    fn brute_force_examples() {
        let (g, y) = one_val(&[(3.0, 1.0), (1.0, -1.0)]);
        assert_abs_diff_eq!(brute_force_inference_check(&g, &y).unwrap()[0], 0.5, epsilon = 1e-9);
        let (g, y) = one_val(&[(0.5, 1.0), (0.5, -1.0)]);
        assert_abs_diff_eq!(brute_force_inference_check(&g, &y).unwrap()[0], 0.0, epsilon = 1e-9);
        let (g, y) = one_val(&[(0.5, 1.0), (0.2, 1.0)]);
        assert_abs_diff_eq!(brute_force_inference_check(&g, &y).unwrap()[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn knn_examples() {
        let tr = Matrix::from_rows(&[[0.0], [1.0], [2.0], [10.0]]);
        let y = [Label::Pos, Label::Pos, Label::Neg, Label::Neg];
        let v = Matrix::from_rows(&[[10.0], [0.5]]);
        assert_eq!(knn_baseline(&tr, &y, &v, 1, None).unwrap(), vec![Label::Neg, Label::Pos]);
        let v = Matrix::from_rows(&[[1.0]]);
        assert_eq!(knn_baseline(&tr, &y, &v, 3, None).unwrap(), vec![Label::Pos]);
        assert!(knn_baseline(&tr, &y, &v, 2, None).is_err());
    }
}
