//! Metric learning by projected gradient descent on GLR plus a trace term.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{assemble_laplacian, edge_weight, GraphTopology, MetricMatrix};
use crate::ingest::Label;
use crate::linalg::{project_psd, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlrConfig {
    pub mu: f64,
    pub step: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for GlrConfig {
    fn default() -> Self {
        Self {
            mu: 0.1,
            step: 1.0,
            max_iters: 500,
            rel_tol: 1e-5,
        }
    }
}

impl GlrConfig {
    /// `step = 0` passes: it is the documented way to get the initial point back.
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.step >= 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::Validation("GLR needs mu > 0, step >= 0, rel_tol > 0".into()));
        }
        Ok(())
    }
}

const MAX_HALVINGS: usize = 30;
const MAX_STEP_GROWTH: f64 = 1e6;

/// `y_tᵀ L_t(M) y_t + μ tr(M)` through the assembled Laplacian.
pub fn glr_value<T: Scalar>(
    topology: &GraphTopology,
    features: &Matrix<T>,
    y_t: &[T],
    m: &MetricMatrix<T>,
    mu: T,
) -> Result<T> {
    let g = assemble_laplacian(topology, features, m)?;
    if y_t.len() != topology.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: topology.n_nodes(),
            got: y_t.len(),
        });
    }
    Ok(g.glr(y_t) + mu * m.trace())
}

/// Edges with differing labels; same-label edges contribute nothing to
/// either the objective or its gradient.
#[derive(Clone, Debug)]
pub struct GlrProblem<T> {
    k: usize,
    /// `(f_i − f_j, (y_i − y_j)²)`
    pairs: Vec<(Vec<T>, T)>,
}

impl<T: Scalar> GlrProblem<T> {
    pub fn new(topology: &GraphTopology, features: &Matrix<T>, labels: &[Label]) -> Result<Self> {
        let n = topology.n_train;
        if features.rows() != n || labels.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: features.rows().min(labels.len()),
            });
        }
        let mut pairs = Vec::new();
        for e in topology.train_edges() {
            let dy = labels[e.a].value::<T>() - labels[e.b].value::<T>();
            let c = dy * dy;
            if c != T::zero() {
                let d = features
                    .row(e.a)
                    .iter()
                    .zip(features.row(e.b))
                    .map(|(&x, &y)| x - y)
                    .collect();
                pairs.push((d, c));
            }
        }
        Ok(Self {
            k: features.cols(),
            pairs,
        })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn n_opposing(&self) -> usize {
        self.pairs.len()
    }

    /// `Σ w_ij (y_i − y_j)² + μ tr(M)` over the stored pairs.
    pub fn value(&self, m: &Matrix<T>, mu: T) -> T {
        let s: T = self
            .pairs
            .iter()
            .map(|(d, c)| *c * edge_weight(m.quad_form(d).max(T::zero())))
            .sum();
        s + mu * m.trace()
    }

    /// `−Σ (y_i − y_j)² e^{−d_ij} Δ Δᵀ + μ I`.
    pub fn gradient(&self, m: &Matrix<T>, mu: T) -> Matrix<T> {
        let k = self.k;
        let mut g = Matrix::identity(k).scale(mu);
        for (d, c) in &self.pairs {
            let w = *c * (-m.quad_form(d).max(T::zero())).exp();
            if w == T::zero() {
                continue;
            }
            for a in 0..k {
                let wa = w * d[a];
                for b in 0..k {
                    g[(a, b)] = g[(a, b)] - wa * d[b];
                }
            }
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlrDiagnostics {
    /// Objective at the start and after every accepted step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct GlrOutcome<T> {
    pub metric: MetricMatrix<T>,
    pub objective: T,
    pub diagnostics: GlrDiagnostics,
    pub converged: bool,
}

pub fn train_glr<T: Scalar>(problem: &GlrProblem<T>, config: &GlrConfig) -> Result<GlrOutcome<T>> {
    train_glr_observed(problem, config, &mut |_, _| {})
}

/// Projected gradient descent from `M = I` with backtracking; `on_accept`
/// sees every accepted iterate and its objective.
pub fn train_glr_observed<T: Scalar>(
    problem: &GlrProblem<T>,
    config: &GlrConfig,
    on_accept: &mut dyn FnMut(&Matrix<T>, T),
) -> Result<GlrOutcome<T>> {
    config.validate()?;
    let start = Instant::now();
    let mu = T::c(config.mu);
    let rel_tol = T::c(config.rel_tol);
    let mut m = Matrix::identity(problem.dim());
    let mut q = problem.value(&m, mu);
    let mut history = vec![q.to_f64_lossy()];
    let mut converged = false;
    let mut iterations = 0;
    let mut step = T::c(config.step);
    let max_step = T::c(config.step * MAX_STEP_GROWTH);

    if config.step > 0.0 {
        while iterations < config.max_iters {
            iterations += 1;
            let g = problem.gradient(&m, mu);
            let mut trial = step;
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let cand = project_psd(&m.axpy(-trial, &g))?;
                let qc = problem.value(&cand, mu);
                if qc <= q {
                    accepted = Some((cand, qc));
                    break;
                }
                trial = trial / T::two();
            }
            let Some((cand, qc)) = accepted else {
                // no descent at any tried step: stationary to working precision
                converged = true;
                break;
            };
            let dq = q - qc;
            let q_prev = q;
            m = cand;
            q = qc;
            history.push(q.to_f64_lossy());
            on_accept(&m, q);
            step = (trial * T::two()).min(max_step);
            if dq.abs() <= rel_tol * q_prev.abs() {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        log::warn!("GLR training stopped after {iterations} iterations without converging");
    }
    Ok(GlrOutcome {
        metric: MetricMatrix::new(m)?,
        objective: q,
        diagnostics: GlrDiagnostics {
            objective: history,
            iterations,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        },
        converged,
    })
}
