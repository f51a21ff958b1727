//! Gershgorin-disc linearised training for the GLMNN objective.
//!
//! `M` is kept as the generalised Laplacian of a balanced signed graph over
//! the K feature nodes. One row/column of `M` (plus the whole diagonal) is
//! re-optimised at a time by a linear program whose PSD surrogate is the set
//! of scaled Gershgorin disc left ends of `S M S⁻¹`, `s_i = 1/v_i`, `v` the
//! first eigenvector of the iterate at the start of the outer iteration.
//!
//! Row LPs have one variable per diagonal entry, one per off-diagonal entry
//! of the row (sign fixed by the colouring) and one slack `δ` per triplet.
//! They are solved through their dual, which has only `2K − 1` rows.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::eig::disc_scaling;
use crate::error::{Error, Result};
use crate::glmnn::GlmnnProblem;
use crate::graph::MetricMatrix;
use crate::linalg::{dot, Matrix};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Color {
    Blue,
    Red,
}

impl Color {
    pub fn flip(self) -> Self {
        match self {
            Color::Blue => Color::Red,
            Color::Red => Color::Blue,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdpaConfig {
    pub rel_tol: f64,
    pub max_outer: usize,
    pub max_sweeps: usize,
}

impl Default for GdpaConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-4,
            max_outer: 50,
            max_sweeps: 10,
        }
    }
}

impl GdpaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || self.max_outer == 0 || self.max_sweeps == 0 {
            return Err(Error::Validation(
                "GDPA needs rel_tol > 0 and at least one outer iteration and sweep".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GdpaState<T> {
    pub metric: Matrix<T>,
    pub coloring: Vec<Color>,
    /// Scale defining the disc constraints of the current outer iteration.
    pub s: Vec<T>,
    /// GLMNN value plus trace regulariser at `metric`.
    pub objective: T,
    pub lp_count: usize,
    pub outer_iters: usize,
}

/// `M⁰ = I`, every node blue.
pub fn init_state<T: Scalar>(problem: &GlmnnProblem<T>) -> Result<GdpaState<T>> {
    let k = problem.dim();
    if k == 0 {
        return Err(Error::Validation("K must be at least 1".into()));
    }
    let metric = Matrix::identity(k);
    let s = disc_scaling(&metric)?.s;
    Ok(GdpaState {
        objective: problem.objective(&metric),
        metric,
        coloring: vec![Color::Blue; k],
        s,
        lp_count: 0,
        outer_iters: 0,
    })
}

/// Row `row` of the block-coordinate LP under one colour hypothesis.
///
/// Variable vector `z = (M_00 … M_{K−1,K−1}, u_j for j ≠ row)`, with
/// `M_{row,j} = σ_j u_j`, `u ≥ 0`; `σ_j = −1` when `j` shares the
/// hypothesised colour of `row`, else `+1`.
#[derive(Clone, Debug)]
pub struct RowSubproblem<T> {
    pub row: usize,
    pub hypothesis: Color,
    k: usize,
    others: Vec<usize>,
    sigma: Vec<T>,
    cost: Vec<T>,
    constant: T,
    trip_g: Vec<Vec<T>>,
    trip_h: Vec<T>,
    disc: Vec<Vec<T>>,
    disc_rhs: Vec<T>,
    rho: T,
}

/// Slack on the disc rows so the frozen point survives round-off.
fn disc_slack<T: Scalar>(m: &Matrix<T>) -> T {
    T::tol(1e-11) * T::one().max(m.diag().into_iter().fold(T::zero(), T::max))
}

impl<T: Scalar> RowSubproblem<T> {
    pub fn n_z(&self) -> usize {
        2 * self.k - 1
    }

    pub fn n_triplets(&self) -> usize {
        self.trip_h.len()
    }

    /// `d(M) = constant + gᵀz` for one feature difference.
    fn pair_linear(&self, m: &Matrix<T>, delta: &[T]) -> (Vec<T>, T) {
        let k = self.k;
        let i = self.row;
        let two = T::two();
        let mut g = Vec::with_capacity(self.n_z());
        let mut variable = T::zero();
        for a in 0..k {
            let sq = delta[a] * delta[a];
            g.push(sq);
            variable = variable + m[(a, a)] * sq;
        }
        for (&j, &sg) in self.others.iter().zip(&self.sigma) {
            let p = two * delta[i] * delta[j];
            g.push(sg * p);
            variable = variable + m[(i, j)] * p;
        }
        (g, m.quad_form(delta) - variable)
    }

    pub fn build(
        state: &GdpaState<T>,
        row: usize,
        hypothesis: Color,
        problem: &GlmnnProblem<T>,
    ) -> Result<Self> {
        let m = &state.metric;
        let k = m.rows();
        if row >= k {
            return Err(Error::IndexOutOfRange { index: row, len: k });
        }
        if problem.set.is_empty() {
            return Err(Error::EmptyProblem);
        }
        let others: Vec<usize> = (0..k).filter(|&j| j != row).collect();
        let sigma: Vec<T> = others
            .iter()
            .map(|&j| {
                if state.coloring[j] == hypothesis {
                    -T::one()
                } else {
                    T::one()
                }
            })
            .collect();
        let mut sp = Self {
            row,
            hypothesis,
            k,
            others,
            sigma,
            cost: Vec::new(),
            constant: T::zero(),
            trip_g: Vec::new(),
            trip_h: Vec::new(),
            disc: Vec::new(),
            disc_rhs: Vec::new(),
            rho: T::c(problem.config.rho),
        };
        let nz = sp.n_z();

        let mut cost = vec![T::zero(); nz];
        let mut constant = T::zero();
        for &(p, q) in &problem.set.same_pairs {
            let (g, c) = sp.pair_linear(m, problem.diff(p, q));
            for (o, v) in cost.iter_mut().zip(g) {
                *o = *o + v;
            }
            constant = constant + c;
        }
        let eps = T::c(problem.config.eps_trace);
        for c in cost.iter_mut().take(k) {
            *c = *c + eps;
        }

        let gamma = T::c(problem.config.gamma);
        let mut trip_g = Vec::with_capacity(problem.set.triplets.len());
        let mut trip_h = Vec::with_capacity(problem.set.triplets.len());
        for &(p, q, r) in &problem.set.triplets {
            let (gq, cq) = sp.pair_linear(m, problem.diff(p, q));
            let (gr, cr) = sp.pair_linear(m, problem.diff(p, r));
            trip_g.push(gq.iter().zip(&gr).map(|(&a, &b)| a - b).collect());
            trip_h.push(cq - cr + gamma);
        }

        let s = &state.s;
        let tau = disc_slack(m);
        let mut disc = Vec::with_capacity(k);
        let mut disc_rhs = Vec::with_capacity(k);
        for kk in 0..k {
            let mut d = vec![T::zero(); nz];
            d[kk] = T::one();
            if kk == row {
                for (idx, &j) in sp.others.iter().enumerate() {
                    d[k + idx] = -(s[row] / s[j]).abs();
                }
                disc_rhs.push(-tau);
            } else {
                let idx = if kk < row { kk } else { kk - 1 };
                d[k + idx] = -(s[kk] / s[row]).abs();
                let frozen: T = (0..k)
                    .filter(|&j| j != kk && j != row)
                    .map(|j| (s[kk] / s[j]).abs() * m[(kk, j)].abs())
                    .sum();
                disc_rhs.push(frozen - tau);
            }
            disc.push(d);
        }

        sp.cost = cost;
        sp.constant = constant;
        sp.trip_g = trip_g;
        sp.trip_h = trip_h;
        sp.disc = disc;
        sp.disc_rhs = disc_rhs;
        Ok(sp)
    }

    /// Primal LP over `(z, δ)`, all nonnegative. Its optimal value plus
    /// [`Self::constant`] is the regularised GLMNN objective.
    pub fn primal_lp(&self) -> LinearProgram<T> {
        let nz = self.n_z();
        let nt = self.n_triplets();
        let mut obj = self.cost.clone();
        obj.extend(std::iter::repeat_n(self.rho, nt));
        let mut lp = LinearProgram::new(obj);
        for (t, (g, &h)) in self.trip_g.iter().zip(&self.trip_h).enumerate() {
            let mut a: Vec<T> = g.iter().map(|&x| -x).collect();
            a.resize(nz + nt, T::zero());
            a[nz + t] = T::one();
            lp.add_ge(a, h);
        }
        for (d, &r) in self.disc.iter().zip(&self.disc_rhs) {
            let mut a = d.clone();
            a.resize(nz + nt, T::zero());
            lp.add_ge(a, r);
        }
        lp
    }

    /// Dual LP over `(λ, ν)`: minimise `−hᵀλ − rᵀν` subject to
    /// `−Gᵀλ + Dᵀν ≤ c`, `0 ≤ λ ≤ ρ`, `ν ≥ 0`.
    pub fn dual_lp(&self) -> LinearProgram<T> {
        let nt = self.n_triplets();
        let k = self.k;
        let mut obj: Vec<T> = self.trip_h.iter().map(|&h| -h).collect();
        obj.extend(self.disc_rhs.iter().map(|&r| -r));
        let mut lp = LinearProgram::new(obj);
        for t in 0..nt {
            lp.set_bounds(t, T::zero(), self.rho);
        }
        for c in 0..self.n_z() {
            let mut a = Vec::with_capacity(nt + k);
            a.extend(self.trip_g.iter().map(|g| -g[c]));
            a.extend(self.disc.iter().map(|d| d[c]));
            lp.add_le(a, self.cost[c]);
        }
        lp
    }

    pub fn constant(&self) -> T {
        self.constant
    }

    /// Objective at `z` with every `δ` at its hinge value.
    pub fn value_at(&self, z: &[T]) -> T {
        let hinge: T = self
            .trip_g
            .iter()
            .zip(&self.trip_h)
            .map(|(g, &h)| (h + dot(g, z)).max(T::zero()))
            .sum();
        self.constant + dot(&self.cost, z) + self.rho * hinge
    }

    /// Smallest disc-row slack at `z` (negative means violated).
    pub fn disc_margin(&self, z: &[T]) -> T {
        self.disc
            .iter()
            .zip(&self.disc_rhs)
            .map(|(d, &r)| dot(d, z) - r)
            .fold(T::infinity(), T::min)
    }

    /// Dual-recovered points can miss disc rows when `s` is badly scaled.
    /// Diagonal `k` enters only disc row `k`, with coefficient 1, so raising
    /// it by the deficit restores every row exactly.
    fn repair_discs(&self, z: &mut [T]) {
        for (kk, (d, &r)) in self.disc.iter().zip(&self.disc_rhs).enumerate() {
            let margin = dot(d, z) - r;
            if margin < T::zero() {
                z[kk] = z[kk] - margin;
            }
        }
    }

    /// Zeroes off-diagonal round-off. Shrinking an off-diagonal only widens
    /// the discs, and exact zeros keep near-empty rows out of the support
    /// components that define the next scale.
    fn snap_offdiagonals(&self, z: &mut [T]) {
        let scale = z.iter().fold(T::one(), |a, &b| a.max(b.abs()));
        let floor = T::tol(1e-10) * scale;
        for u in z[self.k..].iter_mut() {
            if *u < floor {
                *u = T::zero();
            }
        }
    }

    /// The frozen current point expressed as `z` (off-diagonals of the
    /// wrong sign for this hypothesis are reported as negative `u`).
    pub fn frozen_point(&self, m: &Matrix<T>) -> Vec<T> {
        let mut z = m.diag();
        for (&j, &sg) in self.others.iter().zip(&self.sigma) {
            z.push(sg * m[(self.row, j)]);
        }
        z
    }

    pub fn metric_from(&self, base: &Matrix<T>, z: &[T]) -> Matrix<T> {
        let k = self.k;
        let mut m = base.clone();
        for a in 0..k {
            m[(a, a)] = z[a];
        }
        for (idx, (&j, &sg)) in self.others.iter().zip(&self.sigma).enumerate() {
            let v = sg * z[k + idx];
            m[(self.row, j)] = v;
            m[(j, self.row)] = v;
        }
        m
    }

    /// Solves the row LP through its dual. `None` means the hypothesis is
    /// infeasible.
    pub fn solve(&self) -> Result<Option<RowSolution<T>>> {
        let sol = solve_lp(&self.dual_lp())?;
        match sol.status {
            LpStatus::Unbounded => Ok(None),
            LpStatus::Infeasible => Err(Error::NumericalBreakdown(format!(
                "row {} LP is unbounded; increase eps_trace",
                self.row
            ))),
            LpStatus::Optimal => {
                let mut z: Vec<T> = sol.ineq_duals.iter().map(|&y| (-y).max(T::zero())).collect();
                self.snap_offdiagonals(&mut z);
                self.repair_discs(&mut z);
                Ok(Some(RowSolution {
                    value: self.value_at(&z),
                    lp_value: self.constant - sol.value,
                    z,
                }))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct RowSolution<T> {
    pub z: Vec<T>,
    /// Objective recomputed at `z`.
    pub value: T,
    /// Objective reported by the LP.
    pub lp_value: T,
}

/// Result of one row update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowOutcome<T> {
    pub color: Color,
    pub objective: T,
    pub committed: bool,
}

/// Solves the row LP under both colour hypotheses and commits the better one
/// if it does not increase the objective. Ties go to blue.
pub fn choose_color<T: Scalar>(
    state: &mut GdpaState<T>,
    row: usize,
    problem: &GlmnnProblem<T>,
) -> Result<RowOutcome<T>> {
    let blue = RowSubproblem::build(state, row, Color::Blue, problem)?;
    let red = RowSubproblem::build(state, row, Color::Red, problem)?;
    let (sb, sr) = if state.metric.rows() >= 12 {
        rayon::join(|| blue.solve(), || red.solve())
    } else {
        (blue.solve(), red.solve())
    };
    state.lp_count += 2;
    let (sb, sr) = (sb?, sr?);
    let (sub, sol) = match (sb, sr) {
        (None, None) => return Err(Error::BothInfeasible(row)),
        (Some(b), None) => (&blue, b),
        (None, Some(r)) => (&red, r),
        (Some(b), Some(r)) => {
            let tie = T::tol(1e-12) * (T::one() + b.value.abs());
            if r.value < b.value - tie {
                (&red, r)
            } else {
                (&blue, b)
            }
        }
    };
    let candidate = sub.metric_from(&state.metric, &sol.z);
    let value = problem.objective(&candidate);
    let slack = T::tol(1e-12) * (T::one() + state.objective.abs());
    if value <= state.objective + slack {
        state.metric = candidate;
        state.coloring[row] = sub.hypothesis;
        state.objective = value;
        Ok(RowOutcome {
            color: sub.hypothesis,
            objective: value,
            committed: true,
        })
    } else {
        Ok(RowOutcome {
            color: state.coloring[row],
            objective: state.objective,
            committed: false,
        })
    }
}

fn rel_change<T: Scalar>(prev: T, cur: T) -> T {
    let d = (prev - cur).abs();
    if prev == T::zero() {
        d
    } else {
        d / prev.abs()
    }
}

/// Sweeps rows `0..K` until the sweep-to-sweep change drops below `rel_tol`,
/// then refreshes the scale from the new iterate's first eigenvectors.
pub fn gdpa_iterate<T: Scalar>(
    state: &mut GdpaState<T>,
    problem: &GlmnnProblem<T>,
    config: &GdpaConfig,
    on_commit: &mut dyn FnMut(&GdpaState<T>, usize),
) -> Result<()> {
    let k = state.metric.rows();
    let tol = T::c(config.rel_tol);
    for _ in 0..config.max_sweeps {
        let before = state.objective;
        for row in 0..k {
            if choose_color(state, row, problem)?.committed {
                on_commit(state, row);
            }
        }
        if rel_change(before, state.objective) < tol {
            break;
        }
    }
    state.s = disc_scaling(&state.metric)?.s;
    state.outer_iters += 1;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdpaDiagnostics {
    /// Objective at the start and after every outer iteration.
    pub objective: Vec<f64>,
    pub lp_count: usize,
    pub outer_iters: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct GdpaOutcome<T> {
    pub metric: MetricMatrix<T>,
    pub coloring: Vec<Color>,
    pub objective: T,
    pub diagnostics: GdpaDiagnostics,
    pub converged: bool,
}

pub fn train_gdpa<T: Scalar>(problem: &GlmnnProblem<T>, config: &GdpaConfig) -> Result<GdpaOutcome<T>> {
    train_gdpa_observed(problem, config, &mut |_, _| {})
}

/// [`train_gdpa`] with a callback after every committed row update.
pub fn train_gdpa_observed<T: Scalar>(
    problem: &GlmnnProblem<T>,
    config: &GdpaConfig,
    on_commit: &mut dyn FnMut(&GdpaState<T>, usize),
) -> Result<GdpaOutcome<T>> {
    config.validate()?;
    let start = Instant::now();
    let mut state = init_state(problem)?;
    let mut history = vec![state.objective.to_f64_lossy()];
    let tol = T::c(config.rel_tol);
    let mut converged = false;
    for _ in 0..config.max_outer {
        let prev = state.objective;
        gdpa_iterate(&mut state, problem, config, on_commit)?;
        history.push(state.objective.to_f64_lossy());
        if rel_change(prev, state.objective) < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("GDPA stopped after {} outer iterations", config.max_outer);
    }
    let metric = MetricMatrix::new(state.metric.clone())
        .map_err(|e| Error::NumericalBreakdown(format!("GDPA iterate left the PSD cone: {e}")))?;
    Ok(GdpaOutcome {
        metric,
        coloring: state.coloring.clone(),
        objective: state.objective,
        diagnostics: GdpaDiagnostics {
            objective: history,
            lp_count: state.lp_count,
            outer_iters: state.outer_iters,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        },
        converged,
    })
}

/// Two-colours the off-diagonal sign pattern of `m` (negative entries join
/// same colours, positive entries different colours). `None` if the signed
/// graph is unbalanced. Each component's first node is blue.
pub fn sign_coloring<T: Scalar>(m: &Matrix<T>) -> Option<Vec<Color>> {
    let k = m.rows();
    let mut color: Vec<Option<Color>> = vec![None; k];
    for start in 0..k {
        if color[start].is_some() {
            continue;
        }
        color[start] = Some(Color::Blue);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            let cu = color[u]?;
            for w in 0..k {
                let x = m[(u, w)];
                if w == u || x == T::zero() {
                    continue;
                }
                let want = if x < T::zero() { cu } else { cu.flip() };
                match color[w] {
                    None => {
                        color[w] = Some(want);
                        stack.push(w);
                    }
                    Some(c) if c != want => return None,
                    _ => {}
                }
            }
        }
    }
    color.into_iter().collect()
}

/// Checks that `m` is balanced and that `coloring` agrees with its sign
/// pattern (equivalently: matches the BFS colouring up to a flip per
/// component).
pub fn check_balance<T: Scalar>(m: &Matrix<T>, coloring: &[Color]) -> std::result::Result<(), String> {
    if sign_coloring(m).is_none() {
        return Err("sign pattern is not balanced".into());
    }
    let k = m.rows();
    for i in 0..k {
        for j in (i + 1)..k {
            let x = m[(i, j)];
            if x == T::zero() {
                continue;
            }
            let same = coloring[i] == coloring[j];
            if same == (x > T::zero()) {
                return Err(format!("entry ({i}, {j}) = {x} disagrees with the colouring"));
            }
        }
    }
    Ok(())
}
