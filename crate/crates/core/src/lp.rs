//! Dense two-phase simplex for small linear programs.
//!
//! Variables carry explicit lower/upper bounds which are handled implicitly
//! (bound flipping) rather than as extra rows. Pricing is Dantzig's rule,
//! switching to Bland's rule after a run of degenerate pivots. Dual values
//! are read off the final reduced costs of each row's identity column.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct LinearProgram<T> {
    /// Minimise `objectiveᵀ x`.
    pub objective: Vec<T>,
    /// Rows `(a, b)` meaning `aᵀx ≤ b`.
    pub inequalities: Vec<(Vec<T>, T)>,
    /// Rows `(a, b)` meaning `aᵀx = b`.
    pub equalities: Vec<(Vec<T>, T)>,
    /// Per-variable lower bound (may be `-inf`).
    pub lower: Vec<T>,
    /// Per-variable upper bound (may be `+inf`).
    pub upper: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Primal point; empty unless optimal.
    pub x: Vec<T>,
    pub value: T,
    /// Dual value of each inequality row (`≤ 0` at optimality for a minimisation).
    pub ineq_duals: Vec<T>,
    pub eq_duals: Vec<T>,
    pub pivots: usize,
}

impl<T: Scalar> LinearProgram<T> {
    /// A program over `n` nonnegative variables with no rows.
    pub fn new(objective: Vec<T>) -> Self {
        let n = objective.len();
        Self {
            objective,
            inequalities: Vec::new(),
            equalities: Vec::new(),
            lower: vec![T::zero(); n],
            upper: vec![T::infinity(); n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, a: Vec<T>, b: T) {
        self.inequalities.push((a, b));
    }

    /// Stored as `-aᵀx ≤ -b`.
    pub fn add_ge(&mut self, a: Vec<T>, b: T) {
        self.inequalities
            .push((a.into_iter().map(|x| -x).collect(), -b));
    }

    pub fn add_eq(&mut self, a: Vec<T>, b: T) {
        self.equalities.push((a, b));
    }

    pub fn set_bounds(&mut self, j: usize, lower: T, upper: T) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        for len in [self.lower.len(), self.upper.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, got: len });
            }
        }
        for (a, b) in self.inequalities.iter().chain(&self.equalities) {
            if a.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: a.len(),
                });
            }
            if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation("non-finite LP coefficient".into()));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite LP objective".into()));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(Error::Validation(format!("NaN bound on variable {j}")));
            }
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (a, b) in &self.inequalities {
            worst = worst.max(crate::linalg::dot(a, x) - *b);
        }
        for (a, b) in &self.equalities {
            worst = worst.max((crate::linalg::dot(a, x) - *b).abs());
        }
        for j in 0..x.len() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }

    pub fn objective_at(&self, x: &[T]) -> T {
        crate::linalg::dot(&self.objective, x)
    }
}

/// How an original variable maps onto standard-form columns.
#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// `x = offset + col`
    Shift { col: usize, offset: f64 },
    /// `x = offset - col`
    Mirror { col: usize, offset: f64 },
    /// `x = pos - neg`
    Split { pos: usize, neg: usize },
}

struct Tableau<T> {
    m: usize,
    n: usize,
    /// `m × n`, row-major, holds `B⁻¹A`.
    a: Vec<T>,
    /// Current values of the basic variables.
    beta: Vec<T>,
    upper: Vec<T>,
    basis: Vec<usize>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
    /// Reduced costs.
    d: Vec<T>,
    enterable: Vec<bool>,
    pivots: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
}

impl<T: Scalar> Tableau<T> {
    #[inline]
    fn at(&self, r: usize, j: usize) -> T {
        self.a[r * self.n + j]
    }

    fn price(&mut self, cost: &[T]) {
        self.d = cost.to_vec();
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb == T::zero() {
                continue;
            }
            for j in 0..self.n {
                self.d[j] = self.d[j] - cb * self.a[r * self.n + j];
            }
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let p = self.a[r * n + q];
        for j in 0..n {
            self.a[r * n + j] = self.a[r * n + j] / p;
        }
        let (head, rest) = self.a.split_at_mut(r * n);
        let (prow, tail) = rest.split_at_mut(n);
        for row in head.chunks_mut(n).chain(tail.chunks_mut(n)) {
            let f = row[q];
            if f == T::zero() {
                continue;
            }
            for j in 0..n {
                row[j] = row[j] - f * prow[j];
            }
            row[q] = T::zero();
        }
        let f = self.d[q];
        if f != T::zero() {
            for j in 0..n {
                self.d[j] = self.d[j] - f * prow[j];
            }
            self.d[q] = T::zero();
        }
        let old = self.basis[r];
        self.is_basic[old] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
        self.pivots += 1;
    }

    fn run(&mut self, max_pivots: usize) -> Result<Outcome> {
        let rc_tol = T::tol(1e-10);
        let piv_tol = T::tol(1e-9);
        let degen_tol = T::tol(1e-12);
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if self.pivots > max_pivots {
                return Err(Error::NumericalBreakdown(format!(
                    "simplex exceeded {max_pivots} pivots"
                )));
            }
            // pricing
            let mut enter: Option<(usize, T)> = None;
            let mut best = T::zero();
            for j in 0..self.n {
                if self.is_basic[j] || !self.enterable[j] {
                    continue;
                }
                let dj = self.d[j];
                let dir = if !self.at_upper[j] && dj < -rc_tol && self.upper[j] > T::zero() {
                    T::one()
                } else if self.at_upper[j] && dj > rc_tol {
                    -T::one()
                } else {
                    continue;
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    enter = Some((j, dir));
                }
            }
            let Some((q, dir)) = enter else {
                return Ok(Outcome::Optimal);
            };

            // ratio test
            let mut row_theta = T::infinity();
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_key = T::zero();
            for r in 0..self.m {
                let alpha = dir * self.at(r, q);
                let b = self.basis[r];
                let cand = if alpha > piv_tol {
                    self.beta[r].max(T::zero()) / alpha
                } else if alpha < -piv_tol && self.upper[b].is_finite() {
                    (self.upper[b] - self.beta[r]).max(T::zero()) / (-alpha)
                } else {
                    continue;
                };
                let take = match leave {
                    None => true,
                    Some((lr, _)) => {
                        if cand < row_theta - degen_tol {
                            true
                        } else if cand <= row_theta + degen_tol {
                            if bland {
                                b < self.basis[lr]
                            } else {
                                alpha.abs() > leave_key
                            }
                        } else {
                            false
                        }
                    }
                };
                if take {
                    row_theta = cand;
                    leave = Some((r, alpha < T::zero()));
                    leave_key = alpha.abs();
                }
            }
            let theta = if self.upper[q] < row_theta {
                leave = None;
                self.upper[q]
            } else {
                row_theta
            };
            if !theta.is_finite() {
                return Ok(Outcome::Unbounded);
            }
            if theta <= degen_tol {
                degenerate_run += 1;
                if degenerate_run > 20 {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }

            for r in 0..self.m {
                let alpha = self.at(r, q);
                if alpha != T::zero() {
                    self.beta[r] = self.beta[r] - dir * theta * alpha;
                }
            }
            match leave {
                None => {
                    // bound flip
                    self.at_upper[q] = !self.at_upper[q];
                    self.pivots += 1;
                }
                Some((r, to_upper)) => {
                    let entering_value = if dir > T::zero() {
                        theta
                    } else {
                        self.upper[q] - theta
                    };
                    let out = self.basis[r];
                    self.at_upper[out] = to_upper;
                    self.at_upper[q] = false;
                    self.pivot(r, q);
                    self.beta[r] = entering_value;
                }
            }
        }
    }

    fn value_of(&self, j: usize) -> T {
        if self.is_basic[j] {
            let r = self.basis.iter().position(|&b| b == j).unwrap();
            self.beta[r]
        } else if self.at_upper[j] {
            self.upper[j]
        } else {
            T::zero()
        }
    }
}

/// Solves `lp` with the two-phase bounded simplex.
pub fn solve_lp<T: Scalar>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    lp.validate()?;
    let n_orig = lp.n_vars();

    // Column layout: structural columns, then one slack per inequality,
    // then artificials.
    let mut maps = Vec::with_capacity(n_orig);
    let mut col_upper: Vec<T> = Vec::new();
    let mut col_cost: Vec<T> = Vec::new();
    let mut infeasible_bounds = false;
    for j in 0..n_orig {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l > u {
            infeasible_bounds = true;
        }
        let c = lp.objective[j];
        if l.is_finite() {
            maps.push(VarMap::Shift {
                col: col_upper.len(),
                offset: l.to_f64_lossy(),
            });
            col_upper.push(if u.is_finite() { (u - l).max(T::zero()) } else { T::infinity() });
            col_cost.push(c);
        } else if u.is_finite() {
            maps.push(VarMap::Mirror {
                col: col_upper.len(),
                offset: u.to_f64_lossy(),
            });
            col_upper.push(T::infinity());
            col_cost.push(-c);
        } else {
            let pos = col_upper.len();
            maps.push(VarMap::Split { pos, neg: pos + 1 });
            col_upper.extend([T::infinity(), T::infinity()]);
            col_cost.extend([c, -c]);
        }
    }
    let n_ineq = lp.inequalities.len();
    let n_eq = lp.equalities.len();
    if infeasible_bounds {
        return Ok(infeasible(n_ineq, n_eq));
    }
    let n_struct = col_upper.len();
    let m = n_ineq + n_eq;

    // Standardised rows with rhs adjusted for offsets.
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(m);
    let mut rhs: Vec<T> = Vec::with_capacity(m);
    for (a, b) in lp.inequalities.iter().chain(&lp.equalities) {
        let mut row = vec![T::zero(); n_struct];
        let mut bb = *b;
        for (j, map) in maps.iter().enumerate() {
            let aj = a[j];
            if aj == T::zero() {
                continue;
            }
            match *map {
                VarMap::Shift { col, offset } => {
                    row[col] = aj;
                    bb = bb - aj * T::c(offset);
                }
                VarMap::Mirror { col, offset } => {
                    row[col] = -aj;
                    bb = bb - aj * T::c(offset);
                }
                VarMap::Split { pos, neg } => {
                    row[pos] = aj;
                    row[neg] = -aj;
                }
            }
        }
        rows.push(row);
        rhs.push(bb);
    }

    let mut row_sign = vec![T::one(); m];
    let mut identity_col = vec![0usize; m];
    let mut n_cols = n_struct + n_ineq;
    let mut artificial_of_row: Vec<Option<usize>> = vec![None; m];
    for r in 0..m {
        let is_ineq = r < n_ineq;
        if rhs[r] < T::zero() {
            row_sign[r] = -T::one();
        }
        if is_ineq && row_sign[r] > T::zero() {
            identity_col[r] = n_struct + r;
        } else {
            identity_col[r] = n_cols;
            artificial_of_row[r] = Some(n_cols);
            n_cols += 1;
        }
    }

    let mut a = vec![T::zero(); m * n_cols];
    let mut beta = vec![T::zero(); m];
    for r in 0..m {
        let s = row_sign[r];
        for j in 0..n_struct {
            a[r * n_cols + j] = s * rows[r][j];
        }
        if r < n_ineq {
            a[r * n_cols + n_struct + r] = s;
        }
        if let Some(c) = artificial_of_row[r] {
            a[r * n_cols + c] = T::one();
        }
        beta[r] = s * rhs[r];
    }
    let mut upper = col_upper.clone();
    upper.resize(n_cols, T::infinity());
    let mut cost2 = col_cost.clone();
    cost2.resize(n_cols, T::zero());
    let mut cost1 = vec![T::zero(); n_cols];
    for c in artificial_of_row.iter().flatten() {
        cost1[*c] = T::one();
    }

    let mut is_basic = vec![false; n_cols];
    for &c in &identity_col {
        is_basic[c] = true;
    }
    let mut tab = Tableau {
        m,
        n: n_cols,
        a,
        beta,
        upper,
        basis: identity_col.clone(),
        at_upper: vec![false; n_cols],
        is_basic,
        d: Vec::new(),
        enterable: vec![true; n_cols],
        pivots: 0,
    };
    let max_pivots = 50 * (m + n_cols) + 1000;

    // Phase 1
    let has_artificials = artificial_of_row.iter().any(Option::is_some);
    if has_artificials {
        tab.price(&cost1);
        if let Outcome::Unbounded = tab.run(max_pivots)? {
            return Err(Error::NumericalBreakdown("phase 1 unbounded".into()));
        }
        let infeas: T = artificial_of_row
            .iter()
            .flatten()
            .map(|&c| tab.value_of(c))
            .sum();
        let scale = rhs.iter().fold(T::one(), |s, b| s.max(b.abs()));
        if infeas > T::tol(1e-9) * scale {
            return Ok(infeasible(n_ineq, n_eq));
        }
        // Drive artificials out where possible, then freeze them at zero.
        let piv_tol = T::tol(1e-9);
        for r in 0..m {
            let b = tab.basis[r];
            if artificial_of_row.iter().flatten().any(|&c| c == b) {
                let q = (0..n_struct + n_ineq)
                    .filter(|&j| !tab.is_basic[j])
                    .max_by(|&x, &y| {
                        tab.at(r, x)
                            .abs()
                            .partial_cmp(&tab.at(r, y).abs())
                            .unwrap_or(std::cmp::Ordering::Equal)
                    });
                if let Some(q) = q {
                    if tab.at(r, q).abs() > piv_tol {
                        let val = tab.value_of(q);
                        tab.at_upper[b] = false;
                        tab.pivot(r, q);
                        tab.beta[r] = val;
                        tab.at_upper[q] = false;
                    }
                }
            }
        }
        for c in artificial_of_row.iter().flatten() {
            tab.upper[*c] = T::zero();
            tab.enterable[*c] = false;
            if !tab.is_basic[*c] {
                tab.at_upper[*c] = false;
            }
        }
    }

    // Phase 2
    tab.price(&cost2);
    let outcome = tab.run(max_pivots)?;
    if let Outcome::Unbounded = outcome {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            value: T::neg_infinity(),
            ineq_duals: vec![T::zero(); n_ineq],
            eq_duals: vec![T::zero(); n_eq],
            pivots: tab.pivots,
        });
    }

    let col_val: Vec<T> = (0..n_struct).map(|j| tab.value_of(j)).collect();
    let x: Vec<T> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, offset } => T::c(offset) + col_val[col],
            VarMap::Mirror { col, offset } => T::c(offset) - col_val[col],
            VarMap::Split { pos, neg } => col_val[pos] - col_val[neg],
        })
        .collect();
    let value = lp.objective_at(&x);
    if !value.is_finite() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBreakdown("non-finite simplex iterate".into()));
    }
    let duals: Vec<T> = (0..m).map(|r| -row_sign[r] * tab.d[identity_col[r]]).collect();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        value,
        ineq_duals: duals[..n_ineq].to_vec(),
        eq_duals: duals[n_ineq..].to_vec(),
        pivots: tab.pivots,
    })
}

fn infeasible<T: Scalar>(n_ineq: usize, n_eq: usize) -> LpSolution<T> {
    LpSolution {
        status: LpStatus::Infeasible,
        x: Vec::new(),
        value: T::infinity(),
        ineq_duals: vec![T::zero(); n_ineq],
        eq_duals: vec![T::zero(); n_eq],
        pivots: 0,
    }
}
