//! Extreme eigenpairs and Gershgorin disc arithmetic.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct EigenPair<T> {
    pub value: T,
    /// Unit norm, largest-magnitude entry positive.
    pub vector: Vec<T>,
}

const POWER_MAX_ITERS: usize = 20_000;

/// Entries smaller than this are clamped before inversion into a scale.
pub const SCALE_CLAMP: f64 = 1e-8;

fn canonical_sign<T: Scalar>(v: &mut [T]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < T::zero()) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

fn normalize<T: Scalar>(v: &mut [T]) -> T {
    let n = linalg::norm(v);
    if n > T::zero() {
        for x in v.iter_mut() {
            *x = *x / n;
        }
    }
    n
}

/// Largest Gershgorin right end, an upper bound on every eigenvalue.
fn gershgorin_upper<T: Scalar>(m: &Matrix<T>) -> T {
    (0..m.rows())
        .map(|i| {
            let r: T = (0..m.cols()).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            m[(i, i)] + r
        })
        .fold(T::neg_infinity(), T::max)
}

fn residual<T: Scalar>(m: &Matrix<T>, v: &[T], lam: T) -> T {
    let mv = m.matvec(v);
    let r: Vec<T> = mv.iter().zip(v).map(|(&a, &b)| a - lam * b).collect();
    linalg::norm(&r)
}

fn power_iteration<T: Scalar>(m: &Matrix<T>) -> Option<EigenPair<T>> {
    let n = m.rows();
    let sigma = gershgorin_upper(m);
    let scale = T::one().max(m.max_abs());
    let tol = T::tol(1e-12) * scale;
    // non-symmetric start so that no eigenvector is missed by symmetry
    let mut v: Vec<T> = (0..n).map(|i| T::one() + T::c(i as f64 + 1.0).sqrt() / T::c(n as f64 + 1.0)).collect();
    normalize(&mut v);
    let mut lam = m.quad_form(&v);
    for _ in 0..POWER_MAX_ITERS {
        let mv = m.matvec(&v);
        let mut w: Vec<T> = v.iter().zip(&mv).map(|(&a, &b)| sigma * a - b).collect();
        if normalize(&mut w) == T::zero() {
            return None;
        }
        v = w;
        lam = m.quad_form(&v);
        if residual(m, &v, lam) <= tol {
            break;
        }
    }
    let min_diag = m.diag().into_iter().fold(T::infinity(), T::min);
    let accept = T::tol(1e-10) * scale;
    if residual(m, &v, lam) > accept || lam > min_diag + accept {
        return None;
    }
    canonical_sign(&mut v);
    Some(EigenPair { value: lam, vector: v })
}

/// Smallest eigenpair of a symmetric matrix.
///
/// Shifted power iteration on `σI − M` with `σ` the largest Gershgorin right
/// end. If it stalls (tiny spectral gap) or lands on a non-minimal eigenpair,
/// a full Jacobi decomposition is used instead.
pub fn min_eigpair<T: Scalar>(m: &Matrix<T>) -> Result<EigenPair<T>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.rows(),
            got: m.cols(),
        });
    }
    if m.rows() == 0 {
        return Err(Error::Validation("empty matrix".into()));
    }
    if let Some(p) = power_iteration(m) {
        return Ok(p);
    }
    log::debug!("power iteration stalled; falling back to Jacobi");
    let e = linalg::sym_eigen(m)?;
    let mut v = e.vector(0);
    canonical_sign(&mut v);
    Ok(EigenPair {
        value: e.values[0],
        vector: v,
    })
}

/// Gershgorin left end of every row: `M_ii − Σ_{j≠i} |M_ij|`.
pub fn gct_left_ends<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    (0..m.rows())
        .map(|i| {
            let r: T = (0..m.cols()).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            m[(i, i)] - r
        })
        .collect()
}

/// Smallest Gershgorin left end; never exceeds `λ_min`.
pub fn gct_lower_bound<T: Scalar>(m: &Matrix<T>) -> T {
    gct_left_ends(m).into_iter().fold(T::infinity(), T::min)
}

/// Left ends of the discs of `S M S⁻¹`, `S = diag(s)`.
pub fn scaled_disc_left_ends<T: Scalar>(m: &Matrix<T>, s: &[T]) -> Result<Vec<T>> {
    let k = m.rows();
    if s.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: s.len() });
    }
    if let Some(i) = s.iter().position(|&x| x == T::zero()) {
        return Err(Error::ZeroScale(i));
    }
    Ok((0..k)
        .map(|i| {
            let r: T = (0..k)
                .filter(|&j| j != i)
                .map(|j| (s[i] * m[(i, j)] / s[j]).abs())
                .sum();
            m[(i, i)] - r
        })
        .collect())
}

/// Connected components of the off-diagonal support of `m`.
pub fn support_components<T: Scalar>(m: &Matrix<T>) -> Vec<Vec<usize>> {
    let k = m.rows();
    let mut comp = vec![usize::MAX; k];
    let mut out = Vec::new();
    for start in 0..k {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut head = 0;
        while head < members.len() {
            let u = members[head];
            head += 1;
            for w in 0..k {
                if w != u && comp[w] == usize::MAX && m[(u, w)] != T::zero() {
                    comp[w] = id;
                    members.push(w);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Scaling vector for the disc constraints.
#[derive(Clone, Debug)]
pub struct DiscScaling<T> {
    /// `s_i = 1 / v_i`.
    pub s: Vec<T>,
    /// First eigenvector of each support component, stitched together.
    pub v: Vec<T>,
    /// Entries that had to be clamped away from zero.
    pub clamped: usize,
}

/// Builds `s` from the smallest eigenvector of every connected component of
/// `M`'s off-diagonal support. On a component that is a connected balanced
/// signed graph the scaled discs then all align at that component's `λ_min`.
pub fn disc_scaling<T: Scalar>(m: &Matrix<T>) -> Result<DiscScaling<T>> {
    let k = m.rows();
    let mut v = vec![T::one(); k];
    for comp in support_components(m) {
        if comp.len() == 1 {
            continue;
        }
        let sub = m.submatrix(&comp);
        let p = min_eigpair(&sub)?;
        for (a, &i) in comp.iter().enumerate() {
            v[i] = p.vector[a];
        }
    }
    let floor = T::c(SCALE_CLAMP);
    let mut clamped = 0;
    let s = v
        .iter()
        .map(|&x| {
            if x.abs() < floor {
                clamped += 1;
                if x < T::zero() {
                    -T::one() / floor
                } else {
                    T::one() / floor
                }
            } else {
                T::one() / x
            }
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} eigenvector entries clamped to ±{SCALE_CLAMP}");
    }
    Ok(DiscScaling { s, v, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn diagonal_min_pair() {
        let p = min_eigpair(&Matrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_relative_eq!(p.value, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.vector[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn path_laplacian_like_pair() {
        let m = Matrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]);
        let p = min_eigpair(&m).unwrap();
        assert_relative_eq!(p.value, 1.0, epsilon = 1e-12);
        let h = 0.5f64.sqrt();
        assert_relative_eq!(p.vector[0], h, epsilon = 1e-9);
        assert_relative_eq!(p.vector[1], h, epsilon = 1e-9);
    }

    #[test]
    fn identity_residual() {
        let m = Matrix::<f64>::identity(5);
        let p = min_eigpair(&m).unwrap();
        assert_relative_eq!(p.value, 1.0, epsilon = 1e-12);
        assert!(residual(&m, &p.vector, p.value) < 1e-12);
        assert_relative_eq!(linalg::norm(&p.vector), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sign_convention() {
        let p = min_eigpair(&Matrix::<f64>::from_rows(&[[1.0, 2.0], [2.0, 1.0]])).unwrap();
        assert_relative_eq!(p.value, -1.0, epsilon = 1e-12);
        let big = if p.vector[0].abs() >= p.vector[1].abs() { p.vector[0] } else { p.vector[1] };
        assert!(big > 0.0);
    }

    #[test]
    fn gct_examples() {
        assert_eq!(gct_lower_bound(&Matrix::from_diag(&[1.0, 2.0])), 1.0);
        assert_eq!(gct_lower_bound(&Matrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]])), 1.0);
        let m = Matrix::from_rows(&[[1.0, 0.5], [0.5, 4.0]]);
        assert_eq!(gct_lower_bound(&m), 0.5);
        let exact = (5.0 - 10f64.sqrt()) / 2.0;
        assert_relative_eq!(linalg::lambda_min(&m).unwrap(), exact, epsilon = 1e-12);
    }

    #[test]
    fn scaled_left_ends_examples() {
        let m = Matrix::from_rows(&[[2.0, -1.0], [-1.0, 2.0]]);
        assert_eq!(scaled_disc_left_ends(&m, &[1.0, 1.0]).unwrap(), gct_left_ends(&m));
        let s = [2f64.sqrt(), 2f64.sqrt()];
        let l = scaled_disc_left_ends(&m, &s).unwrap();
        assert_relative_eq!(l[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(l[1], 1.0, epsilon = 1e-14);
        let lap = Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]);
        let l = scaled_disc_left_ends(&lap, &s).unwrap();
        assert!(l.iter().all(|x| x.abs() < 1e-14));
        assert!(matches!(scaled_disc_left_ends(&m, &[1.0, 0.0]), Err(Error::ZeroScale(1))));
    }

    #[test]
    fn scaling_on_disconnected_support() {
        // two components {0,2} and {1}
        let m = Matrix::from_rows(&[[3.0, 0.0, -1.0], [0.0, 5.0, 0.0], [-1.0, 0.0, 2.0]]);
        let sc = disc_scaling(&m).unwrap();
        assert_eq!(sc.clamped, 0);
        assert_eq!(sc.s[1], 1.0);
        let l = scaled_disc_left_ends(&m, &sc.s).unwrap();
        let lam = (5.0 - 5f64.sqrt()) / 2.0;
        assert_relative_eq!(l[0], lam, epsilon = 1e-9);
        assert_relative_eq!(l[2], lam, epsilon = 1e-9);
        assert_eq!(l[1], 5.0);
    }

    fn sym(v: &[f64], k: usize) -> Matrix<f64> {
        Matrix::from_fn(k, k, |i, j| v[(i.min(j) * k + i.max(j)) % v.len()])
    }

    proptest! {
        #[test]
        fn gct_bounds_lambda_min(v in proptest::collection::vec(-5.0f64..5.0, 16), k in 1usize..5) {
            let m = sym(&v, k);
            prop_assert!(gct_lower_bound(&m) <= linalg::lambda_min(&m).unwrap() + 1e-12);
        }

        #[test]
        fn min_pair_matches_jacobi(v in proptest::collection::vec(-5.0f64..5.0, 25), k in 1usize..6) {
            let m = sym(&v, k);
            let p = min_eigpair(&m).unwrap();
            let lmin = linalg::lambda_min(&m).unwrap();
            prop_assert!((p.value - lmin).abs() <= 1e-8 * (1.0 + m.max_abs()));
            prop_assert!(residual(&m, &p.vector, p.value) <= 1e-8 * (1.0 + m.max_abs()));
        }

        #[test]
        fn similarity_keeps_spectrum(v in proptest::collection::vec(-3.0f64..3.0, 16), s in proptest::collection::vec(0.2f64..5.0, 4)) {
            let m = sym(&v, 4);
            let sms = Matrix::from_fn(4, 4, |i, j| s[i] * m[(i, j)] / s[j]);
            let e = linalg::sym_eigen(&m).unwrap();
            for (k, &lam) in e.values.iter().enumerate() {
                // S v is an eigenvector of S M S⁻¹ for the same eigenvalue
                let sv: Vec<f64> = e.vector(k).iter().zip(&s).map(|(a, b)| a * b).collect();
                let lhs = sms.matvec(&sv);
                let err: f64 = lhs.iter().zip(&sv).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(err <= 1e-8 * (1.0 + linalg::norm(&sv)));
            }
        }
    }
}
