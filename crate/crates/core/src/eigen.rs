//! Eigendecomposition helpers for the small dense real matrices this crate
//! works with (cross-section dimensions are single digits).
//!
//! Eigenvalues come from the real Schur form. Eigenvectors are recovered per
//! eigenvalue: for real λ as the right-singular vector of `M − λI` at its
//! smallest singular value (robust for multiple and zero eigenvalues), for
//! complex λ by inverse iteration with a complex LU factorisation. Every pair
//! is residual-checked so silent eigensolver failures cannot leak into
//! verdicts.

use nalgebra::{Complex, DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum EigenError {
    #[error("eigenvalue computation did not converge for a {0}x{0} matrix")]
    SchurFailure(usize),
    #[error("eigenvector residual {residual:.3e} exceeds tolerance for eigenvalue {lambda}")]
    BadResidual { lambda: Complex64, residual: f64 },
}

/// An eigenvalue with a unit-norm eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: Complex64,
    pub vector: DVector<Complex64>,
}

/// All eigenvalues, sorted by descending modulus, then descending real part,
/// then ascending imaginary part (conjugates adjacent, deterministic order).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>, EigenError> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "eigenvalues of a non-square matrix");
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, 10_000)
        .ok_or(EigenError::SchurFailure(n))?;
    let mut values: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    Ok(values)
}

/// Full set of eigenpairs in the same deterministic order as [`eigenvalues`].
pub fn eigenpairs(m: &DMatrix<f64>) -> Result<Vec<EigenPair>, EigenError> {
    let values = eigenvalues(m)?;
    let scale = m.abs().max().max(1.0);
    let mut pairs = Vec::with_capacity(values.len());
    let mut i = 0;
    while i < values.len() {
        let lambda = values[i];
        if lambda.im.abs() <= 1e-14 * (1.0 + lambda.norm()) {
            let v = real_eigenvector(m, lambda.re);
            let v = v.map(|x| Complex64::new(x, 0.0));
            check_residual(m, lambda, &v, scale)?;
            pairs.push(EigenPair { value: lambda, vector: v });
            i += 1;
        } else {
            // Conjugate pair: compute one vector, conjugate for the other.
            let v = complex_eigenvector(m, lambda)?;
            check_residual(m, lambda, &v, scale)?;
            let conj_value = lambda.conj();
            let conj_vector = v.map(|x| x.conj());
            pairs.push(EigenPair { value: lambda, vector: v });
            if i + 1 < values.len() {
                check_residual(m, conj_value, &conj_vector, scale)?;
                pairs.push(EigenPair { value: conj_value, vector: conj_vector });
            }
            i += 2;
        }
    }
    Ok(pairs)
}

fn check_residual(
    m: &DMatrix<f64>,
    lambda: Complex64,
    v: &DVector<Complex64>,
    scale: f64,
) -> Result<(), EigenError> {
    let mc = m.map(|x| Complex64::new(x, 0.0));
    let residual = (&mc * v - v * lambda).norm();
    if residual > 1e-7 * scale {
        return Err(EigenError::BadResidual { lambda, residual });
    }
    Ok(())
}

/// Right-singular vector of `M − λI` at the smallest singular value, scaled to
/// unit Euclidean norm with a deterministic sign (largest-|·| component > 0).
fn real_eigenvector(m: &DMatrix<f64>, lambda: f64) -> DVector<f64> {
    let n = m.nrows();
    let mut shifted = m.clone();
    for i in 0..n {
        shifted[(i, i)] -= lambda;
    }
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut v: DVector<f64> = v_t.row(n - 1).transpose();
    // Deterministic orientation.
    let mut pivot = 0;
    for i in 0..n {
        if v[i].abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Inverse iteration on `M − λI` in complex arithmetic; matrices here are tiny
/// so a handful of LU solves is cheap and converges immediately for the
/// well-separated eigenvalues this crate encounters.
fn complex_eigenvector(
    m: &DMatrix<f64>,
    lambda: Complex64,
) -> Result<DVector<Complex64>, EigenError> {
    let n = m.nrows();
    let scale = m.abs().max().max(1.0);
    let mc = m.map(|x| Complex64::new(x, 0.0));
    // Slightly off-shifted so the LU stays invertible at machine precision.
    let mut jitter = 1e-13 * scale;
    for _attempt in 0..4 {
        let shift = lambda + Complex64::new(jitter, jitter);
        let mut shifted = mc.clone();
        for i in 0..n {
            shifted[(i, i)] -= shift;
        }
        let lu = shifted.lu();
        // Deterministic start with components decaying in index.
        let mut v = DVector::from_fn(n, |i, _| {
            Complex64::new(1.0 / (i as f64 + 1.0), 0.5 / (i as f64 + 2.0))
        });
        v /= Complex::from(v.norm());
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(next) => {
                    let norm = next.norm();
                    if !norm.is_finite() || norm == 0.0 {
                        ok = false;
                        break;
                    }
                    v = next / Complex::from(norm);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            // Deterministic phase: rotate the largest-|·| component to the
            // positive real axis.
            let mut pivot = 0;
            for i in 0..n {
                if v[i].norm() > v[pivot].norm() {
                    pivot = i;
                }
            }
            let phase = v[pivot] / Complex::from(v[pivot].norm());
            let v = v.map(|x| x / phase);
            return Ok(v);
        }
        jitter *= 100.0;
    }
    Err(EigenError::BadResidual {
        lambda,
        residual: f64::INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quadratic_roots(trace: f64, det: f64) -> (f64, f64) {
        // Oracle for 2×2 spectra with real roots.
        let disc = (trace * trace - 4.0 * det).sqrt();
        ((trace + disc) / 2.0, (trace - disc) / 2.0)
    }

    #[test]
    fn two_by_two_real_spectrum_matches_quadratic_oracle() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0 / 7.0, 1.0, 8.0 / 7.0, 0.0]);
        let (l1, l2) = quadratic_roots(2.0 / 7.0, -8.0 / 7.0);
        let values = eigenvalues(&m).unwrap();
        assert_abs_diff_eq!(values[0].re, l1, epsilon = 1e-12);
        assert_abs_diff_eq!(values[0].im, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(values[1].re, l2, epsilon = 1e-12);
    }

    #[test]
    fn complex_pair_detected_and_residual_checked() {
        // Rotation-like matrix with eigenvalues ±i√2.
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 1.0, 0.0]);
        let pairs = eigenpairs(&m).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_abs_diff_eq!(pairs[0].value.norm(), 2.0f64.sqrt(), epsilon = 1e-12);
        assert!(pairs[0].value.im != 0.0);
        assert_abs_diff_eq!(
            (pairs[0].value + pairs[1].value).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn eigenvectors_satisfy_definition() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 3.0, 0.1, -0.5, 3.0, 0.2, 0.0, 0.3, -1.0],
        );
        let mc = m.map(|x| Complex64::new(x, 0.0));
        for pair in eigenpairs(&m).unwrap() {
            let residual = (&mc * &pair.vector - &pair.vector * pair.value).norm();
            assert!(residual < 1e-9, "residual {residual}");
            assert_abs_diff_eq!(pair.vector.norm(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_eigenvalue_vector_from_rank_deficient_matrix() {
        // Rank-2 3×3 matrix: rows 0 and 1 independent, row 2 = row 0 + row 1.
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 2.0, 3.0, 0.0, 1.0, 1.0, 1.0, 3.0, 4.0],
        );
        let pairs = eigenpairs(&m).unwrap();
        let zero = pairs
            .iter()
            .find(|p| p.value.norm() < 1e-10)
            .expect("structural zero eigenvalue");
        let mc = m.map(|x| Complex64::new(x, 0.0));
        assert!((&mc * &zero.vector).norm() < 1e-10);
    }

    #[test]
    fn empty_matrix_has_empty_spectrum() {
        let m = DMatrix::<f64>::zeros(0, 0);
        assert!(eigenvalues(&m).unwrap().is_empty());
    }
}
