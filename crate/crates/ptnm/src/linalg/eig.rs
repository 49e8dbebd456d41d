use super::{ComplexMatrix, LinalgError, Result, C64, ZERO};

/// Spectral decomposition `m = V diag(values) V†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Unitary whose columns are the matching eigenvectors.
    pub vectors: ComplexMatrix,
}

impl Eigen {
    /// `V diag(f(λ)) V†`.
    pub fn rebuild(&self, mut f: impl FnMut(f64) -> f64) -> ComplexMatrix {
        let n = self.values.len();
        let weights: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = self.vectors.data();
        let mut out = vec![ZERO; n * n];
        for (k, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let a = v[i * n + k] * w;
                if a == ZERO {
                    continue;
                }
                for j in i..n {
                    out[i * n + j] += a * v[j * n + k].conj();
                }
            }
        }
        for i in 0..n {
            out[i * n + i].im = 0.0;
            for j in 0..i {
                out[i * n + j] = out[j * n + i].conj();
            }
        }
        ComplexMatrix::new(n, n, out).expect("finite spectral rebuild")
    }
}

fn faer_ref(m: &ComplexMatrix) -> faer::MatRef<'_, C64> {
    faer::MatRef::from_row_major_slice(m.data(), m.rows(), m.cols())
}

/// Eigendecomposition without the Hermiticity check; reads the lower triangle.
pub(crate) fn eigh_unchecked(m: &ComplexMatrix) -> Result<Eigen> {
    let n = m.rows();
    let evd = faer_ref(m)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| LinalgError::EigenFailed)?;
    let s = evd.S().column_vector();
    let u = evd.U();
    // faer sorts ascending; reversing keeps ties in a fixed order.
    let values: Vec<f64> = (0..n).rev().map(|k| s[k].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |i, k| u[(i, n - 1 - k)]);
    Ok(Eigen { values, vectors })
}

pub(crate) fn eigvalsh_unchecked(m: &ComplexMatrix) -> Result<Vec<f64>> {
    let mut values = faer_ref(m)
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|_| LinalgError::EigenFailed)?;
    values.reverse();
    Ok(values)
}

/// Hermitian eigendecomposition, eigenvalues descending.
pub fn eig_hermitian(m: &ComplexMatrix) -> Result<Eigen> {
    m.require_hermitian()?;
    eigh_unchecked(m)
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn eigvalsh(m: &ComplexMatrix) -> Result<Vec<f64>> {
    m.require_hermitian()?;
    eigvalsh_unchecked(m)
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(m: &ComplexMatrix) -> Result<f64> {
    Ok(eigvalsh(m)?.iter().map(|l| l.abs()).sum())
}

pub(crate) fn trace_norm_unchecked(m: &ComplexMatrix) -> f64 {
    eigvalsh_unchecked(m)
        .map(|v| v.iter().map(|l| l.abs()).sum())
        .unwrap_or(f64::INFINITY)
}

/// `½‖a − b‖₁` for Hermitian `a`, `b`.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    a.require_same_shape(b)?;
    let diff = a - b;
    diff.require_square()?;
    // Judge Hermiticity against the operands so that a ≈ b does not amplify noise.
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    let skew = diff.hermitian_deviation() * diff.frobenius_norm();
    if scale > 0.0 && skew > super::TOL_HERM * scale {
        return Err(LinalgError::NotHermitian {
            deviation: skew / scale,
        });
    }
    Ok(0.5 * trace_norm_unchecked(&diff.hermitian_part()))
}

/// Frobenius-nearest positive semidefinite matrix (negative eigenvalues clipped).
pub fn project_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let e = eig_hermitian(m)?;
    if e.values.iter().all(|&l| l >= 0.0) {
        return Ok(m.hermitian_part());
    }
    Ok(e.rebuild(|l| l.max(0.0)))
}

/// `exp(−i h t)` for Hermitian `h`, through its eigendecomposition.
pub fn expm_i(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let e = eig_hermitian(h)?;
    let n = e.values.len();
    let phases: Vec<C64> = e
        .values
        .iter()
        .map(|&l| C64::from_polar(1.0, -l * t))
        .collect();
    let v = &e.vectors;
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| v[(i, k)] * phases[k] * v[(j, k)].conj())
            .sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn diagonal_spectrum_descends() {
        let e = eig_hermitian(&ComplexMatrix::from_diag(&[1.0, 3.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
    }

    #[test]
    fn pauli_x_spectrum() {
        let e = eig_hermitian(&sigma_x()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14 && (e.values[1] + 1.0).abs() < 1e-14);
        let r = 1.0 / 2f64.sqrt();
        let v0 = [e.vectors[(0, 0)], e.vectors[(1, 0)]];
        let overlap = (v0[0] * r + v0[1] * r).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            eig_hermitian(&m),
            Err(LinalgError::NotHermitian { .. })
        ));
        assert!(project_psd(&m).is_err());
    }

    #[test]
    fn trace_distance_examples() {
        let p0 = ComplexMatrix::unit(2, 0, 0);
        let p1 = ComplexMatrix::unit(2, 1, 1);
        let mixed = ComplexMatrix::identity(2).scale(0.5);
        assert_eq!(trace_distance(&p0, &p0).unwrap(), 0.0);
        assert!((trace_distance(&p0, &p1).unwrap() - 1.0).abs() < 1e-14);
        assert!((trace_distance(&p0, &mixed).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn psd_projection_clips() {
        let p = project_psd(&ComplexMatrix::from_diag(&[1.0, -1.0])).unwrap();
        assert!(p.max_abs_diff(&ComplexMatrix::from_diag(&[1.0, 0.0])) < 1e-14);
        let psd = ComplexMatrix::from_real(2, 2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!(project_psd(&psd).unwrap().max_abs_diff(&psd) < 1e-12);
    }

    #[test]
    fn expm_examples() {
        let z = ComplexMatrix::from_diag(&[1.0, -1.0]);
        assert!(
            expm_i(&z, 0.0)
                .unwrap()
                .max_abs_diff(&ComplexMatrix::identity(2))
                < 1e-14
        );
        let u = expm_i(&z, PI).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::identity(2).scale(-1.0)) < 1e-12);
    }
}
