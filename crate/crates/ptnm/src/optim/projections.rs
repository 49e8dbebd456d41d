use super::ops::{eigh, trace_out};
use super::{OptimError, Result};
use crate::linalg::{kron, ComplexMatrix};

/// Euclidean projection of `v` onto `{x ≥ 0, Σx = total}`.
pub(crate) fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - total) / (k + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Frobenius-nearest density matrix: eigenvalues projected onto the unit simplex.
pub fn project_density(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    m.require_hermitian()?;
    let e = eigh(m);
    let projected = project_simplex(&e.values, 1.0);
    let lookup: Vec<(f64, f64)> = e.values.iter().copied().zip(projected).collect();
    let mut k = 0;
    let out = e.rebuild(|_| {
        let v = lookup[k].1;
        k += 1;
        v
    });
    let tr = out.trace().re;
    Ok(out.scale(1.0 / tr))
}

/// Eigenvalue soft-thresholding: the proximal map of `tau·‖·‖₁` on Hermitian matrices.
pub(crate) fn soft_threshold(m: &ComplexMatrix, tau: f64) -> ComplexMatrix {
    eigh(m).rebuild(|l| l.signum() * (l.abs() - tau).max(0.0))
}

/// Projection of a Hermitian matrix onto the trace-norm ball of the given radius.
pub(crate) fn project_trace_ball(m: &ComplexMatrix, radius: f64) -> ComplexMatrix {
    let e = eigh(m);
    let norm: f64 = e.values.iter().map(|l| l.abs()).sum();
    if norm <= radius {
        return m.hermitian_part();
    }
    let mags: Vec<f64> = e.values.iter().map(|l| l.abs()).collect();
    let shrunk = project_simplex(&mags, radius);
    let mut k = 0;
    e.rebuild(|l| {
        let v = l.signum() * shrunk[k];
        k += 1;
        v
    })
}

pub(crate) fn affine_tp(x: &ComplexMatrix, dim_in: usize, dim_out: usize) -> ComplexMatrix {
    let defect = &ComplexMatrix::identity(dim_in) - &trace_out(x, dim_in, dim_out);
    x + &kron(&ComplexMatrix::identity(dim_out), &defect).scale(1.0 / dim_out as f64)
}

/// Congruence `(I ⊗ S^{-1/2}) X (I ⊗ S^{-1/2})` with `S = tr_out X`; exact TP, keeps PSD.
pub(crate) fn tp_fix(x: &ComplexMatrix, dim_in: usize, dim_out: usize) -> Option<ComplexMatrix> {
    let s = eigh(&trace_out(x, dim_in, dim_out));
    if s.values.iter().any(|&l| l <= 1e-12) {
        return None;
    }
    let inv_sqrt = kron(
        &ComplexMatrix::identity(dim_out),
        &s.rebuild(|l| 1.0 / l.sqrt()),
    );
    Some(
        inv_sqrt
            .mul_unchecked(x)
            .mul_unchecked(&inv_sqrt)
            .hermitian_part(),
    )
}

/// Nearest Choi matrix of a trace-preserving completely positive map, with default limits.
pub fn project_tpcp(choi: &ComplexMatrix, dim_in: usize, dim_out: usize) -> Result<ComplexMatrix> {
    project_tpcp_with(choi, dim_in, dim_out, 1e-8, 2000)
}

/// Dykstra alternation between the PSD cone and the trace-preserving subspace.
///
/// Stops once successive iterates differ by less than `tol` in Frobenius norm,
/// then removes the remaining trace-preservation defect by a congruence.
pub fn project_tpcp_with(
    choi: &ComplexMatrix,
    dim_in: usize,
    dim_out: usize,
    tol: f64,
    max_iters: usize,
) -> Result<ComplexMatrix> {
    let n = dim_in * dim_out;
    if choi.rows() != n || choi.cols() != n {
        return Err(OptimError::DimensionMismatch(format!(
            "Choi matrix {}x{} for a {dim_in}->{dim_out} map",
            choi.rows(),
            choi.cols()
        )));
    }
    choi.require_hermitian()?;
    let mut x = choi.hermitian_part();
    let mut p = ComplexMatrix::zeros(n, n);
    let mut q = ComplexMatrix::zeros(n, n);
    let mut change = f64::INFINITY;
    for _ in 0..max_iters {
        let y = eigh(&(&x + &p)).rebuild(|l| l.max(0.0));
        p = &(&x + &p) - &y;
        let next = affine_tp(&(&y + &q), dim_in, dim_out);
        q = &(&y + &q) - &next;
        change = (&next - &x).frobenius_norm();
        x = next;
        if change < tol {
            let psd = eigh(&x).rebuild(|l| l.max(0.0));
            return tp_fix(&psd, dim_in, dim_out).ok_or(OptimError::NonConvergent {
                what: "TPCP projection".to_string(),
                residual: change,
            });
        }
    }
    Err(OptimError::NonConvergent {
        what: "TPCP projection".to_string(),
        residual: change,
    })
}
