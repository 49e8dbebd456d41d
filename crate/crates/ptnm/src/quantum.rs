//! Quantum states and maps in Choi form.
//!
//! A map `𝒜` on `d_in`-dimensional operators is stored through its Choi matrix
//! `A = Σ_ij 𝒜[|i⟩⟨j|] ⊗ |i⟩⟨j|`, output factor on the left. Applying it reads
//! `𝒜[ρ]_{o o′} = Σ_ij A[(o,i),(o′,j)] ρ_ij`.
//!
//! ```
//! use ptnm::linalg::ComplexMatrix;
//! use ptnm::quantum::{apply_map, choi_from_unitary_map, DensityMatrix};
//!
//! let x = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
//! let flip = choi_from_unitary_map(&x).unwrap();
//! let out = apply_map(&flip, &DensityMatrix::basis(2, 0)).unwrap();
//! assert!(out.mat().max_abs_diff(&ComplexMatrix::unit(2, 1, 1)) < 1e-12);
//! ```

use crate::linalg::{
    self, eigvalsh, kron, partial_trace, permute_subsystems, ComplexMatrix, LabeledSpace,
    LinalgError, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance on `‖tr_out A − I‖₁` for trace preservation.
pub const TOL_TP: f64 = 1e-9;
/// Most negative eigenvalue accepted as positive semidefinite.
pub const TOL_PSD: f64 = 1e-10;
/// Unit-trace tolerance for density matrices.
pub const TOL_TRACE: f64 = 1e-9;

/// Seeded generator used by every random routine.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantumError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },
    #[error("trace {found} where {expected} was required")]
    Trace { expected: f64, found: f64 },
    #[error("matrix is not unitary (defect {defect:e})")]
    NotUnitary { defect: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, QuantumError>;

/// Positive semidefinite, Hermitian, unit-trace matrix on a labeled space.
///
/// States with trace in `(0, 1)` are allowed when flagged subnormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
    space: LabeledSpace,
    subnormalized: bool,
}

fn check_psd(m: &ComplexMatrix) -> Result<()> {
    let min_eig = *eigvalsh(m)?.last().expect("non-empty spectrum");
    let scale = m.max_abs().max(1.0);
    if min_eig < -TOL_PSD * scale {
        return Err(QuantumError::NotPsd { min_eig });
    }
    Ok(())
}

impl DensityMatrix {
    /// Validated unit-trace state.
    pub fn new(mat: ComplexMatrix, space: LabeledSpace) -> Result<Self> {
        let state = Self::build(mat, space)?;
        let tr = state.trace();
        if (tr - 1.0).abs() > TOL_TRACE {
            return Err(QuantumError::Trace {
                expected: 1.0,
                found: tr,
            });
        }
        Ok(state)
    }

    /// Validated state with trace in `(0, 1]`; flagged when the trace is below one.
    pub fn subnormalized(mat: ComplexMatrix, space: LabeledSpace) -> Result<Self> {
        let mut state = Self::build(mat, space)?;
        let tr = state.trace();
        if tr <= 0.0 || tr > 1.0 + TOL_TRACE {
            return Err(QuantumError::Trace {
                expected: 1.0,
                found: tr,
            });
        }
        state.subnormalized = (tr - 1.0).abs() > TOL_TRACE;
        Ok(state)
    }

    fn build(mat: ComplexMatrix, space: LabeledSpace) -> Result<Self> {
        mat.require_hermitian()?;
        if mat.rows() != space.total_dim() {
            return Err(QuantumError::DimensionMismatch(format!(
                "{}x{} matrix on a space of dimension {}",
                mat.rows(),
                mat.cols(),
                space.total_dim()
            )));
        }
        check_psd(&mat)?;
        Ok(Self {
            mat: mat.hermitian_part(),
            space,
            subnormalized: false,
        })
    }

    /// Unit-trace state on a single factor labeled `S`.
    pub fn from_matrix(mat: ComplexMatrix) -> Result<Self> {
        let space = LabeledSpace::new([("S", mat.rows())])?;
        Self::new(mat, space)
    }

    /// `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩` on a single factor labeled `S`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(QuantumError::Trace {
                expected: 1.0,
                found: norm,
            });
        }
        Self::from_matrix(ComplexMatrix::outer(psi).scale(1.0 / norm))
    }

    /// Computational basis state `|k⟩⟨k|`.
    pub fn basis(dim: usize, k: usize) -> Self {
        Self::trusted(ComplexMatrix::unit(dim, k, k))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::trusted(ComplexMatrix::identity(dim).scale(1.0 / dim as f64))
    }

    pub(crate) fn trusted(mat: ComplexMatrix) -> Self {
        let space = LabeledSpace::new([("S", mat.rows())]).expect("positive dimension");
        Self {
            mat,
            space,
            subnormalized: false,
        }
    }

    /// Same matrix on a new labeled space of equal dimension.
    pub fn with_space(self, space: LabeledSpace) -> Result<Self> {
        if space.total_dim() != self.mat.rows() {
            return Err(QuantumError::DimensionMismatch(format!(
                "space of dimension {} for a {}-dimensional state",
                space.total_dim(),
                self.mat.rows()
            )));
        }
        Ok(Self { space, ..self })
    }

    pub fn mat(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn space(&self) -> &LabeledSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn is_subnormalized(&self) -> bool {
        self.subnormalized
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        self.mat.inner(&self.mat).re
    }

    /// Product state `self ⊗ other` on the concatenated space.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let space = self.space.concat(&other.space)?;
        Ok(Self {
            mat: kron(&self.mat, &other.mat),
            space,
            subnormalized: self.subnormalized || other.subnormalized,
        })
    }

    /// Reduced state after tracing out `labels`.
    pub fn partial_trace(&self, labels: &[&str]) -> Result<Self> {
        let (mat, space) = partial_trace(&self.mat, &self.space, labels)?;
        Ok(Self {
            mat,
            space,
            subnormalized: self.subnormalized,
        })
    }
}

/// Linear map between operator spaces stored as its Choi matrix (output ⊗ input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumMap {
    choi: ComplexMatrix,
    dim_in: usize,
    dim_out: usize,
    space: LabeledSpace,
}

impl QuantumMap {
    /// Validates size, Hermiticity and complete positivity of `choi`.
    pub fn new(choi: ComplexMatrix, dim_in: usize, dim_out: usize) -> Result<Self> {
        let map = Self::unchecked(choi, dim_in, dim_out)?;
        map.choi.require_hermitian()?;
        check_psd(&map.choi)?;
        Ok(Self {
            choi: map.choi.hermitian_part(),
            ..map
        })
    }

    /// Size check only; used for iterates that are CP by construction.
    pub(crate) fn unchecked(choi: ComplexMatrix, dim_in: usize, dim_out: usize) -> Result<Self> {
        let n = choi.require_square()?;
        if n != dim_in * dim_out || dim_in == 0 {
            return Err(QuantumError::DimensionMismatch(format!(
                "Choi matrix of size {n} for a {dim_in}->{dim_out} map"
            )));
        }
        let space = LabeledSpace::new([("out", dim_out), ("in", dim_in)])?;
        Ok(Self {
            choi,
            dim_in,
            dim_out,
            space,
        })
    }

    /// Identity channel on `dim`-dimensional operators.
    pub fn identity(dim: usize) -> Self {
        choi_from_unitary_map(&ComplexMatrix::identity(dim)).expect("identity is unitary")
    }

    pub fn choi(&self) -> &ComplexMatrix {
        &self.choi
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn space(&self) -> &LabeledSpace {
        &self.space
    }

    pub fn into_choi(self) -> ComplexMatrix {
        self.choi
    }
}

/// Choi matrix of `X ↦ u X u†`.
pub fn choi_from_unitary_map(u: &ComplexMatrix) -> Result<QuantumMap> {
    let n = u.require_square()?;
    let defect = u.unitarity_defect();
    if defect > 1e-9 {
        return Err(QuantumError::NotUnitary { defect });
    }
    // vec(u) with row index (o, i).
    let v: Vec<C64> = u.data().to_vec();
    QuantumMap::unchecked(ComplexMatrix::outer(&v), n, n)
}

/// `𝒜[ρ]` for a Choi matrix given as a raw matrix.
pub(crate) fn apply_choi(
    choi: &ComplexMatrix,
    dim_in: usize,
    dim_out: usize,
    rho: &ComplexMatrix,
) -> ComplexMatrix {
    let n = dim_in * dim_out;
    let c = choi.data();
    let r = rho.data();
    ComplexMatrix::from_fn(dim_out, dim_out, |o, p| {
        let mut s = C64::new(0.0, 0.0);
        for i in 0..dim_in {
            let row = (o * dim_in + i) * n + p * dim_in;
            for j in 0..dim_in {
                s += c[row + j] * r[i * dim_in + j];
            }
        }
        s
    })
}

/// `𝒜[ρ]`; the result is flagged subnormalized when its trace drops below one.
pub fn apply_map(m: &QuantumMap, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != m.dim_in {
        return Err(QuantumError::DimensionMismatch(format!(
            "state of dimension {} into a map expecting {}",
            rho.dim(),
            m.dim_in
        )));
    }
    let out = apply_choi(&m.choi, m.dim_in, m.dim_out, rho.mat()).hermitian_part();
    let space = LabeledSpace::new([("S", m.dim_out)])?;
    finish_state(out, space)
}

fn finish_state(mat: ComplexMatrix, space: LabeledSpace) -> Result<DensityMatrix> {
    let tr = mat.trace().re;
    if tr > 1.0 + TOL_TRACE {
        return Err(QuantumError::Trace {
            expected: 1.0,
            found: tr,
        });
    }
    Ok(DensityMatrix {
        mat,
        space,
        subnormalized: (tr - 1.0).abs() > TOL_TRACE,
    })
}

/// Applies `m` to the factor `label` of a multipartite state, identity elsewhere.
pub fn apply_map_on(m: &QuantumMap, rho: &DensityMatrix, label: &str) -> Result<DensityMatrix> {
    let space = rho.space();
    let pos = space.position(label)?;
    if space.factors()[pos].1 != m.dim_in {
        return Err(QuantumError::DimensionMismatch(format!(
            "factor `{label}` has dimension {}, map expects {}",
            space.factors()[pos].1,
            m.dim_in
        )));
    }
    let labels = space.labels();
    let mut order: Vec<&str> = labels.iter().copied().filter(|&l| l != label).collect();
    order.push(label);
    let (moved, _) = permute_subsystems(rho.mat(), space, &order)?;
    let rest = space.total_dim() / m.dim_in;
    let (di, dout) = (m.dim_in, m.dim_out);
    let n_in = rest * di;
    let c = m.choi.data();
    let src = moved.data();
    let out = ComplexMatrix::from_fn(rest * dout, rest * dout, |row, col| {
        let (r, o) = (row / dout, row % dout);
        let (rp, p) = (col / dout, col % dout);
        let mut s = C64::new(0.0, 0.0);
        for i in 0..di {
            for j in 0..di {
                s += c[(o * di + i) * (dout * di) + p * di + j]
                    * src[(r * di + i) * n_in + rp * di + j];
            }
        }
        s
    });
    let mut factors: Vec<(String, usize)> = order
        .iter()
        .map(|&l| (l.to_string(), space.dim_of(l).expect("label exists")))
        .collect();
    factors.last_mut().expect("non-empty").1 = dout;
    let moved_space = LabeledSpace::new(factors)?;
    let restored = permute_subsystems(&out, &moved_space, &labels)?;
    finish_state(restored.0.hermitian_part(), restored.1)
}

/// Choi matrix of the composition `second ∘ first`.
pub fn compose(second: &QuantumMap, first: &QuantumMap) -> Result<QuantumMap> {
    if first.dim_out != second.dim_in {
        return Err(QuantumError::DimensionMismatch(format!(
            "cannot compose {}->{} after {}->{}",
            second.dim_in, second.dim_out, first.dim_in, first.dim_out
        )));
    }
    let (di, dk, dout) = (first.dim_in, first.dim_out, second.dim_out);
    let c1 = &first.choi;
    let c2 = &second.choi;
    let choi = ComplexMatrix::from_fn(dout * di, dout * di, |row, col| {
        let (o, i) = (row / di, row % di);
        let (p, j) = (col / di, col % di);
        let mut s = C64::new(0.0, 0.0);
        for k in 0..dk {
            for l in 0..dk {
                s += c2[(o * dk + k, p * dk + l)] * c1[(k * di + i, l * di + j)];
            }
        }
        s
    });
    QuantumMap::unchecked(choi, di, dout)
}

/// Returns `(‖tr_out A − I_in‖₁ ≤ tol, ‖tr_out A − I_in‖₁)`.
pub fn is_trace_preserving(m: &QuantumMap, tol: f64) -> (bool, f64) {
    let residual = tp_residual(&m.choi, m.dim_in, m.dim_out);
    (residual <= tol, residual)
}

pub(crate) fn tp_residual(choi: &ComplexMatrix, dim_in: usize, dim_out: usize) -> f64 {
    let space = LabeledSpace::new([("out", dim_out), ("in", dim_in)]).expect("valid dims");
    let (marginal, _) = partial_trace(choi, &space, &["out"]).expect("valid shape");
    let diff = &marginal - &ComplexMatrix::identity(dim_in);
    linalg::trace_norm(&diff.hermitian_part()).unwrap_or(f64::INFINITY)
}

/// Constant map `ρ ↦ tr(ρ) ρ_const` with Choi matrix `ρ_const ⊗ I_in`.
pub fn constant_map_choi(rho_const: &DensityMatrix, dim_in: usize) -> Result<QuantumMap> {
    let tr = rho_const.trace();
    if rho_const.is_subnormalized() || (tr - 1.0).abs() > TOL_TRACE {
        return Err(QuantumError::Trace {
            expected: 1.0,
            found: tr,
        });
    }
    let choi = kron(rho_const.mat(), &ComplexMatrix::identity(dim_in));
    QuantumMap::unchecked(choi, dim_in, rho_const.dim())
}

/// Choi matrix of the channel with Stinespring isometry `v`.
///
/// `v` is `(dim_out·k) × dim_in` with row index `(o, e)`, `e` the discarded ancilla.
pub fn choi_from_isometry(v: &ComplexMatrix, dim_out: usize) -> ComplexMatrix {
    let dim_in = v.cols();
    let k = v.rows() / dim_out;
    ComplexMatrix::from_fn(dim_out * dim_in, dim_out * dim_in, |row, col| {
        let (o, i) = (row / dim_in, row % dim_in);
        let (p, j) = (col / dim_in, col % dim_in);
        (0..k)
            .map(|e| v[(o * k + e, i)] * v[(p * k + e, j)].conj())
            .sum()
    })
}

/// Matrix of i.i.d. standard complex Gaussians.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Orthonormalizes the columns of `g` (modified Gram-Schmidt). Gaussian input
/// yields Haar-distributed columns because the implied `R` has a positive diagonal.
pub(crate) fn orthonormalize_columns(g: &ComplexMatrix) -> ComplexMatrix {
    let (rows, cols) = (g.rows(), g.cols());
    let mut q = g.clone();
    for k in 0..cols {
        for prev in 0..k {
            let proj: C64 = (0..rows).map(|i| q[(i, prev)].conj() * q[(i, k)]).sum();
            for i in 0..rows {
                let sub = proj * q[(i, prev)];
                q[(i, k)] -= sub;
            }
        }
        let norm = (0..rows).map(|i| q[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..rows {
            q[(i, k)] /= norm;
        }
    }
    q
}

pub fn random_unitary_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> ComplexMatrix {
    orthonormalize_columns(&ginibre(dim, dim, rng))
}

pub fn random_density_with<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(dim, dim, rng);
    let w = g.matmul(&g.adjoint()).expect("square");
    let tr = w.trace().re;
    DensityMatrix::trusted(w.scale(1.0 / tr).hermitian_part())
}

pub fn random_tpcp_with<R: Rng + ?Sized>(dim_in: usize, dim_out: usize, rng: &mut R) -> QuantumMap {
    let u = random_unitary_with(dim_in * dim_out, rng);
    let v = ComplexMatrix::from_fn(dim_in * dim_out, dim_in, |i, j| u[(i, j)]);
    let choi = choi_from_isometry(&v, dim_out).hermitian_part();
    QuantumMap::unchecked(choi, dim_in, dim_out).expect("consistent dims")
}

/// Haar-random unitary, deterministic in `seed`.
pub fn random_unitary(dim: usize, seed: u64) -> ComplexMatrix {
    random_unitary_with(dim, &mut seeded_rng(seed))
}

/// Hilbert-Schmidt random density matrix, deterministic in `seed`.
pub fn random_density(dim: usize, seed: u64) -> DensityMatrix {
    random_density_with(dim, &mut seeded_rng(seed))
}

/// Random channel from a Haar isometry `C^{d_in} → C^{d_out} ⊗ C^{d_in}`.
pub fn random_tpcp(dim_in: usize, dim_out: usize, seed: u64) -> QuantumMap {
    random_tpcp_with(dim_in, dim_out, &mut seeded_rng(seed))
}

/// Two-dimensional Pauli matrices `I, X, Y, Z`.
pub fn paulis() -> [ComplexMatrix; 4] {
    let i = C64::new(0.0, 1.0);
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    [
        ComplexMatrix::identity(2),
        ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).expect("2x2"),
        ComplexMatrix::from_rows(&[vec![z, -i], vec![i, z]]).expect("2x2"),
        ComplexMatrix::from_rows(&[vec![o, z], vec![z, -o]]).expect("2x2"),
    ]
}
