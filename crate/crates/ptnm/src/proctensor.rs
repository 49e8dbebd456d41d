//! One- and two-step process tensors built from a unitary system-environment model.
//!
//! The two-step tensor `T` acts on `(S2, S1′, S1, S0′, S0)`: `S0` is the input of the
//! first operation `𝒜₀` and `S0′` its output, `S1` is the system after the first
//! unitary, `S1′` the output of `𝒜₁`, and `S2` the final system. Contracting `T`
//! with the Choi matrices of `𝒜₁` on `(S1′, S1)` and `𝒜₀` on `(S0′, S0)` gives the
//! final system state. The one-step tensor `M` acts on `(S1, S0′, S0)`.

use crate::linalg::{
    kron, partial_trace, trace_distance, ComplexMatrix, LabeledMatrix, LabeledSpace, LinalgError,
    C64,
};
use crate::quantum::{DensityMatrix, QuantumError, QuantumMap, TOL_TRACE};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const S2: &str = "S2";
pub const S1P: &str = "S1'";
pub const S1: &str = "S1";
pub const S0P: &str = "S0'";
pub const S0: &str = "S0";

/// Largest `½‖T − T̃⊗ρ₀‖₁` accepted by [`reduce`].
pub const TOL_FACTOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProcessError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{which} is not unitary (defect {defect:e})")]
    NotUnitary { which: &'static str, defect: f64 },
    #[error("expected a {expected}-step process tensor, got {found} steps")]
    Steps { expected: usize, found: usize },
    #[error("initial state is correlated: factorization residual {residual:e}")]
    NotFactorized { residual: f64 },
}

pub type Result<T> = std::result::Result<T, ProcessError>;

/// Choi-form process tensor of a one-step or two-step process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessTensor {
    mat: ComplexMatrix,
    space: LabeledSpace,
    d_sys: usize,
}

impl ProcessTensor {
    /// Wraps a matrix on the canonical labels, checking shape and Hermiticity.
    pub fn from_matrix(mat: ComplexMatrix, d_sys: usize, steps: usize) -> Result<Self> {
        let space = match steps {
            1 => LabeledSpace::uniform(&[S1, S0P, S0], d_sys)?,
            2 => LabeledSpace::uniform(&[S2, S1P, S1, S0P, S0], d_sys)?,
            other => {
                return Err(ProcessError::Steps {
                    expected: 2,
                    found: other,
                })
            }
        };
        let n = mat.require_square()?;
        if n != space.total_dim() {
            return Err(ProcessError::DimensionMismatch(format!(
                "matrix of size {n} for a {steps}-step tensor with d_sys = {d_sys}"
            )));
        }
        mat.require_hermitian()?;
        Ok(Self { mat, space, d_sys })
    }

    pub fn mat(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn space(&self) -> &LabeledSpace {
        &self.space
    }

    pub fn d_sys(&self) -> usize {
        self.d_sys
    }

    pub fn steps(&self) -> usize {
        (self.space.len() - 1) / 2
    }

    pub fn labeled(&self) -> LabeledMatrix {
        LabeledMatrix {
            mat: self.mat.clone(),
            space: self.space.clone(),
        }
    }

    pub fn require_steps(&self, steps: usize) -> Result<()> {
        if self.steps() == steps {
            Ok(())
        } else {
            Err(ProcessError::Steps {
                expected: steps,
                found: self.steps(),
            })
        }
    }
}

/// Two-step tensor with the initial system state factored out: `T = T̃ ⊗ ρ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedProcessTensor {
    mat: ComplexMatrix,
    space: LabeledSpace,
    rho0: DensityMatrix,
}

impl ReducedProcessTensor {
    pub fn mat(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn space(&self) -> &LabeledSpace {
        &self.space
    }

    pub fn rho0(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn d_sys(&self) -> usize {
        self.rho0.dim()
    }

    /// `T̃ ⊗ ρ₀` on the full two-step labels.
    pub fn expand(&self) -> ProcessTensor {
        ProcessTensor {
            mat: kron(&self.mat, self.rho0.mat()),
            space: LabeledSpace::uniform(&[S2, S1P, S1, S0P, S0], self.d_sys())
                .expect("valid labels"),
            d_sys: self.d_sys(),
        }
    }
}

fn check_model(
    unitaries: &[(&'static str, &ComplexMatrix)],
    rho_se: &DensityMatrix,
    d_sys: usize,
    d_env: usize,
) -> Result<()> {
    let n = d_sys * d_env;
    for &(which, u) in unitaries {
        if u.rows() != n || u.cols() != n {
            return Err(ProcessError::DimensionMismatch(format!(
                "{which} is {}x{}, expected {n}x{n}",
                u.rows(),
                u.cols()
            )));
        }
        let defect = u.unitarity_defect();
        if defect > 1e-9 {
            return Err(ProcessError::NotUnitary { which, defect });
        }
    }
    if rho_se.dim() != n {
        return Err(ProcessError::DimensionMismatch(format!(
            "initial state of dimension {}, expected {n}",
            rho_se.dim()
        )));
    }
    if (rho_se.trace() - 1.0).abs() > TOL_TRACE {
        return Err(QuantumError::Trace {
            expected: 1.0,
            found: rho_se.trace(),
        }
        .into());
    }
    Ok(())
}

/// Block `(a, b)` of a `(d_sys·d_env)`-square matrix, as a `d_env × d_env` matrix.
fn env_block(u: &ComplexMatrix, a: usize, b: usize, d_env: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d_env, d_env, |e, f| u[(a * d_env + e, b * d_env + f)])
}

/// `T[(a, i0), (b, j0)] = tr(K_a R_{i0 j0} K_b†)` with `R_{i0 j0}[f, f′] = ρ^SE[(i0, f), (j0, f′)]`.
fn assemble(
    kraus: &[ComplexMatrix],
    rho_se: &ComplexMatrix,
    d_sys: usize,
    d_env: usize,
) -> ComplexMatrix {
    let blocks: Vec<ComplexMatrix> = (0..d_sys * d_sys)
        .map(|k| env_block(rho_se, k / d_sys, k % d_sys, d_env))
        .collect();
    let products: Vec<Vec<ComplexMatrix>> = kraus
        .iter()
        .map(|k| blocks.iter().map(|r| k * r).collect())
        .collect();
    let n = kraus.len() * d_sys;
    ComplexMatrix::from_fn(n, n, |row, col| {
        let (a, i0) = (row / d_sys, row % d_sys);
        let (b, j0) = (col / d_sys, col % d_sys);
        let p = &products[a][i0 * d_sys + j0];
        p.data()
            .iter()
            .zip(kraus[b].data())
            .map(|(x, y)| x * y.conj())
            .sum::<C64>()
    })
    .hermitian_part()
}

/// One-step tensor `M` on `(S1, S0′, S0)`.
pub fn build_one_step(
    u0: &ComplexMatrix,
    rho_se: &DensityMatrix,
    d_sys: usize,
    d_env: usize,
) -> Result<ProcessTensor> {
    check_model(&[("u0", u0)], rho_se, d_sys, d_env)?;
    let kraus: Vec<ComplexMatrix> = (0..d_sys * d_sys)
        .map(|k| env_block(u0, k / d_sys, k % d_sys, d_env))
        .collect();
    ProcessTensor::from_matrix(assemble(&kraus, rho_se.mat(), d_sys, d_env), d_sys, 1)
}

/// Two-step tensor `T` on `(S2, S1′, S1, S0′, S0)`.
pub fn build_two_step(
    u1: &ComplexMatrix,
    u0: &ComplexMatrix,
    rho_se: &DensityMatrix,
    d_sys: usize,
    d_env: usize,
) -> Result<ProcessTensor> {
    check_model(&[("u1", u1), ("u0", u0)], rho_se, d_sys, d_env)?;
    let d = d_sys;
    let mut kraus = Vec::with_capacity(d.pow(4));
    for i2 in 0..d {
        for i1p in 0..d {
            let late = env_block(u1, i2, i1p, d_env);
            for i1 in 0..d {
                for i0p in 0..d {
                    kraus.push(&late * &env_block(u0, i1, i0p, d_env));
                }
            }
        }
    }
    ProcessTensor::from_matrix(assemble(&kraus, rho_se.mat(), d_sys, d_env), d_sys, 2)
}

/// Contracts trailing factor pairs of `t` with the given Choi matrices.
///
/// `chois[0]` pairs with the latest operation. Works for any Choi matrices,
/// including non-positive combinations used in linearity checks.
pub fn contract(t: &ProcessTensor, chois: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
    if chois.len() != t.steps() {
        return Err(ProcessError::Steps {
            expected: t.steps(),
            found: chois.len(),
        });
    }
    let d = t.d_sys;
    for c in chois {
        if c.rows() != d * d || c.cols() != d * d {
            return Err(ProcessError::DimensionMismatch(format!(
                "operation Choi of size {}x{}, expected {}x{}",
                c.rows(),
                c.cols(),
                d * d,
                d * d
            )));
        }
    }
    let refs: Vec<&ComplexMatrix> = chois.to_vec();
    let w = crate::linalg::kron_all(&refs);
    Ok(contract_with(&t.mat, &w, d))
}

/// `ρ[i, j] = Σ_{x,y} T[(i, x), (j, y)] W[x, y]`.
pub(crate) fn contract_with(t: &ComplexMatrix, w: &ComplexMatrix, d: usize) -> ComplexMatrix {
    let r = w.rows();
    let n = d * r;
    let td = t.data();
    let wd = w.data();
    ComplexMatrix::from_fn(d, d, |i, j| {
        let mut s = C64::new(0.0, 0.0);
        for x in 0..r {
            let row = &td[(i * r + x) * n + j * r..(i * r + x) * n + (j + 1) * r];
            let wrow = &wd[x * r..(x + 1) * r];
            for (a, b) in row.iter().zip(wrow) {
                s += a * b;
            }
        }
        s
    })
}

/// Final system state for the operation sequence `ops` (latest first).
pub fn apply(t: &ProcessTensor, ops: &[&QuantumMap]) -> Result<DensityMatrix> {
    for op in ops {
        if op.dim_in() != t.d_sys || op.dim_out() != t.d_sys {
            return Err(ProcessError::DimensionMismatch(format!(
                "operation {}->{} on a system of dimension {}",
                op.dim_in(),
                op.dim_out(),
                t.d_sys
            )));
        }
    }
    let chois: Vec<&ComplexMatrix> = ops.iter().map(|op| op.choi()).collect();
    let rho = contract(t, &chois)?.hermitian_part();
    let tr = rho.trace().re;
    let space = LabeledSpace::new([("S", t.d_sys)])?;
    if (tr - 1.0).abs() <= TOL_TRACE {
        Ok(DensityMatrix::new(rho, space)?)
    } else {
        Ok(DensityMatrix::subnormalized(rho, space)?)
    }
}

/// Least-squares `T̃` with `T ≈ T̃ ⊗ ρ₀`: `tr_S0[T (I ⊗ ρ₀)] / tr(ρ₀²)`.
pub fn least_squares_factor(t: &ProcessTensor, rho0: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = t.d_sys;
    if rho0.rows() != d || rho0.cols() != d {
        return Err(ProcessError::DimensionMismatch(format!(
            "initial state of dimension {}, expected {d}",
            rho0.rows()
        )));
    }
    let weighted = t.mat.matmul(&kron(
        &ComplexMatrix::identity(t.space.total_dim() / d),
        rho0,
    ))?;
    let (traced, _) = partial_trace(&weighted, &t.space, &[S0])?;
    let purity = rho0.inner(rho0).re;
    Ok(traced.scale(1.0 / purity).hermitian_part())
}

/// Factors out the initial system state of a two-step tensor.
pub fn reduce(t: &ProcessTensor, rho0: &DensityMatrix) -> Result<ReducedProcessTensor> {
    t.require_steps(2)?;
    let mat = least_squares_factor(t, rho0.mat())?;
    let residual = trace_distance(t.mat(), &kron(&mat, rho0.mat()))?;
    if residual > TOL_FACTOR {
        return Err(ProcessError::NotFactorized { residual });
    }
    Ok(ReducedProcessTensor {
        mat,
        space: LabeledSpace::uniform(&[S2, S1P, S1, S0P], t.d_sys)?,
        rho0: rho0.clone(),
    })
}

/// Marginal `tr_{all but S0}(T) / d_sys^{steps}`, the initial system state.
pub fn initial_marginal(t: &ProcessTensor) -> Result<ComplexMatrix> {
    let labels = t.space.labels();
    let traced: Vec<&str> = labels.iter().copied().filter(|&l| l != S0).collect();
    let (m, _) = partial_trace(&t.mat, &t.space, &traced)?;
    Ok(m.scale(1.0 / (t.d_sys.pow(t.steps() as u32)) as f64))
}

/// The auxiliary matrices derived from a two-step tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Derived {
    /// `L = tr_S1 T` on `(S2, S1′, S0′, S0)`.
    pub l: LabeledMatrix,
    /// `N = tr_S1 M` on `(S0′, S0)`.
    pub n: LabeledMatrix,
    /// `M = tr_{S2 S1′} T / d_sys` on `(S1, S0′, S0)`.
    pub m: LabeledMatrix,
}

pub fn derive_lnm(t: &ProcessTensor) -> Result<Derived> {
    t.require_steps(2)?;
    let full = t.labeled();
    let l = full.partial_trace(&[S1])?;
    let m_raw = full.partial_trace(&[S2, S1P])?;
    let m = LabeledMatrix {
        mat: m_raw.mat.scale(1.0 / t.d_sys as f64),
        space: m_raw.space,
    };
    let n = m.partial_trace(&[S1])?;
    Ok(Derived { l, n, m })
}

/// One-step tensor obtained from a two-step tensor, `tr_{S2 S1′} T / d_sys`.
pub fn first_step(t: &ProcessTensor) -> Result<ProcessTensor> {
    let m = derive_lnm(t)?.m;
    ProcessTensor::from_matrix(m.mat, t.d_sys, 1)
}
