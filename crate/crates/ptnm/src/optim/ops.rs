//! Index kernels on matrices over a row index split as `(hi, mid, lo)`.
//!
//! `mid` is a contiguous group of tensor factors. The two kernels are adjoint to
//! each other: `pip` contracts the group against a fixed operator and `embed`
//! tensors an operator back into the group.

use crate::linalg::{eigh_unchecked, ComplexMatrix, Eigen, C64};

/// Row-index split of a square matrix of size `hi * mid * lo`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Split {
    pub hi: usize,
    pub mid: usize,
    pub lo: usize,
}

impl Split {
    /// Split of `n` factors of dimension `d` around factors `first..first + count`.
    pub fn uniform(n: usize, d: usize, first: usize, count: usize) -> Self {
        Self {
            hi: d.pow(first as u32),
            mid: d.pow(count as u32),
            lo: d.pow((n - first - count) as u32),
        }
    }

    fn outer(&self) -> usize {
        self.hi * self.lo
    }

    fn full(&self) -> usize {
        self.hi * self.mid * self.lo
    }
}

/// `Z[(h,l),(h′,l′)] = Σ conj(w[m,m′]) x[(h,m,l),(h′,m′,l′)]`, i.e. `tr_mid[(w†⊗I) x]`.
pub(crate) fn pip(x: &ComplexMatrix, s: Split, w: &ComplexMatrix) -> ComplexMatrix {
    let (n, o) = (s.full(), s.outer());
    let xd = x.data();
    let wd = w.data();
    let mut out = vec![C64::new(0.0, 0.0); o * o];
    for h in 0..s.hi {
        for m in 0..s.mid {
            for l in 0..s.lo {
                let r = (h * s.mid + m) * s.lo + l;
                let zr = h * s.lo + l;
                for h2 in 0..s.hi {
                    for m2 in 0..s.mid {
                        let wc = wd[m * s.mid + m2].conj();
                        if wc == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let base = r * n + (h2 * s.mid + m2) * s.lo;
                        let zbase = zr * o + h2 * s.lo;
                        for l2 in 0..s.lo {
                            out[zbase + l2] += wc * xd[base + l2];
                        }
                    }
                }
            }
        }
    }
    ComplexMatrix::new(o, o, out).expect("finite contraction")
}

/// `X[(h,m,l),(h′,m′,l′)] = w[m,m′] z[(h,l),(h′,l′)]`.
pub(crate) fn embed(w: &ComplexMatrix, s: Split, z: &ComplexMatrix) -> ComplexMatrix {
    let (n, o) = (s.full(), s.outer());
    let zd = z.data();
    let wd = w.data();
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    for h in 0..s.hi {
        for m in 0..s.mid {
            for l in 0..s.lo {
                let r = (h * s.mid + m) * s.lo + l;
                let zr = h * s.lo + l;
                for h2 in 0..s.hi {
                    for m2 in 0..s.mid {
                        let wv = wd[m * s.mid + m2];
                        if wv == C64::new(0.0, 0.0) {
                            continue;
                        }
                        let base = r * n + (h2 * s.mid + m2) * s.lo;
                        let zbase = zr * o + h2 * s.lo;
                        for l2 in 0..s.lo {
                            out[base + l2] = wv * zd[zbase + l2];
                        }
                    }
                }
            }
        }
    }
    ComplexMatrix::new(n, n, out).expect("finite embedding")
}

/// Orthogonal projection onto operators of the form `w ⊗ (anything)` on the group.
pub(crate) fn project_onto_span(x: &ComplexMatrix, s: Split, w: &ComplexMatrix) -> ComplexMatrix {
    let norm2 = w.inner(w).re;
    embed(w, s, &pip(x, s, w)).scale(1.0 / norm2)
}

/// `tr_out` of a Choi matrix ordered `(out, in)`.
pub(crate) fn trace_out(choi: &ComplexMatrix, dim_in: usize, dim_out: usize) -> ComplexMatrix {
    pip(
        choi,
        Split {
            hi: 1,
            mid: dim_out,
            lo: dim_in,
        },
        &ComplexMatrix::identity(dim_out),
    )
}

/// Hermitian eigendecomposition of the Hermitian part of `m`.
pub(crate) fn eigh(m: &ComplexMatrix) -> Eigen {
    eigh_unchecked(&m.hermitian_part()).expect("eigendecomposition of a finite Hermitian matrix")
}

/// Sum of negative eigenvalue magnitudes.
pub(crate) fn negative_mass(m: &ComplexMatrix) -> f64 {
    crate::linalg::eigvalsh_unchecked(&m.hermitian_part())
        .map(|v| v.iter().filter(|&&l| l < 0.0).map(|l| -l).sum())
        .unwrap_or(f64::INFINITY)
}

/// `½‖a − b‖₁` without the Hermiticity check.
pub(crate) fn half_trace_norm_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    0.5 * crate::linalg::trace_norm_unchecked(&(a - b).hermitian_part())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{kron, partial_trace, LabeledSpace};
    use crate::quantum::random_density;

    #[test]
    fn pip_with_identity_is_partial_trace() {
        let x = random_density(8, 1).mat().clone();
        let space = LabeledSpace::uniform(&["a", "b", "c"], 2).unwrap();
        let (want, _) = partial_trace(&x, &space, &["b"]).unwrap();
        let got = pip(&x, Split::uniform(3, 2, 1, 1), &ComplexMatrix::identity(2));
        assert!(got.max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn embed_matches_kron_ordering() {
        let w = random_density(2, 2).mat().clone();
        let z = random_density(4, 3).mat().clone();
        let s = Split::uniform(3, 2, 0, 1);
        assert!(embed(&w, s, &z).max_abs_diff(&kron(&w, &z)) < 1e-15);
        let s_last = Split::uniform(3, 2, 2, 1);
        assert!(embed(&w, s_last, &z).max_abs_diff(&kron(&z, &w)) < 1e-15);
    }

    #[test]
    fn span_projection_is_idempotent_and_adjoint() {
        let w = random_density(4, 4).mat().clone();
        let x = random_density(16, 5).mat().clone();
        let y = random_density(16, 6).mat().clone();
        let s = Split::uniform(4, 2, 1, 2);
        let px = project_onto_span(&x, s, &w);
        assert!(project_onto_span(&px, s, &w).max_abs_diff(&px) < 1e-14);
        let lhs = px.inner(&y);
        let rhs = x.inner(&project_onto_span(&y, s, &w));
        assert!((lhs - rhs).norm() < 1e-14);
    }
}
