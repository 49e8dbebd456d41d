use super::{ComplexMatrix, LinalgError, Result, ZERO};
use serde::{Deserialize, Serialize};

/// Ordered tensor factors. The leftmost factor is the most significant index
/// and, by convention, the latest-time subsystem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSpace {
    factors: Vec<(String, usize)>,
}

impl LabeledSpace {
    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        let factors: Vec<(String, usize)> =
            factors.into_iter().map(|(l, d)| (l.into(), d)).collect();
        for (k, (label, dim)) in factors.iter().enumerate() {
            if *dim == 0 {
                return Err(LinalgError::ZeroDimension(label.clone()));
            }
            if factors[..k].iter().any(|(l, _)| l == label) {
                return Err(LinalgError::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { factors })
    }

    /// All factors share dimension `dim`.
    pub fn uniform(labels: &[&str], dim: usize) -> Result<Self> {
        Self::new(labels.iter().map(|&l| (l, dim)))
    }

    pub fn factors(&self) -> &[(String, usize)] {
        &self.factors
    }

    pub fn labels(&self) -> Vec<&str> {
        self.factors.iter().map(|(l, _)| l.as_str()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|&(_, d)| d).collect()
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Product of factor dimensions (1 for the empty space).
    pub fn total_dim(&self) -> usize {
        self.factors.iter().map(|&(_, d)| d).product()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.factors
            .iter()
            .position(|(l, _)| l == label)
            .ok_or_else(|| LinalgError::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.factors[self.position(label)?].1)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.factors.iter().any(|(l, _)| l == label)
    }

    /// Concatenation `self ⊗ other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        Self::new(self.factors.iter().chain(&other.factors).cloned())
    }

    /// The space with the given labels removed, order preserved.
    pub fn without(&self, labels: &[&str]) -> Result<Self> {
        for l in labels {
            self.position(l)?;
        }
        Ok(Self {
            factors: self
                .factors
                .iter()
                .filter(|(l, _)| !labels.contains(&l.as_str()))
                .cloned()
                .collect(),
        })
    }

    /// Row-major strides of each factor.
    pub(crate) fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.factors.len()];
        for k in (0..self.factors.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.factors[k + 1].1;
        }
        strides
    }

    fn require_matrix(&self, m: &ComplexMatrix) -> Result<usize> {
        let n = m.require_square()?;
        if n != self.total_dim() {
            return Err(LinalgError::DimensionMismatch(format!(
                "matrix of size {n} on a space of dimension {}",
                self.total_dim()
            )));
        }
        Ok(n)
    }
}

/// Flat offsets of every multi-index over the chosen factor positions.
fn offsets(dims: &[usize], strides: &[usize], positions: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &p in positions {
        let mut next = Vec::with_capacity(out.len() * dims[p]);
        for &base in &out {
            for k in 0..dims[p] {
                next.push(base + k * strides[p]);
            }
        }
        out = next;
    }
    out
}

/// Traces out `traced` and returns the matrix on the remaining factors.
pub fn partial_trace(
    m: &ComplexMatrix,
    space: &LabeledSpace,
    traced: &[&str],
) -> Result<(ComplexMatrix, LabeledSpace)> {
    let n = space.require_matrix(m)?;
    let reduced = space.without(traced)?;
    let dims = space.dims();
    let strides = space.strides();
    let labels = space.labels();
    let kept_pos: Vec<usize> = (0..dims.len())
        .filter(|&k| !traced.contains(&labels[k]))
        .collect();
    let traced_pos: Vec<usize> = (0..dims.len())
        .filter(|&k| traced.contains(&labels[k]))
        .collect();
    let kept = offsets(&dims, &strides, &kept_pos);
    let summed = offsets(&dims, &strides, &traced_pos);
    let r = kept.len();
    let src = m.data();
    let mut out = vec![ZERO; r * r];
    for (i, &ki) in kept.iter().enumerate() {
        for (j, &kj) in kept.iter().enumerate() {
            out[i * r + j] = summed.iter().map(|&t| src[(ki + t) * n + kj + t]).sum();
        }
    }
    Ok((ComplexMatrix::new(r, r, out)?, reduced))
}

/// Re-expresses `m` with its factors in the order given by `order`.
///
/// Factor `k` of the result is the input factor labeled `order[k]`.
pub fn permute_subsystems(
    m: &ComplexMatrix,
    space: &LabeledSpace,
    order: &[&str],
) -> Result<(ComplexMatrix, LabeledSpace)> {
    let n = space.require_matrix(m)?;
    if order.len() != space.len() {
        return Err(LinalgError::InvalidPermutation(format!(
            "{} labels given for a space of {} factors",
            order.len(),
            space.len()
        )));
    }
    let mut positions = Vec::with_capacity(order.len());
    for (k, l) in order.iter().enumerate() {
        if order[..k].contains(l) {
            return Err(LinalgError::InvalidPermutation(format!(
                "label `{l}` repeated"
            )));
        }
        positions.push(space.position(l)?);
    }
    let target = LabeledSpace::new(positions.iter().map(|&p| space.factors[p].clone()))?;
    let map = offsets(&space.dims(), &space.strides(), &positions);
    let src = m.data();
    let mut out = vec![ZERO; n * n];
    for (i, &oi) in map.iter().enumerate() {
        let row = &src[oi * n..(oi + 1) * n];
        for (j, &oj) in map.iter().enumerate() {
            out[i * n + j] = row[oj];
        }
    }
    Ok((ComplexMatrix::new(n, n, out)?, target))
}

/// Exchanges the contents of factors `a` and `b`, keeping the labels in place.
pub fn swap_subsystems(
    m: &ComplexMatrix,
    space: &LabeledSpace,
    a: &str,
    b: &str,
) -> Result<ComplexMatrix> {
    let (pa, pb) = (space.position(a)?, space.position(b)?);
    if space.factors[pa].1 != space.factors[pb].1 {
        return Err(LinalgError::DimensionMismatch(format!(
            "cannot swap `{a}` (dim {}) with `{b}` (dim {})",
            space.factors[pa].1, space.factors[pb].1
        )));
    }
    let mut order = space.labels();
    order.swap(pa, pb);
    Ok(permute_subsystems(m, space, &order)?.0)
}
