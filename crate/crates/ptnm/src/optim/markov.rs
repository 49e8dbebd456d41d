//! Distance to the Markovian set `{T₁ ⊗ T₀ ⊗ ρ}`.

use super::ops::{eigh, half_trace_norm_diff, negative_mass, pip, Split};
use super::projections::{affine_tp, project_density, project_tpcp_with, soft_threshold, tp_fix};
use super::{best_of, Measure, MeasureResult, OptimizerConfig, Result};
use crate::linalg::{kron, kron_all, ComplexMatrix, LabeledMatrix, LabeledSpace};
use crate::proctensor::{
    derive_lnm, initial_marginal, ProcessTensor, ReducedProcessTensor, S0, S0P, S1, S1P, S2,
};
use crate::quantum::{random_density_with, random_tpcp_with, tp_residual};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Channel(usize),
    Density(usize),
}

impl Kind {
    /// Orthogonal projection onto the affine constraints.
    fn affine(self, m: &ComplexMatrix) -> ComplexMatrix {
        match self {
            Kind::Channel(d) => affine_tp(m, d, d),
            Kind::Density(d) => {
                let shift = (1.0 - m.trace().re) / d as f64;
                m + &ComplexMatrix::identity(d).scale(shift)
            }
        }
    }

    /// Exactly feasible point from a PSD matrix.
    fn repair(self, psd: &ComplexMatrix) -> Option<ComplexMatrix> {
        match self {
            Kind::Channel(d) => tp_fix(psd, d, d),
            Kind::Density(_) => {
                let tr = psd.trace().re;
                (tr > 1e-12).then(|| psd.scale(1.0 / tr))
            }
        }
    }

    fn project(self, m: &ComplexMatrix, cfg: &OptimizerConfig) -> Result<ComplexMatrix> {
        match self {
            Kind::Channel(d) => project_tpcp_with(m, d, d, cfg.tol_feas, cfg.max_inner_iters),
            Kind::Density(_) => project_density(m),
        }
    }

    fn residual(self, m: &ComplexMatrix) -> f64 {
        let neg = negative_mass(m);
        match self {
            Kind::Channel(d) => neg.max(tp_residual(m, d, d)),
            Kind::Density(_) => neg.max((m.trace().re - 1.0).abs()),
        }
    }

    fn random<R: Rng + ?Sized>(self, rng: &mut R) -> ComplexMatrix {
        match self {
            Kind::Channel(d) => random_tpcp_with(d, d, rng).into_choi(),
            Kind::Density(d) => random_density_with(d, rng).mat().clone(),
        }
    }
}

/// Inner iterations without objective progress before a block solve stops.
const STALL: usize = 100;

/// The linear map `X ↦ left ⊗ X ⊗ right` for one block of the product.
struct Embedding {
    left: ComplexMatrix,
    right: ComplexMatrix,
    size: usize,
    gain: f64,
}

impl Embedding {
    fn new(factors: &[ComplexMatrix], k: usize) -> Self {
        let left = kron_all(&factors[..k].iter().collect::<Vec<_>>());
        let right = kron_all(&factors[k + 1..].iter().collect::<Vec<_>>());
        let gain = left.inner(&left).re * right.inner(&right).re;
        Self {
            left,
            right,
            size: factors[k].rows(),
            gain,
        }
    }

    fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        kron(&kron(&self.left, x), &self.right)
    }

    /// Least-squares preimage `A*(y) / ‖A‖²`.
    fn pullback(&self, y: &ComplexMatrix) -> ComplexMatrix {
        let (nl, nr) = (self.left.rows(), self.right.rows());
        let z = pip(
            y,
            Split {
                hi: 1,
                mid: nl,
                lo: self.size * nr,
            },
            &self.left,
        );
        pip(
            &z,
            Split {
                hi: self.size,
                mid: nr,
                lo: 1,
            },
            &self.right,
        )
        .scale(1.0 / self.gain)
        .hermitian_part()
    }
}

/// Minimizes `½‖target − left ⊗ X ⊗ right‖₁` over the block's feasible set by ADMM.
///
/// The feasible set is split into its affine part, which carries `X`, and the
/// PSD cone, which carries a copy `Y`. Returns the best feasible point seen,
/// never worse than `x0`.
fn solve_block(
    target: &ComplexMatrix,
    emb: &Embedding,
    kind: Kind,
    x0: &ComplexMatrix,
    state: &mut AdmmState,
    k: usize,
    cfg: &OptimizerConfig,
) -> Result<(ComplexMatrix, f64)> {
    let mut x = x0.clone();
    let mut ax = emb.apply(&x);
    let mut best = (x.clone(), half_trace_norm_diff(target, &ax));
    let m = x0.rows();
    let AdmmState { u1, beta, copies } = state;
    let copy = copies[k].get_or_insert_with(|| Copy {
        y: x0.clone(),
        u: ComplexMatrix::zeros(m, m),
        beta: *beta,
    });
    copy.u = copy.u.scale(copy.beta / *beta);
    let Copy {
        y,
        u: u2,
        beta: copy_beta,
    } = copy;
    let root_gain = emb.gain.sqrt();
    let eps = 0.1 * cfg.tol_obj;
    let mut last_gain = 0;
    for it in 1..=cfg.max_inner_iters {
        let r = soft_threshold(&(&(target - &ax) - &*u1), 0.5 / *beta);
        let v1 = emb.pullback(&(&(target - &r) - &*u1));
        let v2 = &*y - &*u2;
        let x_next = kind.affine(&(&v1 + &v2).scale(0.5));
        let y_next = eigh(&(&x_next + &*u2)).rebuild(|l| l.max(0.0));
        let ax_next = emb.apply(&x_next);
        let res1 = &(&ax_next + &r) - target;
        let res2 = &x_next - &y_next;
        *u1 += &res1;
        *u2 += &res2;
        let primal = res1
            .frobenius_norm()
            .hypot(root_gain * res2.frobenius_norm());
        let dual = *beta
            * root_gain
            * (&y_next - &*y)
                .frobenius_norm()
                .hypot((&x_next - &x).frobenius_norm());
        x = x_next;
        *y = y_next;
        ax = ax_next;
        let mut done = primal < eps && dual < eps;
        if it % 5 == 0 || done || it == cfg.max_inner_iters {
            if let Some(feasible) = kind.repair(y) {
                let value = half_trace_norm_diff(target, &emb.apply(&feasible));
                if value < best.1 - 0.1 * cfg.tol_obj {
                    last_gain = it;
                }
                if value < best.1 {
                    best = (feasible, value);
                }
            }
            done |= it - last_gain >= STALL;
        }
        if done {
            break;
        }
        let scale = if primal > 10.0 * dual {
            2.0
        } else if dual > 10.0 * primal {
            0.5
        } else {
            1.0
        };
        if scale != 1.0 {
            *beta *= scale;
            *u1 = u1.scale(1.0 / scale);
            *u2 = u2.scale(1.0 / scale);
        }
    }
    *copy_beta = *beta;
    Ok(best)
}

/// PSD copy of one block with its scaled dual, valid for the penalty `beta`.
struct Copy {
    y: ComplexMatrix,
    u: ComplexMatrix,
    beta: f64,
}

/// ADMM variables carried across the block solves of one descent.
struct AdmmState {
    u1: ComplexMatrix,
    beta: f64,
    copies: Vec<Option<Copy>>,
}

/// Frobenius alternating least squares; each block update is exact for its block.
fn warm_start(
    target: &ComplexMatrix,
    kinds: &[Kind],
    factors: &mut [ComplexMatrix],
    cfg: &OptimizerConfig,
) -> Result<()> {
    for _ in 0..30 {
        let mut change: f64 = 0.0;
        for k in (0..kinds.len()).rev() {
            let emb = Embedding::new(factors, k);
            let next = kinds[k].project(&emb.pullback(target), cfg)?;
            change = change.max((&next - &factors[k]).frobenius_norm());
            factors[k] = next;
        }
        if change < 1e-12 {
            break;
        }
    }
    Ok(())
}

struct Descent {
    factors: Vec<ComplexMatrix>,
    sweeps: usize,
}

/// Block coordinate descent from the given factors, latest block last.
fn descend(
    target: &ComplexMatrix,
    kinds: &[Kind],
    mut factors: Vec<ComplexMatrix>,
    tau0: f64,
    cfg: &OptimizerConfig,
) -> Result<Descent> {
    warm_start(target, kinds, &mut factors, cfg)?;
    let mut value = half_trace_norm_diff(target, &kron_all(&factors.iter().collect::<Vec<_>>()));
    let n = target.rows();
    let mut state = AdmmState {
        u1: ComplexMatrix::zeros(n, n),
        beta: 0.5 / tau0,
        copies: kinds.iter().map(|_| None).collect(),
    };
    let mut sweeps = 0;
    while sweeps < cfg.max_outer_iters && value > 0.0 {
        sweeps += 1;
        let before = value;
        for k in (0..kinds.len()).rev() {
            let emb = Embedding::new(&factors, k);
            let (x, v) = solve_block(target, &emb, kinds[k], &factors[k], &mut state, k, cfg)?;
            factors[k] = x;
            value = v;
        }
        if before - value < cfg.tol_obj {
            break;
        }
    }
    Ok(Descent { factors, sweeps })
}

fn marginal_factors(t: &ProcessTensor) -> Result<Vec<ComplexMatrix>> {
    let d = t.d_sys() as f64;
    let derived = derive_lnm(t)?;
    let t0 = derived.m.partial_trace(&[S0])?.mat;
    let t1 = t
        .labeled()
        .partial_trace(&[S1, S0P, S0])?
        .mat
        .scale(1.0 / d);
    Ok(vec![t1, t0, initial_marginal(t)?])
}

fn feasible_start(
    kinds: &[Kind],
    raw: Vec<ComplexMatrix>,
    cfg: &OptimizerConfig,
) -> Result<Vec<ComplexMatrix>> {
    kinds
        .iter()
        .zip(raw)
        .map(|(k, m)| k.project(&m.hermitian_part(), cfg))
        .collect()
}

fn restart_factors(
    restart: usize,
    kinds: &[Kind],
    marginals: &[ComplexMatrix],
    cfg: &OptimizerConfig,
) -> Result<Vec<ComplexMatrix>> {
    if restart == 0 {
        return feasible_start(kinds, marginals.to_vec(), cfg);
    }
    let mut rng = cfg.restart_rng(restart);
    Ok(kinds.iter().map(|k| k.random(&mut rng)).collect())
}

fn channel_space(out: &str, inp: &str, d: usize) -> LabeledSpace {
    LabeledSpace::uniform(&[out, inp], d).expect("valid labels")
}

fn package(
    target: &ComplexMatrix,
    kinds: &[Kind],
    descent: Descent,
    restart: usize,
    d: usize,
    tensor_space: LabeledSpace,
) -> MeasureResult {
    let tensor = kron_all(&descent.factors.iter().collect::<Vec<_>>());
    let feas = kinds
        .iter()
        .zip(&descent.factors)
        .map(|(k, f)| k.residual(f))
        .fold(0.0, f64::max);
    let names = ["t1", "t0", "rho"];
    let spaces = [
        channel_space(S2, S1P, d),
        channel_space(S1, S0P, d),
        LabeledSpace::new([(S0, d)]).expect("valid label"),
    ];
    let mut argmin: Vec<(String, LabeledMatrix)> = descent
        .factors
        .into_iter()
        .zip(names.iter().zip(spaces))
        .map(|(mat, (name, space))| (name.to_string(), LabeledMatrix { mat, space }))
        .collect();
    let value = half_trace_norm_diff(target, &tensor);
    argmin.push((
        "tensor".to_string(),
        LabeledMatrix {
            mat: tensor,
            space: tensor_space,
        },
    ));
    MeasureResult {
        measure: Measure::NonMarkovianity,
        value,
        argmin,
        restart_index: restart,
        iters: descent.sweeps,
        feas_residual: feas,
    }
}

/// Every restart's outcome, in restart order.
pub(crate) fn dnm_restarts(
    t: &ProcessTensor,
    cfg: &OptimizerConfig,
) -> Result<Vec<Result<MeasureResult>>> {
    cfg.validate()?;
    t.require_steps(2)?;
    let d = t.d_sys();
    let kinds = [Kind::Channel(d), Kind::Channel(d), Kind::Density(d)];
    let marginals = marginal_factors(t)?;
    let tau0 = 0.01 * cfg.step_scale(t);
    Ok((0..cfg.restarts)
        .map(|k| {
            let start = restart_factors(k, &kinds, &marginals, cfg)?;
            let descent = descend(t.mat(), &kinds, start, tau0, cfg)?;
            Ok(package(t.mat(), &kinds, descent, k, d, t.space().clone()))
        })
        .collect())
}

/// `min ½‖T − T₁ ⊗ T₀ ⊗ ρ‖₁` over channels `T₁`, `T₀` and states `ρ`.
pub fn minimize_dnm(t: &ProcessTensor, cfg: &OptimizerConfig) -> Result<MeasureResult> {
    let outcomes = dnm_restarts(t, cfg)?;
    best_of(Measure::NonMarkovianity, cfg.restarts, outcomes)
}

/// `min ½‖T̃ − T₁ ⊗ T₀‖₁` with the initial state pinned to that of the reduced tensor.
pub fn minimize_dnm_factorized(
    tr: &ReducedProcessTensor,
    cfg: &OptimizerConfig,
) -> Result<MeasureResult> {
    cfg.validate()?;
    let d = tr.d_sys();
    let kinds = [Kind::Channel(d), Kind::Channel(d)];
    let full = tr.expand();
    let marginals = marginal_factors(&full)?;
    let tau0 = 0.01 * cfg.step_scale(&full);
    let outcomes = (0..cfg.restarts)
        .map(|k| {
            let start = restart_factors(k, &kinds, &marginals[..2], cfg)?;
            let descent = descend(tr.mat(), &kinds, start, tau0, cfg)?;
            Ok(package(tr.mat(), &kinds, descent, k, d, tr.space().clone()))
        })
        .collect();
    best_of(Measure::NonMarkovianity, cfg.restarts, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proctensor::build_two_step;
    use crate::quantum::{random_density, random_tpcp, DensityMatrix, QuantumMap};

    fn product_tensor(seed: u64) -> (ProcessTensor, Vec<ComplexMatrix>) {
        let t1 = random_tpcp(2, 2, seed).into_choi();
        let t0 = random_tpcp(2, 2, seed + 1).into_choi();
        let rho = random_density(2, seed + 2).mat().clone();
        let mat = kron_all(&[&t1, &t0, &rho]);
        (
            ProcessTensor::from_matrix(mat, 2, 2).unwrap(),
            vec![t1, t0, rho],
        )
    }

    #[test]
    fn pullback_inverts_embedding() {
        let (_, f) = product_tensor(1);
        for k in 0..3 {
            let emb = Embedding::new(&f, k);
            let y = emb.apply(&f[k]);
            assert!(emb.pullback(&y).max_abs_diff(&f[k]) < 1e-12);
        }
    }

    #[test]
    fn product_tensor_has_zero_distance() {
        let (t, _) = product_tensor(4);
        let r = minimize_dnm(
            &t,
            &OptimizerConfig {
                restarts: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.value < 1e-8, "{}", r.value);
        assert!(r.feas_residual < 1e-8);
    }

    #[test]
    fn identity_process_reduced_and_full() {
        let rho = DensityMatrix::new(
            ComplexMatrix::from_real(2, 2, &[0.7, 0.2, 0.2, 0.3]).unwrap(),
            LabeledSpace::new([("S", 2)]).unwrap(),
        )
        .unwrap();
        let env = DensityMatrix::basis(2, 0)
            .with_space(LabeledSpace::new([("E", 2)]).unwrap())
            .unwrap();
        let id = ComplexMatrix::identity(4);
        let t = build_two_step(&id, &id, &rho.tensor(&env).unwrap(), 2, 2).unwrap();
        let cfg = OptimizerConfig {
            restarts: 1,
            ..Default::default()
        };
        assert!(minimize_dnm(&t, &cfg).unwrap().value < 1e-6);
        let tr = crate::proctensor::reduce(&t, &rho).unwrap();
        let r = minimize_dnm_factorized(&tr, &cfg).unwrap();
        assert!(r.value < 1e-6);
        let e = QuantumMap::identity(2).into_choi();
        assert!(r.argmin("t1").unwrap().mat.max_abs_diff(&e) < 1e-6);
    }
}
