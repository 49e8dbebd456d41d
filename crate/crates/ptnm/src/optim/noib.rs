//! Distance to the set of process tensors without backflow through the
//! environment: `tr_S1 X = T′ ⊗ I ⊗ ρ` together with the causal comb conditions.
//!
//! For a fixed `ρ`, or for a fixed trace-preserving `T′`, the affine part of the
//! set is cut out by commuting orthogonal projectors, so its projection is exact.

use super::ops::{eigh, half_trace_norm_diff, negative_mass, pip, project_onto_span, Split};
use super::projections::{project_density, project_trace_ball, soft_threshold, tp_fix};
use super::{best_of, Measure, MeasureResult, OptimError, OptimizerConfig, Result};
use crate::linalg::{kron, ComplexMatrix, LabeledMatrix, LabeledSpace};
use crate::proctensor::{initial_marginal, ProcessTensor, ReducedProcessTensor, S0, S1P, S2};
use crate::quantum::random_density_with;

/// Factor positions: S2, S1′, S1, S0′ and, for unreduced tensors, S0.
const A: usize = 0;
const B: usize = 1;
const C: usize = 2;
const E: usize = 3;

#[derive(Debug, Clone)]
enum Pin {
    /// Unreduced tensor with the initial state fixed.
    State(ComplexMatrix),
    /// Reduced tensor; the initial state has been factored out.
    Reduced,
    /// Unreduced tensor with the trace-preserving first-step channel `T′` fixed.
    Channel(ComplexMatrix),
}

/// Affine hull of the no-backflow set with one factor pinned.
#[derive(Debug, Clone)]
pub(crate) struct AffineSet {
    n: usize,
    d: usize,
    pin: Pin,
    /// `P_V(I)`: the direction fixing the trace.
    g: ComplexMatrix,
    /// Strictly feasible point when the pinned factor is full rank.
    interior: ComplexMatrix,
    interior_min: f64,
}

impl AffineSet {
    fn build(n: usize, d: usize, pin: Pin, interior: ComplexMatrix) -> Self {
        let mut set = Self {
            n,
            d,
            pin,
            g: ComplexMatrix::zeros(0, 0),
            interior_min: eigh(&interior).values.last().copied().unwrap_or(0.0),
            interior,
        };
        set.g = set.linear(&ComplexMatrix::identity(d.pow(n as u32)));
        set
    }

    pub(crate) fn with_state(d: usize, rho: &ComplexMatrix) -> Self {
        let interior = kron(&ComplexMatrix::identity(d.pow(4)), rho).scale(1.0 / (d * d) as f64);
        Self::build(5, d, Pin::State(rho.clone()), interior)
    }

    pub(crate) fn reduced(d: usize) -> Self {
        let interior = ComplexMatrix::identity(d.pow(4)).scale(1.0 / (d * d) as f64);
        Self::build(4, d, Pin::Reduced, interior)
    }

    pub(crate) fn with_channel(d: usize, t_prime: &ComplexMatrix) -> Self {
        let interior =
            kron(t_prime, &ComplexMatrix::identity(d.pow(3))).scale(1.0 / (d * d) as f64);
        Self::build(5, d, Pin::Channel(t_prime.clone()), interior)
    }

    fn split(&self, first: usize, count: usize) -> Split {
        Split::uniform(self.n, self.d, first, count)
    }

    /// `I_x/d ⊗ tr_x X` on one factor.
    fn flatten(&self, x: &ComplexMatrix, pos: usize) -> ComplexMatrix {
        project_onto_span(x, self.split(pos, 1), &ComplexMatrix::identity(self.d))
    }

    fn pinned(&self, x: &ComplexMatrix) -> ComplexMatrix {
        match &self.pin {
            Pin::State(rho) => {
                let w = kron(&ComplexMatrix::identity(self.d), rho);
                project_onto_span(x, self.split(E, 2), &w)
            }
            Pin::Reduced => self.flatten(x, E),
            Pin::Channel(t_prime) => {
                project_onto_span(&self.flatten(x, E), self.split(A, 2), t_prime)
            }
        }
    }

    /// Orthogonal projection onto the linear part.
    fn linear(&self, x: &ComplexMatrix) -> ComplexMatrix {
        // Comb condition: tr_S2 X = I ⊗ Y.
        let pa = self.flatten(x, A);
        let x1 = &(x - &pa) + &self.flatten(&pa, B);
        // Backflow condition on tr_S1 X.
        let pc = self.flatten(&x1, C);
        &(&x1 - &pc) + &self.pinned(&pc)
    }

    fn target_trace(&self) -> f64 {
        (self.d * self.d) as f64
    }

    /// Exact projection onto the affine set.
    pub(crate) fn project(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let v = self.linear(&x.hermitian_part());
        let shift = (self.target_trace() - v.trace().re) / self.g.trace().re;
        &v + &self.g.scale(shift)
    }

    pub(crate) fn residual(&self, x: &ComplexMatrix) -> f64 {
        (x - &self.project(x)).frobenius_norm()
    }

    /// Moves an affine-feasible point toward the interior until it is PSD.
    pub(crate) fn retract(&self, x: &ComplexMatrix) -> Option<ComplexMatrix> {
        let low = eigh(x).values.last().copied().unwrap_or(0.0);
        if low >= 0.0 {
            return Some(x.clone());
        }
        if self.interior_min <= 1e-13 {
            return None;
        }
        let t = -low / (self.interior_min - low);
        Some(&x.scale(1.0 - t) + &self.interior.scale(t))
    }

    /// `ρ` extracted from a member: `tr_{S2 S1′ S1 S0′} X / d²`.
    pub(crate) fn state_of(&self, x: &ComplexMatrix) -> ComplexMatrix {
        pip(x, self.split(0, 4), &ComplexMatrix::identity(self.d.pow(4)))
            .scale(1.0 / (self.d * self.d) as f64)
            .hermitian_part()
    }

    /// `T′` extracted from a member: `tr_{S1 S0′ [S0]} X / d`.
    pub(crate) fn channel_of(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let rest = self.n - C;
        pip(
            x,
            self.split(C, rest),
            &ComplexMatrix::identity(self.d.pow(rest as u32)),
        )
        .scale(1.0 / self.d as f64)
        .hermitian_part()
    }

    fn feasibility(&self, x: &ComplexMatrix) -> f64 {
        negative_mass(x).max(self.residual(x))
    }
}

/// `min ½‖target − X‖₁` over the affine set and the PSD cone, optionally also
/// inside the ball `½‖ball.0 − X‖₁ ≤ ball.1`.
pub(crate) struct BlockProblem<'a> {
    pub target: &'a ComplexMatrix,
    pub set: &'a AffineSet,
    pub ball: Option<(&'a ComplexMatrix, f64)>,
}

/// Inner iterations without objective progress before a block solve stops.
const STALL: usize = 100;

impl BlockProblem<'_> {
    fn ball_value(&self, x: &ComplexMatrix) -> f64 {
        self.ball.map_or(0.0, |(c, _)| half_trace_norm_diff(c, x))
    }

    /// Feasible point from an ADMM iterate, pulled back toward `anchor` if it leaves the ball.
    fn candidate(
        &self,
        z: &ComplexMatrix,
        anchor: &ComplexMatrix,
        tol_feas: f64,
    ) -> Option<ComplexMatrix> {
        let x = self.set.retract(&self.set.project(z))?;
        if negative_mass(&x) > tol_feas {
            return None;
        }
        let Some((_, radius)) = self.ball else {
            return Some(x);
        };
        let v1 = self.ball_value(&x);
        if v1 <= radius {
            return Some(x);
        }
        let v0 = self.ball_value(anchor);
        if v0 >= radius {
            return None;
        }
        let lambda = (radius - v0) / (v1 - v0);
        Some(&anchor.scale(1.0 - lambda) + &x.scale(lambda))
    }

    /// ADMM from the feasible point `x0`; returns the best feasible point seen.
    pub(crate) fn solve(
        &self,
        x0: &ComplexMatrix,
        tau0: f64,
        cfg: &OptimizerConfig,
    ) -> (ComplexMatrix, f64) {
        let n = self.target.rows();
        let zeros = || ComplexMatrix::zeros(n, n);
        let mut best = (x0.clone(), half_trace_norm_diff(self.target, x0));
        let mut x = x0.clone();
        let (mut u1, mut u2, mut u3) = (zeros(), zeros(), zeros());
        let mut beta = 0.5 / tau0;
        let eps = 0.1 * cfg.tol_obj;
        let blocks = if self.ball.is_some() { 3.0 } else { 2.0 };
        let mut last_gain = 0;
        for it in 1..=cfg.max_inner_iters {
            let r = soft_threshold(&(&(self.target - &x) - &u1), 0.5 / beta);
            let z_next = eigh(&(&x + &u2)).rebuild(|l| l.max(0.0));
            let mut sum = &(&(self.target - &r) - &u1) + &(&z_next - &u2);
            let s = self.ball.map(|(c, radius)| {
                let s = project_trace_ball(&(&(c - &x) - &u3), 2.0 * radius);
                sum += &(&(c - &s) - &u3);
                s
            });
            let x_next = self.set.project(&sum.scale(1.0 / blocks));
            let res1 = &(&r + &x_next) - self.target;
            let res2 = &x_next - &z_next;
            u1 += &res1;
            u2 += &res2;
            let mut primal2 = res1.frobenius_norm().powi(2) + res2.frobenius_norm().powi(2);
            if let (Some((c, _)), Some(s)) = (self.ball, s) {
                let res3 = &(&s + &x_next) - c;
                u3 += &res3;
                primal2 += res3.frobenius_norm().powi(2);
            }
            let primal = primal2.sqrt();
            let dual = beta * blocks.sqrt() * (&x_next - &x).frobenius_norm();
            x = x_next;
            let mut done = primal < eps && dual < eps;
            if it % 10 == 0 || done || it == cfg.max_inner_iters {
                if let Some(c) = self.candidate(&z_next, x0, cfg.tol_feas) {
                    let value = half_trace_norm_diff(self.target, &c);
                    if value < best.1 - 0.1 * cfg.tol_obj {
                        last_gain = it;
                    }
                    if value < best.1 {
                        best = (c, value);
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
                beta *= scale;
                u1 = u1.scale(1.0 / scale);
                u2 = u2.scale(1.0 / scale);
                u3 = u3.scale(1.0 / scale);
            }
        }
        best
    }
}

/// Feasible starting point: the projection of `t` pulled into the PSD cone.
pub(crate) fn feasible_start(set: &AffineSet, t: &ComplexMatrix) -> Result<ComplexMatrix> {
    set.retract(&set.project(t))
        .or_else(|| set.retract(&set.interior.clone()))
        .ok_or_else(|| OptimError::NonConvergent {
            what: "no-backflow starting point".to_string(),
            residual: f64::INFINITY,
        })
}

pub(crate) fn full_rank_state(rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    // Mixing in a trace of the identity keeps the interior point strictly positive.
    let d = rho.rows();
    let mixed = &rho.scale(1.0 - 1e-9) + &ComplexMatrix::identity(d).scale(1e-9 / d as f64);
    project_density(&mixed)
}

pub(crate) struct Outcome {
    pub x: ComplexMatrix,
    pub rho: ComplexMatrix,
    pub t_prime: ComplexMatrix,
    pub feas: f64,
    pub sweeps: usize,
}

fn descend(
    t: &ComplexMatrix,
    d: usize,
    rho0: ComplexMatrix,
    tau0: f64,
    cfg: &OptimizerConfig,
) -> Result<Outcome> {
    let set = AffineSet::with_state(d, &rho0);
    let x = feasible_start(&set, t)?;
    descend_from(t, None, d, set, x, tau0, cfg)
}

/// Alternates the state-pinned and channel-pinned blocks from the member `x` of `set`.
///
/// With a ball `(c, r)`, every accepted point also satisfies `½‖c − X‖₁ ≤ r`;
/// `x` must already do so.
pub(crate) fn descend_from(
    t: &ComplexMatrix,
    ball: Option<(&ComplexMatrix, f64)>,
    d: usize,
    mut set: AffineSet,
    mut x: ComplexMatrix,
    tau0: f64,
    cfg: &OptimizerConfig,
) -> Result<Outcome> {
    let admissible = |m: &ComplexMatrix| {
        negative_mass(m) <= cfg.tol_feas
            && ball.is_none_or(|(c, r)| half_trace_norm_diff(c, m) <= r)
    };
    let mut value = half_trace_norm_diff(t, &x);
    let mut sweeps = 0;
    while sweeps < cfg.max_outer_iters {
        sweeps += 1;
        let before = value;
        let problem = BlockProblem {
            target: t,
            set: &set,
            ball,
        };
        (x, value) = problem.solve(&x, tau0, cfg);
        if let Some(t_prime) = tp_fix(&set.channel_of(&x), d, d) {
            let channel_set = AffineSet::with_channel(d, &t_prime);
            let start = channel_set.retract(&channel_set.project(&x));
            if let Some(start) = start.filter(|s| admissible(s)) {
                let problem = BlockProblem {
                    target: t,
                    set: &channel_set,
                    ball,
                };
                let (next, v) = problem.solve(&start, tau0, cfg);
                if v < value {
                    let rho = full_rank_state(&channel_set.state_of(&next))?;
                    let next_set = AffineSet::with_state(d, &rho);
                    let moved = next_set.retract(&next_set.project(&next));
                    if let Some(moved) = moved.filter(|m| admissible(m)) {
                        let moved_value = half_trace_norm_diff(t, &moved);
                        if moved_value < value {
                            x = moved;
                            value = moved_value;
                            set = next_set;
                        }
                    }
                }
            }
        }
        if before - value < cfg.tol_obj {
            break;
        }
    }
    let rho = set.state_of(&x);
    let t_prime = set.channel_of(&x);
    Ok(Outcome {
        feas: set.feasibility(&x),
        x,
        rho,
        t_prime,
        sweeps,
    })
}

pub(crate) fn package(
    target: &ComplexMatrix,
    space: LabeledSpace,
    d: usize,
    out: Outcome,
    restart: usize,
    with_rho: bool,
) -> MeasureResult {
    let value = half_trace_norm_diff(target, &out.x);
    let mut argmin = vec![
        ("tensor".to_string(), LabeledMatrix { mat: out.x, space }),
        (
            "t_prime".to_string(),
            LabeledMatrix {
                mat: out.t_prime,
                space: LabeledSpace::uniform(&[S2, S1P], d).expect("valid labels"),
            },
        ),
    ];
    if with_rho {
        argmin.push((
            "rho".to_string(),
            LabeledMatrix {
                mat: out.rho,
                space: LabeledSpace::new([(S0, d)]).expect("valid label"),
            },
        ));
    }
    MeasureResult {
        measure: Measure::Backflow,
        value,
        argmin,
        restart_index: restart,
        iters: out.sweeps,
        feas_residual: out.feas,
    }
}

/// `min ½‖T − X‖₁` over process tensors without backflow through the environment.
///
/// Alternates a block with the initial state fixed and a block with the first
/// channel fixed.
pub fn minimize_dibtres(t: &ProcessTensor, cfg: &OptimizerConfig) -> Result<MeasureResult> {
    cfg.validate()?;
    t.require_steps(2)?;
    let d = t.d_sys();
    let tau0 = 0.01 * cfg.step_scale(t);
    let marginal = initial_marginal(t)?;
    let outcomes = (0..cfg.restarts)
        .map(|k| {
            let rho0 = if k == 0 {
                full_rank_state(&marginal.hermitian_part())?
            } else {
                random_density_with(d, &mut cfg.restart_rng(k))
                    .mat()
                    .clone()
            };
            let out = descend(t.mat(), d, rho0, tau0, cfg)?;
            Ok(package(t.mat(), t.space().clone(), d, out, k, true))
        })
        .collect();
    best_of(Measure::Backflow, cfg.restarts, outcomes)
}

/// The reduced problem `min ½‖T̃ − X̃‖₁` with `tr_S1 X̃ = T′ ⊗ I`; a single convex program.
pub fn minimize_dibtres_factorized(
    tr: &ReducedProcessTensor,
    cfg: &OptimizerConfig,
) -> Result<MeasureResult> {
    cfg.validate()?;
    let d = tr.d_sys();
    let set = AffineSet::reduced(d);
    let tau0 = 0.01 * cfg.step_scale(&tr.expand());
    let target = tr.mat();
    let outcomes = (0..cfg.restarts)
        .map(|k| {
            let start = if k == 0 {
                feasible_start(&set, target)?
            } else {
                let mut rng = cfg.restart_rng(k);
                let g = crate::quantum::ginibre(d.pow(4), d.pow(4), &mut rng);
                let psd = g.mul_unchecked(&g.adjoint());
                feasible_start(&set, &psd)?
            };
            let problem = BlockProblem {
                target,
                set: &set,
                ball: None,
            };
            let (x, _) = problem.solve(&start, tau0, cfg);
            let out = Outcome {
                feas: set.feasibility(&x),
                rho: tr.rho0().mat().clone(),
                t_prime: set.channel_of(&x),
                x,
                sweeps: 1,
            };
            Ok(package(target, tr.space().clone(), d, out, k, false))
        })
        .collect();
    best_of(Measure::Backflow, cfg.restarts, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::no_ibtres_residual;
    use crate::quantum::{random_density, random_tpcp};

    fn random_hermitian(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = crate::quantum::seeded_rng(seed);
        let g = crate::quantum::ginibre(n, n, &mut rng);
        (&g + &g.adjoint()).scale(0.5)
    }

    #[test]
    fn projection_is_idempotent_and_lands_in_the_set() {
        let rho = random_density(2, 1).mat().clone();
        let set = AffineSet::with_state(2, &rho);
        let x = random_hermitian(32, 2);
        let p = set.project(&x);
        assert!(set.project(&p).max_abs_diff(&p) < 1e-12);
        assert!((p.trace().re - 4.0).abs() < 1e-12);
        let member = set.retract(&p).unwrap();
        let t = ProcessTensor::from_matrix(member.clone(), 2, 2).unwrap();
        let report = no_ibtres_residual(&t).unwrap();
        assert!(report.residual < 1e-10, "{report:?}");
        assert!(set.state_of(&member).max_abs_diff(&rho) < 1e-12);
    }

    #[test]
    fn projection_is_orthogonal() {
        let set = AffineSet::with_state(2, random_density(2, 3).mat());
        let x = random_hermitian(32, 4);
        let p = set.project(&x);
        let a = set.project(&random_hermitian(32, 5));
        // x − P(x) is orthogonal to differences of set members.
        let ip = (&x - &p).inner(&(&a - &p));
        assert!(ip.norm() < 1e-10);
    }

    #[test]
    fn channel_pinned_projection_keeps_the_channel() {
        let t_prime = random_tpcp(2, 2, 6).into_choi();
        let set = AffineSet::with_channel(2, &t_prime);
        let p = set.project(&random_hermitian(32, 7));
        assert!(set.project(&p).max_abs_diff(&p) < 1e-12);
        assert!(set.channel_of(&p).max_abs_diff(&t_prime) < 1e-12);
        let x = random_hermitian(32, 8);
        let a = set.project(&random_hermitian(32, 9));
        assert!(
            (&x - &set.project(&x))
                .inner(&(&a - &set.project(&x)))
                .norm()
                < 1e-10
        );
    }

    #[test]
    fn members_have_zero_distance() {
        let rho = random_density(2, 10).mat().clone();
        let set = AffineSet::with_state(2, &rho);
        let member = set
            .retract(&set.project(&random_hermitian(32, 11)))
            .unwrap();
        let t = ProcessTensor::from_matrix(member, 2, 2).unwrap();
        let cfg = OptimizerConfig {
            restarts: 1,
            ..Default::default()
        };
        let r = minimize_dibtres(&t, &cfg).unwrap();
        assert!(r.value < 1e-6, "{}", r.value);
        assert!(r.feas_residual < 1e-8);
    }
}
