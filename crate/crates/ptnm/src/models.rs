//! Generators of system-environment models `(U₁, U₀, ρ^SE)`.
//!
//! The system factor always comes first, `S ⊗ E`. Times enter as
//! `U₀ = U(t₁)` and `U₁ = U(t₂ − t₁)`.

use crate::linalg::{eig_hermitian, LinalgError};
use crate::linalg::{expm_i, kron, kron_all, permute_subsystems, ComplexMatrix, LabeledSpace, C64};
use crate::proctensor::{build_two_step, ProcessError, ProcessTensor};
use crate::quantum::{random_unitary, DensityMatrix, QuantumError};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Process(#[from] ProcessError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Local unitaries only, `U_S ⊗ U_E` at each step.
    Uncoupled,
    /// `exp(−iθ·SWAP)` up to a global phase, with `d_env = d_sys`.
    PartialSwap,
    /// The `θ = π/2` partial swap.
    FullSwap,
    /// Constant first step onto a correlated system-E₁ state.
    SolelySece,
    /// `exp(−iHt)` for a supplied Hamiltonian on `S ⊗ E`.
    Hamiltonian,
}

/// Named initial states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Default system state with the environment in `|0⟩`.
    Factorized,
    /// Equal mixture of `|Φ⁺⟩` on the system and the first two environment
    /// levels with the factorized preset.
    PartialBell,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Preset(Preset),
    /// System state; the environment starts in `|0⟩`.
    System(DensityMatrix),
    /// Full system-environment state.
    Joint(DensityMatrix),
}

/// Parameters of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub d_sys: usize,
    /// `None` selects the kind's natural environment size.
    pub d_env: Option<usize>,
    /// Coupling `g` in units of inverse time.
    pub coupling: f64,
    pub t1: f64,
    pub t2: f64,
    /// Fixed swap angle; otherwise `θ = g·Δt` for each interval.
    pub theta: Option<f64>,
    pub hamiltonian: Option<ComplexMatrix>,
    /// Draws random local unitaries for the uncoupled kind.
    pub seed: Option<u64>,
    pub initial: InitialState,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            d_sys: 2,
            d_env: None,
            coupling: 1.0,
            t1: 0.5,
            t2: 1.0,
            theta: None,
            hamiltonian: None,
            seed: None,
            initial: InitialState::Preset(Preset::Factorized),
        }
    }

    pub fn d_env(&self) -> usize {
        self.d_env.unwrap_or(match self.kind {
            ModelKind::SolelySece => SOLELY_SECE_D_ENV,
            _ => self.d_sys,
        })
    }

    /// Same model with the middle time moved.
    pub fn at_t1(&self, t1: f64) -> Self {
        Self { t1, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidParameter(m));
        if self.d_sys < 2 {
            return bad(format!("d_sys must be at least 2, got {}", self.d_sys));
        }
        if !(0.0 <= self.t1 && self.t1 <= self.t2 && self.t2.is_finite()) {
            return bad(format!(
                "times need 0 <= t1 <= t2, got t1 = {}, t2 = {}",
                self.t1, self.t2
            ));
        }
        if !self.coupling.is_finite() || self.theta.is_some_and(|t| !t.is_finite()) {
            return bad("coupling and theta must be finite".into());
        }
        let d_env = self.d_env();
        match self.kind {
            ModelKind::PartialSwap | ModelKind::FullSwap if d_env != self.d_sys => {
                return bad(format!("swap models need d_env = d_sys, got {d_env}"));
            }
            ModelKind::SolelySece if self.d_sys != 2 || d_env != SOLELY_SECE_D_ENV => {
                return bad(format!(
                    "solely_sece needs d_sys = 2 and d_env = {SOLELY_SECE_D_ENV}"
                ));
            }
            ModelKind::SolelySece
                if !matches!(
                    self.initial,
                    InitialState::Preset(Preset::Factorized) | InitialState::System(_)
                ) =>
            {
                return bad("solely_sece needs the environment to start in |0>".into());
            }
            ModelKind::Hamiltonian => {
                let Some(h) = &self.hamiltonian else {
                    return bad("hamiltonian kind needs a Hamiltonian".into());
                };
                let n = self.d_sys * d_env;
                if h.rows() != n || h.cols() != n {
                    return bad(format!(
                        "Hamiltonian is {}x{}, expected {n}x{n}",
                        h.rows(),
                        h.cols()
                    ));
                }
                h.require_hermitian()?;
            }
            _ => {}
        }
        if d_env < 2 && matches!(self.initial, InitialState::Preset(Preset::PartialBell)) {
            return bad("partial_bell needs d_env >= 2".into());
        }
        Ok(())
    }
}

/// Unitaries and initial state of a generated model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub u1: ComplexMatrix,
    pub u0: ComplexMatrix,
    pub rho_se: DensityMatrix,
    pub d_sys: usize,
    pub d_env: usize,
}

impl Model {
    pub fn tensor(&self) -> Result<ProcessTensor> {
        Ok(build_two_step(
            &self.u1,
            &self.u0,
            &self.rho_se,
            self.d_sys,
            self.d_env,
        )?)
    }
}

/// Environment of the solely-SECE model: `E₁(2) ⊗ E₂(2) ⊗ R(4)`.
pub const SOLELY_SECE_D_ENV: usize = 16;
/// Weight of `|Φ⁺⟩` in the constant correlated state.
pub const SOLELY_SECE_BELL_WEIGHT: f64 = 0.5;
const SOLELY_SECE_THETA: f64 = std::f64::consts::FRAC_PI_4;

/// Default system state.
pub fn default_system_state() -> DensityMatrix {
    DensityMatrix::from_matrix(ComplexMatrix::from_real(2, 2, &[0.7, 0.2, 0.2, 0.3]).expect("2x2"))
        .expect("valid state")
}

pub fn generate(spec: &ModelSpec) -> Result<Model> {
    spec.validate()?;
    let (d, d_env) = (spec.d_sys, spec.d_env());
    let (dt0, dt1) = (spec.t1, spec.t2 - spec.t1);
    let (u0, u1) = match spec.kind {
        ModelKind::Uncoupled => match spec.seed {
            Some(seed) => (
                kron(&random_unitary(d, seed), &random_unitary(d_env, seed + 1)),
                kron(
                    &random_unitary(d, seed + 2),
                    &random_unitary(d_env, seed + 3),
                ),
            ),
            None => {
                let h = local_hamiltonian(d, d_env, spec.coupling);
                (expm_i(&h, dt0)?, expm_i(&h, dt1)?)
            }
        },
        ModelKind::PartialSwap => {
            let (a, b) = match spec.theta {
                Some(t) => (t, t),
                None => (spec.coupling * dt0, spec.coupling * dt1),
            };
            (partial_swap(d, a), partial_swap(d, b))
        }
        ModelKind::FullSwap => (partial_swap(d, FRAC_PI_2), partial_swap(d, FRAC_PI_2)),
        ModelKind::SolelySece => (
            constant_step(SOLELY_SECE_BELL_WEIGHT)?,
            kron(
                &partial_swap(2, spec.theta.unwrap_or(SOLELY_SECE_THETA)),
                &ComplexMatrix::identity(8),
            ),
        ),
        ModelKind::Hamiltonian => {
            let h = spec.hamiltonian.as_ref().expect("validated");
            (expm_i(h, dt0)?, expm_i(h, dt1)?)
        }
    };
    let rho_se = initial_state(&spec.initial, d, d_env)?;
    Ok(Model {
        u1,
        u0,
        rho_se,
        d_sys: d,
        d_env,
    })
}

/// Shorthand for `generate(spec)?.tensor()`.
pub fn model_tensor(spec: &ModelSpec) -> Result<ProcessTensor> {
    generate(spec)?.tensor()
}

fn ground(d: usize) -> ComplexMatrix {
    ComplexMatrix::unit(d, 0, 0)
}

fn initial_state(init: &InitialState, d: usize, d_env: usize) -> Result<DensityMatrix> {
    let space = LabeledSpace::new([("S", d), ("E", d_env)])?;
    let system = |rho: &DensityMatrix| -> Result<DensityMatrix> {
        if rho.dim() != d {
            return Err(ModelError::InvalidParameter(format!(
                "system state of dimension {}, expected {d}",
                rho.dim()
            )));
        }
        Ok(DensityMatrix::new(
            kron(rho.mat(), &ground(d_env)),
            space.clone(),
        )?)
    };
    let default_system = || -> Result<DensityMatrix> {
        if d != 2 {
            return Err(ModelError::InvalidParameter(
                "presets need d_sys = 2; give the system state explicitly".into(),
            ));
        }
        Ok(default_system_state())
    };
    match init {
        InitialState::Preset(Preset::Factorized) => system(&default_system()?),
        InitialState::Preset(Preset::PartialBell) => {
            let factorized = system(&default_system()?)?;
            let mut phi = vec![C64::new(0.0, 0.0); d * d_env];
            phi[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            phi[d_env + 1] = phi[0];
            let mixed = &ComplexMatrix::outer(&phi).scale(0.5) + &factorized.mat().scale(0.5);
            Ok(DensityMatrix::new(mixed, space)?)
        }
        InitialState::System(rho) => system(rho),
        InitialState::Joint(rho) => {
            if rho.dim() != d * d_env {
                return Err(ModelError::InvalidParameter(format!(
                    "joint state of dimension {}, expected {}",
                    rho.dim(),
                    d * d_env
                )));
            }
            Ok(DensityMatrix::new(rho.mat().clone(), space)?)
        }
    }
}

fn swap(d: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d * d, d * d, |r, c| {
        let hit = r / d == c % d && r % d == c / d;
        C64::new(if hit { 1.0 } else { 0.0 }, 0.0)
    })
}

/// `e^{iθ} exp(−iθ·SWAP) = e^{iθ}(cos θ·I − i sin θ·SWAP)`.
pub fn partial_swap(d: usize, theta: f64) -> ComplexMatrix {
    let phase = C64::from_polar(1.0, theta);
    let id = ComplexMatrix::identity(d * d).scale_c(phase * theta.cos());
    &id + &swap(d).scale_c(phase * C64::new(0.0, -theta.sin()))
}

fn local_hamiltonian(d: usize, d_env: usize, g: f64) -> ComplexMatrix {
    let hop = ComplexMatrix::from_fn(d, d, |r, c| {
        C64::new(if r.abs_diff(c) == 1 { g } else { 0.0 }, 0.0)
    });
    let levels: Vec<f64> = (0..d_env).map(|k| g * k as f64).collect();
    &kron(&hop, &ComplexMatrix::identity(d_env))
        + &kron(
            &ComplexMatrix::identity(d),
            &ComplexMatrix::from_diag(&levels),
        )
}

/// `p·|Φ⁺⟩⟨Φ⁺| + (1 − p)·I/4` on system and E₁.
pub fn solely_sece_constant_state(p: f64) -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let phi = [
        C64::new(h, 0.0),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(h, 0.0),
    ];
    &ComplexMatrix::outer(&phi).scale(p) + &ComplexMatrix::identity(4).scale((1.0 - p) / 4.0)
}

/// Householder reflection taking `|0⟩` to the unit vector `psi`.
fn preparation(psi: &[C64]) -> ComplexMatrix {
    let n = psi.len();
    let phase = if psi[0].norm() > 0.0 {
        psi[0].conj() / psi[0].norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let target: Vec<C64> = psi.iter().map(|z| z * phase).collect();
    let mut w = target.iter().map(|z| -z).collect::<Vec<_>>();
    w[0] += 1.0;
    let norm: f64 = w.iter().map(|z| z.norm_sqr()).sum();
    let reflect = if norm < 1e-30 {
        ComplexMatrix::identity(n)
    } else {
        &ComplexMatrix::identity(n) - &ComplexMatrix::outer(&w).scale(2.0 / norm)
    };
    reflect.scale_c(phase.conj())
}

/// First-step unitary on `S ⊗ E₁ ⊗ E₂ ⊗ R`: swap the system into E₂, then
/// prepare the purification of the constant state on `S ⊗ E₁ ⊗ R`.
fn constant_step(p: f64) -> Result<ComplexMatrix> {
    let e = eig_hermitian(&solely_sece_constant_state(p))?;
    let mut psi = vec![C64::new(0.0, 0.0); 16];
    for (k, &l) in e.values.iter().enumerate() {
        let amp = l.max(0.0).sqrt();
        for s in 0..4 {
            psi[s * 4 + k] += e.vectors[(s, k)] * amp;
        }
    }
    let prep = kron(&preparation(&psi), &ComplexMatrix::identity(2));
    let order_in = LabeledSpace::new([("S", 2), ("E1", 2), ("R", 4), ("E2", 2)])?;
    let (prep, _) = permute_subsystems(&prep, &order_in, &["S", "E1", "E2", "R"])?;
    let exchange = permute_embed_swap();
    Ok(prep.matmul(&exchange)?)
}

/// SWAP of the system with E₂ on `S ⊗ E₁ ⊗ E₂ ⊗ R`.
fn permute_embed_swap() -> ComplexMatrix {
    let space =
        LabeledSpace::new([("S", 2), ("E1", 2), ("E2", 2), ("R", 4)]).expect("valid labels");
    let full = kron_all(&[&swap(2), &ComplexMatrix::identity(8)]);
    let order =
        LabeledSpace::new([("S", 2), ("E2", 2), ("E1", 2), ("R", 4)]).expect("valid labels");
    permute_subsystems(&full, &order, &space.labels())
        .expect("same labels")
        .0
}
