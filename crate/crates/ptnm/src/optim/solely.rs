//! Distance between the nearest Markovian tensors and the no-backflow set
//! near `T`, which isolates non-Markovianity carried only by system-environment
//! correlations.

use super::markov::dnm_restarts;
use super::noib::{descend_from, full_rank_state, minimize_dibtres, package, AffineSet};
use super::ops::half_trace_norm_diff;
use super::{best_of, Measure, MeasureResult, OptimizerConfig, Result};
use crate::linalg::{ComplexMatrix, LabeledMatrix, LabeledSpace};
use crate::proctensor::{ProcessTensor, S1P, S2};
use serde::Serialize;

/// The solely-SECE distance with the two measures it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolelySeceResult {
    pub solely: MeasureResult,
    pub d_nm: MeasureResult,
    /// Backflow distance, lowered by every feasible point met along the way.
    pub d_ibtres: MeasureResult,
}

fn tensor_of(r: &MeasureResult) -> &ComplexMatrix {
    &r.argmin("tensor")
        .expect("minimizers carry their tensor")
        .mat
}

/// A Markovian minimizer read as a member of the no-backflow set.
fn as_backflow_point(m: &MeasureResult, d: usize) -> MeasureResult {
    let mut argmin = vec![(
        "tensor".to_string(),
        m.argmin("tensor").expect("tensor").clone(),
    )];
    if let Some(t1) = m.argmin("t1") {
        argmin.push((
            "t_prime".to_string(),
            LabeledMatrix {
                mat: t1.mat.clone(),
                space: LabeledSpace::uniform(&[S2, S1P], d).expect("valid labels"),
            },
        ));
    }
    if let Some(rho) = m.argmin("rho") {
        argmin.push(("rho".to_string(), rho.clone()));
    }
    MeasureResult {
        measure: Measure::Backflow,
        argmin,
        ..m.clone()
    }
}

/// State-pinned set through the backflow minimizer, preferring a full-rank state.
fn ball_start(
    d_ib: &MeasureResult,
    t: &ComplexMatrix,
    radius: f64,
    d: usize,
) -> Result<(AffineSet, ComplexMatrix)> {
    let x = tensor_of(d_ib);
    let rho = &d_ib.argmin("rho").expect("state").mat;
    let set = AffineSet::with_state(d, &full_rank_state(rho)?);
    if let Some(start) = set
        .retract(&set.project(x))
        .filter(|s| half_trace_norm_diff(t, s) <= radius)
    {
        return Ok((set, start));
    }
    Ok((AffineSet::with_state(d, rho), x.clone()))
}

/// `min ½‖T_M − X‖₁` over nearest Markovian `T_M` and no-backflow `X` with
/// `½‖T − X‖₁ ≤ D_IBTRES + tol_feas`.
pub fn minimize_solely_sece(t: &ProcessTensor, cfg: &OptimizerConfig) -> Result<SolelySeceResult> {
    let d = t.d_sys();
    let outcomes: Vec<MeasureResult> = dnm_restarts(t, cfg)?.into_iter().flatten().collect();
    let d_nm = best_of(
        Measure::NonMarkovianity,
        cfg.restarts,
        outcomes.iter().cloned().map(Ok).collect(),
    )?;
    let retained: Vec<&MeasureResult> = outcomes
        .iter()
        .filter(|r| r.value <= d_nm.value + cfg.tol_obj)
        .collect();

    let mut d_ib = minimize_dibtres(t, cfg)?;
    if d_nm.value < d_ib.value {
        d_ib = as_backflow_point(&d_nm, d);
    }
    let tau0 = 0.01 * cfg.step_scale(t);
    let mut best: Option<MeasureResult> = None;
    for markov in retained {
        let target = tensor_of(markov);
        let radius = d_ib.value + cfg.tol_feas;
        let (set, start) = ball_start(&d_ib, t.mat(), radius, d)?;
        let out = descend_from(target, Some((t.mat(), radius)), d, set, start, tau0, cfg)?;
        let backflow = half_trace_norm_diff(t.mat(), &out.x);
        let mut result = package(
            target,
            t.space().clone(),
            d,
            out,
            markov.restart_index,
            true,
        );
        if backflow < d_ib.value {
            d_ib = MeasureResult {
                value: backflow,
                ..result.clone()
            };
        }
        // A Markovian minimizer inside the ball is its own closest point.
        if half_trace_norm_diff(t.mat(), target) <= radius {
            result.value = 0.0;
            result.argmin[0].1.mat = target.clone();
        }
        result.measure = Measure::SolelySece;
        if best.as_ref().is_none_or(|b| result.value < b.value) {
            best = Some(result);
        }
    }
    let solely = best.expect("the best Markovian minimizer is always retained");
    Ok(SolelySeceResult {
        solely,
        d_nm,
        d_ibtres: d_ib,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proctensor::build_two_step;
    use crate::quantum::{random_density, random_unitary, DensityMatrix};

    fn small_cfg() -> OptimizerConfig {
        OptimizerConfig {
            restarts: 2,
            ..Default::default()
        }
    }

    #[test]
    fn markovian_process_has_none() {
        let rho = DensityMatrix::maximally_mixed(4);
        let u = crate::linalg::kron(&random_unitary(2, 1), &random_unitary(2, 2));
        let t = build_two_step(&u, &u, &rho, 2, 2).unwrap();
        let r = minimize_solely_sece(&t, &small_cfg()).unwrap();
        assert!(r.solely.value <= 1e-4, "{}", r.solely.value);
    }

    #[test]
    fn triangle_bounds_on_a_random_model() {
        let t = build_two_step(
            &random_unitary(4, 11),
            &random_unitary(4, 12),
            &random_density(4, 13),
            2,
            2,
        )
        .unwrap();
        let cfg = small_cfg();
        let r = minimize_solely_sece(&t, &cfg).unwrap();
        let (nm, ib, s) = (r.d_nm.value, r.d_ibtres.value, r.solely.value);
        assert!(s >= (nm - ib).abs() - 2.0 * cfg.tol_obj, "{s} {nm} {ib}");
        assert!(s <= nm + ib + 2.0 * cfg.tol_obj, "{s} {nm} {ib}");
    }
}
