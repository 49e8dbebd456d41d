use crate::config::{Check, Format, RunConfig};
use crate::error::{CliError, Result};
use ptnm::criteria::{
    default_probes, factorization_residual, lemma1_probe, no_ibtres_residual,
    no_ibtres_residual_factorized, no_sece_residual, no_sece_residual_factorized, ConditionReport,
};
use ptnm::models::{model_tensor, ModelKind, ModelSpec};
use ptnm::optim::{
    minimize_solely_sece, trapezoid, MeasureResult, OptimizerConfig, SolelySeceResult,
};
use ptnm::proctensor::{reduce, ProcessTensor};
use ptnm::quantum::DensityMatrix;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// Builds the configured model's two-step tensor.
pub fn cmd_build(cfg: &RunConfig) -> Result<ProcessTensor> {
    Ok(model_tensor(cfg.model()?)?)
}

pub fn tensor_to_json(t: &ProcessTensor) -> String {
    serde_json::to_string(t).expect("tensors serialize")
}

/// Reads a tensor file written by `build`, re-checking its shape.
pub fn load_tensor(path: &Path) -> Result<ProcessTensor> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Missing {
        path: path.to_path_buf(),
        source,
    })?;
    let raw: ProcessTensor = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(ProcessTensor::from_matrix(
        raw.mat().clone(),
        raw.d_sys(),
        raw.steps(),
    )?)
}

/// The tensor file if one is configured, otherwise the model.
fn input_tensor(cfg: &RunConfig) -> Result<ProcessTensor> {
    match &cfg.tensor_path {
        Some(path) => load_tensor(path),
        None => cmd_build(cfg),
    }
}

/// One line of a check report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub condition: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl From<&ConditionReport> for CheckRecord {
    fn from(r: &ConditionReport) -> Self {
        Self {
            condition: r.condition.clone(),
            residual: r.residual,
            tolerance: r.tolerance,
            passed: r.passed,
        }
    }
}

/// Runs the configured checks. The factorized forms need a product initial
/// state and are skipped, with a note on stderr, when it is correlated.
pub fn cmd_check(cfg: &RunConfig) -> Result<Vec<CheckRecord>> {
    let t = input_tensor(cfg)?;
    t.require_steps(2)?;
    let factorization = factorization_residual(&t)?;
    let reduced = if factorization.passed {
        let rho = factorization
            .witness("rho")
            .expect("state witness")
            .mat
            .clone();
        let rho =
            DensityMatrix::from_matrix(rho).map_err(|e| CliError::Dimension(e.to_string()))?;
        Some(reduce(&t, &rho)?)
    } else {
        None
    };
    let mut records = Vec::new();
    for check in &cfg.checks {
        let report = match check {
            Check::Factorization => factorization.clone(),
            Check::NoIbtres => no_ibtres_residual(&t)?,
            Check::NoSece => no_sece_residual(&t)?,
            Check::Lemma1 => lemma1_probe(&t, &default_probes(t.d_sys(), cfg.probe_seed))?,
            Check::NoIbtresFactorized | Check::NoSeceFactorized => {
                let Some(tr) = &reduced else {
                    eprintln!("skipping {check:?}: the initial state is correlated");
                    continue;
                };
                if *check == Check::NoIbtresFactorized {
                    no_ibtres_residual_factorized(tr)?
                } else {
                    no_sece_residual_factorized(tr)?
                }
            }
        };
        records.push(CheckRecord::from(&report));
    }
    Ok(records)
}

pub fn cmd_measure(cfg: &RunConfig) -> Result<SolelySeceResult> {
    let t = input_tensor(cfg)?;
    Ok(minimize_solely_sece(&t, &cfg.optimizer)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub t1: f64,
    pub d_nm: f64,
    pub d_ibtres: f64,
    pub d_solely_sece: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// Trapezoidal integral of `D_NM` over the grid.
    pub integrated_nm: f64,
}

fn check_grid(grid: &[f64], t2: f64) -> Result<()> {
    let ordered = grid.windows(2).all(|w| w[0] < w[1]);
    if grid.len() < 2 || grid[0] != 0.0 || !ordered || grid[grid.len() - 1] > t2 {
        return Err(CliError::Config(format!(
            "t1_grid needs at least two increasing points from 0 to at most t2 = {t2}"
        )));
    }
    Ok(())
}

fn sweep_point(spec: &ModelSpec, t1: f64, opt: &OptimizerConfig) -> Result<SweepRow> {
    let t = model_tensor(&spec.at_t1(t1))?;
    let r = minimize_solely_sece(&t, opt)?;
    Ok(SweepRow {
        t1,
        d_nm: r.d_nm.value,
        d_ibtres: r.d_ibtres.value,
        d_solely_sece: r.solely.value,
    })
}

/// All three measures along the configured `t₁` grid, computed in parallel
/// and gathered in grid order.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Sweep> {
    let spec = cfg.model()?;
    let grid = cfg
        .t1_grid
        .as_deref()
        .ok_or_else(|| CliError::Config("sweep needs t1_grid".into()))?;
    check_grid(grid, spec.t2)?;
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(grid.len());
    let mut slots: Vec<Option<Result<SweepRow>>> = (0..grid.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunk = grid.len().div_ceil(workers);
        for (points, out) in grid.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            scope.spawn(move || {
                for (&t1, slot) in points.iter().zip(out) {
                    *slot = Some(sweep_point(spec, t1, &cfg.optimizer));
                }
            });
        }
    });
    let rows = slots
        .into_iter()
        .map(|s| s.expect("every grid point is visited"))
        .collect::<Result<Vec<_>>>()?;
    let nm: Vec<f64> = rows.iter().map(|r| r.d_nm).collect();
    let integrated_nm = trapezoid(grid, &nm)?;
    Ok(Sweep {
        rows,
        integrated_nm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoRow {
    pub model: &'static str,
    pub factorization: f64,
    pub no_ibtres: f64,
    pub no_sece: f64,
    pub d_nm: f64,
    pub d_ibtres: f64,
    pub d_solely_sece: f64,
}

/// Checks and measures for the uncoupled, full-swap and solely-SECE models.
pub fn cmd_demo(opt: &OptimizerConfig) -> Result<Vec<DemoRow>> {
    [
        ("uncoupled", ModelKind::Uncoupled),
        ("full_swap", ModelKind::FullSwap),
        ("solely_sece", ModelKind::SolelySece),
    ]
    .into_iter()
    .map(|(model, kind)| {
        let t = model_tensor(&ModelSpec::new(kind))?;
        let r = minimize_solely_sece(&t, opt)?;
        Ok(DemoRow {
            model,
            factorization: factorization_residual(&t)?.residual,
            no_ibtres: no_ibtres_residual(&t)?.residual,
            no_sece: no_sece_residual(&t)?.residual,
            d_nm: r.d_nm.value,
            d_ibtres: r.d_ibtres.value,
            d_solely_sece: r.solely.value,
        })
    })
    .collect()
}

/// Round-trip exact decimal: 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn render_checks(records: &[CheckRecord], format: Format) -> String {
    match format {
        Format::Json => json(records),
        Format::Csv => {
            let mut s = String::from("condition,residual,tolerance,passed\n");
            for r in records {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    r.condition,
                    num(r.residual),
                    num(r.tolerance),
                    r.passed
                );
            }
            s
        }
    }
}

pub fn render_measures(r: &SolelySeceResult, format: Format) -> String {
    let all: [&MeasureResult; 3] = [&r.d_nm, &r.d_ibtres, &r.solely];
    match format {
        Format::Json => json(&all),
        Format::Csv => {
            let mut s = String::from("measure,value,restart_index,iters,feas_residual\n");
            for m in all {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    m.measure,
                    num(m.value),
                    m.restart_index,
                    m.iters,
                    num(m.feas_residual)
                );
            }
            s
        }
    }
}

pub fn render_sweep(sweep: &Sweep, format: Format) -> String {
    match format {
        Format::Json => json(sweep),
        Format::Csv => {
            let mut s = String::from("t1,d_nm,d_ibtres,d_solely_sece\n");
            for r in &sweep.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    num(r.t1),
                    num(r.d_nm),
                    num(r.d_ibtres),
                    num(r.d_solely_sece)
                );
            }
            let _ = writeln!(s, "integrated_nm,{},,", num(sweep.integrated_nm));
            s
        }
    }
}

pub fn render_demo(rows: &[DemoRow]) -> String {
    let mut s = format!(
        "{:<12} {:>13} {:>13} {:>13} {:>12} {:>12} {:>14}\n",
        "model", "factorization", "no_ibtres", "no_sece", "D_NM", "D_IBTRES", "D_solely_SECE"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<12} {:>13.3e} {:>13.3e} {:>13.3e} {:>12.6} {:>12.6} {:>14.6}",
            r.model, r.factorization, r.no_ibtres, r.no_sece, r.d_nm, r.d_ibtres, r.d_solely_sece
        );
    }
    s
}

fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("results serialize");
    s.push('\n');
    s
}
