//! Brute-force upper bounds on the distance measures.
//!
//! Every evaluated sample is an exactly feasible member of the target set, so the
//! best value found bounds the true distance from above. Samples are drawn by a
//! (1+1) evolution strategy with the one-fifth success rule over several chains.
//! The sample sequence depends only on the seed, so a longer run extends a
//! shorter one and the returned value is non-increasing in the sample count.
//!
//! This module deliberately shares no code with the optimizers beyond the
//! general linear algebra.

use super::Result;
use crate::linalg::{
    eig_hermitian, kron, kron_all, partial_trace, permute_subsystems, trace_distance,
    ComplexMatrix, LabeledSpace, C64,
};
use crate::proctensor::{ProcessTensor, S0, S0P, S1, S1P, S2};
use crate::quantum::{choi_from_isometry, ginibre};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Feasible set searched by [`oracle_random_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OracleSet {
    Markov,
    NoIbtres,
}

const CHAINS: usize = 4;
const GROW: f64 = 1.5;

/// Smallest `½‖T − X‖₁` over `n_samples` feasible members `X`.
pub fn oracle_random_search(
    t: &ProcessTensor,
    set: OracleSet,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    t.require_steps(2)?;
    if n_samples == 0 {
        return Ok(f64::INFINITY);
    }
    match set {
        OracleSet::Markov => markov_search(t, n_samples, seed),
        OracleSet::NoIbtres => noib_search(t, n_samples, seed),
    }
}

fn perturb(m: &ComplexMatrix, sigma: f64, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let g = ginibre(m.rows(), m.cols(), rng);
    m + &g.scale(sigma)
}

fn inv_sqrt(m: &ComplexMatrix) -> Option<ComplexMatrix> {
    let e = eig_hermitian(&m.hermitian_part()).ok()?;
    if e.values.iter().any(|&l| l <= 1e-14) {
        return None;
    }
    Some(e.rebuild(|l| 1.0 / l.sqrt()))
}

fn channel(g: &ComplexMatrix, d: usize) -> Option<ComplexMatrix> {
    let v = g.matmul(&inv_sqrt(&g.adjoint().matmul(g).ok()?)?).ok()?;
    Some(choi_from_isometry(&v, d))
}

fn state(g: &ComplexMatrix) -> Option<ComplexMatrix> {
    let rho = g.matmul(&g.adjoint()).ok()?.hermitian_part();
    let tr = rho.trace().re;
    (tr > 1e-14).then(|| rho.scale(1.0 / tr))
}

#[derive(Clone)]
struct Chain<S> {
    point: S,
    value: f64,
    sigma: f64,
}

impl<S> Chain<S> {
    fn update(&mut self, candidate: Option<(S, f64)>, sigma0: f64) {
        match candidate {
            Some((p, v)) if v < self.value => {
                self.point = p;
                self.value = v;
                self.sigma *= GROW;
            }
            _ => self.sigma *= GROW.powf(-0.25),
        }
        if self.sigma < 1e-12 {
            self.sigma = sigma0;
        }
    }
}

fn markov_search(t: &ProcessTensor, n_samples: usize, seed: u64) -> Result<f64> {
    let d = t.d_sys();
    let k = d * d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let evaluate = |gs: &[ComplexMatrix; 3]| -> Option<f64> {
        let t1 = channel(&gs[0], d)?;
        let t0 = channel(&gs[1], d)?;
        let rho = state(&gs[2])?;
        trace_distance(t.mat(), &kron_all(&[&t1, &t0, &rho])).ok()
    };
    let sigma0 = 0.2;
    let mut chains: Vec<Chain<[ComplexMatrix; 3]>> = Vec::with_capacity(CHAINS);
    let mut best = f64::INFINITY;
    for i in 0..n_samples {
        let c = i % CHAINS;
        if chains.len() <= c {
            let gs = [
                ginibre(d * k, d, &mut rng),
                ginibre(d * k, d, &mut rng),
                ginibre(d, d, &mut rng),
            ];
            let value = evaluate(&gs).unwrap_or(f64::INFINITY);
            best = best.min(value);
            chains.push(Chain {
                point: gs,
                value,
                sigma: sigma0,
            });
            continue;
        }
        let chain = &mut chains[c];
        let scale = chain.sigma;
        let gs = [
            perturb(&chain.point[0], scale, &mut rng),
            perturb(&chain.point[1], scale, &mut rng),
            perturb(&chain.point[2], scale, &mut rng),
        ];
        let candidate = evaluate(&gs).map(|v| (gs, v));
        if let Some((_, v)) = &candidate {
            best = best.min(*v);
        }
        chain.update(candidate, sigma0);
    }
    Ok(best)
}

/// The affine hull of the no-backflow set for a fixed initial state, written
/// with labeled partial traces and permutations.
struct NoIbHull {
    space: LabeledSpace,
    rho: ComplexMatrix,
    d: usize,
}

impl NoIbHull {
    fn new(d: usize, rho: ComplexMatrix) -> Self {
        Self {
            space: LabeledSpace::uniform(&[S2, S1P, S1, S0P, S0], d).expect("valid labels"),
            rho,
            d,
        }
    }

    /// `I/d ⊗ tr_label X`, with the identity put back in the place of `label`.
    fn flat(&self, x: &ComplexMatrix, label: &str) -> ComplexMatrix {
        let (reduced, rest) = partial_trace(x, &self.space, &[label]).expect("known label");
        let head = LabeledSpace::new([(label, self.d)]).expect("valid label");
        let lifted = kron(
            &ComplexMatrix::identity(self.d).scale(1.0 / self.d as f64),
            &reduced,
        );
        let lifted_space = head.concat(&rest).expect("disjoint labels");
        permute_subsystems(&lifted, &lifted_space, &self.space.labels())
            .expect("same labels")
            .0
    }

    /// Component along `I_{S0′} ⊗ ρ` on the last two factors.
    fn along_state(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let w = kron(&ComplexMatrix::identity(self.d), &self.rho);
        let lead = self.d.pow(3);
        let weighted = kron(&ComplexMatrix::identity(lead), &w.adjoint())
            .matmul(x)
            .expect("square factors");
        let (coeff, _) = partial_trace(&weighted, &self.space, &[S0P, S0]).expect("known labels");
        kron(&coeff, &w).scale(1.0 / w.inner(&w).re)
    }

    fn linear(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let pa = self.flat(x, S2);
        let x1 = &(x - &pa) + &self.flat(&pa, S1P);
        let pc = self.flat(&x1, S1);
        &(&x1 - &pc) + &self.along_state(&pc)
    }

    fn project(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let v = self.linear(x);
        let g = self.linear(&ComplexMatrix::identity(self.d.pow(5)));
        let shift = ((self.d * self.d) as f64 - v.trace().re) / g.trace().re;
        &v + &g.scale(shift)
    }

    /// Farthest point from `I ⊗ ρ / d²` toward `y` that is still PSD, capped at `y`.
    fn retract(&self, y: &ComplexMatrix) -> Option<ComplexMatrix> {
        let r = inv_sqrt(&self.rho)?;
        let scale = self.d as f64;
        let w = kron(&ComplexMatrix::identity(self.d.pow(4)), &r.scale(scale));
        let center =
            kron(&ComplexMatrix::identity(self.d.pow(4)), &self.rho).scale(1.0 / (scale * scale));
        let dir = (y - &center).hermitian_part();
        let m = w.matmul(&dir).ok()?.matmul(&w).ok()?.hermitian_part();
        let low = *eig_hermitian(&m).ok()?.values.last()?;
        let step = if low < 0.0 {
            (-1.0 / low).min(1.0)
        } else {
            1.0
        };
        Some((&center + &dir.scale(step)).hermitian_part())
    }
}

fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(StandardNormal.sample(rng), 0.0);
        for j in 0..i {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let z = C64::new(re, im).scale(std::f64::consts::FRAC_1_SQRT_2);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Square root of the initial-state marginal `tr_{S2 S1′ S1 S0′} T / d²`.
fn marginal_root(t: &ProcessTensor) -> Result<ComplexMatrix> {
    let (rho, _) = partial_trace(t.mat(), t.space(), &[S2, S1P, S1, S0P])?;
    let e = eig_hermitian(&rho.hermitian_part())?;
    Ok(e.rebuild(|l| l.max(0.0).sqrt()))
}

struct NoIbPoint {
    x: ComplexMatrix,
    g: ComplexMatrix,
}

fn noib_search(t: &ProcessTensor, n_samples: usize, seed: u64) -> Result<f64> {
    let d = t.d_sys();
    let n = t.mat().rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = |x: &ComplexMatrix, g: &ComplexMatrix| -> Option<(NoIbPoint, f64)> {
        let rho = state(g)?;
        let hull = NoIbHull::new(d, rho);
        let member = hull.retract(&hull.project(x))?;
        let value = trace_distance(t.mat(), &member).ok()?;
        Some((
            NoIbPoint {
                x: member,
                g: g.clone(),
            },
            value,
        ))
    };
    let sigma0 = 0.05;
    let mut chains: Vec<Chain<NoIbPoint>> = Vec::with_capacity(CHAINS);
    let mut best = f64::INFINITY;
    for i in 0..n_samples {
        let c = i % CHAINS;
        if chains.len() <= c {
            // Chain 0 starts from T and its initial state; the others at random.
            let (x, g) = if c == 0 {
                (t.mat().clone(), marginal_root(t)?)
            } else {
                let g = ginibre(d, d, &mut rng);
                (random_hermitian(n, &mut rng), g)
            };
            let Some((point, value)) = sample(&x, &g) else {
                continue;
            };
            best = best.min(value);
            chains.push(Chain {
                point,
                value,
                sigma: sigma0,
            });
            continue;
        }
        let chain = &mut chains[c];
        let x = &chain.point.x + &random_hermitian(n, &mut rng).scale(chain.sigma);
        let g = perturb(&chain.point.g, chain.sigma, &mut rng);
        let candidate = sample(&x, &g);
        if let Some((_, v)) = &candidate {
            best = best.min(*v);
        }
        chain.update(candidate, sigma0);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::no_ibtres_residual;
    use crate::quantum::random_density;

    #[test]
    fn hull_members_satisfy_the_backflow_condition() {
        let rho = random_density(2, 1).mat().clone();
        let hull = NoIbHull::new(2, rho);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = hull.project(&random_hermitian(32, &mut rng));
        assert!(hull.project(&y).max_abs_diff(&y) < 1e-12);
        let member = hull.retract(&y).unwrap();
        assert!(crate::optim::ops::negative_mass(&member) < 1e-12);
        let t = ProcessTensor::from_matrix(member, 2, 2).unwrap();
        assert!(no_ibtres_residual(&t).unwrap().residual < 1e-10);
    }

    #[test]
    fn matches_the_optimizer_projection() {
        let rho = random_density(2, 3).mat().clone();
        let hull = NoIbHull::new(2, rho.clone());
        let set = crate::optim::noib::AffineSet::with_state(2, &rho);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_hermitian(32, &mut rng);
        assert!(hull.project(&x).max_abs_diff(&set.project(&x)) < 1e-12);
    }

    #[test]
    fn deterministic_and_nested() {
        let t = ProcessTensor::from_matrix(
            kron_all(&[
                crate::quantum::random_tpcp(2, 2, 5).choi(),
                crate::quantum::random_tpcp(2, 2, 6).choi(),
                random_density(2, 7).mat(),
            ]),
            2,
            2,
        )
        .unwrap();
        let a = oracle_random_search(&t, OracleSet::Markov, 200, 9).unwrap();
        let b = oracle_random_search(&t, OracleSet::Markov, 200, 9).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let longer = oracle_random_search(&t, OracleSet::Markov, 400, 9).unwrap();
        assert!(longer <= a);
        let n1 = oracle_random_search(&t, OracleSet::NoIbtres, 40, 9).unwrap();
        let n2 = oracle_random_search(&t, OracleSet::NoIbtres, 80, 9).unwrap();
        assert!(n2 <= n1);
    }
}
