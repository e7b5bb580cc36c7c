//! Classical Markov chain of system populations induced by the collisions.

use nalgebra::DMatrix;

use crate::collision::{JointIndex, TransitionTensor};
use crate::error::{Error, Result};
use crate::spectrum::Spectrum;
use crate::thermal::ThermalState;

/// Column-stochastic transition matrix `M(out | in)` for one collision.
#[derive(Clone, Debug, PartialEq)]
pub struct Propagator {
    matrix: DMatrix<f64>,
    collision_index: usize,
}

impl Propagator {
    /// Wraps a raw matrix, checking only that it is square.
    pub fn from_matrix(matrix: DMatrix<f64>, collision_index: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        Ok(Propagator { matrix, collision_index })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn collision_index(&self) -> usize {
        self.collision_index
    }

    /// `M(out | inp)`.
    pub fn get(&self, out: usize, inp: usize) -> f64 {
        self.matrix[(out, inp)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Largest `|sum_out M(out|in) - 1|` over input levels.
    pub fn stochasticity_residual(&self) -> f64 {
        self.matrix
            .column_iter()
            .map(|c| (c.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `M(a'|a) = sum_{n,n'} R(a',n' | a,n) q(n)`.
pub fn propagator_from_tensor(r: &TransitionTensor, ancilla: &ThermalState, collision_index: usize) -> Result<Propagator> {
    let part = r.partition();
    if ancilla.dim() != part.ancilla_dim() {
        return Err(Error::DimensionMismatch {
            expected: part.ancilla_dim(),
            found: ancilla.dim(),
        });
    }
    let d = part.system_dim();
    let mut m = DMatrix::zeros(d, d);
    for a in 0..d {
        for (n, q) in ancilla.populations.iter().enumerate() {
            for (out, p) in r.outputs(JointIndex::new(a, n)) {
                m[(out.system, a)] += p * q;
            }
        }
    }
    Propagator::from_matrix(m, collision_index)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct DetailedBalanceReport {
    pub collision_index: usize,
    /// Largest `|M(a|b) w_b - M(b|a) w_a| / max(M(a|b) w_b, M(b|a) w_a)`.
    pub max_relative_residual: f64,
    /// Level pair `(low, high)` attaining the maximum.
    pub worst_pair: Option<(usize, usize)>,
    pub passed: bool,
}

/// Checks `M(a|b) e^{-beta E_b} = M(b|a) e^{-beta E_a}` for every pair, with
/// relative tolerance scaled by the larger side.
pub fn assert_detailed_balance(m: &Propagator, beta: f64, system: &Spectrum, tolerance: f64) -> DetailedBalanceReport {
    let d = m.dim();
    // Boltzmann weights relative to the ground level keep the check finite.
    let e0 = system.energy(0).to_f64();
    let w: Vec<f64> = system.levels().iter().map(|e| (-beta * (e.to_f64() - e0)).exp()).collect();
    let mut worst = 0.0;
    let mut worst_pair = None;
    for a in 0..d {
        for b in (a + 1)..d {
            let lhs = m.get(a, b) * w[b];
            let rhs = m.get(b, a) * w[a];
            let scale = lhs.max(rhs);
            let rel = if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 };
            if rel > worst || worst_pair.is_none() {
                worst = rel.max(worst);
                worst_pair = Some((a, b));
            }
        }
    }
    DetailedBalanceReport {
        collision_index: m.collision_index,
        max_relative_residual: worst,
        worst_pair,
        passed: worst <= tolerance,
    }
}

/// One step of the population update `p'(a') = sum_a M(a'|a) p(a)`.
pub fn evolve(p: &[f64], m: &Propagator) -> Result<Vec<f64>> {
    if p.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            found: p.len(),
        });
    }
    Ok((0..m.dim())
        .map(|out| p.iter().enumerate().map(|(inp, pi)| m.get(out, inp) * pi).sum())
        .collect())
}

/// System energy levels `(alpha_0, ..., alpha_N)` visited along one run.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SystemTrajectory(pub Vec<usize>);

impl SystemTrajectory {
    pub fn levels(&self) -> &[usize] {
        &self.0
    }

    /// Number of collisions.
    pub fn len(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_path(traj: &SystemTrajectory, propagators: &[Propagator], p0: &ThermalState) -> Result<()> {
    if traj.0.len() != propagators.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: propagators.len() + 1,
            found: traj.0.len(),
        });
    }
    if let Some(bad) = traj.0.iter().find(|a| **a >= p0.dim()) {
        return Err(Error::Domain(format!("system level {bad} out of range")));
    }
    Ok(())
}

/// `M_N(a_N|a_{N-1}) ... M_1(a_1|a_0) p_0(a_0)`.
pub fn forward_path_probability(traj: &SystemTrajectory, propagators: &[Propagator], p0: &ThermalState) -> Result<f64> {
    check_path(traj, propagators, p0)?;
    let levels = &traj.0;
    Ok(propagators
        .iter()
        .enumerate()
        .fold(p0.population(levels[0]), |acc, (i, m)| acc * m.get(levels[i + 1], levels[i])))
}

/// Time-reversed protocol on the same propagators:
/// `M_1(a_0|a_1) ... M_N(a_{N-1}|a_N) p_0(a_N)`.
pub fn backward_path_probability(traj: &SystemTrajectory, propagators: &[Propagator], p0: &ThermalState) -> Result<f64> {
    check_path(traj, propagators, p0)?;
    let levels = &traj.0;
    let n = propagators.len();
    Ok(propagators
        .iter()
        .enumerate()
        .rev()
        .fold(p0.population(levels[n]), |acc, (i, m)| acc * m.get(levels[i], levels[i + 1])))
}

/// Largest deviation of `M p_beta` from `p_beta`, the Gibbs state of the
/// system at the ancilla temperature.
pub fn gibbs_stationarity_residual(m: &Propagator, gibbs: &ThermalState) -> Result<f64> {
    let next = evolve(&gibbs.populations, m)?;
    Ok(next
        .iter()
        .zip(&gibbs.populations)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
