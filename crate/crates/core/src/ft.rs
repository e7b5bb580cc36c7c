//! Fluctuation-theorem checks on exact joint heat distributions.
//!
//! Backward distributions are keyed by ancilla index, so the partner of a
//! forward tuple `(Q_1, ..., Q_N)` is the backward entry at `(-Q_1, ..., -Q_N)`:
//! ancilla `i` absorbs `-Q_i` in the reversed run.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::heat::{exact_backward_joint, exact_forward_joint, exact_forward_joint_via_ancilla_paths, single_collision_distribution, Direction, HeatTuple, JointHeatDistribution};
use crate::model::Model;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FtReport {
    pub max_log_residual: f64,
    pub checked_pairs: usize,
    /// Tuples present on one side with no partner on the other.
    pub support_mismatches: Vec<HeatTuple>,
    /// Pairs skipped because one side was pruned below the mass threshold.
    pub skipped_pruned: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl FtReport {
    fn finish(max_log_residual: f64, checked_pairs: usize, support_mismatches: Vec<HeatTuple>, skipped_pruned: usize, tolerance: f64) -> Self {
        FtReport {
            passed: max_log_residual <= tolerance && support_mismatches.is_empty(),
            max_log_residual,
            checked_pairs,
            support_mismatches,
            skipped_pruned,
            tolerance,
        }
    }
}

fn check_pair(fwd: &JointHeatDistribution, bwd: &JointHeatDistribution) -> Result<()> {
    if fwd.direction() != Direction::Forward || bwd.direction() != Direction::Backward {
        return Err(Error::Domain("expected a forward and a backward distribution".into()));
    }
    if fwd.collisions() != bwd.collisions() {
        return Err(Error::DimensionMismatch {
            expected: fwd.collisions(),
            found: bwd.collisions(),
        });
    }
    Ok(())
}

/// Walks forward tuples paired with their backward partners, calling
/// `residual(Q, ln fwd(Q) - ln bwd(-Q))`. A `None` from the callback marks a
/// support mismatch on the right-hand side.
fn scan_pairs(
    fwd: &JointHeatDistribution,
    bwd: &JointHeatDistribution,
    tolerance: f64,
    mut residual: impl FnMut(&HeatTuple, f64) -> Option<f64>,
) -> FtReport {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut mismatches = Vec::new();
    let mut skipped = 0;
    for (key, pf) in fwd.iter() {
        let partner = key.negated();
        let pb = bwd.get(&partner);
        if pb <= 0.0 {
            if bwd.was_pruned(&partner) {
                skipped += 1;
            } else {
                mismatches.push(key.clone());
            }
            continue;
        }
        match residual(key, pf.ln() - pb.ln()) {
            Some(r) => {
                worst = worst.max(r.abs());
                checked += 1;
            }
            None => mismatches.push(key.clone()),
        }
    }
    for (key, _) in bwd.iter() {
        let partner = key.negated();
        if !fwd.contains(&partner) {
            if fwd.was_pruned(&partner) {
                skipped += 1;
            } else {
                mismatches.push(partner);
            }
        }
    }
    mismatches.sort();
    mismatches.dedup();
    FtReport::finish(worst, checked, mismatches, skipped, tolerance)
}

/// `ln P(Q) - ln P~(-Q) = sum_i (beta_i - beta_s) Q_i` on the full support.
/// `betas` are the ancilla temperatures matching the distribution's coordinates.
pub fn verify_joint_ft(fwd: &JointHeatDistribution, bwd: &JointHeatDistribution, betas: &[f64], beta_s: f64, tolerance: f64) -> Result<FtReport> {
    check_pair(fwd, bwd)?;
    if betas.len() != fwd.collisions() {
        return Err(Error::DimensionMismatch {
            expected: fwd.collisions(),
            found: betas.len(),
        });
    }
    Ok(scan_pairs(fwd, bwd, tolerance, |key, log_ratio| {
        Some(log_ratio - key.entropy_production(betas, beta_s))
    }))
}

fn single_log_ratio(sc: &JointHeatDistribution, q: &HeatTuple) -> Option<f64> {
    let (a, b) = (sc.get(q), sc.get(&q.negated()));
    (a > 0.0 && b > 0.0).then(|| a.ln() - b.ln())
}

/// The joint log-ratio equals the sum of single-collision log-ratios
/// `ln P_sc,i(Q_i) / P_sc,i(-Q_i)`.
pub fn verify_product_relation(fwd: &JointHeatDistribution, bwd: &JointHeatDistribution, singles: &[JointHeatDistribution], tolerance: f64) -> Result<FtReport> {
    check_pair(fwd, bwd)?;
    if singles.len() != fwd.collisions() || singles.iter().any(|s| s.collisions() != 1) {
        return Err(Error::DimensionMismatch {
            expected: fwd.collisions(),
            found: singles.len(),
        });
    }
    Ok(scan_pairs(fwd, bwd, tolerance, |key, log_ratio| {
        let mut rhs = 0.0;
        for (i, sc) in singles.iter().enumerate() {
            rhs += single_log_ratio(sc, &key.project(&[i]))?;
        }
        Some(log_ratio - rhs)
    }))
}

/// Splits off the last collision: the `N`-collision log-ratio equals the
/// `(N-1)`-collision one plus the single-collision log-ratio of ancilla `N`.
/// The shorter pair is the forward prefix marginal with the backward run of
/// the truncated chain.
pub fn verify_partial_decomposition(model: &Model, tolerance: f64) -> Result<FtReport> {
    let n = model.len();
    if n < 2 {
        return Err(Error::Domain("partial decomposition needs at least two collisions".into()));
    }
    let fwd = exact_forward_joint(model)?;
    let bwd = exact_backward_joint(model)?;
    let fwd_short = fwd.marginalize_prefix(n - 1)?;
    let bwd_short = exact_backward_joint(&model.subchain(0..n - 1))?;
    let last = single_collision_distribution(model, n)?;
    let head: Vec<usize> = (0..n - 1).collect();
    Ok(scan_pairs(&fwd, &bwd, tolerance, |key, log_ratio| {
        let short = key.project(&head);
        let (a, b) = (fwd_short.get(&short), bwd_short.get(&short.negated()));
        if a <= 0.0 || b <= 0.0 {
            return None;
        }
        let tail = single_log_ratio(&last, &key.project(&[n - 1]))?;
        Some(log_ratio - (a.ln() - b.ln()) - tail)
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrefixReport {
    pub prefix_length: usize,
    /// Largest difference between the forward prefix marginal and the
    /// truncated chain's own forward distribution.
    pub causal_gap: f64,
    pub ft: FtReport,
}

/// For every `k < N`: the forward `k`-prefix marginal coincides with the
/// `k`-collision chain and satisfies the joint relation against that chain's
/// backward distribution.
pub fn verify_prefix_closure(model: &Model, tolerance: f64) -> Result<Vec<PrefixReport>> {
    let fwd = exact_forward_joint(model)?;
    let betas = model.betas();
    (1..model.len())
        .map(|k| {
            let marginal = fwd.marginalize_prefix(k)?;
            let truncated = model.subchain(0..k);
            let bwd = exact_backward_joint(&truncated)?;
            let causal_gap = marginal.max_abs_difference(&exact_forward_joint(&truncated)?);
            let ft = verify_joint_ft(&marginal, &bwd, &betas[..k], model.system_beta(), tolerance)?;
            Ok(PrefixReport {
                prefix_length: k,
                causal_gap,
                ft,
            })
        })
        .collect()
}

/// Drops the first `drop` heats from both distributions and checks the joint
/// relation on what remains. The backward marginal over early ancillas is a
/// future marginal of the backward run, so it stays well defined; the forward
/// one is not, which is what makes the check fail in general.
pub fn verify_past_removed(model: &Model, drop: usize, tolerance: f64) -> Result<FtReport> {
    let n = model.len();
    if drop == 0 || drop >= n {
        return Err(Error::Domain(format!("can drop between 1 and {} leading heats", n - 1)));
    }
    let keep: Vec<usize> = (drop..n).collect();
    let fwd = exact_forward_joint(model)?.marginalize(&keep)?;
    let bwd = exact_backward_joint(model)?.marginalize(&keep)?;
    verify_joint_ft(&fwd, &bwd, &model.betas()[drop..], model.system_beta(), tolerance)
}

/// Entrywise agreement required between the two enumeration routes.
pub const ROUTE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouteReport {
    pub max_abs_difference: f64,
    pub system_route_entries: usize,
    pub ancilla_route_entries: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// System-path and ancilla-path enumerations of the forward distribution agree.
pub fn verify_route_equivalence(model: &Model, tolerance: f64) -> Result<RouteReport> {
    let a = exact_forward_joint(model)?;
    let b = exact_forward_joint_via_ancilla_paths(model)?;
    let diff = a.max_abs_difference(&b);
    Ok(RouteReport {
        max_abs_difference: diff,
        system_route_entries: a.len(),
        ancilla_route_entries: b.len(),
        tolerance,
        passed: diff <= tolerance,
    })
}

/// `<exp(-sum_i (beta_i - beta_s) Q_i)>` under the forward distribution; equal
/// to 1 whenever the joint relation holds with matching supports.
pub fn integral_ft_mean(fwd: &JointHeatDistribution, betas: &[f64], beta_s: f64) -> f64 {
    fwd.iter().map(|(k, p)| p * (-k.entropy_production(betas, beta_s)).exp()).sum()
}

/// Largest `|P(Q_i, Q_j) - P(Q_i) P(Q_j)|` over the product of the marginal
/// supports; zero iff heats `i` and `j` are independent.
pub fn independence_gap(fwd: &JointHeatDistribution, i: usize, j: usize) -> Result<f64> {
    let pair = fwd.marginalize(&[i, j])?;
    let mi = fwd.marginalize(&[i])?;
    let mj = fwd.marginalize(&[j])?;
    let mut worst: f64 = 0.0;
    for (qi, pi) in mi.iter() {
        for (qj, pj) in mj.iter() {
            let key = HeatTuple(vec![qi.values()[0], qj.values()[0]]);
            worst = worst.max((pair.get(&key) - pi * pj).abs());
        }
    }
    Ok(worst)
}
