//! Exact enumeration of augmented trajectories
//! `(a_0, n_1, n_1', a_1, ..., n_N, n_N', a_N)` weighted by
//! `R_N ... R_1 q_N(n_N) ... q_1(n_1) p_0(a_0)`.
//!
//! This route never touches the system propagators, which makes it the
//! independent check for everything derived from them.

use std::collections::BTreeMap;

use crate::chain::SystemTrajectory;
use crate::collision::JointIndex;
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AugmentedTrajectory {
    /// `(a_0, ..., a_N)`.
    pub alphas: Vec<usize>,
    /// `(n_i, n_i')` per collision.
    pub ancilla_pairs: Vec<(usize, usize)>,
}

/// Ancilla measurement record `(a_0, n_1, n_1', ..., n_N, n_N')`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AncillaRecord {
    pub alpha0: usize,
    pub ancilla_pairs: Vec<(usize, usize)>,
}

/// Worst-case leaf count `prod_i d_s d_i^2`.
pub fn augmented_path_bound(model: &Model) -> f64 {
    let ds = model.system_spectrum().dim() as f64;
    model
        .collisions()
        .iter()
        .map(|c| ds * (c.spectrum.dim() as f64).powi(2))
        .product()
}

pub(crate) fn check_augmented_cap(model: &Model) -> Result<()> {
    let paths = augmented_path_bound(model);
    if paths > model.enumeration_cap() as f64 {
        return Err(Error::CapExceeded {
            paths,
            cap: model.enumeration_cap(),
        });
    }
    Ok(())
}

/// Calls `visit` on every augmented trajectory of positive weight, in
/// lexicographic order of `(a_0, n_1, out_1, n_2, out_2, ...)`.
pub fn for_each_augmented_path(model: &Model, mut visit: impl FnMut(&AugmentedTrajectory, f64)) -> Result<()> {
    check_augmented_cap(model)?;
    let mut path = AugmentedTrajectory::default();
    for (a0, p) in model.system_thermal().populations.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        path.alphas.push(a0);
        descend(model, 0, *p, &mut path, &mut visit);
        path.alphas.pop();
    }
    Ok(())
}

fn descend(model: &Model, depth: usize, weight: f64, path: &mut AugmentedTrajectory, visit: &mut impl FnMut(&AugmentedTrajectory, f64)) {
    if depth == model.len() {
        visit(path, weight);
        return;
    }
    let collision = &model.collisions()[depth];
    let prev = *path.alphas.last().expect("alpha_0 pushed");
    for (n, q) in collision.thermal.populations.iter().enumerate() {
        if *q <= 0.0 {
            continue;
        }
        for (out, r) in collision.tensor.outputs(JointIndex::new(prev, n)) {
            if r <= 0.0 {
                continue;
            }
            path.alphas.push(out.system);
            path.ancilla_pairs.push((n, out.ancilla));
            descend(model, depth + 1, weight * q * r, path, visit);
            path.ancilla_pairs.pop();
            path.alphas.pop();
        }
    }
}

/// System-path distribution obtained by summing augmented weights over all
/// ancilla labels.
pub fn system_paths_via_ancillas(model: &Model) -> Result<BTreeMap<SystemTrajectory, f64>> {
    let mut out = BTreeMap::new();
    for_each_augmented_path(model, |path, w| {
        *out.entry(SystemTrajectory(path.alphas.clone())).or_insert(0.0) += w;
    })?;
    Ok(out)
}

/// Distribution of the ancilla record, summing out `a_1, ..., a_N`.
pub fn ancilla_record_distribution(model: &Model) -> Result<BTreeMap<AncillaRecord, f64>> {
    let mut out = BTreeMap::new();
    for_each_augmented_path(model, |path, w| {
        let key = AncillaRecord {
            alpha0: path.alphas[0],
            ancilla_pairs: path.ancilla_pairs.clone(),
        };
        *out.entry(key).or_insert(0.0) += w;
    })?;
    Ok(out)
}
