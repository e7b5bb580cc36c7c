//! Exact joint heat distributions.
//!
//! Heats are positive when energy leaves the system. Tuples are keyed by exact
//! rationals, so two trajectories with equal heats always land on one entry.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;

use crate::augmented::for_each_augmented_path;
use crate::chain::{forward_path_probability, SystemTrajectory};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::rational::Rational;

/// Entries whose accumulated mass falls below this are dropped and counted in
/// `pruned_mass`.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// `(Q_1, ..., Q_N)`, entry `i` being the heat exchanged with ancilla `i`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HeatTuple(pub Vec<Rational>);

impl HeatTuple {
    pub fn zeros(n: usize) -> Self {
        HeatTuple(vec![Rational::ZERO; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Rational] {
        &self.0
    }

    pub fn negated(&self) -> HeatTuple {
        HeatTuple(self.0.iter().map(|q| -*q).collect())
    }

    pub fn project(&self, coords: &[usize]) -> HeatTuple {
        HeatTuple(coords.iter().map(|&c| self.0[c]).collect())
    }

    /// `sum_i (beta_i - beta_s) Q_i`.
    pub fn entropy_production(&self, betas: &[f64], beta_s: f64) -> f64 {
        self.0.iter().zip(betas).map(|(q, b)| (b - beta_s) * q.to_f64()).sum()
    }
}

impl fmt::Debug for HeatTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (k, q) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{q}")?;
        }
        f.write_str(")")
    }
}

/// Serialized as a list of exact strings, e.g. `["1", "-1/3"]`.
impl serde::Serialize for HeatTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|q| q.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointHeatDistribution {
    direction: Direction,
    collisions: usize,
    entries: BTreeMap<HeatTuple, f64>,
    pruned: BTreeSet<HeatTuple>,
    pruned_mass: f64,
}

impl JointHeatDistribution {
    /// Builds a distribution from accumulated masses, pruning entries below
    /// [`PRUNE_THRESHOLD`].
    pub fn from_masses(direction: Direction, collisions: usize, masses: BTreeMap<HeatTuple, f64>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut pruned = BTreeSet::new();
        let mut pruned_mass = 0.0;
        for (key, p) in masses {
            if key.len() != collisions {
                return Err(Error::DimensionMismatch {
                    expected: collisions,
                    found: key.len(),
                });
            }
            if p.is_nan() || p < 0.0 {
                return Err(Error::Domain(format!("negative or NaN mass {p} at {key:?}")));
            }
            if p < PRUNE_THRESHOLD {
                pruned_mass += p;
                pruned.insert(key);
            } else {
                entries.insert(key, p);
            }
        }
        Ok(JointHeatDistribution {
            direction,
            collisions,
            entries,
            pruned,
            pruned_mass,
        })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Number of heat coordinates.
    pub fn collisions(&self) -> usize {
        self.collisions
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &HeatTuple) -> f64 {
        self.entries.get(key).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, key: &HeatTuple) -> bool {
        self.entries.contains_key(key)
    }

    pub fn was_pruned(&self, key: &HeatTuple) -> bool {
        self.pruned.contains(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&HeatTuple, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn entries(&self) -> &BTreeMap<HeatTuple, f64> {
        &self.entries
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn pruned_mass(&self) -> f64 {
        self.pruned_mass
    }

    pub fn pruned_keys(&self) -> impl Iterator<Item = &HeatTuple> {
        self.pruned.iter()
    }

    /// Reassembles a distribution from exported parts. Entries must already
    /// be above the pruning threshold.
    pub fn from_parts(direction: Direction, collisions: usize, entries: BTreeMap<HeatTuple, f64>, pruned: BTreeSet<HeatTuple>, pruned_mass: f64) -> Result<Self> {
        let mut out = JointHeatDistribution::from_masses(direction, collisions, entries)?;
        if !out.pruned.is_empty() {
            return Err(Error::Domain(format!("{} entries fall below the pruning threshold", out.pruned.len())));
        }
        if let Some(k) = pruned.iter().find(|k| k.len() != collisions) {
            return Err(Error::DimensionMismatch { expected: collisions, found: k.len() });
        }
        if pruned_mass.is_nan() || pruned_mass < 0.0 {
            return Err(Error::Domain(format!("pruned mass {pruned_mass} is negative")));
        }
        out.pruned = pruned;
        out.pruned_mass = pruned_mass;
        Ok(out)
    }

    /// Keeps coordinates `coords` (0-based, in the given order), summing out
    /// the rest.
    pub fn marginalize(&self, coords: &[usize]) -> Result<JointHeatDistribution> {
        if let Some(bad) = coords.iter().find(|c| **c >= self.collisions) {
            return Err(Error::Domain(format!("coordinate {bad} out of range for N = {}", self.collisions)));
        }
        let mut masses: BTreeMap<HeatTuple, f64> = BTreeMap::new();
        for (k, p) in &self.entries {
            *masses.entry(k.project(coords)).or_insert(0.0) += p;
        }
        let mut out = JointHeatDistribution::from_masses(self.direction, coords.len(), masses)?;
        out.pruned_mass += self.pruned_mass;
        for k in &self.pruned {
            let key = k.project(coords);
            if !out.entries.contains_key(&key) {
                out.pruned.insert(key);
            }
        }
        Ok(out)
    }

    /// Keeps the first `k` heats, `0 < k <= N`.
    pub fn marginalize_prefix(&self, k: usize) -> Result<JointHeatDistribution> {
        if k == 0 || k > self.collisions {
            return Err(Error::Domain(format!("prefix length {k} outside 1..={}", self.collisions)));
        }
        self.marginalize(&(0..k).collect::<Vec<_>>())
    }

    /// Total variation distance `1/2 sum |p - q|` over the union of supports.
    pub fn total_variation(&self, other: &JointHeatDistribution) -> f64 {
        let keys: BTreeSet<&HeatTuple> = self.entries.keys().chain(other.entries.keys()).collect();
        0.5 * keys.into_iter().map(|k| (self.get(k) - other.get(k)).abs()).sum::<f64>()
    }

    /// Largest entrywise difference over the union of supports.
    pub fn max_abs_difference(&self, other: &JointHeatDistribution) -> f64 {
        let keys: BTreeSet<&HeatTuple> = self.entries.keys().chain(other.entries.keys()).collect();
        keys.into_iter()
            .map(|k| (self.get(k) - other.get(k)).abs())
            .fold(0.0, f64::max)
    }
}

/// Heats read off a system path: `Q_i = E_{a_{i-1}} - E_{a_i}`.
pub fn heats_from_system_path(alphas: &[usize], system: &crate::spectrum::Spectrum) -> HeatTuple {
    HeatTuple(alphas.windows(2).map(|w| system.energy(w[0]) - system.energy(w[1])).collect())
}

/// Heats read off the ancilla record: `Q_i = E_{n_i'} - E_{n_i}`.
pub fn heats_from_ancilla_path(pairs: &[(usize, usize)], ancillas: &[&crate::spectrum::Spectrum]) -> HeatTuple {
    HeatTuple(
        pairs
            .iter()
            .zip(ancillas)
            .map(|((n, m), s)| s.energy(*m) - s.energy(*n))
            .collect(),
    )
}

pub fn system_path_bound(model: &Model) -> f64 {
    (model.system_spectrum().dim() as f64).powi(model.len() as i32 + 1)
}

fn check_system_cap(model: &Model) -> Result<()> {
    let paths = system_path_bound(model);
    if paths > model.enumeration_cap() as f64 {
        return Err(Error::CapExceeded {
            paths,
            cap: model.enumeration_cap(),
        });
    }
    Ok(())
}

/// Depth-first walk over system paths starting at `a0`, carrying the partial
/// product of propagator entries. `step(i, prev, next)` returns the factor of
/// collision `i`; `leaf` receives the full path and product.
fn walk_system_paths(
    model: &Model,
    a0: usize,
    step: &impl Fn(usize, usize, usize) -> f64,
    leaf: &mut impl FnMut(&[usize], f64),
) {
    fn go(
        model: &Model,
        path: &mut Vec<usize>,
        weight: f64,
        step: &impl Fn(usize, usize, usize) -> f64,
        leaf: &mut impl FnMut(&[usize], f64),
    ) {
        let depth = path.len() - 1;
        if depth == model.len() {
            leaf(path, weight);
            return;
        }
        let prev = path[depth];
        for next in 0..model.system_spectrum().dim() {
            let f = step(depth, prev, next);
            if f <= 0.0 {
                continue;
            }
            path.push(next);
            go(model, path, weight * f, step, leaf);
            path.pop();
        }
    }
    let mut path = vec![a0];
    go(model, &mut path, 1.0, step, leaf);
}

fn merge_shards(shards: Vec<BTreeMap<HeatTuple, f64>>) -> BTreeMap<HeatTuple, f64> {
    let mut out = BTreeMap::new();
    for shard in shards {
        for (k, p) in shard {
            *out.entry(k).or_insert(0.0) += p;
        }
    }
    out
}

/// Forward joint distribution by enumerating system trajectories.
/// Sharded by `a_0`; shards merge in index order so the result is
/// deterministic.
pub fn exact_forward_joint(model: &Model) -> Result<JointHeatDistribution> {
    check_system_cap(model)?;
    let spectrum = model.system_spectrum();
    let p0 = &model.system_thermal().populations;
    let step = |i: usize, prev: usize, next: usize| model.collisions()[i].propagator.get(next, prev);
    let shards: Vec<BTreeMap<HeatTuple, f64>> = (0..spectrum.dim())
        .into_par_iter()
        .map(|a0| {
            let mut acc = BTreeMap::new();
            if p0[a0] > 0.0 {
                walk_system_paths(model, a0, &step, &mut |path, w| {
                    *acc.entry(heats_from_system_path(path, spectrum)).or_insert(0.0) += p0[a0] * w;
                });
            }
            acc
        })
        .collect();
    JointHeatDistribution::from_masses(Direction::Forward, model.len(), merge_shards(shards))
}

/// Backward joint distribution: same propagators with arguments swapped,
/// initial weight `p_0(a_N)`. Entry `i` of each key is the heat exchanged with
/// ancilla `i` in the backward run, i.e. `-Q_i[path]`.
pub fn exact_backward_joint(model: &Model) -> Result<JointHeatDistribution> {
    check_system_cap(model)?;
    let spectrum = model.system_spectrum();
    let p0 = &model.system_thermal().populations;
    let step = |i: usize, prev: usize, next: usize| model.collisions()[i].propagator.get(prev, next);
    let shards: Vec<BTreeMap<HeatTuple, f64>> = (0..spectrum.dim())
        .into_par_iter()
        .map(|a0| {
            let mut acc = BTreeMap::new();
            walk_system_paths(model, a0, &step, &mut |path, w| {
                let last = *path.last().expect("non-empty path");
                let mass = w * p0[last];
                if mass > 0.0 {
                    *acc.entry(heats_from_system_path(path, spectrum).negated()).or_insert(0.0) += mass;
                }
            });
            acc
        })
        .collect();
    JointHeatDistribution::from_masses(Direction::Backward, model.len(), merge_shards(shards))
}

/// Forward joint distribution from augmented trajectories, with heats read
/// from the ancilla energies only.
pub fn exact_forward_joint_via_ancilla_paths(model: &Model) -> Result<JointHeatDistribution> {
    let spectra: Vec<_> = model.collisions().iter().map(|c| &c.spectrum).collect();
    let mut masses = BTreeMap::new();
    for_each_augmented_path(model, |path, w| {
        *masses.entry(heats_from_ancilla_path(&path.ancilla_pairs, &spectra)).or_insert(0.0) += w;
    })?;
    JointHeatDistribution::from_masses(Direction::Forward, model.len(), masses)
}

/// Heat distribution of a fresh `beta_s` system colliding once with ancilla
/// `i` (1-based). Not the `i`-th marginal of the joint distribution except for
/// `i = 1`.
pub fn single_collision_distribution(model: &Model, i: usize) -> Result<JointHeatDistribution> {
    if i == 0 || i > model.len() {
        return Err(Error::Domain(format!("collision index {i} outside 1..={}", model.len())));
    }
    exact_forward_joint(&model.single_collision(i))
}

/// Every system path with its probability, from the propagator product.
pub fn system_path_distribution(model: &Model) -> Result<BTreeMap<SystemTrajectory, f64>> {
    check_system_cap(model)?;
    let d = model.system_spectrum().dim();
    let props = model.propagators();
    let p0 = model.system_thermal();
    let mut out = BTreeMap::new();
    let mut levels = vec![0usize; model.len() + 1];
    loop {
        let traj = SystemTrajectory(levels.clone());
        let p = forward_path_probability(&traj, &props, p0)?;
        if p > 0.0 {
            out.insert(traj, p);
        }
        // Odometer increment over d^(N+1) paths.
        let mut k = levels.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            levels[k] += 1;
            if levels[k] < d {
                break;
            }
            levels[k] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::UnitarySpec;
    use crate::model::ModelConfig;
    use crate::spectrum::Spectrum;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_4;

    fn q(v: &[i64]) -> HeatTuple {
        HeatTuple(v.iter().map(|x| Rational::from_integer(*x)).collect())
    }

    fn running_example(n: usize) -> Model {
        let betas = [2.0, 2.0, 2.0, 2.0];
        let spec: Vec<_> = betas[..n].iter().map(|b| (*b, UnitarySpec::partial_swap(FRAC_PI_4))).collect();
        Model::build(&ModelConfig::resonant_qubit_chain(1.0, &spec, 0)).unwrap()
    }

    #[test]
    fn heat_sign_conventions() {
        let s = Spectrum::ladder(2, 1);
        assert_eq!(heats_from_system_path(&[1, 1, 1], &s), q(&[0, 0]));
        assert_eq!(heats_from_system_path(&[1, 0], &s), q(&[1]));
        assert_eq!(heats_from_system_path(&[0, 1, 0], &s), q(&[-1, 1]));
        assert_eq!(heats_from_ancilla_path(&[(1, 1)], &[&s]), q(&[0]));
        assert_eq!(heats_from_ancilla_path(&[(0, 1)], &[&s]), q(&[1]));
    }

    #[test]
    fn identity_chain_is_a_point_mass() {
        let cfg = ModelConfig::resonant_qubit_chain(1.0, &vec![(2.0, UnitarySpec::identity()); 3], 0);
        let m = Model::build(&cfg).unwrap();
        for d in [exact_forward_joint(&m).unwrap(), exact_backward_joint(&m).unwrap(), exact_forward_joint_via_ancilla_paths(&m).unwrap()] {
            assert_eq!(d.len(), 1);
            assert_abs_diff_eq!(d.get(&HeatTuple::zeros(3)), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_collision_running_example() {
        // Oracle: four-path enumeration by hand, P(+1) = p0(e) M(g|e).
        let m = running_example(1);
        let d = exact_forward_joint(&m).unwrap();
        assert_eq!(d.len(), 3);
        assert_abs_diff_eq!(d.get(&q(&[1])), 0.118_441_409_044_955, epsilon = 1e-12);
        assert_abs_diff_eq!(d.get(&q(&[-1])), 0.043_572_159_371_016_27, epsilon = 1e-12);
        assert_abs_diff_eq!(d.get(&q(&[0])), 0.837_986_431_584_028_6, epsilon = 1e-12);
        let b = exact_backward_joint(&m).unwrap();
        assert!(d.max_abs_difference(&b) < 1e-12);
        let via = exact_forward_joint_via_ancilla_paths(&m).unwrap();
        assert!(d.max_abs_difference(&via) < 1e-12);
    }

    #[test]
    fn two_collision_support_and_mass() {
        let m = running_example(2);
        let d = exact_forward_joint(&m).unwrap();
        // Qubit heats are -1, 0, +1 each, but consecutive heats telescope:
        // (+1, +1) and (-1, -1) are impossible.
        assert_eq!(d.len(), 7);
        assert_eq!(d.get(&q(&[1, 1])), 0.0);
        assert_abs_diff_eq!(d.total_mass(), 1.0, epsilon = 1e-12);
        let b = exact_backward_joint(&m).unwrap();
        assert_abs_diff_eq!(b.total_mass(), 1.0, epsilon = 1e-12);
        let via = exact_forward_joint_via_ancilla_paths(&m).unwrap();
        assert!(d.max_abs_difference(&via) < 1e-12);
    }

    #[test]
    fn heats_lie_on_level_differences() {
        let sys = Spectrum::from_strs(&["0", "1/3", "1"]);
        let anc = Spectrum::from_strs(&["0", "1/3", "2/3"]);
        let ancillas = (0..3)
            .map(|k| crate::model::AncillaConfig {
                spectrum: anc.clone(),
                beta: 0.5 + k as f64,
                unitary: UnitarySpec::haar(k),
            })
            .collect();
        let m = Model::build(&ModelConfig::new(sys.clone(), 1.0, ancillas, 3)).unwrap();
        let diffs = sys.differences();
        let d = exact_forward_joint(&m).unwrap();
        for (k, _) in d.iter() {
            assert!(k.values().iter().all(|x| diffs.contains(x)), "{k:?}");
        }
        let via = exact_forward_joint_via_ancilla_paths(&m).unwrap();
        assert!(d.max_abs_difference(&via) < 1e-12);
    }

    #[test]
    fn marginalization_preserves_mass() {
        let m = running_example(3);
        let d = exact_forward_joint(&m).unwrap();
        assert_eq!(d.marginalize_prefix(3).unwrap(), d);
        for coords in [vec![0], vec![2], vec![0, 2], vec![2, 0]] {
            let marg = d.marginalize(&coords).unwrap();
            assert_abs_diff_eq!(marg.total_mass(), d.total_mass(), epsilon = 1e-15);
            assert_eq!(marg.collisions(), coords.len());
        }
        assert!(d.marginalize_prefix(0).is_err());
        assert!(d.marginalize(&[3]).is_err());
    }

    #[test]
    fn first_single_collision_is_first_marginal() {
        let m = running_example(3);
        let d = exact_forward_joint(&m).unwrap();
        let first = d.marginalize_prefix(1).unwrap();
        let sc = single_collision_distribution(&m, 1).unwrap();
        assert!(first.max_abs_difference(&sc) < 1e-12);
        // Later collisions see a non-thermal system.
        let third = d.marginalize(&[2]).unwrap();
        let sc3 = single_collision_distribution(&m, 3).unwrap();
        assert!(third.max_abs_difference(&sc3) > 1e-6);
        assert!(single_collision_distribution(&m, 0).is_err());
        assert!(single_collision_distribution(&m, 4).is_err());
    }

    #[test]
    fn enumeration_cap_refuses_with_count() {
        let m = running_example(3).with_enumeration_cap(10);
        let err = exact_forward_joint(&m).unwrap_err();
        assert!(err.to_string().contains("16 paths"), "{err}");
        assert!(exact_backward_joint(&m).is_err());
        assert!(exact_forward_joint_via_ancilla_paths(&m).is_err());
    }

    #[test]
    fn pruning_reports_mass() {
        let mut masses = BTreeMap::new();
        masses.insert(q(&[0]), 1.0 - 1e-16);
        masses.insert(q(&[1]), 1e-16);
        let d = JointHeatDistribution::from_masses(Direction::Forward, 1, masses).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d.was_pruned(&q(&[1])));
        assert_abs_diff_eq!(d.pruned_mass(), 1e-16);
    }
}
