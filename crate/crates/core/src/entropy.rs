//! Entropy production along trajectories and its averaged forms.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::augmented::{ancilla_record_distribution, for_each_augmented_path, AugmentedTrajectory};
use crate::chain::evolve;
use crate::collision::JointIndex;
use crate::error::{Error, Result};
use crate::heat::{exact_forward_joint, HeatTuple};
use crate::model::Model;
use crate::spectrum::Spectrum;
use crate::thermal::{kl_divergence, shannon_entropy, ThermalState};

/// `ln(e^{-beta E_j} / Z)` without going through the (possibly underflowed)
/// population itself.
pub(crate) fn log_population(state: &ThermalState, spectrum: &Spectrum, level: usize) -> f64 {
    -state.beta * spectrum.energy(level).to_f64() - state.log_z
}

/// Log-ratio form `sum_i ln q_i(n_i)/q_i(n_i') + ln p_0(a_0)/p_0(a_N)`.
pub fn entropy_production_from_populations(traj: &AugmentedTrajectory, model: &Model) -> f64 {
    let sys = model.system_spectrum();
    let p0 = model.system_thermal();
    let ancilla_terms: f64 = traj
        .ancilla_pairs
        .iter()
        .zip(model.collisions())
        .map(|((n, m), c)| log_population(&c.thermal, &c.spectrum, *n) - log_population(&c.thermal, &c.spectrum, *m))
        .sum();
    let first = traj.alphas[0];
    let last = *traj.alphas.last().expect("non-empty");
    ancilla_terms + log_population(p0, sys, first) - log_population(p0, sys, last)
}

const SIGMA_CONSISTENCY: f64 = 1e-10;

/// `sum_i (beta_i - beta_s) Q_i`, cross-checked against the log-ratio form.
pub fn entropy_production(traj: &AugmentedTrajectory, heats: &HeatTuple, model: &Model) -> Result<f64> {
    let sigma = heats.entropy_production(&model.betas(), model.system_beta());
    let log_form = entropy_production_from_populations(traj, model);
    if (sigma - log_form).abs() > SIGMA_CONSISTENCY * sigma.abs().max(1.0) {
        return Err(Error::Consistency(format!(
            "entropy production {sigma} from heats disagrees with log-ratio form {log_form}"
        )));
    }
    Ok(sigma)
}

/// Populations of ancilla `i` (1-based) after its collision.
pub fn ancilla_post_state(model: &Model, i: usize) -> Result<Vec<f64>> {
    if i == 0 || i > model.len() {
        return Err(Error::Domain(format!("collision index {i} outside 1..={}", model.len())));
    }
    let system = model.populations_before(i);
    let c = &model.collisions()[i - 1];
    let mut post = vec![0.0; c.spectrum.dim()];
    for (a, pa) in system.iter().enumerate() {
        for (n, qn) in c.thermal.populations.iter().enumerate() {
            for (out, r) in c.tensor.outputs(JointIndex::new(a, n)) {
                post[out.ancilla] += r * qn * pa;
            }
        }
    }
    Ok(post)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyReport {
    /// Average of `sum_i (beta_i - beta_s) Q_i` over the exact forward joint.
    pub from_heats: f64,
    /// Average of the log-ratio form over exact augmented trajectories.
    pub from_log_ratios: f64,
    /// Entropy changes plus relative entropies of the system and each ancilla.
    pub information_form: f64,
    pub max_pairwise_gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Computes the mean entropy production three independent ways.
pub fn average_entropy_production(model: &Model, tolerance: f64) -> Result<EntropyReport> {
    let betas = model.betas();
    let beta_s = model.system_beta();
    let from_heats: f64 = exact_forward_joint(model)?
        .iter()
        .map(|(k, p)| p * k.entropy_production(&betas, beta_s))
        .sum();

    let mut from_log_ratios = 0.0;
    for_each_augmented_path(model, |path, w| {
        from_log_ratios += w * entropy_production_from_populations(path, model);
    })?;

    let p0 = &model.system_thermal().populations;
    let mut final_state = p0.clone();
    for c in model.collisions() {
        final_state = evolve(&final_state, &c.propagator)?;
    }
    let mut information_form = shannon_entropy(&final_state)? - shannon_entropy(p0)? + kl_divergence(&final_state, p0)?;
    for c in model.collisions() {
        let post = ancilla_post_state(model, c.index)?;
        let pre = &c.thermal.populations;
        information_form += shannon_entropy(&post)? - shannon_entropy(pre)? + kl_divergence(&post, pre)?;
    }

    let values = [from_heats, from_log_ratios, information_form];
    let mut gap: f64 = 0.0;
    for a in 0..3 {
        for b in a + 1..3 {
            gap = gap.max((values[a] - values[b]).abs());
        }
    }
    Ok(EntropyReport {
        from_heats,
        from_log_ratios,
        information_form,
        max_pairwise_gap: gap,
        tolerance,
        passed: gap <= tolerance && information_form >= -1e-12,
    })
}

/// Largest total-variation distance between the conditional laws of the last
/// post-collision ancilla level `n_N'` given `(n_N, n_{N-1}')`, compared across
/// different values of `n_{N-1}`. Positive values show that the ancilla record
/// is not a Markov chain even though the system levels are.
pub fn ancilla_markov_violation(model: &Model) -> Result<f64> {
    let n = model.len();
    if n < 2 {
        return Err(Error::Domain("needs at least two collisions".into()));
    }
    // (n_N, n_{N-1}') -> n_{N-1} -> n_N' -> mass
    let mut table: BTreeMap<(usize, usize), BTreeMap<usize, BTreeMap<usize, f64>>> = BTreeMap::new();
    for (record, p) in ancilla_record_distribution(model)? {
        let (prev_in, prev_out) = record.ancilla_pairs[n - 2];
        let (last_in, last_out) = record.ancilla_pairs[n - 1];
        *table
            .entry((last_in, prev_out))
            .or_default()
            .entry(prev_in)
            .or_default()
            .entry(last_out)
            .or_insert(0.0) += p;
    }
    let mut worst: f64 = 0.0;
    for by_prev in table.values() {
        let conditionals: Vec<BTreeMap<usize, f64>> = by_prev
            .values()
            .filter_map(|dist| {
                let total: f64 = dist.values().sum();
                (total > 0.0).then(|| dist.iter().map(|(k, v)| (*k, v / total)).collect())
            })
            .collect();
        for a in 0..conditionals.len() {
            for b in a + 1..conditionals.len() {
                let keys: std::collections::BTreeSet<usize> = conditionals[a].keys().chain(conditionals[b].keys()).copied().collect();
                let tv = 0.5
                    * keys
                        .iter()
                        .map(|k| (conditionals[a].get(k).unwrap_or(&0.0) - conditionals[b].get(k).unwrap_or(&0.0)).abs())
                        .sum::<f64>();
                worst = worst.max(tv);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::UnitarySpec;
    use crate::model::ModelConfig;
    use crate::rational::Rational;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn swap_chain(betas: &[f64], theta: f64) -> Model {
        let spec: Vec<_> = betas.iter().map(|b| (*b, UnitarySpec::partial_swap(theta))).collect();
        Model::build(&ModelConfig::resonant_qubit_chain(1.0, &spec, 0)).unwrap()
    }

    fn tuple(v: &[i64]) -> HeatTuple {
        HeatTuple(v.iter().map(|x| Rational::from_integer(*x)).collect())
    }

    #[test]
    fn sigma_examples() {
        let m = swap_chain(&[2.0], FRAC_PI_4);
        let still = AugmentedTrajectory { alphas: vec![1, 1], ancilla_pairs: vec![(0, 0)] };
        assert_eq!(entropy_production(&still, &tuple(&[0]), &m).unwrap(), 0.0);
        let emit = AugmentedTrajectory { alphas: vec![1, 0], ancilla_pairs: vec![(0, 1)] };
        assert_abs_diff_eq!(entropy_production(&emit, &tuple(&[1]), &m).unwrap(), 1.0, epsilon = 1e-12);

        let m2 = swap_chain(&[2.0, 3.0], FRAC_PI_4);
        let there_and_back = AugmentedTrajectory { alphas: vec![1, 0, 1], ancilla_pairs: vec![(0, 1), (1, 0)] };
        assert_abs_diff_eq!(entropy_production(&there_and_back, &tuple(&[1, -1]), &m2).unwrap(), -1.0, epsilon = 1e-12);

        // Heats inconsistent with the path are caught.
        assert!(matches!(entropy_production(&emit, &tuple(&[0]), &m), Err(Error::Consistency(_))));
    }

    #[test]
    fn ancilla_post_state_examples() {
        let id = Model::build(&ModelConfig::resonant_qubit_chain(1.0, &[(2.0, UnitarySpec::identity())], 0)).unwrap();
        assert_eq!(ancilla_post_state(&id, 1).unwrap(), id.collisions()[0].thermal.populations);

        let full = swap_chain(&[2.0], FRAC_PI_2);
        let post = ancilla_post_state(&full, 1).unwrap();
        let sys = &full.system_thermal().populations;
        assert_abs_diff_eq!(post[0], sys[0], epsilon = 1e-12);
        assert_abs_diff_eq!(post[1], sys[1], epsilon = 1e-12);

        // Oracle: q'(e) = q(e) + sin^2 t (p0(e) q(g) - p0(g) q(e)).
        let half = swap_chain(&[2.0], FRAC_PI_4);
        let post = ancilla_post_state(&half, 1).unwrap();
        assert_abs_diff_eq!(post[1], 0.194_072_171_696_056_3, epsilon = 1e-12);
        assert_abs_diff_eq!(post.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(ancilla_post_state(&half, 2).is_err());
    }

    #[test]
    fn three_routes_agree() {
        let id = Model::build(&ModelConfig::resonant_qubit_chain(1.0, &vec![(2.0, UnitarySpec::identity()); 2], 0)).unwrap();
        let r = average_entropy_production(&id, 1e-9).unwrap();
        assert!(r.passed);
        assert_abs_diff_eq!(r.from_heats, 0.0);
        assert_abs_diff_eq!(r.information_form, 0.0, epsilon = 1e-15);

        let r = average_entropy_production(&swap_chain(&[2.0], FRAC_PI_4), 1e-9).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.from_heats > 0.0);
    }

    #[test]
    fn ancilla_record_is_not_markov() {
        let m = swap_chain(&[0.5, 2.5], FRAC_PI_4);
        assert!(ancilla_markov_violation(&m).unwrap() > 1e-3);
        let id = Model::build(&ModelConfig::resonant_qubit_chain(1.0, &[(0.5, UnitarySpec::identity()), (2.5, UnitarySpec::identity())], 0)).unwrap();
        assert_eq!(ancilla_markov_violation(&id).unwrap(), 0.0);
    }
}
