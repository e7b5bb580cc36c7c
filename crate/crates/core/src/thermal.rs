//! Gibbs populations and the diagonal entropy functionals.
//!
//! Energy-preserving collisions on non-degenerate spectra never create
//! coherences in the energy basis, so von Neumann entropy and quantum relative
//! entropy reduce to their classical forms on the populations.

use crate::error::{Error, Result};
use crate::spectrum::Spectrum;

#[derive(Clone, Debug, PartialEq)]
pub struct ThermalState {
    pub beta: f64,
    pub populations: Vec<f64>,
    pub log_z: f64,
}

impl ThermalState {
    pub fn dim(&self) -> usize {
        self.populations.len()
    }

    pub fn population(&self, level: usize) -> f64 {
        self.populations[level]
    }
}

/// Gibbs state `exp(-beta E_j) / Z`, shifted by the ground energy so large
/// `|beta|` cannot overflow. Zero and negative `beta` are allowed.
pub fn gibbs_state(spectrum: &Spectrum, beta: f64) -> Result<ThermalState> {
    if !beta.is_finite() {
        return Err(Error::Domain(format!("inverse temperature must be finite, got {beta}")));
    }
    let energies: Vec<f64> = spectrum.levels().iter().map(|e| e.to_f64()).collect();
    // For negative beta the largest weight sits at the top level.
    let shift = if beta >= 0.0 {
        energies[0]
    } else {
        energies[energies.len() - 1]
    };
    let weights: Vec<f64> = energies.iter().map(|e| (-beta * (e - shift)).exp()).collect();
    let z_shifted: f64 = weights.iter().sum();
    let populations = weights.iter().map(|w| w / z_shifted).collect();
    Ok(ThermalState {
        beta,
        populations,
        log_z: z_shifted.ln() - beta * shift,
    })
}

fn check_distribution(p: &[f64], tolerance: f64) -> Result<()> {
    if let Some(j) = p.iter().position(|x| *x < 0.0 || x.is_nan()) {
        return Err(Error::Domain(format!("negative probability {} at index {j}", p[j])));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > tolerance {
        return Err(Error::Domain(format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    check_distribution(p, 1e-9)?;
    let h: f64 = p.iter().filter(|x| **x > 0.0).map(|x| -x * x.ln()).sum();
    Ok(h.max(0.0))
}

/// Relative entropy `D(post || reference)` of two population vectors.
pub fn kl_divergence(post: &[f64], reference: &[f64]) -> Result<f64> {
    if post.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: post.len(),
        });
    }
    check_distribution(post, 1e-9)?;
    check_distribution(reference, 1e-9)?;
    let mut d = 0.0;
    for (j, (p, q)) in post.iter().zip(reference).enumerate() {
        if *p > 0.0 {
            if *q <= 0.0 {
                return Err(Error::DivergenceInfinite { index: j });
            }
            d += p * (p.ln() - q.ln());
        }
    }
    Ok(d.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    // Oracle values: direct evaluation of exp(-beta E)/Z, -sum p ln p and the
    // KL sum for the beta = 1 qubit.
    const QUBIT_BETA1: [f64; 2] = [0.731_058_578_630_004_9, 0.268_941_421_369_995_1];

    #[test]
    fn gibbs_examples() {
        let qubit = Spectrum::from_strs(&["0", "1"]);
        assert_eq!(gibbs_state(&qubit, 0.0).unwrap().populations, vec![0.5, 0.5]);
        let single = Spectrum::from_strs(&["3/2"]);
        assert_eq!(gibbs_state(&single, -7.0).unwrap().populations, vec![1.0]);
        let g = gibbs_state(&qubit, 1.0).unwrap();
        assert_abs_diff_eq!(g.populations[0], QUBIT_BETA1[0], epsilon = 1e-12);
        assert_abs_diff_eq!(g.populations[1], QUBIT_BETA1[1], epsilon = 1e-12);
        assert_abs_diff_eq!(g.log_z, (1.0 + (-1.0f64).exp()).ln(), epsilon = 1e-14);
    }

    #[test]
    fn gibbs_survives_extreme_beta() {
        let s = Spectrum::from_strs(&["0", "1000", "2000"]);
        for beta in [1e3, -1e3] {
            let g = gibbs_state(&s, beta).unwrap();
            assert!(g.populations.iter().all(|p| p.is_finite()));
            assert_abs_diff_eq!(g.populations.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert!(gibbs_state(&s, f64::NAN).is_err());
    }

    #[test]
    fn log_partition_function_with_offset_levels() {
        let s = Spectrum::from_strs(&["-3", "1/2", "5"]);
        let beta = 0.7;
        let z: f64 = [-3.0f64, 0.5, 5.0].iter().map(|e| (-beta * e).exp()).sum();
        assert_abs_diff_eq!(gibbs_state(&s, beta).unwrap().log_z, z.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(gibbs_state(&s, -beta).unwrap().log_z,
            [-3.0f64, 0.5, 5.0].iter().map(|e| (beta * e).exp()).sum::<f64>().ln(), epsilon = 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(shannon_entropy(&[0.5, 0.5]).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(shannon_entropy(&QUBIT_BETA1).unwrap(), 0.582_203_108_888_217_9, epsilon = 1e-12);
        assert!(matches!(shannon_entropy(&[1.5, -0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&QUBIT_BETA1, &QUBIT_BETA1).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(kl_divergence(&[0.6, 0.4], &QUBIT_BETA1).unwrap(), 0.040_250_020_508_966_39, epsilon = 1e-12);
        assert!(matches!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::DivergenceInfinite { index: 1 })
        ));
        assert!(matches!(kl_divergence(&[1.0], &[0.5, 0.5]), Err(Error::DimensionMismatch { .. })));
    }

    fn normalized(raw: Vec<f64>) -> Vec<f64> {
        let t: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / t).collect()
    }

    proptest! {
        #[test]
        fn gibbs_is_monotone_in_energy(gaps in prop::collection::vec(1i64..5, 1..5), beta in -3.0f64..3.0) {
            let mut e = 0;
            let mut levels = vec![crate::rational::Rational::ZERO];
            for g in gaps { e += g; levels.push(crate::rational::Rational::from_integer(e)); }
            let s = Spectrum::new(levels, "s").unwrap();
            let p = gibbs_state(&s, beta).unwrap().populations;
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|x| *x > 0.0));
            for w in p.windows(2) {
                if beta > 0.0 { prop_assert!(w[0] >= w[1]); }
                if beta < 0.0 { prop_assert!(w[0] <= w[1]); }
            }
        }

        #[test]
        fn uniform_maximizes_entropy(raw in prop::collection::vec(0.0f64..1.0, 2..6)) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-6);
            let d = raw.len();
            let p = normalized(raw);
            prop_assert!(shannon_entropy(&p).unwrap() <= (d as f64).ln() + 1e-12);
        }

        #[test]
        fn kl_vanishes_only_on_equality(a in prop::collection::vec(0.01f64..1.0, 3), b in prop::collection::vec(0.01f64..1.0, 3)) {
            let p = normalized(a);
            let q = normalized(b);
            prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
            let d = kl_divergence(&p, &q).unwrap();
            let gap = p.iter().zip(&q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if gap > 1e-3 { prop_assert!(d > 1e-12); }
            prop_assert!(d >= 0.0);
        }
    }
}
