//! Model configuration and its realization into per-collision data.

use crate::chain::{propagator_from_tensor, Propagator};
use crate::collision::{build_energy_shells, realize_unitary, transition_tensor, CollisionUnitary, TransitionTensor, UnitarySpec};
use crate::error::{Error, Result};
use crate::spectrum::Spectrum;
use crate::thermal::{gibbs_state, ThermalState};

pub const DEFAULT_ENUMERATION_CAP: u64 = 100_000_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_DETAILED_BALANCE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct AncillaConfig {
    pub spectrum: Spectrum,
    pub beta: f64,
    pub unitary: UnitarySpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub system_spectrum: Spectrum,
    pub system_beta: f64,
    pub ancillas: Vec<AncillaConfig>,
    pub master_seed: u64,
    pub enumeration_cap: u64,
    /// Log-residual tolerance for the fluctuation-theorem checks.
    pub tolerance: f64,
    pub detailed_balance_tolerance: f64,
}

impl ModelConfig {
    pub fn new(system_spectrum: Spectrum, system_beta: f64, ancillas: Vec<AncillaConfig>, master_seed: u64) -> Self {
        ModelConfig {
            system_spectrum,
            system_beta,
            ancillas,
            master_seed,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            tolerance: DEFAULT_TOLERANCE,
            detailed_balance_tolerance: DEFAULT_DETAILED_BALANCE_TOLERANCE,
        }
    }

    /// Two-level system and ancillas with unit gap, one ancilla per
    /// `(beta, unitary)` pair.
    pub fn resonant_qubit_chain(system_beta: f64, collisions: &[(f64, UnitarySpec)], master_seed: u64) -> Self {
        let qubit = Spectrum::ladder(2, 1);
        let ancillas = collisions
            .iter()
            .map(|(beta, unitary)| AncillaConfig {
                spectrum: qubit.clone(),
                beta: *beta,
                unitary: unitary.clone(),
            })
            .collect();
        ModelConfig::new(qubit, system_beta, ancillas, master_seed)
    }

    pub fn collisions(&self) -> usize {
        self.ancillas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ancillas.is_empty() {
            return Err(Error::Config {
                path: "ancillas".into(),
                message: "at least one ancilla is required".into(),
            });
        }
        if !self.system_beta.is_finite() {
            return Err(Error::Config {
                path: "system.beta".into(),
                message: format!("must be finite, got {}", self.system_beta),
            });
        }
        for (i, a) in self.ancillas.iter().enumerate() {
            if !a.beta.is_finite() {
                return Err(Error::Config {
                    path: format!("ancillas[{i}].beta"),
                    message: format!("must be finite, got {}", a.beta),
                });
            }
        }
        for (name, v) in [("tolerance", self.tolerance), ("detailed_balance_tolerance", self.detailed_balance_tolerance)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config {
                    path: name.into(),
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        if self.enumeration_cap == 0 {
            return Err(Error::Config {
                path: "enumeration_cap".into(),
                message: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Everything derived from one ancilla: its thermal state, realized unitary,
/// transition tensor and system propagator.
#[derive(Clone, Debug)]
pub struct Collision {
    /// 1-based position in the chain.
    pub index: usize,
    pub spectrum: Spectrum,
    pub beta: f64,
    pub thermal: ThermalState,
    pub unitary: CollisionUnitary,
    pub tensor: TransitionTensor,
    pub propagator: Propagator,
}

/// A validated, fully realized collision chain.
#[derive(Clone, Debug)]
pub struct Model {
    system_spectrum: Spectrum,
    system_beta: f64,
    system_thermal: ThermalState,
    collisions: Vec<Collision>,
    enumeration_cap: u64,
}

impl Model {
    pub fn build(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let system_thermal = gibbs_state(&config.system_spectrum, config.system_beta)?;
        let collisions = config
            .ancillas
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let partition = build_energy_shells(&config.system_spectrum, &a.spectrum);
                let unitary = realize_unitary(&partition, &a.unitary, config.master_seed).map_err(|e| match e {
                    Error::Config { path, message } => Error::Config {
                        path: format!("ancillas[{k}].{path}"),
                        message,
                    },
                    other => other,
                })?;
                let tensor = transition_tensor(&unitary);
                let thermal = gibbs_state(&a.spectrum, a.beta)?;
                let propagator = propagator_from_tensor(&tensor, &thermal, k + 1)?;
                Ok(Collision {
                    index: k + 1,
                    spectrum: a.spectrum.clone(),
                    beta: a.beta,
                    thermal,
                    unitary,
                    tensor,
                    propagator,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            system_spectrum: config.system_spectrum.clone(),
            system_beta: config.system_beta,
            system_thermal,
            collisions,
            enumeration_cap: config.enumeration_cap,
        })
    }

    pub fn system_spectrum(&self) -> &Spectrum {
        &self.system_spectrum
    }

    pub fn system_beta(&self) -> f64 {
        self.system_beta
    }

    pub fn system_thermal(&self) -> &ThermalState {
        &self.system_thermal
    }

    pub fn collisions(&self) -> &[Collision] {
        &self.collisions
    }

    /// Number of collisions `N`.
    pub fn len(&self) -> usize {
        self.collisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.collisions.is_empty()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.collisions.iter().map(|c| c.beta).collect()
    }

    pub fn propagators(&self) -> Vec<Propagator> {
        self.collisions.iter().map(|c| c.propagator.clone()).collect()
    }

    pub fn enumeration_cap(&self) -> u64 {
        self.enumeration_cap
    }

    pub fn with_enumeration_cap(mut self, cap: u64) -> Self {
        self.enumeration_cap = cap;
        self
    }

    /// The chain restricted to collisions `range` (0-based, half-open), with
    /// the system freshly thermalized at `beta_s` before the first of them.
    /// Realized unitaries are reused, not redrawn.
    pub fn subchain(&self, range: std::ops::Range<usize>) -> Model {
        assert!(range.start < range.end && range.end <= self.collisions.len(), "empty or out-of-range subchain");
        let collisions = self.collisions[range]
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let mut c = c.clone();
                c.index = k + 1;
                c.propagator = Propagator::from_matrix(c.propagator.matrix().clone(), k + 1).expect("square");
                c
            })
            .collect();
        Model {
            collisions,
            ..self.clone_header()
        }
    }

    /// Single fresh collision of a `beta_s` system with ancilla `i` (1-based).
    pub fn single_collision(&self, i: usize) -> Model {
        self.subchain(i - 1..i)
    }

    fn clone_header(&self) -> Model {
        Model {
            system_spectrum: self.system_spectrum.clone(),
            system_beta: self.system_beta,
            system_thermal: self.system_thermal.clone(),
            collisions: Vec::new(),
            enumeration_cap: self.enumeration_cap,
        }
    }

    /// System populations before collision `i` (1-based), i.e. after `i - 1`
    /// collisions.
    pub fn populations_before(&self, i: usize) -> Vec<f64> {
        let mut p = self.system_thermal.populations.clone();
        for c in &self.collisions[..i - 1] {
            p = crate::chain::evolve(&p, &c.propagator).expect("dimensions fixed at build time");
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_rejects_bad_configs() {
        let mut cfg = ModelConfig::resonant_qubit_chain(1.0, &[(2.0, UnitarySpec::identity())], 0);
        assert!(Model::build(&cfg).is_ok());
        cfg.ancillas[0].beta = f64::NAN;
        assert!(Model::build(&cfg).is_err());
        cfg.ancillas.clear();
        assert!(matches!(Model::build(&cfg), Err(Error::Config { .. })));

        let mut off = ModelConfig::resonant_qubit_chain(1.0, &[(2.0, UnitarySpec::partial_swap(0.3))], 0);
        off.ancillas[0].spectrum = Spectrum::from_strs(&["0", "2"]);
        let err = Model::build(&off).unwrap_err().to_string();
        assert!(err.contains("ancillas[0]"), "{err}");
    }

    #[test]
    fn subchains_renumber_and_reuse_unitaries() {
        let cfg = ModelConfig::resonant_qubit_chain(
            1.0,
            &[(0.5, UnitarySpec::haar(1)), (1.5, UnitarySpec::haar(2)), (2.5, UnitarySpec::haar(3))],
            7,
        );
        let m = Model::build(&cfg).unwrap();
        let tail = m.subchain(1..3);
        assert_eq!(tail.len(), 2);
        assert_eq!(tail.collisions()[0].index, 1);
        assert_eq!(tail.collisions()[0].unitary, m.collisions()[1].unitary);
        assert_eq!(m.single_collision(3).betas(), vec![2.5]);
        assert_eq!(m.populations_before(1), m.system_thermal().populations);
    }
}
