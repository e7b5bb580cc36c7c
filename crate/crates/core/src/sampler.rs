//! Monte Carlo generation of augmented trajectories.
//!
//! Shot `j` belongs to worker `j mod W`, and worker `w` draws from its own
//! stream `(seed, w)`. Output order and aggregation follow shot index, so a
//! run is reproducible for a fixed `(seed, W)` no matter how threads are
//! scheduled.

use std::collections::BTreeMap;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::augmented::AugmentedTrajectory;
use crate::collision::JointIndex;
use crate::entropy::{entropy_production, log_population};
use crate::error::{Error, Result};
use crate::heat::{heats_from_ancilla_path, heats_from_system_path, Direction, HeatTuple, JointHeatDistribution};
use crate::model::Model;
use crate::streams::{self, Domain};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerConfig {
    pub shots: u64,
    pub master_seed: u64,
    pub workers: usize,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::Config { path: "shots".into(), message: "must be at least 1".into() });
        }
        if self.workers == 0 {
            return Err(Error::Config { path: "workers".into(), message: "must be at least 1".into() });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub trajectory: AugmentedTrajectory,
    pub heats: HeatTuple,
    pub sigma: f64,
    pub log_path_probability: f64,
}

/// One row of a trajectory dump.
#[derive(Serialize)]
struct DumpLine<'a> {
    shot: u64,
    alphas: &'a [usize],
    ancilla_pairs: &'a [(usize, usize)],
    heats: Vec<String>,
    sigma: f64,
    log_path_probability: f64,
}

struct OutputTable {
    members: Vec<JointIndex>,
    log_probs: Vec<f64>,
    dist: WeightedIndex<f64>,
}

struct CollisionTables {
    ancilla: WeightedIndex<f64>,
    /// Indexed by `alpha * d_a + n`; only the input's own shell is stored.
    outputs: Vec<OutputTable>,
}

/// Precomputed sampling tables for one model.
pub struct Sampler<'m> {
    model: &'m Model,
    initial: WeightedIndex<f64>,
    collisions: Vec<CollisionTables>,
}

fn weighted(w: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(w).map_err(|e| Error::Domain(format!("cannot sample from weights {w:?}: {e}")))
}

impl<'m> Sampler<'m> {
    pub fn new(model: &'m Model) -> Result<Self> {
        let ds = model.system_spectrum().dim();
        let collisions = model
            .collisions()
            .iter()
            .map(|c| {
                let da = c.spectrum.dim();
                let mut outputs = Vec::with_capacity(ds * da);
                for a in 0..ds {
                    for n in 0..da {
                        let (members, probs): (Vec<_>, Vec<_>) = c.tensor.outputs(JointIndex::new(a, n)).unzip();
                        outputs.push(OutputTable {
                            members,
                            log_probs: probs.iter().map(|p: &f64| p.ln()).collect(),
                            dist: weighted(&probs)?,
                        });
                    }
                }
                Ok(CollisionTables { ancilla: weighted(&c.thermal.populations)?, outputs })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sampler { model, initial: weighted(&model.system_thermal().populations)?, collisions })
    }

    /// Draws `a_0 ~ p_0`, then per collision `n_i ~ q_i` and
    /// `(a_i, n_i') ~ R_i(. | a_{i-1}, n_i)`.
    pub fn sample_trajectory<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentedTrajectory {
        let n = self.model.len();
        let mut alphas = Vec::with_capacity(n + 1);
        let mut pairs = Vec::with_capacity(n);
        alphas.push(self.initial.sample(rng));
        for (c, tables) in self.model.collisions().iter().zip(&self.collisions) {
            let prev = *alphas.last().expect("alpha_0");
            let n_in = tables.ancilla.sample(rng);
            let table = &tables.outputs[prev * c.spectrum.dim() + n_in];
            let out = table.members[table.dist.sample(rng)];
            alphas.push(out.system);
            pairs.push((n_in, out.ancilla));
        }
        AugmentedTrajectory { alphas, ancilla_pairs: pairs }
    }

    /// Heats by both definitions (must agree exactly), entropy production and
    /// the log path probability.
    pub fn record(&self, trajectory: AugmentedTrajectory) -> Result<TrajectoryRecord> {
        let model = self.model;
        let heats = heats_from_system_path(&trajectory.alphas, model.system_spectrum());
        let spectra: Vec<_> = model.collisions().iter().map(|c| &c.spectrum).collect();
        let from_ancillas = heats_from_ancilla_path(&trajectory.ancilla_pairs, &spectra);
        if heats != from_ancillas {
            return Err(Error::Consistency(format!(
                "system heats {heats:?} differ from ancilla heats {from_ancillas:?}"
            )));
        }
        let sigma = entropy_production(&trajectory, &heats, model)?;
        let mut log_p = log_population(model.system_thermal(), model.system_spectrum(), trajectory.alphas[0]);
        for (i, (c, tables)) in model.collisions().iter().zip(&self.collisions).enumerate() {
            let (n_in, n_out) = trajectory.ancilla_pairs[i];
            let table = &tables.outputs[trajectory.alphas[i] * c.spectrum.dim() + n_in];
            let out = JointIndex::new(trajectory.alphas[i + 1], n_out);
            let k = table.members.iter().position(|m| *m == out).ok_or_else(|| {
                Error::Consistency(format!("transition {out:?} leaves the energy shell of collision {}", i + 1))
            })?;
            log_p += log_population(&c.thermal, &c.spectrum, n_in) + table.log_probs[k];
        }
        Ok(TrajectoryRecord { trajectory, heats, sigma, log_path_probability: log_p })
    }
}

/// Shot counts per heat tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    pub shots: u64,
    pub collisions: usize,
    pub counts: BTreeMap<HeatTuple, u64>,
}

const CHUNK: u64 = 1 << 16;

/// Runs the sampler, optionally dumping every record as one JSON line in shot
/// order.
pub fn run_sampler(model: &Model, config: &SamplerConfig, mut dump: Option<&mut dyn Write>) -> Result<SampleOutcome> {
    config.validate()?;
    let sampler = Sampler::new(model)?;
    let workers = config.workers as u64;
    let mut rngs: Vec<ChaCha8Rng> = (0..workers)
        .map(|w| streams::stream(config.master_seed, Domain::Sampler, 0, w))
        .collect();
    let mut counts: BTreeMap<HeatTuple, u64> = BTreeMap::new();
    let mut start = 0;
    while start < config.shots {
        let end = (start + CHUNK).min(config.shots);
        let per_worker: Vec<Result<Vec<(u64, TrajectoryRecord)>>> = rngs
            .par_iter_mut()
            .enumerate()
            .map(|(w, rng)| {
                let w = w as u64;
                // First shot in [start, end) owned by worker w.
                let first = start + (w + workers - start % workers) % workers;
                (first..end)
                    .step_by(workers as usize)
                    .map(|j| Ok((j, sampler.record(sampler.sample_trajectory(rng))?)))
                    .collect()
            })
            .collect();
        let mut chunk: Vec<(u64, TrajectoryRecord)> = Vec::with_capacity((end - start) as usize);
        for batch in per_worker {
            chunk.extend(batch?);
        }
        chunk.sort_unstable_by_key(|(j, _)| *j);
        for (j, rec) in &chunk {
            if let Some(out) = dump.as_mut() {
                let line = DumpLine {
                    shot: *j,
                    alphas: &rec.trajectory.alphas,
                    ancilla_pairs: &rec.trajectory.ancilla_pairs,
                    heats: rec.heats.values().iter().map(|q| q.to_string()).collect(),
                    sigma: rec.sigma,
                    log_path_probability: rec.log_path_probability,
                };
                serde_json::to_writer(&mut *out, &line)?;
                out.write_all(b"\n")?;
            }
            *counts.entry(rec.heats.clone()).or_insert(0) += 1;
        }
        start = end;
    }
    Ok(SampleOutcome { shots: config.shots, collisions: model.len(), counts })
}

/// Frequency estimate of the joint heat distribution with per-key standard
/// errors `sqrt(p (1 - p) / shots)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalJoint {
    pub distribution: JointHeatDistribution,
    pub standard_errors: BTreeMap<HeatTuple, f64>,
    pub shots: u64,
}

pub fn empirical_joint(outcome: &SampleOutcome) -> Result<EmpiricalJoint> {
    if outcome.shots == 0 {
        return Err(Error::Domain("no shots".into()));
    }
    let shots = outcome.shots as f64;
    let masses: BTreeMap<HeatTuple, f64> = outcome.counts.iter().map(|(k, c)| (k.clone(), *c as f64 / shots)).collect();
    let standard_errors = masses.iter().map(|(k, p)| (k.clone(), (p * (1.0 - p) / shots).sqrt())).collect();
    Ok(EmpiricalJoint {
        distribution: JointHeatDistribution::from_masses(Direction::Forward, outcome.collisions, masses)?,
        standard_errors,
        shots: outcome.shots,
    })
}

/// Sample mean of `exp(-sigma)` and its standard error.
pub fn integral_ft_estimate(outcome: &SampleOutcome, betas: &[f64], beta_s: f64) -> (f64, f64) {
    let n = outcome.shots as f64;
    let (mut s1, mut s2) = (0.0, 0.0);
    for (k, c) in &outcome.counts {
        let x = (-k.entropy_production(betas, beta_s)).exp();
        s1 += *c as f64 * x;
        s2 += *c as f64 * x * x;
    }
    let mean = s1 / n;
    let var = if n > 1.0 { ((s2 - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}
