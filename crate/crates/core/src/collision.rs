//! Energy shells of a system-ancilla pair and the energy-preserving unitaries
//! that act within them.
//!
//! A unitary commuting with `H_s + H_a` is block diagonal over the sets of
//! joint levels sharing one exact total energy. Everything here works one
//! shell at a time; the full `d_s * d_a` matrix is never built.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rational::Rational;
use crate::spectrum::Spectrum;
use crate::streams::{self, Domain};

/// Joint basis label `|alpha, n>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointIndex {
    pub system: usize,
    pub ancilla: usize,
}

impl JointIndex {
    pub fn new(system: usize, ancilla: usize) -> Self {
        JointIndex { system, ancilla }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnergyShell {
    pub total_energy: Rational,
    /// Lexicographic in `(system, ancilla)`.
    pub members: Vec<JointIndex>,
}

impl EnergyShell {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Shells of one system-ancilla pair plus a reverse lookup from joint index to
/// `(shell, position)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShellPartition {
    system_dim: usize,
    ancilla_dim: usize,
    shells: Vec<EnergyShell>,
    locate: Vec<(usize, usize)>,
}

impl ShellPartition {
    pub fn shells(&self) -> &[EnergyShell] {
        &self.shells
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    /// `(shell index, position within shell)` of a joint level.
    pub fn locate(&self, j: JointIndex) -> (usize, usize) {
        self.locate[j.system * self.ancilla_dim + j.ancilla]
    }

    pub fn shell_of(&self, j: JointIndex) -> &EnergyShell {
        &self.shells[self.locate(j).0]
    }

    pub fn shell_by_energy(&self, total: Rational) -> Option<usize> {
        self.shells.iter().position(|s| s.total_energy == total)
    }
}

/// Groups the joint basis by exact total energy. Shells are ordered by total
/// energy; members lexicographically.
pub fn build_energy_shells(system: &Spectrum, ancilla: &Spectrum) -> ShellPartition {
    let mut by_energy: BTreeMap<Rational, Vec<JointIndex>> = BTreeMap::new();
    for (a, ea) in system.levels().iter().enumerate() {
        for (n, en) in ancilla.levels().iter().enumerate() {
            by_energy.entry(*ea + *en).or_default().push(JointIndex::new(a, n));
        }
    }
    let shells: Vec<EnergyShell> = by_energy
        .into_iter()
        .map(|(total_energy, mut members)| {
            members.sort();
            EnergyShell { total_energy, members }
        })
        .collect();
    let mut locate = vec![(0, 0); system.dim() * ancilla.dim()];
    for (s, shell) in shells.iter().enumerate() {
        for (p, j) in shell.members.iter().enumerate() {
            locate[j.system * ancilla.dim() + j.ancilla] = (s, p);
        }
    }
    ShellPartition {
        system_dim: system.dim(),
        ancilla_dim: ancilla.dim(),
        shells,
        locate,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum UnitaryKind {
    /// Independent Haar-random block per shell.
    Haar,
    /// `[[cos t, -i sin t], [-i sin t, cos t]]` on the resonant `(g,e),(e,g)` shell.
    PartialSwap { theta: f64 },
    /// Each cycle `x_0 -> x_1 -> ... -> x_0` must stay inside one shell.
    Permutation { cycles: Vec<Vec<JointIndex>> },
    /// Dense blocks keyed by shell total energy. Omitted single-member shells
    /// default to 1.
    Explicit { blocks: BTreeMap<Rational, DMatrix<Complex64>> },
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitarySpec {
    pub kind: UnitaryKind,
    pub stream_tag: u64,
}

impl UnitarySpec {
    pub fn new(kind: UnitaryKind, stream_tag: u64) -> Self {
        UnitarySpec { kind, stream_tag }
    }

    pub fn identity() -> Self {
        UnitarySpec::new(UnitaryKind::Identity, 0)
    }

    pub fn haar(stream_tag: u64) -> Self {
        UnitarySpec::new(UnitaryKind::Haar, stream_tag)
    }

    pub fn partial_swap(theta: f64) -> Self {
        UnitarySpec::new(UnitaryKind::PartialSwap { theta }, 0)
    }
}

/// Energy-preserving unitary stored as one dense block per shell.
/// `block[r][c] = <member_r| U |member_c>`.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionUnitary {
    partition: ShellPartition,
    blocks: Vec<DMatrix<Complex64>>,
}

impl CollisionUnitary {
    /// Wraps blocks without checking unitarity; shapes must still match.
    pub fn from_blocks_unchecked(partition: ShellPartition, blocks: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if blocks.len() != partition.shells.len() {
            return Err(Error::Validation(format!(
                "{} blocks supplied for {} shells",
                blocks.len(),
                partition.shells.len()
            )));
        }
        for (shell, block) in partition.shells.iter().zip(&blocks) {
            if block.nrows() != shell.len() || block.ncols() != shell.len() {
                return Err(Error::Validation(format!(
                    "block for shell at total energy {} is {}x{}, shell has {} members",
                    shell.total_energy,
                    block.nrows(),
                    block.ncols(),
                    shell.len()
                )));
            }
        }
        Ok(CollisionUnitary { partition, blocks })
    }

    pub fn partition(&self) -> &ShellPartition {
        &self.partition
    }

    pub fn blocks(&self) -> &[DMatrix<Complex64>] {
        &self.blocks
    }

    /// Matrix element `<out| U |in>`; exactly zero across shells.
    pub fn element(&self, out: JointIndex, inp: JointIndex) -> Complex64 {
        let (so, po) = self.partition.locate(out);
        let (si, pi) = self.partition.locate(inp);
        if so != si {
            return Complex64::new(0.0, 0.0);
        }
        self.blocks[so][(po, pi)]
    }
}

fn haar_block(dim: usize, master_seed: u64, stream_tag: u64, shell_index: usize) -> DMatrix<Complex64> {
    let mut rng = streams::stream(master_seed, Domain::Haar, stream_tag, shell_index as u64);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    // Column-major fill order is part of the reproducibility contract.
    let ginibre = DMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re * scale, im * scale)
    });
    let qr = ginibre.qr();
    let (mut q, r) = qr.unpack();
    // Fix the phase ambiguity of QR so the result is Haar distributed.
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for row in 0..dim {
            q[(row, k)] *= phase;
        }
    }
    q
}

fn unitarity_residual(block: &DMatrix<Complex64>) -> f64 {
    let n = block.nrows();
    let product = block * block.adjoint();
    let mut worst: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((product[(r, c)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

const EXPLICIT_UNITARITY_TOLERANCE: f64 = 1e-10;

/// Builds the collision unitary described by `spec` on the given shells.
pub fn realize_unitary(partition: &ShellPartition, spec: &UnitarySpec, master_seed: u64) -> Result<CollisionUnitary> {
    let one = Complex64::new(1.0, 0.0);
    let identity_blocks = || -> Vec<DMatrix<Complex64>> {
        partition.shells.iter().map(|s| DMatrix::identity(s.len(), s.len())).collect()
    };
    let blocks = match &spec.kind {
        UnitaryKind::Identity => identity_blocks(),
        UnitaryKind::Haar => partition
            .shells
            .iter()
            .enumerate()
            .map(|(k, s)| {
                if s.len() == 1 {
                    DMatrix::from_element(1, 1, one)
                } else {
                    haar_block(s.len(), master_seed, spec.stream_tag, k)
                }
            })
            .collect(),
        UnitaryKind::PartialSwap { theta } => {
            if !theta.is_finite() {
                return Err(Error::Config {
                    path: "unitary.theta".into(),
                    message: format!("theta must be finite, got {theta}"),
                });
            }
            let resonant = [JointIndex::new(0, 1), JointIndex::new(1, 0)];
            let shell = if partition.system_dim == 2 && partition.ancilla_dim == 2 {
                partition.shells.iter().position(|s| s.members == resonant)
            } else {
                None
            };
            let Some(shell) = shell else {
                let layout: Vec<String> = partition
                    .shells
                    .iter()
                    .map(|s| format!("{}:{}", s.total_energy, s.len()))
                    .collect();
                return Err(Error::Config {
                    path: "unitary".into(),
                    message: format!(
                        "partial_swap needs two-level system and ancilla with equal gaps; \
                         dims are {}x{} with shells [{}] (total:size)",
                        partition.system_dim,
                        partition.ancilla_dim,
                        layout.join(", ")
                    ),
                });
            };
            let mut blocks = identity_blocks();
            let c = Complex64::new(theta.cos(), 0.0);
            let s = Complex64::new(0.0, -theta.sin());
            blocks[shell] = DMatrix::from_row_slice(2, 2, &[c, s, s, c]);
            blocks
        }
        UnitaryKind::Permutation { cycles } => {
            let mut images: Vec<Vec<usize>> = partition.shells.iter().map(|s| (0..s.len()).collect()).collect();
            let mut touched = vec![false; partition.system_dim * partition.ancilla_dim];
            for (ci, cycle) in cycles.iter().enumerate() {
                let Some(first) = cycle.first() else { continue };
                for j in cycle {
                    if j.system >= partition.system_dim || j.ancilla >= partition.ancilla_dim {
                        return Err(Error::Config {
                            path: format!("unitary.cycles[{ci}]"),
                            message: format!("joint index ({}, {}) out of range", j.system, j.ancilla),
                        });
                    }
                    let flat = j.system * partition.ancilla_dim + j.ancilla;
                    if touched[flat] {
                        return Err(Error::Config {
                            path: format!("unitary.cycles[{ci}]"),
                            message: format!("joint index ({}, {}) appears twice", j.system, j.ancilla),
                        });
                    }
                    touched[flat] = true;
                }
                let shell = partition.locate(*first).0;
                for k in 0..cycle.len() {
                    let (from, to) = (cycle[k], cycle[(k + 1) % cycle.len()]);
                    let (sf, pf) = partition.locate(from);
                    let (st, pt) = partition.locate(to);
                    if sf != shell || st != shell {
                        return Err(Error::Config {
                            path: format!("unitary.cycles[{ci}]"),
                            message: "cycle crosses energy shells and would not conserve energy".into(),
                        });
                    }
                    images[shell][pf] = pt;
                }
            }
            partition
                .shells
                .iter()
                .zip(&images)
                .map(|(s, img)| {
                    let mut b = DMatrix::zeros(s.len(), s.len());
                    for (from, to) in img.iter().enumerate() {
                        b[(*to, from)] = one;
                    }
                    b
                })
                .collect()
        }
        UnitaryKind::Explicit { blocks } => {
            for key in blocks.keys() {
                if partition.shell_by_energy(*key).is_none() {
                    return Err(Error::Validation(format!("explicit block keyed {key} matches no energy shell")));
                }
            }
            let mut out = Vec::with_capacity(partition.shells.len());
            for shell in &partition.shells {
                let block = match blocks.get(&shell.total_energy) {
                    Some(b) => b.clone(),
                    None if shell.len() == 1 => DMatrix::from_element(1, 1, one),
                    None => {
                        return Err(Error::Validation(format!(
                            "missing explicit block for shell at total energy {} ({} members)",
                            shell.total_energy,
                            shell.len()
                        )))
                    }
                };
                if block.nrows() != shell.len() || block.ncols() != shell.len() {
                    return Err(Error::Validation(format!(
                        "explicit block for shell {} is {}x{}, shell has {} members",
                        shell.total_energy,
                        block.nrows(),
                        block.ncols(),
                        shell.len()
                    )));
                }
                let residual = unitarity_residual(&block);
                if residual > EXPLICIT_UNITARITY_TOLERANCE {
                    return Err(Error::Validation(format!(
                        "explicit block for shell {} is not unitary (residual {residual:e})",
                        shell.total_energy
                    )));
                }
                out.push(block);
            }
            out
        }
    };
    CollisionUnitary::from_blocks_unchecked(partition.clone(), blocks)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ShellCheck {
    pub total_energy: Rational,
    pub size: usize,
    pub unitarity_residual: f64,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct EnergyPreservationReport {
    pub shells: Vec<ShellCheck>,
    pub max_residual: f64,
    pub block_structure_ok: bool,
    pub passed: bool,
}

/// Per-shell unitarity residuals `max |B B^dag - I|`. Block structure is
/// guaranteed by the representation; it is still re-derived from the spectra
/// implied by the shells to catch corrupted partitions.
pub fn validate_energy_preservation(u: &CollisionUnitary, tolerance: f64) -> EnergyPreservationReport {
    let mut block_structure_ok = u.blocks.len() == u.partition.shells.len();
    let mut seen = vec![false; u.partition.system_dim * u.partition.ancilla_dim];
    let shells: Vec<ShellCheck> = u
        .partition
        .shells
        .iter()
        .zip(&u.blocks)
        .map(|(shell, block)| {
            block_structure_ok &= block.nrows() == shell.len() && block.ncols() == shell.len();
            for j in &shell.members {
                let flat = j.system * u.partition.ancilla_dim + j.ancilla;
                block_structure_ok &= !std::mem::replace(&mut seen[flat], true);
            }
            ShellCheck {
                total_energy: shell.total_energy,
                size: shell.len(),
                unitarity_residual: unitarity_residual(block),
            }
        })
        .collect();
    block_structure_ok &= seen.iter().all(|s| *s);
    let max_residual = shells.iter().map(|s| s.unitarity_residual).fold(0.0, f64::max);
    EnergyPreservationReport {
        passed: block_structure_ok && max_residual <= tolerance,
        shells,
        max_residual,
        block_structure_ok,
    }
}

/// `R(out | in) = |<out| U |in>|^2`, stored per shell as
/// `probabilities[shell][(out_pos, in_pos)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionTensor {
    partition: ShellPartition,
    probabilities: Vec<DMatrix<f64>>,
}

impl TransitionTensor {
    pub fn partition(&self) -> &ShellPartition {
        &self.partition
    }

    /// Zero whenever `out` and `inp` lie in different shells.
    pub fn prob(&self, out: JointIndex, inp: JointIndex) -> f64 {
        let (so, po) = self.partition.locate(out);
        let (si, pi) = self.partition.locate(inp);
        if so != si {
            return 0.0;
        }
        self.probabilities[so][(po, pi)]
    }

    /// Reachable outputs from `inp` with their probabilities, in shell order.
    pub fn outputs(&self, inp: JointIndex) -> impl Iterator<Item = (JointIndex, f64)> + '_ {
        let (s, p) = self.partition.locate(inp);
        let block = &self.probabilities[s];
        self.partition.shells[s]
            .members
            .iter()
            .enumerate()
            .map(move |(k, out)| (*out, block[(k, p)]))
    }

    pub fn shell_block(&self, shell: usize) -> &DMatrix<f64> {
        &self.probabilities[shell]
    }
}

pub fn transition_tensor(u: &CollisionUnitary) -> TransitionTensor {
    TransitionTensor {
        partition: u.partition.clone(),
        probabilities: u.blocks.iter().map(|b| b.map(|z| z.norm_sqr())).collect(),
    }
}
