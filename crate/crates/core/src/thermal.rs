//! Thermal bath preparation: dense diagonalization of H_B, Boltzmann
//! weights, and truncation to the members above a weight threshold.

use std::io::Write;

use nalgebra::SymmetricEigen;

use crate::error::{Result, SimError};
use crate::hamiltonian::{dense_matrix, ModelSpec, OperatorPart, DEFAULT_DENSE_CAP};
use crate::hilbert::StateVector;
use crate::C64;

/// An eigenpair of H_B on the bath register.
#[derive(Debug, Clone)]
pub struct BathEigenpair {
    pub energy: f64,
    /// Position in the energy-sorted list.
    pub index: usize,
    pub state: StateVector,
}

#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub weight: f64,
    pub energy: f64,
    pub eigen_index: usize,
    pub state: StateVector,
}

/// Bath eigenstates retained after thresholding, heaviest first.
#[derive(Debug, Clone)]
pub struct ThermalEnsemble {
    pub members: Vec<EnsembleMember>,
    /// Sum of the retained weights (1 minus the discarded mass).
    pub partition_renorm: f64,
    pub threshold: f64,
    /// Number of bath eigenstates before truncation.
    pub total_states: usize,
    pub renormalized: bool,
}

impl ThermalEnsemble {
    /// Diagonalizes H_B for `spec` and keeps the members with weight ≥
    /// `threshold`.
    pub fn prepare(spec: &ModelSpec, threshold: f64, renormalize: bool) -> Result<Self> {
        let pairs = diagonalize_bath(spec, DEFAULT_DENSE_CAP)?;
        let weights = boltzmann_weights(&pairs, spec.temperature)?;
        let ensemble = truncate(&weights, &pairs, threshold)?;
        Ok(if renormalize { ensemble.renormalized() } else { ensemble })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn discarded_mass(&self) -> f64 {
        1.0 - self.partition_renorm
    }

    /// Copy with weights rescaled to sum to one. `partition_renorm` keeps the
    /// pre-rescaling mass so the discarded weight stays visible.
    pub fn renormalized(&self) -> Self {
        let z = self.partition_renorm;
        let mut out = self.clone();
        for m in &mut out.members {
            m.weight /= z;
        }
        out.renormalized = true;
        out
    }

    pub fn weights(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.weight).collect()
    }
}

/// All 2^m eigenpairs of H_B, sorted by nondecreasing energy.
pub fn diagonalize_bath(spec: &ModelSpec, cap: usize) -> Result<Vec<BathEigenpair>> {
    spec.validate()?;
    let m = spec.n_bath;
    if m > cap {
        return Err(SimError::ResourceLimit { what: "bath diagonalization", requested: m, cap });
    }
    let h = dense_matrix(spec, OperatorPart::B, cap)?;
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));

    order
        .into_iter()
        .enumerate()
        .map(|(index, col)| {
            let amps = eig
                .eigenvectors
                .column(col)
                .iter()
                .map(|&v| C64::new(v, 0.0))
                .collect();
            Ok(BathEigenpair {
                energy: eig.eigenvalues[col],
                index,
                state: StateVector::new(m, amps)?,
            })
        })
        .collect()
}

/// ω_n = exp(−E_n/T) / Z, evaluated with energies shifted by E_min.
pub fn boltzmann_weights(pairs: &[BathEigenpair], temperature: f64) -> Result<Vec<f64>> {
    let energies: Vec<f64> = pairs.iter().map(|p| p.energy).collect();
    boltzmann_weights_from_energies(&energies, temperature)
}

pub fn boltzmann_weights_from_energies(energies: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(SimError::invalid(format!("temperature must be > 0, got {temperature}")));
    }
    if energies.is_empty() {
        return Err(SimError::invalid("no energies to weight"));
    }
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = energies.iter().map(|e| (-(e - e_min) / temperature).exp()).collect();
    let z: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / z).collect())
}

/// Keeps members with ω ≥ `threshold` (inclusive). Weights are not rescaled.
///
/// Ordering: weight descending, then energy ascending, then eigen index.
pub fn truncate(weights: &[f64], pairs: &[BathEigenpair], threshold: f64) -> Result<ThermalEnsemble> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SimError::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    if weights.len() != pairs.len() {
        return Err(SimError::invalid("weights and eigenpairs differ in length"));
    }
    let mut members: Vec<EnsembleMember> = weights
        .iter()
        .zip(pairs)
        .filter(|(&w, _)| w >= threshold)
        .map(|(&w, p)| EnsembleMember {
            weight: w,
            energy: p.energy,
            eigen_index: p.index,
            state: p.state.clone(),
        })
        .collect();
    if members.is_empty() {
        return Err(SimError::invalid(format!(
            "threshold {threshold} retains no bath states (largest weight {:.3e})",
            weights.iter().copied().fold(0.0, f64::max)
        )));
    }
    members.sort_by(|a, b| {
        b.weight
            .total_cmp(&a.weight)
            .then(a.energy.total_cmp(&b.energy))
            .then(a.eigen_index.cmp(&b.eigen_index))
    });
    let partition_renorm = members.iter().map(|m| m.weight).sum();
    Ok(ThermalEnsemble {
        members,
        partition_renorm,
        threshold,
        total_states: pairs.len(),
        renormalized: false,
    })
}

/// Number of weights ≥ `threshold`.
pub fn count_above(weights: &[f64], threshold: f64) -> usize {
    weights.iter().filter(|&&w| w >= threshold).count()
}

/// Audit dump: `index,energy,weight` per eigenpair.
pub fn write_fixture<W: Write>(out: &mut W, pairs: &[BathEigenpair], weights: &[f64]) -> std::io::Result<()> {
    writeln!(out, "index,energy,weight")?;
    for (p, w) in pairs.iter().zip(weights) {
        writeln!(out, "{},{:.11e},{:.11e}", p.index, p.energy, w)?;
    }
    Ok(())
}
