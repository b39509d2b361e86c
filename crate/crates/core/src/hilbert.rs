//! Multi-spin state vectors and matrix-free single-site operations.
//!
//! Basis convention: spin 1 occupies the most significant bit of the
//! amplitude index, and bit value 1 is spin "up" (σ_z = +1). With this
//! convention the single-spin Pauli matrices, written in the ordered basis
//! (|1⟩, |0⟩), are the textbook ones, so
//!
//! - σ_x |b⟩ = |1−b⟩
//! - σ_y |1⟩ = i|0⟩, σ_y |0⟩ = −i|1⟩
//! - σ_z |1⟩ = |1⟩, σ_z |0⟩ = −|0⟩

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::C64;

/// Largest register this crate will allocate a dense amplitude vector for.
pub const MAX_SPINS: usize = 30;

/// One of the three Pauli axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];
}

impl fmt::Display for PauliAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PauliAxis::X => "x",
            PauliAxis::Y => "y",
            PauliAxis::Z => "z",
        };
        f.write_str(s)
    }
}

/// 1-based spin label. Sites 1 and 2 are the subsystem, 3..N the bath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteIndex(usize);

impl SiteIndex {
    pub fn new(index: usize) -> Result<Self> {
        if index == 0 {
            return Err(SimError::invalid("site indices are 1-based"));
        }
        Ok(SiteIndex(index))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Bit mask of this site inside an `n_spins` register.
    pub fn mask(self, n_spins: usize) -> Result<usize> {
        if self.0 > n_spins {
            return Err(SimError::invalid(format!(
                "site {} out of range for a {}-spin state",
                self.0, n_spins
            )));
        }
        Ok(1usize << (n_spins - self.0))
    }
}

/// Index of the basis state with the given spin values (spin 1 first).
pub fn basis_index(bits: &[u8]) -> Result<usize> {
    if bits.len() > MAX_SPINS {
        return Err(SimError::invalid(format!("{} spins exceeds {MAX_SPINS}", bits.len())));
    }
    bits.iter().try_fold(0usize, |acc, &b| match b {
        0 | 1 => Ok((acc << 1) | b as usize),
        other => Err(SimError::invalid(format!("basis digit {other} is not 0 or 1"))),
    })
}

/// Dense amplitude vector over a register of `n_spins` spins-1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_spins: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(n_spins: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if n_spins > MAX_SPINS {
            return Err(SimError::invalid(format!("{n_spins} spins exceeds {MAX_SPINS}")));
        }
        if amplitudes.len() != 1usize << n_spins {
            return Err(SimError::invalid(format!(
                "{} amplitudes given for {} spins (need {})",
                amplitudes.len(),
                n_spins,
                1usize << n_spins
            )));
        }
        Ok(StateVector { n_spins, amplitudes })
    }

    pub fn zeros(n_spins: usize) -> Self {
        StateVector {
            n_spins,
            amplitudes: vec![C64::new(0.0, 0.0); 1usize << n_spins],
        }
    }

    /// The computational basis state with amplitude index `index`.
    pub fn basis(n_spins: usize, index: usize) -> Result<Self> {
        let mut s = Self::zeros(n_spins);
        if index >= s.dim() {
            return Err(SimError::invalid(format!(
                "basis index {index} out of range for {n_spins} spins"
            )));
        }
        s.amplitudes[index] = C64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        Self::basis(bits.len(), basis_index(bits)?)
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Returns `self / ‖self‖`. Fails on the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(SimError::invalid("cannot normalize a zero or non-finite state"));
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, factor: C64) -> Self {
        StateVector {
            n_spins: self.n_spins,
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.n_spins != other.n_spins {
            return Err(SimError::invalid(format!(
                "dimension mismatch: {} vs {} spins",
                self.n_spins, other.n_spins
            )));
        }
        Ok(())
    }

    /// ⟨self|other⟩, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<C64> {
        self.check_same_shape(other)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `self + factor · other`.
    pub fn add_scaled(&self, factor: C64, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(StateVector {
            n_spins: self.n_spins,
            amplitudes: self
                .amplitudes
                .iter()
                .zip(&other.amplitudes)
                .map(|(a, b)| a + factor * b)
                .collect(),
        })
    }

    /// Euclidean norm of `self − other`.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    /// Tensor product `self ⊗ other`; `self` takes the leading spins.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let n = self.n_spins + other.n_spins;
        if n > MAX_SPINS {
            return Err(SimError::invalid(format!("{n} spins exceeds {MAX_SPINS}")));
        }
        let mut amplitudes = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amplitudes {
            amplitudes.extend(other.amplitudes.iter().map(|b| a * b));
        }
        Ok(StateVector { n_spins: n, amplitudes })
    }

    /// σ_axis on `site`, returning a new state.
    pub fn apply_pauli(&self, site: SiteIndex, axis: PauliAxis) -> Result<Self> {
        let mut out = self.clone();
        out.apply_pauli_in_place(site, axis)?;
        Ok(out)
    }

    pub fn apply_pauli_in_place(&mut self, site: SiteIndex, axis: PauliAxis) -> Result<()> {
        let mask = site.mask(self.n_spins)?;
        let amps = &mut self.amplitudes;
        match axis {
            PauliAxis::Z => {
                for (i, a) in amps.iter_mut().enumerate() {
                    if i & mask == 0 {
                        *a = -*a;
                    }
                }
            }
            PauliAxis::X | PauliAxis::Y => {
                let i_unit = C64::new(0.0, 1.0);
                for lo in 0..amps.len() {
                    if lo & mask != 0 {
                        continue;
                    }
                    let hi = lo | mask;
                    let (down, up) = (amps[lo], amps[hi]);
                    match axis {
                        PauliAxis::X => {
                            amps[lo] = up;
                            amps[hi] = down;
                        }
                        _ => {
                            // σ_y|1⟩ = i|0⟩, σ_y|0⟩ = −i|1⟩
                            amps[lo] = i_unit * up;
                            amps[hi] = -i_unit * down;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies U = (1/√2)[[1, 1], [1, −1]] on each listed site, with U
    /// acting on the (|0⟩, |1⟩) amplitude pair. U is its own inverse.
    ///
    /// In the resulting representation bit 0 labels the σ_x = +1 state
    /// (|0⟩ + |1⟩)/√2 and bit 1 labels the σ_x = −1 state.
    pub fn to_x_basis(&self, sites: &[SiteIndex]) -> Result<Self> {
        let mut out = self.clone();
        out.to_x_basis_in_place(sites)?;
        Ok(out)
    }

    pub fn to_x_basis_in_place(&mut self, sites: &[SiteIndex]) -> Result<()> {
        let masks = sites
            .iter()
            .map(|s| s.mask(self.n_spins))
            .collect::<Result<Vec<_>>>()?;
        for mask in masks {
            hadamard_on_mask(&mut self.amplitudes, mask);
        }
        Ok(())
    }

    /// Relabels spins: the spin currently at `a` moves to `b` and vice versa.
    pub fn swap_sites(&self, a: SiteIndex, b: SiteIndex) -> Result<Self> {
        let ma = a.mask(self.n_spins)?;
        let mb = b.mask(self.n_spins)?;
        let mut out = self.clone();
        if ma == mb {
            return Ok(out);
        }
        for (i, slot) in out.amplitudes.iter_mut().enumerate() {
            let bit_a = i & ma != 0;
            let bit_b = i & mb != 0;
            let j = if bit_a != bit_b { i ^ ma ^ mb } else { i };
            *slot = self.amplitudes[j];
        }
        Ok(out)
    }
}

pub(crate) fn hadamard_on_mask(amps: &mut [C64], mask: usize) {
    for lo in 0..amps.len() {
        if lo & mask != 0 {
            continue;
        }
        let hi = lo | mask;
        let (a0, a1) = (amps[lo], amps[hi]);
        amps[lo] = (a0 + a1) * FRAC_1_SQRT_2;
        amps[hi] = (a0 - a1) * FRAC_1_SQRT_2;
    }
}

/// Free-function forms of the state operations.
pub fn apply_pauli(state: &StateVector, site: SiteIndex, axis: PauliAxis) -> Result<StateVector> {
    state.apply_pauli(site, axis)
}

pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<C64> {
    a.inner(b)
}

pub fn to_x_basis(state: &StateVector, sites: &[SiteIndex]) -> Result<StateVector> {
    state.to_x_basis(sites)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn site(i: usize) -> SiteIndex {
        SiteIndex::new(i).unwrap()
    }

    #[test]
    fn basis_index_is_big_endian() {
        assert_eq!(basis_index(&[0, 0]).unwrap(), 0);
        assert_eq!(basis_index(&[1, 0]).unwrap(), 2);
        assert_eq!(basis_index(&[1, 1, 1, 1]).unwrap(), 15);
        assert!(matches!(basis_index(&[0, 2]), Err(SimError::InvalidArgument(_))));
    }

    #[test]
    fn pauli_action_on_single_spin() {
        let down = StateVector::from_bits(&[0]).unwrap();
        let up = StateVector::from_bits(&[1]).unwrap();

        assert_eq!(down.apply_pauli(site(1), PauliAxis::X).unwrap(), up);
        assert_eq!(up.apply_pauli(site(1), PauliAxis::Z).unwrap(), up);
        assert_eq!(down.apply_pauli(site(1), PauliAxis::Z).unwrap(), down.scaled(c(-1.0, 0.0)));
        assert_eq!(down.apply_pauli(site(1), PauliAxis::Y).unwrap(), up.scaled(c(0.0, -1.0)));
        assert_eq!(up.apply_pauli(site(1), PauliAxis::Y).unwrap(), down.scaled(c(0.0, 1.0)));
    }

    #[test]
    fn sigma_y_is_i_sigma_x_sigma_z() {
        let s = StateVector::new(2, vec![c(0.1, 0.2), c(-0.3, 0.5), c(0.7, -0.1), c(0.2, 0.2)]).unwrap();
        for k in 1..=2 {
            let y = s.apply_pauli(site(k), PauliAxis::Y).unwrap();
            let xz = s
                .apply_pauli(site(k), PauliAxis::Z)
                .unwrap()
                .apply_pauli(site(k), PauliAxis::X)
                .unwrap()
                .scaled(c(0.0, 1.0));
            assert!(y.distance(&xz).unwrap() < 1e-15);
        }
    }

    #[test]
    fn invalid_site_is_rejected() {
        let s = StateVector::zeros(2);
        assert!(s.apply_pauli(site(3), PauliAxis::X).is_err());
        assert!(SiteIndex::new(0).is_err());
        assert!(s.to_x_basis(&[site(5)]).is_err());
    }

    #[test]
    fn inner_products() {
        let s00 = StateVector::from_bits(&[0, 0]).unwrap();
        let s11 = StateVector::from_bits(&[1, 1]).unwrap();
        assert_eq!(s00.inner(&s11).unwrap(), c(0.0, 0.0));

        let bell = s00.add_scaled(c(1.0, 0.0), &s11).unwrap().normalized().unwrap();
        assert!((bell.inner(&bell).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        let xx = bell
            .apply_pauli(site(1), PauliAxis::X)
            .unwrap()
            .apply_pauli(site(2), PauliAxis::X)
            .unwrap();
        assert!((bell.inner(&xx).unwrap() - c(1.0, 0.0)).norm() < 1e-15);

        assert!(s00.inner(&StateVector::zeros(3)).is_err());
    }

    #[test]
    fn x_basis_transform() {
        let down = StateVector::from_bits(&[0]).unwrap();
        let x = down.to_x_basis(&[site(1)]).unwrap();
        assert!((x.amplitudes()[0] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
        assert!((x.amplitudes()[1] - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);

        let plus = StateVector::new(1, vec![c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0)]).unwrap();
        let px = plus.to_x_basis(&[site(1)]).unwrap();
        assert!((px.amplitudes()[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!(px.amplitudes()[1].norm() < 1e-15);

        let back = x.to_x_basis(&[site(1)]).unwrap();
        assert!(back.distance(&down).unwrap() < 1e-15);
    }

    #[test]
    fn swap_sites_permutes_bits() {
        let s = StateVector::from_bits(&[1, 0, 0]).unwrap();
        let t = s.swap_sites(site(1), site(3)).unwrap();
        assert_eq!(t, StateVector::from_bits(&[0, 0, 1]).unwrap());
    }

    #[test]
    fn tensor_orders_leading_spins_first() {
        let a = StateVector::from_bits(&[1]).unwrap();
        let b = StateVector::from_bits(&[0, 1]).unwrap();
        assert_eq!(a.tensor(&b).unwrap(), StateVector::from_bits(&[1, 0, 1]).unwrap());
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(StateVector::new(2, vec![c(1.0, 0.0); 3]).is_err());
    }
}
