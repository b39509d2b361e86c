//! Subsystem observables: reduced density matrices, polarizations, pair
//! correlations and the Wootters concurrence.
//!
//! Two-spin matrices use the ordered basis (|11⟩, |10⟩, |01⟩, |00⟩) and
//! single-spin matrices (|1⟩, |0⟩), so the Pauli matrices take their
//! textbook form and σ_z = +1 on |1⟩.

use nalgebra::{Matrix2, Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::hilbert::{PauliAxis, StateVector};
use crate::C64;

const HERMITICITY_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-9;
const CONCURRENCE_NEGATIVE_TOL: f64 = 1e-8;
const IMAG_RESIDUE_TOL: f64 = 1e-10;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Single-spin Pauli matrix in the (|1⟩, |0⟩) basis.
pub fn pauli_matrix(axis: PauliAxis) -> Matrix2<C64> {
    match axis {
        PauliAxis::X => Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)),
        PauliAxis::Y => Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
        PauliAxis::Z => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)),
    }
}

/// a ⊗ b in the (|11⟩, |10⟩, |01⟩, |00⟩) basis.
pub fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, col| a[(r / 2, col / 2)] * b[(r % 2, col % 2)])
}

/// Row of the ordered basis for the subsystem bits (b1, b2) packed as
/// `2·b1 + b2`.
#[inline]
fn row_of(subsystem_bits: usize) -> usize {
    3 - subsystem_bits
}

/// 4×4 density matrix of the two subsystem spins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedDensityMatrix(Matrix4<C64>);

impl ReducedDensityMatrix {
    /// Wraps a matrix after checking Hermiticity, unit trace and
    /// positivity.
    pub fn new(entries: Matrix4<C64>) -> Result<Self> {
        let rho = ReducedDensityMatrix(entries);
        rho.validate()?;
        Ok(rho)
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(entries: Matrix4<C64>) -> Self {
        ReducedDensityMatrix(entries)
    }

    /// Projector onto a_00|00⟩ + a_01|01⟩ + a_10|10⟩ + a_11|11⟩.
    pub fn from_pure(amps: [C64; 4]) -> Result<Self> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > TRACE_TOL {
            return Err(SimError::invalid(format!("pure state has squared norm {norm}")));
        }
        let mut m = Matrix4::zeros();
        for s in 0..4 {
            for s2 in 0..4 {
                m[(row_of(s), row_of(s2))] = amps[s] * amps[s2].conj();
            }
        }
        Ok(ReducedDensityMatrix(m))
    }

    pub fn entries(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let herm = (self.0 + self.0.adjoint()) * c(0.5, 0.0);
        let e = SymmetricEigen::new(herm).eigenvalues;
        [e[0], e[1], e[2], e[3]]
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(SimError::NumericalConsistency(format!("ρ not Hermitian (error {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - c(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(SimError::NumericalConsistency(format!("ρ trace is {tr}")));
        }
        let min = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < -POSITIVITY_TOL {
            return Err(SimError::NumericalConsistency(format!("ρ has eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Tr(ρ O).
    pub fn expectation(&self, op: &Matrix4<C64>) -> C64 {
        (self.0 * op).trace()
    }
}

/// 2×2 density matrix of one subsystem spin, basis (|1⟩, |0⟩).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleSpinMatrix(Matrix2<C64>);

impl SingleSpinMatrix {
    pub fn new(entries: Matrix2<C64>) -> Result<Self> {
        let herm = (entries - entries.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm > HERMITICITY_TOL {
            return Err(SimError::NumericalConsistency(format!("ρ⁽ⁱ⁾ not Hermitian (error {herm:.3e})")));
        }
        if (entries.trace() - c(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(SimError::NumericalConsistency(format!("ρ⁽ⁱ⁾ trace is {}", entries.trace())));
        }
        Ok(SingleSpinMatrix(entries))
    }

    pub fn entries(&self) -> &Matrix2<C64> {
        &self.0
    }

    pub fn rho_11(&self) -> C64 {
        self.0[(0, 0)]
    }
    pub fn rho_10(&self) -> C64 {
        self.0[(0, 1)]
    }
    pub fn rho_01(&self) -> C64 {
        self.0[(1, 0)]
    }
    pub fn rho_00(&self) -> C64 {
        self.0[(1, 1)]
    }
}

/// Adds `weight · Tr_B |ψ⟩⟨ψ|` into `acc` (ordered basis, unnormalized).
pub fn accumulate_partial_trace(acc: &mut Matrix4<C64>, weight: f64, state: &StateVector) -> Result<()> {
    let n = state.n_spins();
    if n < 2 {
        return Err(SimError::invalid("state must contain the two subsystem spins"));
    }
    let bath_dim = 1usize << (n - 2);
    let amps = state.amplitudes();
    for s in 0..4 {
        let block_s = &amps[s * bath_dim..(s + 1) * bath_dim];
        for s2 in s..4 {
            let block_s2 = &amps[s2 * bath_dim..(s2 + 1) * bath_dim];
            let sum: C64 = block_s.iter().zip(block_s2).map(|(a, b)| a * b.conj()).sum();
            let v = sum * weight;
            acc[(row_of(s), row_of(s2))] += v;
            if s2 != s {
                acc[(row_of(s2), row_of(s))] += v.conj();
            }
        }
    }
    Ok(())
}

/// ρ_S = Tr_B Σ_n ω_n |Ψ_n⟩⟨Ψ_n| divided by Σ_n ω_n.
///
/// The division makes ρ_S a unit-trace state even when the ensemble was
/// truncated; the raw trace equals Σ ω_n exactly.
pub fn ensemble_reduced_density(members: &[(f64, &StateVector)]) -> Result<ReducedDensityMatrix> {
    let Some((_, first)) = members.first() else {
        return Err(SimError::invalid("empty ensemble"));
    };
    let n = first.n_spins();
    let mut acc = Matrix4::zeros();
    let mut total = 0.0;
    for (w, s) in members {
        if s.n_spins() != n {
            return Err(SimError::invalid("ensemble members have different dimensions"));
        }
        if !(*w > 0.0) {
            return Err(SimError::invalid(format!("ensemble weight {w} is not positive")));
        }
        accumulate_partial_trace(&mut acc, *w, s)?;
        total += w;
    }
    Ok(ReducedDensityMatrix(acc / c(total, 0.0)))
}

/// Partial trace over the other spin; `keep` is 1 or 2.
pub fn sub_reduce(rho: &ReducedDensityMatrix, keep: usize) -> Result<SingleSpinMatrix> {
    let m = &rho.0;
    let mut out = Matrix2::zeros();
    match keep {
        1 => {
            for a in 0..2 {
                for a2 in 0..2 {
                    out[(a, a2)] = (0..2).map(|b| m[(2 * a + b, 2 * a2 + b)]).sum();
                }
            }
        }
        2 => {
            for b in 0..2 {
                for b2 in 0..2 {
                    out[(b, b2)] = (0..2).map(|a| m[(2 * a + b, 2 * a + b2)]).sum();
                }
            }
        }
        other => return Err(SimError::invalid(format!("keep must be 1 or 2, got {other}"))),
    }
    Ok(SingleSpinMatrix(out))
}

fn real_part(z: C64, what: &str) -> Result<f64> {
    if z.im.abs() > IMAG_RESIDUE_TOL {
        return Err(SimError::NumericalConsistency(format!(
            "{what} has imaginary residue {:.3e}",
            z.im
        )));
    }
    Ok(z.re)
}

/// (⟨σ_x⟩, ⟨σ_y⟩, ⟨σ_z⟩) of one spin.
pub fn polarization(rho: &SingleSpinMatrix) -> Result<[f64; 3]> {
    let sx = rho.rho_10() + rho.rho_01();
    let sy = c(0.0, 1.0) * (rho.rho_10() - rho.rho_01());
    let sz = rho.rho_11() - rho.rho_00();
    Ok([
        real_part(sx, "⟨σ_x⟩")?,
        real_part(sy, "⟨σ_y⟩")?,
        real_part(sz, "⟨σ_z⟩")?,
    ])
}

/// ⟨σ_α⁽¹⁾σ_α⁽²⁾⟩.
pub fn two_spin_expectation(rho: &ReducedDensityMatrix, axis: PauliAxis) -> Result<f64> {
    let p = pauli_matrix(axis);
    real_part(rho.expectation(&kron2(&p, &p)), "⟨σσ⟩")
}

/// C_αα = ⟨σ_α⁽¹⁾σ_α⁽²⁾⟩ − ⟨σ_α⁽¹⁾⟩⟨σ_α⁽²⁾⟩.
pub fn pair_correlation(rho: &ReducedDensityMatrix, axis: PauliAxis) -> Result<f64> {
    let joint = two_spin_expectation(rho, axis)?;
    let k = match axis {
        PauliAxis::X => 0,
        PauliAxis::Y => 1,
        PauliAxis::Z => 2,
    };
    let p1 = polarization(&sub_reduce(rho, 1)?)?[k];
    let p2 = polarization(&sub_reduce(rho, 2)?)?[k];
    Ok(joint - p1 * p2)
}

/// ρ̃ = (σ_y ⊗ σ_y) ρ* (σ_y ⊗ σ_y).
pub fn spin_flip(rho: &ReducedDensityMatrix) -> Matrix4<C64> {
    let flip = yy();
    flip * rho.0.map(|z| z.conj()) * flip
}

/// Eigenvalues of ρ with magnitude below this are round-off and are
/// dropped from √ρ.
const SQRT_CUTOFF: f64 = 1e-13;

/// √ρ together with the smallest eigenvalue of ρ.
fn hermitian_sqrt(m: &Matrix4<C64>) -> (Matrix4<C64>, f64) {
    let herm = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let min = eig.eigenvalues.min();
    let roots = eig.eigenvalues.map(|e| c(if e > SQRT_CUTOFF { e.sqrt() } else { 0.0 }, 0.0));
    let v = eig.eigenvectors;
    (v * Matrix4::from_diagonal(&roots) * v.adjoint(), min)
}

fn yy() -> Matrix4<C64> {
    let y = pauli_matrix(PauliAxis::Y);
    kron2(&y, &y)
}

/// Eigenvalues of the Hermitian √ρ ρ̃ √ρ (the spectrum of ρρ̃), sorted in
/// decreasing order. Not clamped.
pub fn concurrence_spectrum(rho: &ReducedDensityMatrix) -> [f64; 4] {
    let (root, _) = hermitian_sqrt(&rho.0);
    let r = root * spin_flip(rho) * root;
    let herm = (r + r.adjoint()) * c(0.5, 0.0);
    let e = SymmetricEigen::new(herm).eigenvalues;
    let mut mu = [e[0], e[1], e[2], e[3]];
    mu.sort_by(|a, b| b.total_cmp(a));
    mu
}

/// Wootters concurrence max(λ₁ − λ₂ − λ₃ − λ₄, 0).
///
/// The λ_i are taken as the singular values of √ρ √ρ̃. Their squares are
/// the eigenvalues of √ρ ρ̃ √ρ, but no square root of a round-off sized
/// eigenvalue is ever taken.
pub fn concurrence(rho: &ReducedDensityMatrix) -> Result<f64> {
    let (root, min_rho) = hermitian_sqrt(&rho.0);
    if min_rho < -CONCURRENCE_NEGATIVE_TOL {
        return Err(SimError::NumericalConsistency(format!(
            "ρ has eigenvalue {min_rho:.3e}; not a valid state"
        )));
    }
    let mu = concurrence_spectrum(rho);
    if mu[3] < -CONCURRENCE_NEGATIVE_TOL {
        return Err(SimError::NumericalConsistency(format!(
            "ρρ̃ has eigenvalue {:.3e}; ρ is not a valid state",
            mu[3]
        )));
    }
    let flip = yy();
    let root_tilde = flip * root.map(|z| z.conj()) * flip;
    let sv = (root * root_tilde).singular_values();
    let mut l = [sv[0], sv[1], sv[2], sv[3]];
    l.sort_by(|a, b| b.total_cmp(a));
    Ok((l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0))
}

/// 2|ad − bc| for a|00⟩ + b|01⟩ + c|10⟩ + d|11⟩.
pub fn concurrence_pure(a: C64, b: C64, c_: C64, d: C64) -> Result<f64> {
    let norm = a.norm_sqr() + b.norm_sqr() + c_.norm_sqr() + d.norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(SimError::invalid(format!("amplitudes have squared norm {norm}")));
    }
    Ok(2.0 * (a * d - b * c_).norm())
}

/// Everything reported for the subsystem at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub time: f64,
    pub pol1: [f64; 3],
    pub pol2: [f64; 3],
    pub c_xx: f64,
    pub c_yy: f64,
    pub c_zz: f64,
    pub concurrence: f64,
}

impl ObservableRecord {
    pub fn from_rho(time: f64, rho: &ReducedDensityMatrix) -> Result<Self> {
        Ok(ObservableRecord {
            time,
            pol1: polarization(&sub_reduce(rho, 1)?)?,
            pol2: polarization(&sub_reduce(rho, 2)?)?,
            c_xx: pair_correlation(rho, PauliAxis::X)?,
            c_yy: pair_correlation(rho, PauliAxis::Y)?,
            c_zz: pair_correlation(rho, PauliAxis::Z)?,
            concurrence: concurrence(rho)?,
        })
    }

    pub fn correlation(&self, axis: PauliAxis) -> f64 {
        match axis {
            PauliAxis::X => self.c_xx,
            PauliAxis::Y => self.c_yy,
            PauliAxis::Z => self.c_zz,
        }
    }

    /// Range invariants, with `slack` for round-off.
    pub fn check_ranges(&self, slack: f64) -> Result<()> {
        let in_range = |v: f64, bound: f64| v.abs() <= bound + slack;
        let pols_ok = self.pol1.iter().chain(&self.pol2).all(|&p| in_range(p, 1.0));
        let corr_ok = [self.c_xx, self.c_yy, self.c_zz].iter().all(|&v| in_range(v, 2.0));
        let conc_ok = (-slack..=1.0 + slack).contains(&self.concurrence);
        if pols_ok && corr_ok && conc_ok {
            Ok(())
        } else {
            Err(SimError::NumericalConsistency(format!(
                "observable out of range at t = {}: {self:?}",
                self.time
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2 as R;

    fn bell(k: usize) -> [C64; 4] {
        // amplitudes on |00⟩, |01⟩, |10⟩, |11⟩
        let (p, m, z) = (c(R, 0.0), c(-R, 0.0), c(0.0, 0.0));
        match k {
            1 => [p, z, z, p],
            2 => [z, p, p, z],
            3 => [m, z, z, p],
            _ => [z, m, p, z],
        }
    }

    fn maximally_mixed() -> ReducedDensityMatrix {
        ReducedDensityMatrix::new(Matrix4::identity() * c(0.25, 0.0)).unwrap()
    }

    #[test]
    fn bell_correlations() {
        let b1 = ReducedDensityMatrix::from_pure(bell(1)).unwrap();
        assert!((pair_correlation(&b1, PauliAxis::X).unwrap() - 1.0).abs() < 1e-12);
        assert!((pair_correlation(&b1, PauliAxis::Y).unwrap() + 1.0).abs() < 1e-12);
        assert!((pair_correlation(&b1, PauliAxis::Z).unwrap() - 1.0).abs() < 1e-12);

        let b2 = ReducedDensityMatrix::from_pure(bell(2)).unwrap();
        assert!((pair_correlation(&b2, PauliAxis::X).unwrap() - 1.0).abs() < 1e-12);
        assert!((pair_correlation(&b2, PauliAxis::Y).unwrap() - 1.0).abs() < 1e-12);
        assert!((pair_correlation(&b2, PauliAxis::Z).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn product_state_has_no_correlation() {
        let amps = [c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0), c(0.0, 0.0)];
        let rho = ReducedDensityMatrix::from_pure(amps).unwrap();
        for axis in PauliAxis::ALL {
            assert!(pair_correlation(&rho, axis).unwrap().abs() < 1e-12);
        }
        assert!(concurrence(&rho).unwrap() < 1e-7);
    }

    #[test]
    fn bell_marginals_are_maximally_mixed() {
        for k in 1..=4 {
            let rho = ReducedDensityMatrix::from_pure(bell(k)).unwrap();
            for keep in [1, 2] {
                let r = sub_reduce(&rho, keep).unwrap();
                let p = polarization(&r).unwrap();
                assert!(p.iter().all(|v| v.abs() < 1e-12));
                assert!((r.rho_11().re - 0.5).abs() < 1e-12);
            }
            assert!((concurrence(&rho).unwrap() - 1.0).abs() < 1e-10);
        }
        assert!(sub_reduce(&maximally_mixed(), 3).is_err());
    }

    #[test]
    fn product_marginal_is_factor() {
        // ρ_a ⊗ ρ_b with ρ_a = diag(0.7, 0.3) and ρ_b a σ_x eigenstate
        let ra = Matrix2::new(c(0.7, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.3, 0.0));
        let rb = Matrix2::new(c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.5, 0.0));
        let rho = ReducedDensityMatrix::new_unchecked(kron2(&ra, &rb));
        let r1 = sub_reduce(&rho, 1).unwrap();
        assert!((r1.entries() - ra).iter().all(|z| z.norm() < 1e-14));
        let r2 = sub_reduce(&rho, 2).unwrap();
        assert!((r2.entries() - rb).iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn single_spin_polarizations() {
        let mixed = SingleSpinMatrix::new(Matrix2::identity() * c(0.5, 0.0)).unwrap();
        assert_eq!(polarization(&mixed).unwrap(), [0.0, 0.0, 0.0]);
        let up = SingleSpinMatrix::new(Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0))).unwrap();
        assert_eq!(polarization(&up).unwrap(), [0.0, 0.0, 1.0]);
        let plus = SingleSpinMatrix::new(Matrix2::repeat(c(0.5, 0.0))).unwrap();
        assert_eq!(polarization(&plus).unwrap(), [1.0, 0.0, 0.0]);
        // (|1⟩ + i|0⟩)/√2 is the σ_y = +1 state in the (|1⟩, |0⟩) basis
        let y_up = Matrix2::new(c(0.5, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(0.5, 0.0));
        let p = polarization(&SingleSpinMatrix::new(y_up).unwrap()).unwrap();
        assert!((p[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn concurrence_edge_cases() {
        assert!(concurrence(&maximally_mixed()).unwrap() < 1e-12);
        assert!((concurrence_pure(c(R, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(R, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(concurrence_pure(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)).unwrap(), 0.0);
        assert!((concurrence_pure(c(0.0, 0.0), c(R, 0.0), c(R, 0.0), c(0.0, 0.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!(concurrence_pure(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)).is_err());
    }

    #[test]
    fn corrupted_rho_is_flagged() {
        // indefinite "state" with trace 1
        let m = Matrix4::from_diagonal(&nalgebra::Vector4::new(c(1.5, 0.0), c(-0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0)));
        assert!(ReducedDensityMatrix::new(m).is_err());
        let bad = ReducedDensityMatrix::new_unchecked(m);
        assert!(matches!(concurrence(&bad), Err(SimError::NumericalConsistency(_))));
    }

    #[test]
    fn ensemble_trace_and_errors() {
        let a = StateVector::from_bits(&[1, 1, 0]).unwrap();
        let b = StateVector::from_bits(&[0, 0, 1]).unwrap();
        let rho = ensemble_reduced_density(&[(0.3, &a), (0.1, &b)]).unwrap();
        rho.validate().unwrap();
        assert!((rho.entries()[(0, 0)].re - 0.75).abs() < 1e-15);
        assert!((rho.entries()[(3, 3)].re - 0.25).abs() < 1e-15);

        let mut raw = Matrix4::zeros();
        accumulate_partial_trace(&mut raw, 0.3, &a).unwrap();
        accumulate_partial_trace(&mut raw, 0.1, &b).unwrap();
        assert!((raw.trace().re - 0.4).abs() < 1e-15);

        assert!(ensemble_reduced_density(&[]).is_err());
        let c3 = StateVector::from_bits(&[0, 0]).unwrap();
        assert!(ensemble_reduced_density(&[(0.5, &a), (0.5, &c3)]).is_err());
        assert!(ensemble_reduced_density(&[(0.0, &a)]).is_err());
    }

    #[test]
    fn record_ranges() {
        let rho = ReducedDensityMatrix::from_pure(bell(2)).unwrap();
        let rec = ObservableRecord::from_rho(0.0, &rho).unwrap();
        rec.check_ranges(1e-12).unwrap();
        let bad = ObservableRecord { concurrence: 1.5, ..rec };
        assert!(bad.check_ranges(1e-12).is_err());
    }
}
