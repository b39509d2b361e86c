//! The model Hamiltonian H = H_S + H_B + H_SB as a list of Pauli strings.
//!
//! ```text
//! H_S  = ω_s/2 (σz¹ + σz²) + β (σx¹ + σx²) + λ_ss σx¹σx²
//! H_B  = Σ_i [ω_b/2 σzⁱ + β σxⁱ] + λ_bb Σ_{i<j} σxⁱσxʲ      (i, j ∈ bath)
//! H_SB = λ_sb Σ_i (σx¹σxⁱ + σx²σxⁱ)                         (i ∈ bath)
//! ```
//!
//! The bath coupling runs over all pairs, not nearest neighbours.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::hilbert::StateVector;
use crate::C64;

/// Largest register for which a dense matrix is built (2^14 × 2^14 reals).
pub const DEFAULT_DENSE_CAP: usize = 14;

/// All Hamiltonian parameters. Units: ħ = k_B = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    /// Number of bath spins m = N − 2.
    pub n_bath: usize,
    pub omega_s: f64,
    pub omega_b: f64,
    pub beta: f64,
    pub lambda_ss: f64,
    pub lambda_bb: f64,
    pub lambda_sb: f64,
    pub temperature: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            n_bath: 4,
            omega_s: 0.8,
            omega_b: 1.0,
            beta: 0.1,
            lambda_ss: 1.0,
            lambda_bb: 1.0,
            lambda_sb: 1.0,
            temperature: 0.1,
        }
    }
}

impl ModelSpec {
    pub fn n_spins(&self) -> usize {
        self.n_bath + 2
    }

    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("omega_s", self.omega_s),
            ("omega_b", self.omega_b),
            ("beta", self.beta),
            ("lambda_ss", self.lambda_ss),
            ("lambda_bb", self.lambda_bb),
            ("lambda_sb", self.lambda_sb),
            ("temperature", self.temperature),
        ];
        for (name, v) in reals {
            if !v.is_finite() {
                return Err(SimError::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        for (name, v) in [
            ("lambda_ss", self.lambda_ss),
            ("lambda_bb", self.lambda_bb),
            ("lambda_sb", self.lambda_sb),
        ] {
            if v < 0.0 {
                return Err(SimError::invalid(format!(
                    "{name} must be >= 0 (antiferromagnetic), got {v}"
                )));
            }
        }
        if self.temperature <= 0.0 {
            return Err(SimError::invalid(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.n_spins() > crate::hilbert::MAX_SPINS {
            return Err(SimError::invalid(format!("{} bath spins is too many", self.n_bath)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorPart {
    /// H_S. Its native space is the two subsystem spins.
    S,
    /// H_B. Its native space is the m bath spins.
    B,
    /// H_SB on the joint space.
    SB,
    /// H on the joint space.
    Full,
}

/// c · Π σx^(x_mask) σz^(z_mask). Y factors are not needed by this model, so
/// a site may carry an X or a Z factor but not both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliTerm {
    pub coeff: f64,
    pub x_mask: usize,
    pub z_mask: usize,
}

impl PauliTerm {
    fn site_mask(n_spins: usize, sites: &[usize]) -> usize {
        sites.iter().fold(0, |m, &s| m | (1usize << (n_spins - s)))
    }

    /// `coeff` times the product of σ_x on the given 1-based sites.
    pub fn xs(n_spins: usize, coeff: f64, sites: &[usize]) -> Self {
        PauliTerm { coeff, x_mask: Self::site_mask(n_spins, sites), z_mask: 0 }
    }

    /// `coeff` times the product of σ_z on the given 1-based sites.
    pub fn zs(n_spins: usize, coeff: f64, sites: &[usize]) -> Self {
        PauliTerm { coeff, x_mask: 0, z_mask: Self::site_mask(n_spins, sites) }
    }

    /// Sign picked up by basis state `index` from the σ_z factors.
    #[inline]
    fn z_sign(&self, index: usize) -> f64 {
        // σ_z = −1 on bit value 0
        let downs = (!index & self.z_mask).count_ones();
        if downs % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// A real Hermitian operator stored as Pauli strings and compiled to a
/// diagonal part plus bit-flip terms for matrix-free application.
#[derive(Debug, Clone)]
pub struct PauliOperator {
    n_spins: usize,
    terms: Vec<PauliTerm>,
    diag: Vec<f64>,
    flips: Vec<PauliTerm>,
}

impl PauliOperator {
    pub fn new(n_spins: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        let dim = 1usize << n_spins;
        for t in &terms {
            if t.x_mask & t.z_mask != 0 {
                return Err(SimError::invalid("σ_y factors are not supported"));
            }
            if t.x_mask >= dim || t.z_mask >= dim {
                return Err(SimError::invalid("Pauli term acts outside the register"));
            }
        }
        let mut diag = vec![0.0; dim];
        let mut flips = Vec::new();
        for t in &terms {
            if t.x_mask == 0 {
                for (i, d) in diag.iter_mut().enumerate() {
                    *d += t.coeff * t.z_sign(i);
                }
            } else {
                flips.push(*t);
            }
        }
        Ok(PauliOperator { n_spins, terms, diag, flips })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// `out = H · input`. Both slices must have length `dim()`.
    pub fn apply_into(&self, input: &[C64], out: &mut [C64]) {
        debug_assert_eq!(input.len(), self.dim());
        debug_assert_eq!(out.len(), self.dim());
        for ((o, a), d) in out.iter_mut().zip(input).zip(&self.diag) {
            *o = a * d;
        }
        for t in &self.flips {
            let x = t.x_mask;
            if t.z_mask == 0 {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += input[i ^ x] * t.coeff;
                }
            } else {
                // ⟨i|P|j⟩ with j = i ^ x carries the z sign of the source state j
                for (i, o) in out.iter_mut().enumerate() {
                    let j = i ^ x;
                    *o += input[j] * (t.coeff * t.z_sign(j));
                }
            }
        }
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        if state.n_spins() != self.n_spins {
            return Err(SimError::invalid(format!(
                "dimension mismatch: operator on {} spins, state on {}",
                self.n_spins,
                state.n_spins()
            )));
        }
        let mut out = StateVector::zeros(self.n_spins);
        self.apply_into(state.amplitudes(), out.amplitudes_mut());
        Ok(out)
    }

    /// ⟨ψ|H|ψ⟩ (real part; the operator is Hermitian).
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        let h = self.apply(state)?;
        Ok(state.inner(&h)?.re)
    }

    /// Interval guaranteed to contain the spectrum.
    ///
    /// The diagonal part has exact extremes min/max(diag). When every
    /// off-diagonal term is a pure σ_x string those terms commute and are
    /// diagonal in the σ_x eigenbasis, so their exact extremes come from
    /// enumerating x-configurations; the two parts are then combined with
    /// Weyl's inequality. Otherwise each flip term contributes ±|c|.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let (dmin, dmax) = self
            .diag
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if self.flips.is_empty() {
            return (dmin, dmax);
        }
        if self.flips.iter().all(|t| t.z_mask == 0) {
            let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for config in 0..self.dim() {
                let v: f64 = self
                    .flips
                    .iter()
                    .map(|t| {
                        // x-bit 1 means σ_x = −1 on that site
                        if (config & t.x_mask).count_ones() % 2 == 0 {
                            t.coeff
                        } else {
                            -t.coeff
                        }
                    })
                    .sum();
                xmin = xmin.min(v);
                xmax = xmax.max(v);
            }
            (dmin + xmin, dmax + xmax)
        } else {
            let r: f64 = self.flips.iter().map(|t| t.coeff.abs()).sum();
            (dmin - r, dmax + r)
        }
    }

    /// Dense real matrix of the operator, built column by column.
    pub fn to_dense(&self, cap: usize) -> Result<DMatrix<f64>> {
        if self.n_spins > cap {
            return Err(SimError::ResourceLimit {
                what: "dense matrix",
                requested: self.n_spins,
                cap,
            });
        }
        let dim = self.dim();
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        for j in 0..dim {
            m[(j, j)] += self.diag[j];
            for t in &self.flips {
                m[(j ^ t.x_mask, j)] += t.coeff * t.z_sign(j);
            }
        }
        Ok(m)
    }
}

/// Pauli terms of one Hamiltonian part, on the joint N-spin register.
pub fn joint_terms(spec: &ModelSpec, part: OperatorPart) -> Vec<PauliTerm> {
    let n = spec.n_spins();
    let mut terms = Vec::new();
    let push = |terms: &mut Vec<PauliTerm>, t: PauliTerm| {
        if t.coeff != 0.0 {
            terms.push(t);
        }
    };
    let want_s = matches!(part, OperatorPart::S | OperatorPart::Full);
    let want_b = matches!(part, OperatorPart::B | OperatorPart::Full);
    let want_sb = matches!(part, OperatorPart::SB | OperatorPart::Full);

    if want_s {
        for s in [1, 2] {
            push(&mut terms, PauliTerm::zs(n, spec.omega_s / 2.0, &[s]));
            push(&mut terms, PauliTerm::xs(n, spec.beta, &[s]));
        }
        push(&mut terms, PauliTerm::xs(n, spec.lambda_ss, &[1, 2]));
    }
    if want_b {
        terms.extend(bath_terms(spec, n, 3).into_iter().filter(|t| t.coeff != 0.0));
    }
    if want_sb {
        for i in 3..=n {
            push(&mut terms, PauliTerm::xs(n, spec.lambda_sb, &[1, i]));
            push(&mut terms, PauliTerm::xs(n, spec.lambda_sb, &[2, i]));
        }
    }
    terms
}

/// H_B terms placed on sites `first..first+m` of an `n`-spin register.
fn bath_terms(spec: &ModelSpec, n: usize, first: usize) -> Vec<PauliTerm> {
    let sites: Vec<usize> = (first..first + spec.n_bath).collect();
    let mut terms = Vec::new();
    for &i in &sites {
        terms.push(PauliTerm::zs(n, spec.omega_b / 2.0, &[i]));
        terms.push(PauliTerm::xs(n, spec.beta, &[i]));
    }
    for (k, &i) in sites.iter().enumerate() {
        for &j in &sites[k + 1..] {
            terms.push(PauliTerm::xs(n, spec.lambda_bb, &[i, j]));
        }
    }
    terms
}

/// One part of H acting on the joint register.
pub fn joint_operator(spec: &ModelSpec, part: OperatorPart) -> Result<PauliOperator> {
    spec.validate()?;
    PauliOperator::new(spec.n_spins(), joint_terms(spec, part))
}

/// H_B on the m-spin bath register alone.
pub fn bath_operator(spec: &ModelSpec) -> Result<PauliOperator> {
    spec.validate()?;
    let terms = bath_terms(spec, spec.n_bath, 1)
        .into_iter()
        .filter(|t| t.coeff != 0.0)
        .collect();
    PauliOperator::new(spec.n_bath, terms)
}

/// H_S on the two-spin subsystem register alone.
pub fn subsystem_operator(spec: &ModelSpec) -> Result<PauliOperator> {
    spec.validate()?;
    let sub = ModelSpec { n_bath: 0, ..spec.clone() };
    PauliOperator::new(2, joint_terms(&sub, OperatorPart::S))
}

fn apply_part(spec: &ModelSpec, part: OperatorPart, state: &StateVector) -> Result<StateVector> {
    if state.n_spins() != spec.n_spins() {
        return Err(SimError::invalid(format!(
            "state has {} spins, model has {}",
            state.n_spins(),
            spec.n_spins()
        )));
    }
    joint_operator(spec, part)?.apply(state)
}

pub fn apply_h_s(spec: &ModelSpec, state: &StateVector) -> Result<StateVector> {
    apply_part(spec, OperatorPart::S, state)
}

pub fn apply_h_b(spec: &ModelSpec, state: &StateVector) -> Result<StateVector> {
    apply_part(spec, OperatorPart::B, state)
}

pub fn apply_h_sb(spec: &ModelSpec, state: &StateVector) -> Result<StateVector> {
    apply_part(spec, OperatorPart::SB, state)
}

pub fn apply_h(spec: &ModelSpec, state: &StateVector) -> Result<StateVector> {
    apply_part(spec, OperatorPart::Full, state)
}

/// Dense matrix of one part on its native space: 4×4 for `S`, 2^m × 2^m
/// for `B`, 2^N × 2^N for `SB` and `Full`. Rows and columns follow
/// [`crate::hilbert::basis_index`].
pub fn dense_matrix(spec: &ModelSpec, which: OperatorPart, cap: usize) -> Result<DMatrix<f64>> {
    match which {
        OperatorPart::S => subsystem_operator(spec)?.to_dense(cap),
        OperatorPart::B => bath_operator(spec)?.to_dense(cap),
        OperatorPart::SB | OperatorPart::Full => joint_operator(spec, which)?.to_dense(cap),
    }
}

/// Dense matrix of one part embedded in the joint 2^N space.
pub fn dense_joint_matrix(spec: &ModelSpec, which: OperatorPart, cap: usize) -> Result<DMatrix<f64>> {
    joint_operator(spec, which)?.to_dense(cap)
}
