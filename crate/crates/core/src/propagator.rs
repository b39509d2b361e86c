//! Time evolution ψ(t) = exp(−iHt) ψ(0).
//!
//! The working propagator expands the evolution operator in Laguerre
//! polynomials of the Hamiltonian through their generating function,
//!
//! ```text
//! exp(−iHt) = (1/(1+it))^(α+1) Σ_k (it/(1+it))^k L_k^α(H),
//! ```
//!
//! truncated at `k_max`. The vectors L_k^α(H)ψ come from the three-term
//! recurrence, one matrix-free H application per order. The series is
//! applied to H' = H − s with s a lower bound on the spectrum, and the
//! result carries the compensating phase exp(−i s t).
//!
//! [`DenseEvolver`] diagonalizes H exactly and serves as the reference.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::hamiltonian::{joint_operator, ModelSpec, OperatorPart, PauliOperator};
use crate::hilbert::StateVector;
use crate::C64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaguerreConfig {
    /// Laguerre type α ≥ 0.
    pub alpha: f64,
    /// Highest polynomial order kept.
    pub k_max: usize,
    /// Largest single step. The accepted step may be smaller.
    pub dt: f64,
    /// Allowed |‖ψ'‖ − ‖ψ‖| per step.
    pub unitarity_tol: f64,
    /// Allowed truncation error of the scalar series over the spectral
    /// interval; used to pick the step before any state is touched.
    pub series_tol: f64,
    /// Value subtracted from H before expansion. `None` uses the computed
    /// lower spectral bound.
    pub spectral_shift: Option<f64>,
    /// Step halvings allowed before giving up.
    pub max_halvings: u32,
}

impl Default for LaguerreConfig {
    fn default() -> Self {
        LaguerreConfig {
            alpha: 0.0,
            k_max: 24,
            dt: 0.1,
            unitarity_tol: 1e-10,
            series_tol: 1e-12,
            spectral_shift: None,
            max_halvings: 20,
        }
    }
}

impl LaguerreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(SimError::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.k_max < 1 {
            return Err(SimError::invalid("k_max must be >= 1"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(SimError::invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.unitarity_tol > 0.0) {
            return Err(SimError::invalid("unitarity_tol must be > 0"));
        }
        if !(self.series_tol > 0.0) {
            return Err(SimError::invalid("series_tol must be > 0"));
        }
        if let Some(s) = self.spectral_shift {
            if !s.is_finite() {
                return Err(SimError::invalid("spectral_shift must be finite"));
            }
        }
        Ok(())
    }
}

/// L_k^α(x) by the three-term recurrence.
pub fn laguerre_scalar(k: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for j in 1..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + alpha - x) * cur - (jf + alpha) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Prefactor (1/(1+it))^(α+1) and ratio it/(1+it), principal branch.
fn series_coefficients(t: f64, alpha: f64) -> (C64, C64) {
    let one_plus_it = C64::new(1.0, t);
    let prefactor = one_plus_it.inv().powf(alpha + 1.0);
    let ratio = C64::new(0.0, t) / one_plus_it;
    (prefactor, ratio)
}

/// The truncated series evaluated for a scalar "Hamiltonian" x.
pub fn laguerre_series_scalar(x: f64, t: f64, alpha: f64, k_max: usize) -> C64 {
    let (prefactor, ratio) = series_coefficients(t, alpha);
    let mut prev = 1.0;
    let mut cur = 1.0 + alpha - x;
    let mut zk = ratio;
    let mut sum = C64::new(prev, 0.0) + zk * cur;
    for j in 1..k_max {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0 + alpha - x) * cur - (jf + alpha) * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
        zk *= ratio;
        sum += zk * cur;
    }
    prefactor * sum
}

/// Worst scalar truncation error of a step `t` over x ∈ [lo, hi].
pub fn series_error_bound(lo: f64, hi: f64, t: f64, alpha: f64, k_max: usize) -> f64 {
    const SAMPLES: usize = 512;
    (0..=SAMPLES)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / SAMPLES as f64;
            (laguerre_series_scalar(x, t, alpha, k_max) - C64::new(0.0, -x * t).exp()).norm()
        })
        .fold(0.0, f64::max)
}

/// Norm deviations and energy drift seen while evolving.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvolveStats {
    pub accepted_dt: f64,
    pub steps: usize,
    pub halvings: u32,
    pub max_step_norm_deviation: f64,
}

/// State, norm and ⟨H⟩ at each requested time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub norms: Vec<f64>,
    pub energies: Vec<f64>,
    pub stats: EvolveStats,
}

impl Trajectory {
    /// max_t |⟨H⟩(t) − ⟨H⟩(0)| / max(1, |⟨H⟩(0)|).
    pub fn relative_energy_drift(&self) -> f64 {
        let e0 = self.energies[0];
        self.energies
            .iter()
            .map(|e| (e - e0).abs() / e0.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    /// Largest Euclidean distance to another trajectory on the same grid.
    pub fn max_deviation(&self, other: &Trajectory) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(SimError::invalid("trajectories have different grids"));
        }
        self.states
            .iter()
            .zip(&other.states)
            .try_fold(0.0f64, |acc, (a, b)| Ok(acc.max(a.distance(b)?)))
    }
}

pub(crate) fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(SimError::invalid("time grid is empty"));
    }
    if t_grid[0] != 0.0 {
        return Err(SimError::invalid(format!("time grid must start at 0, got {}", t_grid[0])));
    }
    if t_grid.iter().any(|t| !t.is_finite()) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(SimError::invalid("time grid must be finite and ascending"));
    }
    Ok(())
}

struct Workspace {
    prev: Vec<C64>,
    cur: Vec<C64>,
    next: Vec<C64>,
    hv: Vec<C64>,
    acc: Vec<C64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        let z = C64::new(0.0, 0.0);
        Workspace {
            prev: vec![z; dim],
            cur: vec![z; dim],
            next: vec![z; dim],
            hv: vec![z; dim],
            acc: vec![z; dim],
        }
    }
}

/// Laguerre-series propagator bound to one Hamiltonian.
#[derive(Debug, Clone)]
pub struct LaguerrePropagator {
    hamiltonian: PauliOperator,
    cfg: LaguerreConfig,
    shift: f64,
    bounds: (f64, f64),
    dt: f64,
    initial_halvings: u32,
}

impl LaguerrePropagator {
    /// Builds H for `spec`, bounds its spectrum and picks the largest step
    /// dt = cfg.dt / 2^j whose scalar truncation error over the shifted
    /// spectral interval is within `series_tol`.
    pub fn new(spec: &ModelSpec, cfg: &LaguerreConfig) -> Result<Self> {
        cfg.validate()?;
        let hamiltonian = joint_operator(spec, OperatorPart::Full)?;
        Self::from_operator(hamiltonian, cfg)
    }

    pub fn from_operator(hamiltonian: PauliOperator, cfg: &LaguerreConfig) -> Result<Self> {
        cfg.validate()?;
        let bounds = hamiltonian.spectral_bounds();
        let shift = cfg.spectral_shift.unwrap_or(bounds.0);
        let (lo, hi) = (bounds.0 - shift, bounds.1 - shift);
        let mut dt = cfg.dt;
        let mut halvings = 0;
        loop {
            let err = series_error_bound(lo, hi, dt, cfg.alpha, cfg.k_max);
            if err <= cfg.series_tol {
                break;
            }
            if halvings >= cfg.max_halvings {
                return Err(SimError::StepSizeExhausted { halvings, dt, deviation: err });
            }
            dt *= 0.5;
            halvings += 1;
        }
        log::debug!(
            "laguerre: spectrum in [{:.6}, {:.6}], shift {:.6}, dt {} after {} halvings",
            bounds.0,
            bounds.1,
            shift,
            dt,
            halvings
        );
        Ok(LaguerrePropagator {
            hamiltonian,
            cfg: cfg.clone(),
            shift,
            bounds,
            dt,
            initial_halvings: halvings,
        })
    }

    pub fn hamiltonian(&self) -> &PauliOperator {
        &self.hamiltonian
    }

    pub fn spectral_shift(&self) -> f64 {
        self.shift
    }

    pub fn spectral_bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Step size chosen from the series error bound.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn config(&self) -> &LaguerreConfig {
        &self.cfg
    }

    fn series_into(&self, input: &[C64], t: f64, ws: &mut Workspace) {
        let alpha = self.cfg.alpha;
        let shift = self.shift;
        let (prefactor, ratio) = series_coefficients(t, alpha);
        let h = &self.hamiltonian;

        // L_0 ψ = ψ
        ws.cur.copy_from_slice(input);
        ws.acc.copy_from_slice(input);
        // L_1 ψ = (1 + α)ψ − H'ψ
        h.apply_into(&ws.cur, &mut ws.hv);
        std::mem::swap(&mut ws.prev, &mut ws.cur);
        for ((c, p), hv) in ws.cur.iter_mut().zip(&ws.prev).zip(&ws.hv) {
            *c = p * (1.0 + alpha + shift) - hv;
        }
        let mut zk = ratio;
        for (a, c) in ws.acc.iter_mut().zip(&ws.cur) {
            *a += zk * c;
        }
        for j in 1..self.cfg.k_max {
            let jf = j as f64;
            let a_coef = 2.0 * jf + 1.0 + alpha + shift;
            let b_coef = jf + alpha;
            let inv = 1.0 / (jf + 1.0);
            h.apply_into(&ws.cur, &mut ws.hv);
            for (((n, c), p), hv) in ws.next.iter_mut().zip(&ws.cur).zip(&ws.prev).zip(&ws.hv) {
                *n = (c * a_coef - hv - p * b_coef) * inv;
            }
            std::mem::swap(&mut ws.prev, &mut ws.cur);
            std::mem::swap(&mut ws.cur, &mut ws.next);
            zk *= ratio;
            for (a, c) in ws.acc.iter_mut().zip(&ws.cur) {
                *a += zk * c;
            }
        }
        let phase = prefactor * C64::new(0.0, -shift * t).exp();
        for a in ws.acc.iter_mut() {
            *a *= phase;
        }
    }

    fn step_with(&self, state: &StateVector, t: f64, ws: &mut Workspace) -> Result<(StateVector, f64)> {
        if t == 0.0 {
            return Ok((state.clone(), 0.0));
        }
        self.series_into(state.amplitudes(), t, ws);
        let out = StateVector::new(state.n_spins(), ws.acc.clone())?;
        if !out.is_finite() {
            return Err(SimError::NumericalOverflow(format!("non-finite amplitudes after a step of {t}")));
        }
        let deviation = (out.norm() - state.norm()).abs();
        if deviation > self.cfg.unitarity_tol {
            return Err(SimError::StepSize { dt: t, deviation, tolerance: self.cfg.unitarity_tol });
        }
        Ok((out, deviation))
    }

    /// One series step of length `t` (may be negative). Not subdivided.
    pub fn step(&self, state: &StateVector, t: f64) -> Result<StateVector> {
        self.check_state(state)?;
        let mut ws = Workspace::new(state.dim());
        self.step_with(state, t, &mut ws).map(|(s, _)| s)
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        if state.n_spins() != self.hamiltonian.n_spins() {
            return Err(SimError::invalid(format!(
                "state has {} spins, Hamiltonian has {}",
                state.n_spins(),
                self.hamiltonian.n_spins()
            )));
        }
        Ok(())
    }

    /// Advances by `duration` (either sign) in equal sub-steps no longer
    /// than the current step size, halving on unitarity failures.
    fn advance(
        &self,
        state: StateVector,
        duration: f64,
        dt: &mut f64,
        stats: &mut EvolveStats,
        ws: &mut Workspace,
    ) -> Result<StateVector> {
        let mut state = state;
        let mut remaining = duration;
        while remaining != 0.0 {
            let n_sub = (remaining.abs() / *dt).ceil().max(1.0) as usize;
            let h = remaining / n_sub as f64;
            let mut done = 0usize;
            let mut failed = None;
            for _ in 0..n_sub {
                match self.step_with(&state, h, ws) {
                    Ok((next, dev)) => {
                        state = next;
                        done += 1;
                        stats.steps += 1;
                        stats.max_step_norm_deviation = stats.max_step_norm_deviation.max(dev);
                        if log::log_enabled!(log::Level::Trace) {
                            let e = self.hamiltonian.expectation(&state).unwrap_or(f64::NAN);
                            log::trace!(
                                "step {} dt {:.6e} norm_dev {:.3e} energy {:.12e}",
                                stats.steps,
                                h,
                                dev,
                                e
                            );
                        }
                    }
                    Err(SimError::StepSize { deviation, .. }) => {
                        failed = Some(deviation);
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            match failed {
                None => remaining = 0.0,
                Some(deviation) => {
                    stats.halvings += 1;
                    if stats.halvings > self.cfg.max_halvings {
                        return Err(SimError::StepSizeExhausted {
                            halvings: stats.halvings,
                            dt: *dt,
                            deviation,
                        });
                    }
                    *dt *= 0.5;
                    log::debug!("laguerre: norm deviation {deviation:.3e}, halving dt to {}", *dt);
                    remaining = h * (n_sub - done) as f64;
                }
            }
        }
        Ok(state)
    }

    /// exp(−iH·duration)|state⟩ for arbitrary `duration`.
    pub fn propagate(&self, state: &StateVector, duration: f64) -> Result<StateVector> {
        self.check_state(state)?;
        let mut ws = Workspace::new(state.dim());
        let mut dt = self.dt;
        let mut stats = EvolveStats { accepted_dt: dt, ..Default::default() };
        self.advance(state.clone(), duration, &mut dt, &mut stats, &mut ws)
    }

    /// Evolves through `t_grid` (ascending from 0), calling `visit` with the
    /// state at every grid time. Nothing is stored.
    pub fn evolve_with<F>(&self, state0: &StateVector, t_grid: &[f64], mut visit: F) -> Result<EvolveStats>
    where
        F: FnMut(usize, f64, &StateVector) -> Result<()>,
    {
        self.check_state(state0)?;
        check_grid(t_grid)?;
        let mut ws = Workspace::new(state0.dim());
        let mut dt = self.dt;
        let mut stats = EvolveStats { halvings: 0, ..Default::default() };
        let mut state = state0.clone();
        visit(0, t_grid[0], &state)?;
        for k in 1..t_grid.len() {
            let span = t_grid[k] - t_grid[k - 1];
            state = self.advance(state, span, &mut dt, &mut stats, &mut ws)?;
            visit(k, t_grid[k], &state)?;
        }
        stats.accepted_dt = dt;
        stats.halvings += self.initial_halvings;
        Ok(stats)
    }

    pub fn evolve(&self, state0: &StateVector, t_grid: &[f64]) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(t_grid.len());
        let mut norms = Vec::with_capacity(t_grid.len());
        let mut energies = Vec::with_capacity(t_grid.len());
        let stats = self.evolve_with(state0, t_grid, |_, _, s| {
            norms.push(s.norm());
            energies.push(self.hamiltonian.expectation(s)?);
            states.push(s.clone());
            Ok(())
        })?;
        Ok(Trajectory { times: t_grid.to_vec(), states, norms, energies, stats })
    }
}

/// One Laguerre step of length `cfg.dt` (no subdivision, no halving).
pub fn laguerre_step(spec: &ModelSpec, cfg: &LaguerreConfig, state: &StateVector) -> Result<StateVector> {
    cfg.validate()?;
    let op = joint_operator(spec, OperatorPart::Full)?;
    let prop = LaguerrePropagator {
        shift: cfg.spectral_shift.unwrap_or(op.spectral_bounds().0),
        bounds: op.spectral_bounds(),
        hamiltonian: op,
        cfg: cfg.clone(),
        dt: cfg.dt,
        initial_halvings: 0,
    };
    prop.step(state, cfg.dt)
}

pub fn evolve(spec: &ModelSpec, cfg: &LaguerreConfig, state0: &StateVector, t_grid: &[f64]) -> Result<Trajectory> {
    LaguerrePropagator::new(spec, cfg)?.evolve(state0, t_grid)
}

/// Exact evolution from a dense eigendecomposition H = V Λ Vᵀ.
#[derive(Debug, Clone)]
pub struct DenseEvolver {
    n_spins: usize,
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
    hamiltonian: PauliOperator,
}

impl DenseEvolver {
    pub fn new(spec: &ModelSpec, cap: usize) -> Result<Self> {
        let op = joint_operator(spec, OperatorPart::Full)?;
        Self::from_operator(op, cap)
    }

    pub fn from_operator(op: PauliOperator, cap: usize) -> Result<Self> {
        let dense = op.to_dense(cap)?;
        let eig = SymmetricEigen::new(dense);
        Ok(DenseEvolver {
            n_spins: op.n_spins(),
            energies: eig.eigenvalues,
            vectors: eig.eigenvectors,
            hamiltonian: op,
        })
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    /// Eigenbasis coefficients Vᵀψ.
    pub fn project(&self, state: &StateVector) -> Result<(DVector<f64>, DVector<f64>)> {
        if state.n_spins() != self.n_spins {
            return Err(SimError::invalid("state does not match the oracle's register"));
        }
        let re = DVector::from_iterator(state.dim(), state.amplitudes().iter().map(|a| a.re));
        let im = DVector::from_iterator(state.dim(), state.amplitudes().iter().map(|a| a.im));
        Ok((self.vectors.tr_mul(&re), self.vectors.tr_mul(&im)))
    }

    /// V exp(−iΛt) c for projected coefficients `c`.
    pub fn reconstruct(&self, coeffs: &(DVector<f64>, DVector<f64>), t: f64) -> StateVector {
        let (cr, ci) = coeffs;
        let mut rr = DVector::zeros(cr.len());
        let mut ri = DVector::zeros(cr.len());
        for k in 0..cr.len() {
            let (s, c) = (-self.energies[k] * t).sin_cos();
            // (cr + i ci)(c + i s)
            rr[k] = cr[k] * c - ci[k] * s;
            ri[k] = cr[k] * s + ci[k] * c;
        }
        let re = &self.vectors * rr;
        let im = &self.vectors * ri;
        let amps = re.iter().zip(im.iter()).map(|(&a, &b)| C64::new(a, b)).collect();
        StateVector::new(self.n_spins, amps).expect("oracle keeps register size")
    }

    pub fn evolve(&self, state0: &StateVector, t_grid: &[f64]) -> Result<Trajectory> {
        check_grid(t_grid)?;
        let coeffs = self.project(state0)?;
        let mut states = Vec::with_capacity(t_grid.len());
        let mut norms = Vec::with_capacity(t_grid.len());
        let mut energies = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let s = self.reconstruct(&coeffs, t);
            norms.push(s.norm());
            energies.push(self.hamiltonian.expectation(&s)?);
            states.push(s);
        }
        Ok(Trajectory {
            times: t_grid.to_vec(),
            states,
            norms,
            energies,
            stats: EvolveStats::default(),
        })
    }
}

/// Dense-diagonalization evolution of the full model.
pub fn oracle_evolve(spec: &ModelSpec, state0: &StateVector, t_grid: &[f64], cap: usize) -> Result<Trajectory> {
    DenseEvolver::new(spec, cap)?.evolve(state0, t_grid)
}
