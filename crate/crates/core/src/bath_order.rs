//! Bath ordering probabilities P(n): the weight of the bath on the sector
//! with n spins up along x.
//!
//! "Up" along x is the +1 eigenstate of σ_x, (|0⟩ + |1⟩)/√2. After the
//! Hadamard transform on the bath sites that state sits on bit 0, so the
//! up count of an x-basis index is m minus the popcount of its bath bits.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::driver::{self, RunConfig};
use crate::error::{Result, SimError};
use crate::hilbert::{hadamard_on_mask, StateVector};
use crate::parallel::Parallelism;

const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderHistogram {
    /// P(n) for n = 0..=m x-up bath spins.
    pub probabilities: Vec<f64>,
    pub time: f64,
    pub lambda_bb: f64,
}

impl OrderHistogram {
    pub fn n_bath(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let total = self.total();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(SimError::NumericalConsistency(format!("Σ P(n) = {total} at t = {}", self.time)));
        }
        if let Some(p) = self.probabilities.iter().find(|p| !(-NORMALIZATION_TOL..=1.0 + NORMALIZATION_TOL).contains(*p)) {
            return Err(SimError::NumericalConsistency(format!("P(n) = {p} out of range")));
        }
        Ok(())
    }
}

/// Number of x-up bath spins for every x-basis bath configuration.
fn up_counts(n_bath: usize) -> Vec<usize> {
    (0..1usize << n_bath).map(|b| n_bath - b.count_ones() as usize).collect()
}

/// Adds `weight · |⟨n‖ψ⟩|²` into `bins`, summing over the subsystem.
/// `bins` must have `n_bath + 1` entries.
pub fn accumulate_order(bins: &mut [f64], weight: f64, state: &StateVector, n_bath: usize) -> Result<()> {
    if state.n_spins() != n_bath + 2 {
        return Err(SimError::invalid(format!(
            "state has {} spins, expected {}",
            state.n_spins(),
            n_bath + 2
        )));
    }
    if bins.len() != n_bath + 1 {
        return Err(SimError::invalid("histogram has the wrong number of bins"));
    }
    let bath_dim = 1usize << n_bath;
    let mut amps = state.amplitudes().to_vec();
    for bit in 0..n_bath {
        hadamard_on_mask(&mut amps, 1 << bit);
    }
    let counts = up_counts(n_bath);
    for (i, a) in amps.iter().enumerate() {
        bins[counts[i & (bath_dim - 1)]] += weight * a.norm_sqr();
    }
    Ok(())
}

/// P(n) for a weighted ensemble at one time, normalized by the total weight.
pub fn order_histogram(
    members: &[(f64, &StateVector)],
    n_bath: usize,
    time: f64,
    lambda_bb: f64,
) -> Result<OrderHistogram> {
    if members.is_empty() {
        return Err(SimError::invalid("empty ensemble"));
    }
    let mut bins = vec![0.0; n_bath + 1];
    let mut total = 0.0;
    for (w, s) in members {
        accumulate_order(&mut bins, *w, s, n_bath)?;
        total += w;
    }
    bins.iter_mut().for_each(|b| *b /= total);
    Ok(OrderHistogram { probabilities: bins, time, lambda_bb })
}

/// How a single P(n) value is extracted from a time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingPolicy {
    /// Mean over the samples after dropping the leading `discard_fraction`
    /// of the window.
    TimeAverage { discard_fraction: f64 },
    /// Sample nearest to `time`.
    Instant { time: f64 },
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        SamplingPolicy::TimeAverage { discard_fraction: 0.1 }
    }
}

impl SamplingPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SamplingPolicy::TimeAverage { discard_fraction } if !(0.0..1.0).contains(&discard_fraction) => Err(
                SimError::Config(format!("discard_fraction must lie in [0, 1), got {discard_fraction}")),
            ),
            SamplingPolicy::Instant { time } if !(time >= 0.0 && time.is_finite()) => {
                Err(SimError::Config(format!("sampling time must be ≥ 0, got {time}")))
            }
            _ => Ok(()),
        }
    }

    /// (value, standard deviation over the used samples) of bin `bin`.
    pub fn sample(&self, series: &[OrderHistogram], bin: usize) -> Result<(f64, f64)> {
        self.validate()?;
        let Some(first) = series.first() else {
            return Err(SimError::invalid("empty histogram series"));
        };
        if bin > first.n_bath() {
            return Err(SimError::invalid(format!("bin {bin} exceeds m = {}", first.n_bath())));
        }
        match *self {
            SamplingPolicy::Instant { time } => {
                let nearest = series
                    .iter()
                    .min_by(|a, b| (a.time - time).abs().total_cmp(&(b.time - time).abs()))
                    .expect("non-empty");
                Ok((nearest.probabilities[bin], 0.0))
            }
            SamplingPolicy::TimeAverage { discard_fraction } => {
                let t0 = first.time;
                let t1 = series.last().expect("non-empty").time;
                let cut = t0 + discard_fraction * (t1 - t0);
                let used: Vec<f64> = series.iter().filter(|h| h.time >= cut).map(|h| h.probabilities[bin]).collect();
                let n = used.len() as f64;
                let mean = used.iter().sum::<f64>() / n;
                let var = used.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n;
                Ok((mean, var.sqrt()))
            }
        }
    }
}

/// The half-filling bin m/2 (rounded down for odd m).
pub fn half_filling_bin(n_bath: usize) -> usize {
    n_bath / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderPoint {
    pub lambda_bb: f64,
    pub probability: f64,
    /// Standard deviation of P over the sampled times.
    pub stderr_over_time: f64,
}

/// P(`bin`) against λ_bb. Each grid point re-prepares the thermal bath and
/// runs the full ensemble; points run concurrently under `parallelism`.
pub fn order_sweep(
    base: &RunConfig,
    lambda_grid: &[f64],
    policy: SamplingPolicy,
    bin: Option<usize>,
    parallelism: Parallelism,
) -> Result<Vec<OrderPoint>> {
    if lambda_grid.is_empty() {
        return Err(SimError::Config("λ_bb grid is empty".into()));
    }
    policy.validate()?;
    let bin = bin.unwrap_or_else(|| half_filling_bin(base.model.n_bath));
    if bin > base.model.n_bath {
        return Err(SimError::Config(format!("bin {bin} exceeds m = {}", base.model.n_bath)));
    }
    let points = parallelism.map(lambda_grid, |_, &lambda_bb| -> Result<OrderPoint> {
        let mut cfg = base.clone();
        cfg.model.lambda_bb = lambda_bb;
        let result = driver::run(&cfg)?;
        let (probability, stderr_over_time) = policy.sample(&result.histograms, bin)?;
        Ok(OrderPoint { lambda_bb, probability, stderr_over_time })
    });
    points.into_iter().collect()
}

pub fn write_order_sweep<W: Write>(out: &mut W, points: &[OrderPoint]) -> std::io::Result<()> {
    writeln!(out, "lambda_bb,p_half,p_half_stderr_over_time")?;
    for p in points {
        writeln!(out, "{:.11e},{:.11e},{:.11e}", p.lambda_bb, p.probability, p.stderr_over_time)?;
    }
    Ok(())
}
