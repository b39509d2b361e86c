//! Run configuration, ensemble orchestration, sweeps and file output.
//!
//! Ensemble members evolve independently (in parallel when enabled). Each
//! member streams its weighted contributions to ρ_S(t) and P(n, t) into
//! its own buffers; the buffers are then summed in member order, so the
//! output does not depend on scheduling.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::bath_order::{accumulate_order, OrderHistogram};
use crate::error::{Result, SimError};
use crate::hamiltonian::{subsystem_operator, ModelSpec, DEFAULT_DENSE_CAP};
use crate::hilbert::StateVector;
use crate::observables::{accumulate_partial_trace, ObservableRecord, ReducedDensityMatrix};
use crate::parallel::Parallelism;
use crate::propagator::{DenseEvolver, EvolveStats, LaguerreConfig, LaguerrePropagator};
use crate::thermal::{boltzmann_weights, count_above, diagonalize_bath, ThermalEnsemble};
use crate::C64;

const RANGE_SLACK: f64 = 1e-9;

/// Initial state of the two subsystem spins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// (|11⟩ + |00⟩)/√2
    Bell1,
    /// (|10⟩ + |01⟩)/√2
    Bell2,
    /// (|11⟩ − |00⟩)/√2
    Bell3,
    /// (|10⟩ − |01⟩)/√2, the singlet.
    Bell4,
    /// [re, im] amplitudes on |00⟩, |01⟩, |10⟩, |11⟩.
    Custom([[f64; 2]; 4]),
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Bell1
    }
}

impl InitialState {
    /// Amplitudes on |00⟩, |01⟩, |10⟩, |11⟩ (basis indices 0..4).
    pub fn amplitudes(&self) -> [C64; 4] {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let c = |x: f64| C64::new(x, 0.0);
        match self {
            InitialState::Bell1 => [c(r), c(0.0), c(0.0), c(r)],
            InitialState::Bell2 => [c(0.0), c(r), c(r), c(0.0)],
            InitialState::Bell3 => [c(-r), c(0.0), c(0.0), c(r)],
            InitialState::Bell4 => [c(0.0), c(-r), c(r), c(0.0)],
            InitialState::Custom(a) => a.map(|[re, im]| C64::new(re, im)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let amps = self.amplitudes();
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(SimError::Config("initial amplitudes must be finite".into()));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(SimError::Config(format!("initial amplitudes have squared norm {norm}, expected 1")));
        }
        Ok(())
    }

    pub fn state(&self) -> Result<StateVector> {
        self.validate()?;
        StateVector::new(2, self.amplitudes().to_vec())
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Bell1 => write!(f, "bell1"),
            InitialState::Bell2 => write!(f, "bell2"),
            InitialState::Bell3 => write!(f, "bell3"),
            InitialState::Bell4 => write!(f, "bell4"),
            InitialState::Custom(a) => {
                let flat: Vec<String> = a.iter().flatten().map(|v| v.to_string()).collect();
                write!(f, "custom:{}", flat.join(","))
            }
        }
    }
}

impl FromStr for InitialState {
    type Err = SimError;

    /// `bell1`..`bell4`, or `custom:` followed by eight comma-separated
    /// reals (re, im of the |00⟩, |01⟩, |10⟩, |11⟩ amplitudes).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let state = match s.to_ascii_lowercase().as_str() {
            "bell1" => InitialState::Bell1,
            "bell2" => InitialState::Bell2,
            "bell3" => InitialState::Bell3,
            "bell4" => InitialState::Bell4,
            lower => {
                let Some(rest) = lower.strip_prefix("custom:") else {
                    return Err(SimError::Config(format!("unknown initial state '{s}'")));
                };
                let vals = rest
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| SimError::Config(format!("bad custom amplitude: {e}")))?;
                if vals.len() != 8 {
                    return Err(SimError::Config(format!("custom state needs 8 reals, got {}", vals.len())));
                }
                let mut a = [[0.0; 2]; 4];
                for (k, pair) in vals.chunks(2).enumerate() {
                    a[k] = [pair[0], pair[1]];
                }
                InitialState::Custom(a)
            }
        };
        state.validate()?;
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputOptions {
    /// Directory for result files. `None` writes nothing.
    pub dir: Option<PathBuf>,
    /// Also dump the bath spectrum and weights.
    pub bath_fixture: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub t_max: f64,
    /// Number of output times, including t = 0 and t = t_max.
    pub n_samples: usize,
    pub weight_threshold: f64,
    /// Rescale retained weights to sum to one before evolving.
    pub renormalize_weights: bool,
    pub oracle_check: bool,
    /// Largest register the oracle check is attempted on.
    pub oracle_cap: usize,
    pub parallelism: Parallelism,
    /// Only used by randomized tests.
    pub seed: u64,
    pub initial_state: InitialState,
    pub model: ModelSpec,
    pub propagator: LaguerreConfig,
    pub output: OutputOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            t_max: 50.0,
            n_samples: 500,
            weight_threshold: 1e-4,
            renormalize_weights: false,
            oracle_check: false,
            oracle_cap: 12,
            parallelism: Parallelism::default(),
            seed: 0,
            initial_state: InitialState::default(),
            model: ModelSpec::default(),
            propagator: LaguerreConfig::default(),
            output: OutputOptions::default(),
        }
    }
}

fn as_config_error(e: SimError) -> SimError {
    match e {
        SimError::InvalidArgument(msg) => SimError::Config(msg),
        other => other,
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(as_config_error)?;
        self.propagator.validate().map_err(as_config_error)?;
        self.initial_state.validate()?;
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(SimError::Config(format!("t_max must be > 0, got {}", self.t_max)));
        }
        if self.n_samples < 2 {
            return Err(SimError::Config(format!("n_samples must be >= 2, got {}", self.n_samples)));
        }
        if !(self.weight_threshold > 0.0 && self.weight_threshold < 1.0) {
            return Err(SimError::Config(format!(
                "weight_threshold must lie in (0, 1), got {}",
                self.weight_threshold
            )));
        }
        if self.parallelism == Parallelism::Parallel && !Parallelism::is_available() {
            log::warn!("built without the `parallel` feature; running sequentially");
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Vec<f64> {
        time_grid(self.t_max, self.n_samples)
    }
}

/// `n` equally spaced times from 0 to `t_max` inclusive.
pub fn time_grid(t_max: f64, n: usize) -> Vec<f64> {
    let last = (n.max(2) - 1) as f64;
    (0..n).map(|k| t_max * k as f64 / last).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub ensemble_size: usize,
    pub bath_states: usize,
    /// Σ ω over the retained members.
    pub retained_weight: f64,
    /// Boltzmann mass dropped by the threshold.
    pub discarded_mass: f64,
    pub accepted_dt: f64,
    pub total_steps: usize,
    pub halvings: u32,
    pub max_step_norm_deviation: f64,
    /// Largest |‖Ψ_n(t)‖ − ‖Ψ_n(0)‖| over members and times.
    pub max_norm_drift: f64,
    /// Largest relative drift of ⟨H⟩ over members and times.
    pub max_energy_drift: f64,
    /// Largest Laguerre-vs-dense distance when the oracle ran.
    pub oracle_max_deviation: Option<f64>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: RunConfig,
    pub times: Vec<f64>,
    pub records: Vec<ObservableRecord>,
    pub histograms: Vec<OrderHistogram>,
    /// ρ_S(t), normalized by the retained weight.
    pub rho: Vec<ReducedDensityMatrix>,
    /// Tr of the unnormalized ensemble sum at each time.
    pub raw_traces: Vec<f64>,
    pub metadata: RunMetadata,
}

struct MemberOutput {
    rho: Vec<Matrix4<C64>>,
    bins: Vec<Vec<f64>>,
    stats: EvolveStats,
    norm_drift: f64,
    energy_drift: f64,
    oracle_deviation: Option<f64>,
}

/// Evolves every retained ensemble member and assembles the subsystem
/// observables and bath histograms on the output grid.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    config.validate()?;
    let started = Instant::now();
    let model = &config.model;
    let m = model.n_bath;
    let grid = config.time_grid();

    let ensemble = ThermalEnsemble::prepare(model, config.weight_threshold, config.renormalize_weights)?;
    let propagator = LaguerrePropagator::new(model, &config.propagator)?;
    let oracle = if config.oracle_check {
        if model.n_spins() <= config.oracle_cap.min(DEFAULT_DENSE_CAP) {
            Some(DenseEvolver::new(model, DEFAULT_DENSE_CAP)?)
        } else {
            log::warn!("oracle check skipped: {} spins exceeds cap {}", model.n_spins(), config.oracle_cap);
            None
        }
    } else {
        None
    };
    let psi_s = config.initial_state.state()?;
    log::info!(
        "run: N = {}, M = {} of {} bath states, dt = {}",
        model.n_spins(),
        ensemble.len(),
        ensemble.total_states,
        propagator.dt()
    );

    let outputs = config.parallelism.map(&ensemble.members, |idx, member| -> Result<MemberOutput> {
        let w = member.weight;
        let psi0 = psi_s.tensor(&member.state)?;
        let h = propagator.hamiltonian();
        let e0 = h.expectation(&psi0)?;
        let n0 = psi0.norm();
        let projected = oracle.as_ref().map(|o| o.project(&psi0)).transpose()?;

        let mut out = MemberOutput {
            rho: vec![Matrix4::zeros(); grid.len()],
            bins: vec![vec![0.0; m + 1]; grid.len()],
            stats: EvolveStats::default(),
            norm_drift: 0.0,
            energy_drift: 0.0,
            oracle_deviation: projected.as_ref().map(|_| 0.0),
        };
        let mut last_t = 0.0;
        let stats = propagator
            .evolve_with(&psi0, &grid, |k, t, state| {
                last_t = t;
                accumulate_partial_trace(&mut out.rho[k], w, state)?;
                accumulate_order(&mut out.bins[k], w, state, m)?;
                out.norm_drift = out.norm_drift.max((state.norm() - n0).abs());
                let e = h.expectation(state)?;
                out.energy_drift = out.energy_drift.max((e - e0).abs() / e0.abs().max(1.0));
                if let (Some(o), Some(c), Some(dev)) = (&oracle, &projected, out.oracle_deviation.as_mut()) {
                    *dev = dev.max(o.reconstruct(c, t).distance(state)?);
                }
                Ok(())
            })
            .map_err(|e| e.in_member(idx, last_t))?;
        out.stats = stats;
        Ok(out)
    });

    let mut rho_sum = vec![Matrix4::<C64>::zeros(); grid.len()];
    let mut bin_sum = vec![vec![0.0; m + 1]; grid.len()];
    let mut meta = RunMetadata {
        ensemble_size: ensemble.len(),
        bath_states: ensemble.total_states,
        retained_weight: ensemble.weights().iter().sum(),
        discarded_mass: ensemble.discarded_mass(),
        accepted_dt: f64::INFINITY,
        total_steps: 0,
        halvings: 0,
        max_step_norm_deviation: 0.0,
        max_norm_drift: 0.0,
        max_energy_drift: 0.0,
        oracle_max_deviation: oracle.as_ref().map(|_| 0.0),
        wall_clock_seconds: 0.0,
    };
    for out in outputs {
        let out = out?;
        for (acc, r) in rho_sum.iter_mut().zip(&out.rho) {
            *acc += r;
        }
        for (acc, b) in bin_sum.iter_mut().zip(&out.bins) {
            acc.iter_mut().zip(b).for_each(|(a, x)| *a += x);
        }
        meta.accepted_dt = meta.accepted_dt.min(out.stats.accepted_dt);
        meta.total_steps += out.stats.steps;
        meta.halvings = meta.halvings.max(out.stats.halvings);
        meta.max_step_norm_deviation = meta.max_step_norm_deviation.max(out.stats.max_step_norm_deviation);
        meta.max_norm_drift = meta.max_norm_drift.max(out.norm_drift);
        meta.max_energy_drift = meta.max_energy_drift.max(out.energy_drift);
        if let (Some(acc), Some(dev)) = (meta.oracle_max_deviation.as_mut(), out.oracle_deviation) {
            *acc = acc.max(dev);
        }
    }

    let total = meta.retained_weight;
    let mut records = Vec::with_capacity(grid.len());
    let mut histograms = Vec::with_capacity(grid.len());
    let mut rhos = Vec::with_capacity(grid.len());
    let mut raw_traces = Vec::with_capacity(grid.len());
    for (k, &t) in grid.iter().enumerate() {
        raw_traces.push(rho_sum[k].trace().re);
        let rho = ReducedDensityMatrix::new(rho_sum[k] / C64::new(total, 0.0))
            .map_err(|e| SimError::NumericalConsistency(format!("at t = {t}: {e}")))?;
        let rec = ObservableRecord::from_rho(t, &rho)?;
        rec.check_ranges(RANGE_SLACK)?;
        let hist = OrderHistogram {
            probabilities: bin_sum[k].iter().map(|b| b / total).collect(),
            time: t,
            lambda_bb: model.lambda_bb,
        };
        hist.validate()?;
        records.push(rec);
        histograms.push(hist);
        rhos.push(rho);
    }
    meta.wall_clock_seconds = started.elapsed().as_secs_f64();
    log::info!(
        "run finished in {:.2} s ({} steps, max ‖ψ‖ drift {:.2e}, energy drift {:.2e})",
        meta.wall_clock_seconds,
        meta.total_steps,
        meta.max_norm_drift,
        meta.max_energy_drift
    );
    if let Some(dev) = meta.oracle_max_deviation {
        log::info!("oracle max deviation {dev:.3e}");
    }
    Ok(RunResult {
        config: config.clone(),
        times: grid,
        records,
        histograms,
        rho: rhos,
        raw_traces,
        metadata: meta,
    })
}

/// Subsystem observables with the bath removed, from exact 4×4 evolution
/// under H_S.
pub fn isolated_reference(config: &RunConfig) -> Result<Vec<ObservableRecord>> {
    config.validate()?;
    let evolver = DenseEvolver::from_operator(subsystem_operator(&config.model)?, 2)?;
    let psi = config.initial_state.state()?;
    let coeffs = evolver.project(&psi)?;
    config
        .time_grid()
        .into_iter()
        .map(|t| {
            let s = evolver.reconstruct(&coeffs, t);
            let a = s.amplitudes();
            let norm = s.norm();
            let rho = ReducedDensityMatrix::from_pure([a[0] / norm, a[1] / norm, a[2] / norm, a[3] / norm])?;
            ObservableRecord::from_rho(t, &rho)
        })
        .collect()
}

/// A scalar column of [`ObservableRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    Sx1,
    Sy1,
    Sz1,
    Sx2,
    Sy2,
    Sz2,
    Cxx,
    Cyy,
    Czz,
    Concurrence,
}

impl Column {
    pub const ALL: [Column; 10] = [
        Column::Sx1,
        Column::Sy1,
        Column::Sz1,
        Column::Sx2,
        Column::Sy2,
        Column::Sz2,
        Column::Cxx,
        Column::Cyy,
        Column::Czz,
        Column::Concurrence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Column::Sx1 => "sx1",
            Column::Sy1 => "sy1",
            Column::Sz1 => "sz1",
            Column::Sx2 => "sx2",
            Column::Sy2 => "sy2",
            Column::Sz2 => "sz2",
            Column::Cxx => "cxx",
            Column::Cyy => "cyy",
            Column::Czz => "czz",
            Column::Concurrence => "concurrence",
        }
    }

    pub fn value(self, r: &ObservableRecord) -> f64 {
        match self {
            Column::Sx1 => r.pol1[0],
            Column::Sy1 => r.pol1[1],
            Column::Sz1 => r.pol1[2],
            Column::Sx2 => r.pol2[0],
            Column::Sy2 => r.pol2[1],
            Column::Sz2 => r.pol2[2],
            Column::Cxx => r.c_xx,
            Column::Cyy => r.c_yy,
            Column::Czz => r.c_zz,
            Column::Concurrence => r.concurrence,
        }
    }
}

/// Root-mean-square difference of one column over a shared grid.
pub fn suppression_metric(open: &[ObservableRecord], isolated: &[ObservableRecord], column: Column) -> Result<f64> {
    if open.is_empty() || open.len() != isolated.len() {
        return Err(SimError::invalid(format!(
            "series lengths differ or are empty ({} vs {})",
            open.len(),
            isolated.len()
        )));
    }
    let mut sum = 0.0;
    for (a, b) in open.iter().zip(isolated) {
        if (a.time - b.time).abs() > 1e-9 * a.time.abs().max(1.0) {
            return Err(SimError::invalid(format!("time grids differ ({} vs {})", a.time, b.time)));
        }
        sum += (column.value(a) - column.value(b)).powi(2);
    }
    Ok((sum / open.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    LambdaBb,
    Temperature,
    NBath,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::LambdaBb => "lambda_bb",
            SweepParameter::Temperature => "temperature",
            SweepParameter::NBath => "n_bath",
        }
    }

    /// Copy of `template` with this parameter set to `value`.
    pub fn apply(self, template: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = template.clone();
        match self {
            SweepParameter::LambdaBb => cfg.model.lambda_bb = value,
            SweepParameter::Temperature => cfg.model.temperature = value,
            SweepParameter::NBath => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(SimError::Config(format!("bath size must be a non-negative integer, got {value}")));
                }
                cfg.model.n_bath = value as usize;
            }
        }
        Ok(cfg)
    }
}

impl FromStr for SweepParameter {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lambda_bb" => Ok(SweepParameter::LambdaBb),
            "temperature" | "t" => Ok(SweepParameter::Temperature),
            "n_bath" | "bath_spins" | "m" => Ok(SweepParameter::NBath),
            _ => Err(SimError::Config(format!("unknown sweep parameter '{s}'"))),
        }
    }
}

/// RMS deviations from the isolated reference for C_xx, C_yy, C_zz and
/// the concurrence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuppressionSummary {
    pub cxx: f64,
    pub cyy: f64,
    pub czz: f64,
    pub concurrence: f64,
}

impl SuppressionSummary {
    pub fn compute(open: &[ObservableRecord], isolated: &[ObservableRecord]) -> Result<Self> {
        Ok(SuppressionSummary {
            cxx: suppression_metric(open, isolated, Column::Cxx)?,
            cyy: suppression_metric(open, isolated, Column::Cyy)?,
            czz: suppression_metric(open, isolated, Column::Czz)?,
            concurrence: suppression_metric(open, isolated, Column::Concurrence)?,
        })
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub value: f64,
    pub result: Result<(RunResult, SuppressionSummary)>,
}

/// Independent runs of `template` with `parameter` set to each value.
/// A failing value is reported in its outcome and does not stop the
/// others.
pub fn sweep(template: &RunConfig, parameter: SweepParameter, values: &[f64]) -> Result<Vec<SweepOutcome>> {
    if values.is_empty() {
        return Err(SimError::Config("sweep needs at least one value".into()));
    }
    Ok(template.parallelism.map(values, |_, &value| {
        let result = parameter.apply(template, value).and_then(|cfg| {
            let res = run(&cfg)?;
            let iso = isolated_reference(&cfg)?;
            let summary = SuppressionSummary::compute(&res.records, &iso)?;
            Ok((res, summary))
        });
        if let Err(e) = &result {
            log::warn!("sweep {} = {value} failed: {e}", parameter.name());
        }
        SweepOutcome { value, result }
    }))
}

pub const TABLE1_TEMPERATURES: [f64; 6] = [0.04, 0.05, 0.08, 0.10, 0.15, 0.20];
pub const TABLE1_THRESHOLDS: [f64; 3] = [1e-5, 1e-4, 1e-3];
/// Published counts, rows by threshold, columns by temperature.
pub const TABLE1_REFERENCE: [[usize; 6]; 3] = [[8, 8, 28, 70, 70, 70], [1, 8, 8, 28, 28, 70], [1, 1, 8, 8, 28, 70]];

/// m = 8, λ_bb = 4 with the remaining parameters at their defaults.
pub fn table1_spec() -> ModelSpec {
    ModelSpec { n_bath: 8, lambda_bb: 4.0, beta: 0.1, omega_b: 1.0, ..ModelSpec::default() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Table1Cell {
    pub threshold: f64,
    pub temperature: f64,
    pub computed: usize,
    pub reference: usize,
    /// Exact, or off by one state.
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1 {
    pub cells: Vec<Table1Cell>,
}

impl Table1 {
    pub fn all_match(&self) -> bool {
        self.cells.iter().all(|c| c.matches)
    }

    pub fn cell(&self, threshold: f64, temperature: f64) -> Option<&Table1Cell> {
        self.cells.iter().find(|c| c.threshold == threshold && c.temperature == temperature)
    }
}

/// Counts of bath states with ω ≥ threshold over the table's temperature
/// and threshold grid. `spec.temperature` is ignored.
pub fn reproduce_table1(spec: &ModelSpec) -> Result<Table1> {
    let pairs = diagonalize_bath(spec, DEFAULT_DENSE_CAP)?;
    let mut cells = Vec::with_capacity(18);
    for (row, &threshold) in TABLE1_THRESHOLDS.iter().enumerate() {
        for (col, &temperature) in TABLE1_TEMPERATURES.iter().enumerate() {
            let weights = boltzmann_weights(&pairs, temperature)?;
            let computed = count_above(&weights, threshold);
            let reference = TABLE1_REFERENCE[row][col];
            cells.push(Table1Cell {
                threshold,
                temperature,
                computed,
                reference,
                matches: computed.abs_diff(reference) <= 1,
            });
        }
    }
    Ok(Table1 { cells })
}

pub fn write_table1<W: Write>(out: &mut W, table: &Table1) -> std::io::Result<()> {
    writeln!(out, "threshold,temperature,computed,reference,match")?;
    for c in &table.cells {
        writeln!(out, "{:e},{},{},{},{}", c.threshold, c.temperature, c.computed, c.reference, c.matches)?;
    }
    Ok(())
}

fn write_comment_block<W: Write>(out: &mut W, text: &str) -> std::io::Result<()> {
    for line in text.lines() {
        writeln!(out, "# {line}")?;
    }
    Ok(())
}

fn write_records<W: Write>(
    out: &mut W,
    records: &[ObservableRecord],
    histograms: Option<&[OrderHistogram]>,
) -> std::io::Result<()> {
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(Column::ALL.iter().map(|c| c.name().to_string()));
    if let Some(h) = histograms.and_then(|h| h.first()) {
        header.extend((0..h.probabilities.len()).map(|n| format!("p{n}")));
    }
    writeln!(out, "{}", header.join(","))?;
    for (k, r) in records.iter().enumerate() {
        write!(out, "{:.11e}", r.time)?;
        for c in Column::ALL {
            write!(out, ",{:.11e}", c.value(r))?;
        }
        if let Some(h) = histograms {
            for p in &h[k].probabilities {
                write!(out, ",{p:.11e}")?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Time series with the resolved config and run metadata as `#` lines.
/// Wall-clock time is left out so identical configs give identical files.
pub fn write_time_series<W: Write>(out: &mut W, result: &RunResult) -> std::io::Result<()> {
    write_comment_block(out, &result.config.to_toml())?;
    let m = &result.metadata;
    writeln!(out, "# ensemble_size = {}", m.ensemble_size)?;
    writeln!(out, "# bath_states = {}", m.bath_states)?;
    writeln!(out, "# retained_weight = {:.11e}", m.retained_weight)?;
    writeln!(out, "# discarded_mass = {:.11e}", m.discarded_mass)?;
    writeln!(out, "# accepted_dt = {:.11e}", m.accepted_dt)?;
    if let Some(dev) = m.oracle_max_deviation {
        writeln!(out, "# oracle_max_deviation = {dev:.11e}")?;
    }
    write_records(out, &result.records, Some(&result.histograms))
}

/// Isolated-subsystem series, same layout without the P(n) columns.
pub fn write_isolated_series<W: Write>(out: &mut W, config: &RunConfig, records: &[ObservableRecord]) -> std::io::Result<()> {
    write_comment_block(out, &config.to_toml())?;
    writeln!(out, "# isolated subsystem (H_S only)")?;
    write_records(out, records, None)
}

pub fn write_sweep_summary<W: Write>(out: &mut W, parameter: SweepParameter, outcomes: &[SweepOutcome]) -> std::io::Result<()> {
    writeln!(out, "{},status,ensemble_size,rms_cxx,rms_cyy,rms_czz,rms_concurrence,message", parameter.name())?;
    for o in outcomes {
        match &o.result {
            Ok((res, s)) => writeln!(
                out,
                "{},ok,{},{:.11e},{:.11e},{:.11e},{:.11e},",
                o.value, res.metadata.ensemble_size, s.cxx, s.cyy, s.czz, s.concurrence
            )?,
            Err(e) => writeln!(
                out,
                "{},error,,,,,,{}",
                o.value,
                e.to_string().replace([',', '\n'], ";")
            )?,
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.display().to_string(), source }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_at(dir))
}

/// Writes `<stem>.csv`, `<stem>_isolated.csv` and, if requested, the bath
/// fixture into `dir`. Returns the paths written.
pub fn write_run_files(dir: &Path, stem: &str, result: &RunResult) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();

    let path = dir.join(format!("{stem}.csv"));
    let mut f = create(&path)?;
    write_time_series(&mut f, result).and_then(|_| f.flush()).map_err(io_at(&path))?;
    written.push(path);

    let iso = isolated_reference(&result.config)?;
    let path = dir.join(format!("{stem}_isolated.csv"));
    let mut f = create(&path)?;
    write_isolated_series(&mut f, &result.config, &iso).and_then(|_| f.flush()).map_err(io_at(&path))?;
    written.push(path);

    if result.config.output.bath_fixture {
        let pairs = diagonalize_bath(&result.config.model, DEFAULT_DENSE_CAP)?;
        let weights = boltzmann_weights(&pairs, result.config.model.temperature)?;
        let path = dir.join(format!("{stem}_bath.csv"));
        let mut f = create(&path)?;
        crate::thermal::write_fixture(&mut f, &pairs, &weights)
            .and_then(|_| f.flush())
            .map_err(io_at(&path))?;
        written.push(path);
    }
    Ok(written)
}

/// Per-value run files plus `sweep_summary.csv`.
pub fn write_sweep_files(dir: &Path, parameter: SweepParameter, outcomes: &[SweepOutcome]) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for o in outcomes {
        if let Ok((res, _)) = &o.result {
            written.extend(write_run_files(dir, &format!("{}_{}", parameter.name(), o.value), res)?);
        }
    }
    let path = dir.join("sweep_summary.csv");
    let mut f = create(&path)?;
    write_sweep_summary(&mut f, parameter, outcomes).and_then(|_| f.flush()).map_err(io_at(&path))?;
    written.push(path);
    Ok(written)
}

pub fn write_table1_file(dir: &Path, table: &Table1) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join("table1.csv");
    let mut f = create(&path)?;
    write_table1(&mut f, table).and_then(|_| f.flush()).map_err(io_at(&path))?;
    Ok(path)
}

pub fn write_order_sweep_file(dir: &Path, config: &RunConfig, points: &[crate::bath_order::OrderPoint]) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let path = dir.join("order_sweep.csv");
    let mut f = create(&path)?;
    write_comment_block(&mut f, &config.to_toml())
        .and_then(|_| crate::bath_order::write_order_sweep(&mut f, points))
        .and_then(|_| f.flush())
        .map_err(io_at(&path))?;
    Ok(path)
}
