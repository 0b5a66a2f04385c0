//! Monte-Carlo experiment harness around the `irs-secrecy` optimizers:
//! structured-text configuration with baked-in defaults, deterministic
//! per-trial RNG streams, fairness and power metrics, and RFC-4180-style
//! CSV emission (records, convergence traces, timings).
//!
//! Secrecy scenarios with imperfect CSI optimize over nominal grid phases
//! and report rates averaged over independent residual-phase-error draws;
//! exact-CSI scenarios collapse the error balls to zero before channel
//! generation. All reported rates are bps/Hz, equal to internal nats
//! times `log2(e)` exactly.
//!
//! Record CSVs are byte-deterministic under a fixed spec and seed; wall
//! times go to a separate timings CSV because they never are.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use irs_secrecy::channel::{
    dbm_to_watts, generate_channels, sample_pse, secrecy_rate, sinr, BeamformingSet, ChannelSet,
    PhaseConfig, Quantization, SystemConfig,
};
use irs_secrecy::perfect_csi::{run_maxmin_ao_with, run_ssr_ao_with, AOOptions, AOStatus};
use irs_secrecy::robust::{
    run_maxmin_robust_with, run_power_min_with, run_ssr_robust_with, RobustOptions, RobustStatus,
};
use irs_secrecy::NATS_TO_BITS;

/// Reporting draws for residual phase error, per trial.
pub const PSE_REPORT_DRAWS: usize = 100;
/// Trials per sweep point in every bundled preset.
pub const PRESET_TRIALS: usize = 20;

// ---- Errors ----

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("configuration parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

// ---- Scenario ----

/// Which optimizer an experiment drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    MaxminPerfect,
    SsrPerfect,
    MaxminRobust,
    SsrRobust,
    PowerMin,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::MaxminPerfect,
        Scenario::SsrPerfect,
        Scenario::MaxminRobust,
        Scenario::SsrRobust,
        Scenario::PowerMin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::MaxminPerfect => "maxmin_perfect",
            Scenario::SsrPerfect => "ssr_perfect",
            Scenario::MaxminRobust => "maxmin_robust",
            Scenario::SsrRobust => "ssr_robust",
            Scenario::PowerMin => "power_min",
        }
    }

    /// True for the two exact-CSI scenarios.
    pub fn is_perfect(self) -> bool {
        matches!(self, Scenario::MaxminPerfect | Scenario::SsrPerfect)
    }
}

impl std::str::FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "maxmin_perfect" => Ok(Scenario::MaxminPerfect),
            "ssr_perfect" => Ok(Scenario::SsrPerfect),
            "maxmin_robust" => Ok(Scenario::MaxminRobust),
            "ssr_robust" => Ok(Scenario::SsrRobust),
            "power_min" => Ok(Scenario::PowerMin),
            other => Err(HarnessError::Config(format!(
                "unknown scenario `{other}`; expected one of maxmin_perfect, ssr_perfect, \
                 maxmin_robust, ssr_robust, power_min"
            ))),
        }
    }
}

// ---- Configuration ----

/// System template, flat and file-friendly. Every field has a default, so
/// a config file only states deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSettings {
    /// Transmit antennas M.
    pub m: usize,
    /// Users K.
    pub k: usize,
    /// Reflective elements N.
    pub n: usize,
    /// Phase resolution in bits; -1 means continuous phases.
    pub bits: i64,
    /// Transmit power budget (dBm).
    pub p_t_dbm: f64,
    /// Noise power spectral density (dBm/Hz).
    pub noise_density_dbm_hz: f64,
    /// Bandwidth the density is integrated over (Hz).
    pub bandwidth_hz: f64,
    /// Transmitter antenna gain (dBi).
    pub g_a_dbi: f64,
    /// Reflector element gain (dBi).
    pub g_irs_dbi: f64,
    /// Rician K-factor (linear).
    pub rician_k: f64,
    pub alice_pos: [f64; 3],
    pub irs_pos: [f64; 3],
    pub user_area_center: [f64; 2],
    pub user_area_side: f64,
    /// Relative CSI uncertainty, users and Eve alike.
    pub delta: f64,
    /// Outer-loop relative stopping threshold.
    pub epsilon: f64,
    /// Outer-loop iteration cap.
    pub max_iter: usize,
    /// Conic backend tolerance.
    pub solver_tol: f64,
    /// QoS SINR target for power minimization (linear, over noise).
    pub qos_gamma: f64,
}

impl Default for SystemSettings {
    fn default() -> Self {
        Self {
            m: 6,
            k: 3,
            n: 16,
            bits: 3,
            p_t_dbm: 20.0,
            noise_density_dbm_hz: -174.0,
            bandwidth_hz: 1e6,
            g_a_dbi: 5.0,
            g_irs_dbi: 5.0,
            rician_k: 3.0,
            alice_pos: [15.0, 0.0, 15.0],
            irs_pos: [0.0, 25.0, 40.0],
            user_area_center: [0.0, 25.0],
            user_area_side: 60.0,
            delta: 0.02,
            epsilon: 1e-3,
            max_iter: 100,
            solver_tol: 1e-8,
            qos_gamma: 1.0,
        }
    }
}

/// One value combination out of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub m: usize,
    pub bits: i64,
    pub delta: f64,
    pub gamma: f64,
}

/// Sweep axes; an empty axis means "the template value only".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    /// Antenna counts M.
    pub antennas: Vec<usize>,
    /// Phase resolutions in bits; -1 means continuous.
    pub bits: Vec<i64>,
    /// Relative CSI uncertainties.
    pub delta: Vec<f64>,
    /// QoS SINR targets (power minimization only).
    pub gamma: Vec<f64>,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    /// Trials per sweep point.
    pub trials: usize,
    /// Base seed; every (point, trial) derives its own stream.
    pub seed: u64,
    /// Output directory for the CSV set.
    pub out_dir: PathBuf,
    pub sweep: SweepAxes,
    pub system: SystemSettings,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::MaxminPerfect,
            trials: PRESET_TRIALS,
            seed: 1,
            out_dir: PathBuf::from("out"),
            sweep: SweepAxes::default(),
            system: SystemSettings::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let spec: ExperimentSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }

    /// Axes normalized against the template; all nonempty afterwards.
    pub fn axes(&self) -> SweepAxes {
        let one = |v: &[i64], d: i64| if v.is_empty() { vec![d] } else { v.to_vec() };
        SweepAxes {
            antennas: if self.sweep.antennas.is_empty() {
                vec![self.system.m]
            } else {
                self.sweep.antennas.clone()
            },
            bits: one(&self.sweep.bits, self.system.bits),
            delta: if self.sweep.delta.is_empty() {
                vec![self.system.delta]
            } else {
                self.sweep.delta.clone()
            },
            gamma: if self.sweep.gamma.is_empty() {
                vec![self.system.qos_gamma]
            } else {
                self.sweep.gamma.clone()
            },
        }
    }

    /// Cartesian sweep grid in axis order antennas x bits x delta x gamma.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let ax = self.axes();
        let mut points =
            Vec::with_capacity(ax.antennas.len() * ax.bits.len() * ax.delta.len() * ax.gamma.len());
        for &m in &ax.antennas {
            for &bits in &ax.bits {
                for &delta in &ax.delta {
                    for &gamma in &ax.gamma {
                        points.push(SweepPoint { m, bits, delta, gamma });
                    }
                }
            }
        }
        points
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        let ax = self.axes();
        for &bits in &ax.bits {
            if bits < -1 {
                return fail(format!("bits axis value {bits}; use -1 for continuous or b >= 0"));
            }
        }
        for &d in &ax.delta {
            if !(0.0..1.0).contains(&d) {
                return fail(format!("delta axis value {d} outside [0, 1)"));
            }
        }
        for &g in &ax.gamma {
            if !(g.is_finite() && g > 0.0) {
                return fail(format!("gamma axis value {g} must be finite and positive"));
            }
        }
        for point in self.sweep_points() {
            let cfg = self.to_config(&point, 0);
            if let Err(e) = cfg.validate() {
                return fail(format!("invalid system at sweep point {point:?}: {e}"));
            }
            if self.scenario == Scenario::PowerMin && point.m <= self.system.k {
                return fail(format!(
                    "power_min needs spare antennas for artificial noise: M={} K={}",
                    point.m, self.system.k
                ));
            }
        }
        Ok(())
    }

    /// Concrete system for one sweep point; exact-CSI scenarios collapse
    /// the error balls so estimates coincide with the truth.
    pub fn to_config(&self, point: &SweepPoint, seed: u64) -> SystemConfig {
        let s = &self.system;
        let delta = if self.scenario.is_perfect() { 0.0 } else { point.delta };
        SystemConfig {
            m: point.m,
            k: s.k,
            n: s.n,
            b: quantization_of(point.bits),
            p_t: dbm_to_watts(s.p_t_dbm),
            noise_density_dbm_hz: s.noise_density_dbm_hz,
            bandwidth_hz: s.bandwidth_hz,
            g_a_dbi: s.g_a_dbi,
            g_irs_dbi: s.g_irs_dbi,
            rician_k: s.rician_k,
            alice_pos: s.alice_pos,
            irs_pos: s.irs_pos,
            user_area_center: s.user_area_center,
            user_area_side: s.user_area_side,
            user_positions: None,
            eve_position: None,
            delta_k: delta,
            delta_e: delta,
            seed,
        }
    }

    /// Stable identity of everything but seed and output location.
    pub fn config_hash(&self) -> u64 {
        let ident = format!(
            "{:?}|{}|{:?}|{:?}",
            self.scenario, self.trials, self.sweep, self.system
        );
        fnv1a(ident.as_bytes())
    }
}

/// Bits-to-resolution mapping shared by axes and template: -1 continuous,
/// otherwise that many bits.
pub fn quantization_of(bits: i64) -> Quantization {
    if bits < 0 {
        Quantization::Continuous
    } else {
        Quantization::Bits(bits as u32)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Splitmix-style finalizer over (base, point, trial); collision-free in
/// practice and stable across platforms.
pub fn derive_seed(base: u64, point: usize, trial: usize) -> u64 {
    let mut z = base
        ^ (point as u64).wrapping_mul(0x9E3779B97F4A7C15)
        ^ (trial as u64 + 1).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

// ---- Presets ----

/// Named desk-scale experiment, 20 trials each.
pub fn preset(name: &str) -> Option<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    match name.replace('_', "-").as_str() {
        "maxmin-perfect" => spec.scenario = Scenario::MaxminPerfect,
        "ssr-perfect" => spec.scenario = Scenario::SsrPerfect,
        "maxmin-robust" => spec.scenario = Scenario::MaxminRobust,
        "ssr-robust" => spec.scenario = Scenario::SsrRobust,
        "power-min" => {
            spec.scenario = Scenario::PowerMin;
            spec.sweep.gamma = vec![0.25, 0.5, 1.0, 2.0, 4.0];
        }
        "quantization-gap" => {
            spec.scenario = Scenario::MaxminPerfect;
            spec.sweep.bits = vec![3, -1];
        }
        _ => return None,
    }
    Some(spec)
}

pub const PRESET_NAMES: [&str; 6] = [
    "maxmin-perfect",
    "ssr-perfect",
    "maxmin-robust",
    "ssr-robust",
    "power-min",
    "quantization-gap",
];

// ---- Records ----

/// One completed (sweep point, trial) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scenario: Scenario,
    pub config_hash: u64,
    /// Sweep point index in `sweep_points()` order.
    pub point: usize,
    pub trial: usize,
    /// Derived per-trial seed.
    pub seed: u64,
    pub m: usize,
    pub bits: i64,
    pub delta: f64,
    pub gamma: f64,
    /// Per-user secrecy rates (delivered rates for power_min), bps/Hz.
    pub user_rates_bps: Vec<f64>,
    pub min_sr_bps: f64,
    pub ssr_bps: f64,
    pub jain: f64,
    pub iterations: usize,
    /// Beam power plus artificial-noise power (W).
    pub total_power_w: f64,
    /// Artificial-noise share (W).
    pub an_power_w: f64,
    pub wall_time_s: f64,
    /// `converged`, `max_iter`, `infeasible`, or `error: ...`.
    pub status: String,
}

impl TrialRecord {
    /// A trial that produced no usable iterate (driver error).
    pub fn hard_failed(&self) -> bool {
        self.status.starts_with("error")
    }
}

/// One accepted-objective history entry, long format.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub scenario: Scenario,
    pub point: usize,
    pub trial: usize,
    pub iteration: usize,
    /// bps/Hz for secrecy scenarios, watts for power minimization.
    pub objective: f64,
}

/// Wall-clock per trial, separated because it is never deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub scenario: Scenario,
    pub point: usize,
    pub trial: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub traces: Vec<TraceRow>,
}

impl ExperimentResult {
    pub fn timings(&self) -> Vec<TimingRow> {
        self.records
            .iter()
            .map(|r| TimingRow {
                scenario: r.scenario,
                point: r.point,
                trial: r.trial,
                wall_time_s: r.wall_time_s,
            })
            .collect()
    }

    pub fn any_hard_failure(&self) -> bool {
        self.records.iter().any(|r| r.hard_failed())
    }
}

// ---- Metrics ----

/// Fairness index `(sum r)^2 / (K sum r^2)`, in [1/K, 1]. All-equal input
/// (including all-zero) scores 1; the upper clamp only absorbs float
/// roundoff.
pub fn jains_index(rates: &[f64]) -> f64 {
    assert!(!rates.is_empty(), "fairness of an empty rate vector");
    let sum: f64 = rates.iter().sum();
    let sq: f64 = rates.iter().map(|r| r * r).sum();
    if sq == 0.0 {
        return 1.0;
    }
    (sum * sum / (rates.len() as f64 * sq)).min(1.0)
}

/// Median of an unordered slice; NaNs are rejected by the total order
/// requirement of the caller's data.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("comparable values"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// ---- Experiment driver ----

/// Runs every (sweep point x trial) cell, in parallel, deterministically:
/// cell order and record values depend only on the spec. Driver failures
/// land in the record status; they never abort the sweep.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    spec.validate()?;
    let points = spec.sweep_points();
    let hash = spec.config_hash();
    let cells: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..spec.trials).map(move |t| (p, t)))
        .collect();
    let outputs: Vec<(TrialRecord, Vec<TraceRow>)> = cells
        .par_iter()
        .map(|&(p, t)| run_trial(spec, &points[p], hash, p, t))
        .collect();
    let mut result = ExperimentResult::default();
    for (record, mut traces) in outputs {
        result.records.push(record);
        result.traces.append(&mut traces);
    }
    Ok(result)
}

/// Outcome of one optimizer invocation, scenario-agnostic.
struct TrialOutcome {
    bf: BeamformingSet,
    phase: PhaseConfig,
    history: Vec<f64>,
    iterations: usize,
    status: String,
    /// Scale from history units to trace units (nats to bits, or 1).
    trace_scale: f64,
}

fn run_trial(
    spec: &ExperimentSpec,
    point: &SweepPoint,
    hash: u64,
    p: usize,
    t: usize,
) -> (TrialRecord, Vec<TraceRow>) {
    let seed = derive_seed(spec.seed, p, t);
    let config = spec.to_config(point, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = generate_channels(&config, &mut rng);
    let started = Instant::now();
    let outcome = dispatch(spec, point, &config, &channels);
    let wall_time_s = started.elapsed().as_secs_f64();

    let k = config.k;
    let user_rates_bps = if outcome.bf.w.is_empty() {
        vec![0.0; k]
    } else if spec.scenario == Scenario::PowerMin {
        delivered_rates_bps(&outcome.bf, &outcome.phase, &channels)
    } else if spec.scenario.is_perfect() {
        (0..k)
            .map(|u| secrecy_rate(&outcome.bf, &outcome.phase, &channels, u) * NATS_TO_BITS)
            .collect()
    } else {
        pse_averaged_rates_bps(&outcome.bf, &outcome.phase, &channels, seed)
    };
    let min_sr_bps = user_rates_bps.iter().cloned().fold(f64::INFINITY, f64::min);
    let ssr_bps: f64 = user_rates_bps.iter().sum();
    let jain = jains_index(&user_rates_bps);
    let traces = outcome
        .history
        .iter()
        .enumerate()
        .map(|(i, &obj)| TraceRow {
            scenario: spec.scenario,
            point: p,
            trial: t,
            iteration: i,
            objective: obj * outcome.trace_scale,
        })
        .collect();
    let record = TrialRecord {
        scenario: spec.scenario,
        config_hash: hash,
        point: p,
        trial: t,
        seed,
        m: point.m,
        bits: point.bits,
        delta: point.delta,
        gamma: point.gamma,
        user_rates_bps,
        min_sr_bps,
        ssr_bps,
        jain,
        iterations: outcome.iterations,
        total_power_w: outcome.bf.beam_power() + outcome.bf.an_power,
        an_power_w: outcome.bf.an_power,
        wall_time_s,
        status: outcome.status,
    };
    (record, traces)
}

fn dispatch(
    spec: &ExperimentSpec,
    point: &SweepPoint,
    config: &SystemConfig,
    channels: &ChannelSet,
) -> TrialOutcome {
    let empty = |status: String| TrialOutcome {
        bf: BeamformingSet::new(Vec::new()),
        phase: PhaseConfig::zero(config.n, config.b),
        history: Vec::new(),
        iterations: 0,
        status,
        trace_scale: 1.0,
    };
    let ao_opts = AOOptions {
        epsilon: spec.system.epsilon,
        max_iter: spec.system.max_iter,
        solver_tol: spec.system.solver_tol,
    };
    let robust_opts = RobustOptions {
        epsilon: spec.system.epsilon,
        max_iter: spec.system.max_iter,
        solver_tol: spec.system.solver_tol,
    };
    match spec.scenario {
        Scenario::MaxminPerfect | Scenario::SsrPerfect => {
            let run = if spec.scenario == Scenario::MaxminPerfect {
                run_maxmin_ao_with(config, channels, &ao_opts)
            } else {
                run_ssr_ao_with(config, channels, &ao_opts)
            };
            match run {
                Ok(state) => TrialOutcome {
                    bf: state.bf,
                    phase: state.phase,
                    history: state.history,
                    iterations: state.iter,
                    status: match state.status {
                        AOStatus::Converged => "converged".into(),
                        AOStatus::MaxIter => "max_iter".into(),
                        AOStatus::Running => "running".into(),
                    },
                    trace_scale: NATS_TO_BITS,
                },
                Err(e) => empty(format!("error: {e}")),
            }
        }
        Scenario::MaxminRobust | Scenario::SsrRobust => {
            let run = if spec.scenario == Scenario::MaxminRobust {
                run_maxmin_robust_with(config, channels, &robust_opts)
            } else {
                run_ssr_robust_with(config, channels, &robust_opts)
            };
            match run {
                Ok(it) => TrialOutcome {
                    bf: it.bf,
                    phase: it.phase,
                    history: it.history,
                    iterations: it.iter,
                    status: robust_status(it.status),
                    trace_scale: NATS_TO_BITS,
                },
                Err(e) => empty(format!("error: {e}")),
            }
        }
        Scenario::PowerMin => {
            match run_power_min_with(config, channels, point.gamma, &robust_opts, None) {
                Ok(it) => TrialOutcome {
                    bf: it.bf,
                    phase: it.phase,
                    history: it.history,
                    iterations: it.iter,
                    status: robust_status(it.status),
                    trace_scale: 1.0,
                },
                Err(e) => empty(format!("error: {e}")),
            }
        }
    }
}

fn robust_status(status: RobustStatus) -> String {
    match status {
        RobustStatus::Converged => "converged".into(),
        RobustStatus::MaxIter => "max_iter".into(),
        RobustStatus::Infeasible => "infeasible".into(),
        RobustStatus::Running => "running".into(),
    }
}

/// True-channel secrecy rates averaged over independent residual
/// phase-error draws (bps/Hz). The optimizer never sees these draws.
fn pse_averaged_rates_bps(
    bf: &BeamformingSet,
    phase: &PhaseConfig,
    channels: &ChannelSet,
    seed: u64,
) -> Vec<f64> {
    let k = channels.n_users();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x50_53_45, 0));
    let mut acc = vec![0.0; k];
    let mut sampled = phase.clone();
    for _ in 0..PSE_REPORT_DRAWS {
        sampled.pse = sample_pse(phase.b, phase.theta.len(), &mut rng);
        for (u, a) in acc.iter_mut().enumerate() {
            *a += secrecy_rate(bf, &sampled, channels, u) * NATS_TO_BITS;
        }
    }
    for a in &mut acc {
        *a /= PSE_REPORT_DRAWS as f64;
    }
    acc
}

/// Delivered (not secrecy) user rates for the unknown-eavesdropper power
/// scenario, bps/Hz, on the true channels with the expected AN term.
fn delivered_rates_bps(
    bf: &BeamformingSet,
    phase: &PhaseConfig,
    channels: &ChannelSet,
) -> Vec<f64> {
    (0..channels.n_users())
        .map(|k| {
            let h = irs_secrecy::channel::cascaded_channel(&channels.g_k[k], phase, &channels.h_ar);
            let an = irs_secrecy::channel::an_power_at(bf, &h);
            (1.0 + sinr(bf, &h, k, channels.sigma_k[k], an)).ln() * NATS_TO_BITS
        })
        .collect()
}

// ---- Quantization-gap summary ----

/// Per-trial relative min-rate gap between a quantized and a continuous
/// sweep point, paired by (trial, every other axis equal).
#[derive(Debug, Clone)]
pub struct GapReport {
    /// (trial, quantized min-SR, continuous min-SR, relative gap).
    pub rows: Vec<(usize, f64, f64, f64)>,
    pub median_gap: f64,
    /// Raised when the median gap exceeds [`GAP_ALERT_THRESHOLD`].
    pub alert: bool,
}

pub const GAP_ALERT_THRESHOLD: f64 = 0.15;

/// Pairs records at `bits == quantized_bits` with records at `bits == -1`
/// and reports the relative min-SR gap. None when either side is missing.
pub fn quantization_gap(records: &[TrialRecord], quantized_bits: i64) -> Option<GapReport> {
    let mut rows = Vec::new();
    for r in records.iter().filter(|r| r.bits == quantized_bits) {
        let partner = records.iter().find(|c| {
            c.bits == -1
                && c.trial == r.trial
                && c.m == r.m
                && c.delta == r.delta
                && c.gamma == r.gamma
        })?;
        let gap = if partner.min_sr_bps > 0.0 {
            (partner.min_sr_bps - r.min_sr_bps) / partner.min_sr_bps
        } else {
            0.0
        };
        rows.push((r.trial, r.min_sr_bps, partner.min_sr_bps, gap));
    }
    if rows.is_empty() {
        return None;
    }
    let gaps: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let median_gap = median(&gaps);
    Some(GapReport {
        rows,
        median_gap,
        alert: median_gap > GAP_ALERT_THRESHOLD,
    })
}

// ---- CSV emission ----

/// Shortest-roundtrip float formatting; stable for identical bit patterns.
fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// RFC-4180 quoting: fields with commas, quotes or line breaks are quoted,
/// embedded quotes doubled.
fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') || raw.contains('\r') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

fn write_csv(path: &Path, header: &[String], rows: Vec<Vec<String>>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut line = String::new();
    for (i, h) in header.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(&csv_field(h));
    }
    write!(out, "{line}\r\n")?;
    for row in rows {
        line.clear();
        for (i, f) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&csv_field(f));
        }
        write!(out, "{line}\r\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Fixed record columns; per-user rate columns are sized by the widest
/// record. Byte-deterministic for a fixed spec and seed.
pub fn emit_csv(records: &[TrialRecord], path: &Path) -> Result<(), HarnessError> {
    let k_max = records.iter().map(|r| r.user_rates_bps.len()).max().unwrap_or(0);
    let mut header: Vec<String> = [
        "scenario",
        "config_hash",
        "point",
        "trial",
        "seed",
        "m",
        "bits",
        "delta",
        "gamma",
    ]
    .map(String::from)
    .to_vec();
    for u in 1..=k_max {
        header.push(format!("sr_bps_user{u}"));
    }
    header.extend(
        ["min_sr_bps", "ssr_bps", "jain", "iterations", "total_power_w", "an_power_w", "status"]
            .map(String::from),
    );
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.scenario.as_str().to_string(),
                format!("{:016x}", r.config_hash),
                r.point.to_string(),
                r.trial.to_string(),
                r.seed.to_string(),
                r.m.to_string(),
                r.bits.to_string(),
                fmt_f64(r.delta),
                fmt_f64(r.gamma),
            ];
            for u in 0..k_max {
                row.push(fmt_f64(r.user_rates_bps.get(u).copied().unwrap_or(0.0)));
            }
            row.extend([
                fmt_f64(r.min_sr_bps),
                fmt_f64(r.ssr_bps),
                fmt_f64(r.jain),
                r.iterations.to_string(),
                fmt_f64(r.total_power_w),
                fmt_f64(r.an_power_w),
                r.status.clone(),
            ]);
            row
        })
        .collect();
    write_csv(path, &header, rows)
}

/// Long-format convergence traces (one row per accepted objective).
pub fn emit_traces_csv(traces: &[TraceRow], path: &Path) -> Result<(), HarnessError> {
    let header: Vec<String> =
        ["scenario", "point", "trial", "iteration", "objective"].map(String::from).to_vec();
    let rows = traces
        .iter()
        .map(|t| {
            vec![
                t.scenario.as_str().to_string(),
                t.point.to_string(),
                t.trial.to_string(),
                t.iteration.to_string(),
                fmt_f64(t.objective),
            ]
        })
        .collect();
    write_csv(path, &header, rows)
}

/// Wall-clock per trial; the one CSV that is not byte-deterministic.
pub fn emit_timings_csv(timings: &[TimingRow], path: &Path) -> Result<(), HarnessError> {
    let header: Vec<String> =
        ["scenario", "point", "trial", "wall_time_s"].map(String::from).to_vec();
    let rows = timings
        .iter()
        .map(|t| {
            vec![
                t.scenario.as_str().to_string(),
                t.point.to_string(),
                t.trial.to_string(),
                fmt_f64(t.wall_time_s),
            ]
        })
        .collect();
    write_csv(path, &header, rows)
}

/// Quantized-versus-continuous gap rows plus a trailing median row.
pub fn emit_gap_csv(report: &GapReport, path: &Path) -> Result<(), HarnessError> {
    let header: Vec<String> =
        ["trial", "min_sr_bps_quantized", "min_sr_bps_continuous", "rel_gap"]
            .map(String::from)
            .to_vec();
    let mut rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|(t, q, c, g)| {
            vec![t.to_string(), fmt_f64(*q), fmt_f64(*c), fmt_f64(*g)]
        })
        .collect();
    rows.push(vec![
        "median".into(),
        String::new(),
        String::new(),
        fmt_f64(report.median_gap),
    ]);
    write_csv(path, &header, rows)
}

/// Runs an experiment and writes the full CSV set into `spec.out_dir`:
/// `records.csv`, `traces.csv`, `timings.csv`, and `quantization_gap.csv`
/// when the bits axis compares quantized against continuous phases.
/// Returns the in-memory result for further inspection.
pub fn run_and_emit(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    let result = run_experiment(spec)?;
    emit_csv(&result.records, &spec.out_dir.join("records.csv"))?;
    emit_traces_csv(&result.traces, &spec.out_dir.join("traces.csv"))?;
    emit_timings_csv(&result.timings(), &spec.out_dir.join("timings.csv"))?;
    let quantized = spec.axes().bits.iter().copied().find(|&b| b >= 0);
    if let (Some(qb), true) = (quantized, spec.axes().bits.contains(&-1)) {
        if let Some(report) = quantization_gap(&result.records, qb) {
            emit_gap_csv(&report, &spec.out_dir.join("quantization_gap.csv"))?;
            if report.alert {
                eprintln!(
                    "alert: median min-rate gap {:.1}% between {}-bit and continuous phases \
                     exceeds {:.0}%",
                    100.0 * report.median_gap,
                    qb,
                    100.0 * GAP_ALERT_THRESHOLD
                );
            }
        }
    }
    Ok(result)
}

// ---- Validation suite ----

/// One named invariant check over random instances.
pub struct ValidationCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Randomized invariant sweep used by the `validate` verb: metric bounds,
/// quantizer geometry, error-ball radii, surrogate dominance, and a tiny
/// end-to-end monotone run. Fast by construction.
pub fn run_validation(seed: u64, rounds: usize) -> Vec<ValidationCheck> {
    use irs_secrecy::channel::{quantize_phase, sample_in_ball};
    use irs_secrecy::perfect_csi::mrt_init;
    use irs_secrecy::surrogate::{sr_surrogate_theta, sr_surrogate_w};
    use nalgebra::DVector;
    use rand::Rng;

    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rounds = rounds.max(1);

    // Fairness metric bounds and anchors.
    {
        let mut ok = (jains_index(&[2.0, 2.0, 2.0]) - 1.0).abs() <= 1e-12
            && (jains_index(&[5.0, 0.0, 0.0, 0.0]) - 0.25).abs() <= 1e-12
            && (jains_index(&[1.0, 2.0]) - 0.9).abs() <= 1e-12;
        let mut detail = String::new();
        for _ in 0..rounds * 20 {
            let k = rng.gen_range(1..8);
            let rates: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..10.0)).collect();
            let j = jains_index(&rates);
            if !(1.0 / k as f64 - 1e-12..=1.0 + 1e-12).contains(&j) {
                ok = false;
                let _ = write!(detail, "out of bounds at {rates:?}: {j}");
                break;
            }
        }
        checks.push(ValidationCheck { name: "fairness index bounds", passed: ok, detail });
    }

    // Quantizer never moves an angle by more than half a step.
    {
        let mut ok = true;
        let mut detail = String::new();
        for _ in 0..rounds * 20 {
            let b = rng.gen_range(1..7u32);
            let n = rng.gen_range(1..12);
            let t = DVector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
            let q = quantize_phase(&t, Quantization::Bits(b));
            let half = std::f64::consts::PI / 2f64.powi(b as i32);
            for i in 0..n {
                let d = (q[i] - t[i]).rem_euclid(std::f64::consts::TAU);
                let d = d.min(std::f64::consts::TAU - d);
                if d > half + 1e-9 {
                    ok = false;
                    let _ = write!(detail, "moved {d} > {half} at b={b}");
                }
            }
        }
        checks.push(ValidationCheck { name: "quantizer step bound", passed: ok, detail });
    }

    // Error-ball draws respect their radius.
    {
        let mut ok = true;
        let mut detail = String::new();
        for _ in 0..rounds * 20 {
            let xi = rng.gen_range(0.0..3.0);
            let d = sample_in_ball(xi, rng.gen_range(1..10), &mut rng);
            if d.norm() > xi * (1.0 + 1e-12) {
                ok = false;
                let _ = write!(detail, "norm {} > {xi}", d.norm());
            }
        }
        checks.push(ValidationCheck { name: "error-ball radius", passed: ok, detail });
    }

    // Surrogates stay below the true objective and touch it at the iterate.
    {
        let mut ok = true;
        let mut detail = String::new();
        for round in 0..rounds {
            let cfg = SystemConfig {
                m: 3,
                k: 2,
                n: 4,
                delta_k: 0.0,
                delta_e: 0.0,
                seed: seed ^ round as u64,
                ..SystemConfig::default()
            };
            let ch = generate_channels(&cfg, &mut rng);
            let phase = PhaseConfig::new(
                DVector::from_fn(cfg.n, |_, _| rng.gen_range(0.0..std::f64::consts::TAU)),
                Quantization::Continuous,
            );
            let bf = mrt_init(&ch, &phase, cfg.p_t);
            for k in 0..cfg.k {
                let co = sr_surrogate_w(&ch, &phase, &bf, k);
                let truth = irs_secrecy::channel::secrecy_rate_unclamped(
                    &BeamformingSet::new(bf.clone()),
                    &phase,
                    &ch,
                    k,
                );
                if (co.eval(&bf) - truth).abs() > 1e-8 {
                    ok = false;
                    let _ = write!(detail, "beam surrogate not tight: {} vs {truth}", co.eval(&bf));
                }
                let ct = sr_surrogate_theta(&ch, &bf, &phase, k);
                if (ct.eval_linear(&phase.theta) - truth).abs() > 1e-8 {
                    ok = false;
                    let _ = write!(detail, "phase surrogate not tight");
                }
                for _ in 0..25 {
                    let scale = rng.gen_range(0.1..1.0);
                    let w2: Vec<DVector<irs_secrecy::C64>> = bf
                        .iter()
                        .map(|w| {
                            w.map(|z| {
                                z * irs_secrecy::C64::new(
                                    rng.gen_range(-1.0..1.0) * scale,
                                    rng.gen_range(-1.0..1.0) * scale,
                                )
                            })
                        })
                        .collect();
                    let truth2 = irs_secrecy::channel::secrecy_rate_unclamped(
                        &BeamformingSet::new(w2.clone()),
                        &phase,
                        &ch,
                        k,
                    );
                    if co.eval(&w2) > truth2 + 1e-9 {
                        ok = false;
                        let _ = write!(detail, "beam surrogate above truth");
                    }
                    let t2 = DVector::from_fn(cfg.n, |_, _| {
                        rng.gen_range(0.0..std::f64::consts::TAU)
                    });
                    let p2 = PhaseConfig::new(t2.clone(), Quantization::Continuous);
                    let truth3 = irs_secrecy::channel::secrecy_rate_unclamped(
                        &BeamformingSet::new(bf.clone()),
                        &p2,
                        &ch,
                        k,
                    );
                    if ct.eval_linear(&t2) > truth3 + 1e-9 {
                        ok = false;
                        let _ = write!(detail, "phase surrogate above truth");
                    }
                }
            }
        }
        checks.push(ValidationCheck { name: "surrogate dominance", passed: ok, detail });
    }

    // Tiny end-to-end run: monotone history, converged, deterministic.
    {
        let cfg = SystemConfig {
            m: 3,
            k: 2,
            n: 4,
            delta_k: 0.0,
            delta_e: 0.0,
            seed,
            ..SystemConfig::default()
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let ch = generate_channels(&cfg, &mut r1);
        let mut ok = true;
        let mut detail = String::new();
        match run_maxmin_ao_with(&cfg, &ch, &AOOptions::default()) {
            Ok(state) => {
                for w in state.history.windows(2) {
                    if w[1] < w[0] - 1e-6 {
                        ok = false;
                        let _ = write!(detail, "history regressed: {} -> {}", w[0], w[1]);
                    }
                }
                if state.status != AOStatus::Converged {
                    ok = false;
                    let _ = write!(detail, "did not converge in {} iterations", state.iter);
                }
            }
            Err(e) => {
                ok = false;
                let _ = write!(detail, "driver failed: {e}");
            }
        }
        checks.push(ValidationCheck { name: "small run monotone and converged", passed: ok, detail });
    }

    checks
}

#[cfg(test)]
mod tests;
