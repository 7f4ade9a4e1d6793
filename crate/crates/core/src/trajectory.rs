//! One collapse experiment: randomized start around a mean angle, free
//! evolution, damping switched on at `t_diss`, then settling detection and
//! Up/Down classification.

use std::f64::consts::PI;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrator::{Dopri5, IntegratorConfig, StepStats};
use crate::model::{energy_of_slice, eom_rhs_into, LatticeState, ModelParams, NeighborTable};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Time at which damping switches on.
    pub t_diss: f64,
    pub t_end: f64,
    /// Settled requires every |ω| below this.
    pub omega_tol: f64,
    /// Settled requires every θ within this of a multiple of π.
    pub theta_tol: f64,
    /// Sampling and settling-check interval.
    pub sample_dt: f64,
    /// Half-width of the uniform initial angle perturbation.
    pub noise_amp: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_diss: 20.0,
            t_end: 200.0,
            omega_tol: 1e-4,
            theta_tol: 0.1,
            sample_dt: 0.1,
            noise_amp: 1.2,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("t_diss", self.t_diss),
            ("t_end", self.t_end),
            ("omega_tol", self.omega_tol),
            ("theta_tol", self.theta_tol),
            ("sample_dt", self.sample_dt),
            ("noise_amp", self.noise_amp),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(&format!("run.{name}"), "must be finite"));
            }
        }
        if self.t_diss < 0.0 {
            return Err(invalid("run.t_diss", "must be >= 0"));
        }
        if self.t_end <= self.t_diss {
            return Err(invalid("run.t_end", "must be > t_diss"));
        }
        if self.omega_tol <= 0.0 {
            return Err(invalid("run.omega_tol", "must be > 0"));
        }
        if self.theta_tol <= 0.0 {
            return Err(invalid("run.theta_tol", "must be > 0"));
        }
        if self.sample_dt <= 0.0 {
            return Err(invalid("run.sample_dt", "must be > 0"));
        }
        if self.noise_amp < 0.0 {
            return Err(invalid("run.noise_amp", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Up,
    Down,
    Unsettled,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Up => "Up",
            Outcome::Down => "Down",
            Outcome::Unsettled => "Unsettled",
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Outcome::Up => Outcome::Down,
            Outcome::Down => Outcome::Up,
            Outcome::Unsettled => Outcome::Unsettled,
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Empty unless sampling was requested.
    pub samples: Vec<Sample>,
    pub outcome: Outcome,
    pub settle_time: Option<f64>,
    pub final_state: LatticeState,
    pub final_time: f64,
    pub stats: StepStats,
}

/// Uniform perturbation of half-width `noise_amp` around `mean_theta` on
/// every site, zero velocities. The stream is ChaCha8 keyed by `seed`.
pub fn init_state(
    mean_theta: f64,
    noise_amp: f64,
    seed: u64,
    params: &ModelParams,
) -> LatticeState {
    let n = params.n_sites();
    let mut state = LatticeState::uniform(n, mean_theta);
    if noise_amp > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Uniform::new_inclusive(-noise_amp, noise_amp).expect("finite, ordered bounds");
        for theta in &mut state.theta {
            *theta += noise.sample(&mut rng);
        }
    }
    state
}

/// Net moment along the field, `Σ cos θ`.
pub fn net_moment(theta: &[f64]) -> f64 {
    theta.iter().map(|t| t.cos()).sum()
}

/// Net moments within this much per site of zero count as zero.
pub const MOMENT_EPS: f64 = 1e-9;

/// Up or Down by the sign of the net moment; Unsettled when it vanishes.
pub fn classify(state: &LatticeState) -> Outcome {
    let m = net_moment(&state.theta);
    if m.abs() <= MOMENT_EPS * state.len() as f64 {
        Outcome::Unsettled
    } else if m > 0.0 {
        Outcome::Up
    } else if m < 0.0 {
        Outcome::Down
    } else {
        Outcome::Unsettled
    }
}

/// Angular distance from θ to the nearest multiple of π.
pub fn distance_to_pole(theta: f64) -> f64 {
    let r = theta.rem_euclid(PI);
    r.min(PI - r)
}

pub fn is_settled(state: &LatticeState, run: &RunConfig) -> bool {
    settled_slice(&state.theta, &state.omega, run)
}

fn settled_slice(theta: &[f64], omega: &[f64], run: &RunConfig) -> bool {
    omega.iter().all(|w| w.abs() < run.omega_tol)
        && theta.iter().all(|&t| distance_to_pole(t) <= run.theta_tol)
}

/// Runs one trial from `init_state(mean_theta, run.noise_amp, seed, ..)`.
pub fn simulate(
    mean_theta: f64,
    seed: u64,
    params: &ModelParams,
    run: &RunConfig,
    integrator: &IntegratorConfig,
    record_samples: bool,
) -> Result<TrajectoryRecord> {
    let state = init_state(mean_theta, run.noise_amp, seed, params);
    simulate_from(state, params, run, integrator, record_samples)
}

/// Runs the two-phase schedule from an explicit initial state.
///
/// Integration proceeds in windows of `sample_dt` on a fixed time grid (plus
/// `t_diss`) whether or not samples are recorded, so the trajectory does not
/// depend on `record_samples`. Settling is checked at every window boundary
/// from `t_diss` on.
pub fn simulate_from(
    initial: LatticeState,
    params: &ModelParams,
    run: &RunConfig,
    integrator: &IntegratorConfig,
    record_samples: bool,
) -> Result<TrajectoryRecord> {
    let table = NeighborTable::for_params(params)?;
    initial.check_len(table.n_sites())?;
    if !initial.is_finite() {
        return Err(Error::NonFinite { t: 0.0 });
    }
    let n = table.n_sites();
    let mut y = initial.to_vec();
    let mut solver = Dopri5::new(*integrator, y.len());
    let mut samples = Vec::new();

    let record = |t: f64, y: &[f64], samples: &mut Vec<Sample>| {
        if record_samples {
            let (theta, omega) = y.split_at(n);
            samples.push(Sample {
                t,
                theta: theta.to_vec(),
                omega: omega.to_vec(),
                energy: energy_of_slice(theta, omega, params, &table),
            });
        }
    };
    record(0.0, &y, &mut samples);

    let grid = |k: u64| k as f64 * run.sample_dt;
    let mut k: u64 = 0;
    let mut t = 0.0;
    let mut settle_time = None;
    let mut settled = false;

    // Phase 1: conservative.
    while t < run.t_diss {
        let next = grid(k + 1).min(run.t_diss);
        solver.integrate(
            |_, y: &[f64], dy: &mut [f64]| eom_rhs_into(y, dy, params, &table, false),
            t,
            &mut y,
            next,
            |_, _| {},
            |_, _| false,
        )?;
        t = next;
        if grid(k + 1) - t <= 1e-9 * run.sample_dt {
            k += 1;
        }
        record(t, &y, &mut samples);
    }

    // Phase 2: damped, stop once settled.
    loop {
        let (theta, omega) = y.split_at(n);
        if settled_slice(theta, omega, run) {
            settled = true;
            settle_time = Some(t);
            break;
        }
        if t >= run.t_end {
            break;
        }
        let next = grid(k + 1).min(run.t_end);
        solver.integrate(
            |_, y: &[f64], dy: &mut [f64]| eom_rhs_into(y, dy, params, &table, true),
            t,
            &mut y,
            next,
            |_, _| {},
            |_, _| false,
        )?;
        t = next;
        k += 1;
        record(t, &y, &mut samples);
    }

    let final_state = LatticeState::from_slice(&y);
    if !final_state.is_finite() {
        return Err(Error::NonFinite { t });
    }
    let outcome = if settled {
        classify(&final_state)
    } else {
        Outcome::Unsettled
    };
    Ok(TrajectoryRecord {
        samples,
        outcome,
        settle_time,
        final_state,
        final_time: t,
        stats: solver.stats(),
    })
}
