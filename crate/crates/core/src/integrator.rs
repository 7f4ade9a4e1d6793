//! Adaptive Dormand–Prince 5(4) integration for first-order systems
//! `y' = f(t, y)`.
//!
//! The right-hand side writes its derivative into a caller-provided buffer so
//! the stepping loop allocates nothing after construction. The last stage of
//! an accepted step is reused as the first stage of the next one (FSAL)
//! within a single [`Dopri5::integrate`] call.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

// 5th-order weights; also row 7 of the tableau.
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
// 11/84, adjusted in the last bit so the weights sum to exactly 1 in the
// order they are accumulated.
const B6: f64 = 1.0 - (((B1 + B3) + B4) + B5);

// 5th minus embedded 4th-order weights.
const E1: f64 = 35.0 / 384.0 - 5179.0 / 57600.0;
const E3: f64 = 500.0 / 1113.0 - 7571.0 / 16695.0;
const E4: f64 = 125.0 / 192.0 - 393.0 / 640.0;
const E5: f64 = -2187.0 / 6784.0 + 92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Step-controller safety factor in (0, 1).
    pub safety: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            h_init: 1e-3,
            h_min: 1e-12,
            h_max: 0.5,
            safety: 0.9,
        }
    }
}

impl IntegratorConfig {
    /// Same step bounds as the default with both tolerances set to `tol`.
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(
                    &format!("integrator.{name}"),
                    "must be finite and > 0",
                ))
            }
        };
        positive("abs_tol", self.abs_tol)?;
        positive("rel_tol", self.rel_tol)?;
        positive("h_init", self.h_init)?;
        positive("h_min", self.h_min)?;
        positive("h_max", self.h_max)?;
        if self.h_min > self.h_max {
            return Err(invalid("integrator.h_min", "must be <= h_max"));
        }
        if self.h_init < self.h_min || self.h_init > self.h_max {
            return Err(invalid("integrator.h_init", "must lie in [h_min, h_max]"));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(invalid("integrator.safety", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evaluations: u64,
    pub final_time: f64,
    /// The stop predicate ended the last `integrate` call before `t_end`.
    pub stopped_early: bool,
}

/// Stage buffers for one system size.
#[derive(Debug, Clone)]
struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_next: Vec<f64>,
}

impl Stages {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_next: vec![0.0; n],
        }
    }

    /// Runs stages 2..7 from `k[0] = f(t, y)`, filling `y_next` and returning
    /// the scaled RMS error of the embedded difference.
    fn attempt<F>(&mut self, rhs: &mut F, t: f64, y: &[f64], h: f64, cfg: &IntegratorConfig) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, tmp, k6);
        let y_next = &mut self.y_next;
        for i in 0..n {
            y_next[i] =
                y[i] + h * ((((B1 * k1[i] + B3 * k3[i]) + B4 * k4[i]) + B5 * k5[i]) + B6 * k6[i]);
        }
        rhs(t + h, y_next, k7);

        let mut sum = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y_next[i].abs());
            sum += (e / scale) * (e / scale);
        }
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }
}

/// One Dormand–Prince step of size `h` from `(t, y)`.
///
/// Returns the 5th-order solution and the error estimate, already scaled by
/// `abs_tol + rel_tol·|y|` so that values above 1 mean the step would be
/// rejected.
pub fn dp45_step<F>(
    mut rhs: F,
    t: f64,
    y: &[f64],
    h: f64,
    config: &IntegratorConfig,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if h.is_nan() || h <= 0.0 {
        return Err(invalid("h", "step must be > 0"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    let mut stages = Stages::new(y.len());
    rhs(t, y, &mut stages.k[0]);
    if stages.k[0].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    let err = stages.attempt(&mut rhs, t, y, h, config);
    if !err.is_finite() || stages.y_next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: t + h });
    }
    Ok((stages.y_next, err))
}

/// Stateful adaptive integrator. The proposed step size and the counters
/// persist across calls so a long run can be integrated in consecutive
/// windows.
#[derive(Debug, Clone)]
pub struct Dopri5 {
    config: IntegratorConfig,
    h: f64,
    stats: StepStats,
    stages: Stages,
}

impl Dopri5 {
    pub fn new(config: IntegratorConfig, dim: usize) -> Self {
        Self {
            h: config.h_init,
            config,
            stats: StepStats::default(),
            stages: Stages::new(dim),
        }
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    /// Step size that will be tried next.
    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Advances `y` in place from `t0` to `t_end`.
    ///
    /// `observer` sees every accepted step. `stop` is checked after every
    /// accepted step; returning true ends the call at that step.
    pub fn integrate<F, O, S>(
        &mut self,
        mut rhs: F,
        t0: f64,
        y: &mut [f64],
        t_end: f64,
        mut observer: O,
        mut stop: S,
    ) -> Result<StepStats>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        O: FnMut(f64, &[f64]),
        S: FnMut(f64, &[f64]) -> bool,
    {
        if t_end < t0 {
            return Err(invalid("t_end", "must be >= t0"));
        }
        if self.stages.tmp.len() != y.len() {
            self.stages = Stages::new(y.len());
        }
        self.stats.stopped_early = false;
        self.stats.final_time = t0;
        if t_end == t0 {
            return Ok(self.stats);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t0 });
        }

        let cfg = self.config;
        let mut t = t0;
        rhs(t, y, &mut self.stages.k[0]);
        self.stats.rhs_evaluations += 1;

        while t < t_end {
            let remaining = t_end - t;
            // Snap onto t_end rather than leave a sliver behind.
            let last = self.h >= remaining * (1.0 - 1e-12);
            let h = if last { remaining } else { self.h };

            let err = self.stages.attempt(&mut rhs, t, y, h, &cfg);
            self.stats.rhs_evaluations += 6;

            let ok = err.is_finite() && self.stages.y_next.iter().all(|v| v.is_finite());
            if ok && err <= 1.0 {
                t = if last { t_end } else { t + h };
                y.copy_from_slice(&self.stages.y_next);
                self.stages.k.swap(0, 6);
                self.stats.accepted_steps += 1;
                self.stats.final_time = t;

                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (cfg.safety * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                // A truncated final step says nothing about the natural size.
                let base = if last { self.h.max(h) } else { h };
                self.h = (base * factor).clamp(cfg.h_min, cfg.h_max);

                observer(t, y);
                if stop(t, y) {
                    self.stats.stopped_early = t < t_end;
                    break;
                }
            } else {
                self.stats.rejected_steps += 1;
                if h <= cfg.h_min {
                    if !ok {
                        return Err(Error::NonFinite { t });
                    }
                    return Err(Error::StepUnderflow { t, h, error: err });
                }
                let factor = if ok {
                    (cfg.safety * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
                } else {
                    MIN_FACTOR
                };
                self.h = (h * factor).max(cfg.h_min);
            }
        }
        Ok(self.stats)
    }
}

/// Integrates a fresh copy of `y0` from `t0` to `t_end` with a new
/// [`Dopri5`].
pub fn integrate<F, O, S>(
    rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    config: &IntegratorConfig,
    observer: O,
    stop: S,
) -> Result<(Vec<f64>, StepStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(f64, &[f64]),
    S: FnMut(f64, &[f64]) -> bool,
{
    config.validate()?;
    let mut y = y0.to_vec();
    let mut solver = Dopri5::new(*config, y.len());
    let stats = solver.integrate(rhs, t0, &mut y, t_end, observer, stop)?;
    Ok((y, stats))
}
