//! Two-trajectory divergence and largest-Lyapunov-exponent fits.
//!
//! A reference run and a companion offset by `delta0` in one angle are
//! integrated side by side as a single system, so both share one adaptive
//! step sequence and their truncation errors largely cancel in the
//! difference.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrator::{Dopri5, IntegratorConfig};
use crate::model::{eom_rhs_into, LatticeState, ModelParams, NeighborTable};
use crate::trajectory::{init_state, RunConfig};

/// Separation above which growth is treated as saturated.
pub const SATURATION_CAP: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivergenceConfig {
    pub delta0: f64,
    pub t_max: f64,
    pub sample_dt: f64,
    pub fit_t_start: f64,
    pub fit_t_end: f64,
    /// Rescale the companion back to `delta0` after every sample and
    /// accumulate the log growth factors.
    pub renormalize: bool,
    /// Keep damping on for the whole measurement.
    pub dissipation: bool,
    pub mean_theta: f64,
    pub seed: u64,
    /// Absolute and relative tolerance for the paired integration; overrides
    /// the integrator block. Must sit well below `delta0`.
    pub tolerance: f64,
}

impl Default for DivergenceConfig {
    fn default() -> Self {
        Self {
            delta0: 1e-8,
            t_max: 30.0,
            sample_dt: 0.1,
            fit_t_start: 2.0,
            fit_t_end: 30.0,
            renormalize: false,
            dissipation: false,
            mean_theta: FRAC_PI_2,
            seed: 1,
            tolerance: 1e-12,
        }
    }
}

impl DivergenceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("delta0", self.delta0),
            ("t_max", self.t_max),
            ("sample_dt", self.sample_dt),
            ("fit_t_start", self.fit_t_start),
            ("fit_t_end", self.fit_t_end),
            ("mean_theta", self.mean_theta),
            ("tolerance", self.tolerance),
        ] {
            if !v.is_finite() {
                return Err(invalid(&format!("chaos.{name}"), "must be finite"));
            }
        }
        if !(self.delta0 > 0.0 && self.delta0 < 1e-2) {
            return Err(invalid("chaos.delta0", "must lie in (0, 1e-2)"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(invalid("chaos.tolerance", "must be finite and > 0"));
        }
        if self.t_max <= 0.0 {
            return Err(invalid("chaos.t_max", "must be > 0"));
        }
        if self.sample_dt <= 0.0 {
            return Err(invalid("chaos.sample_dt", "must be > 0"));
        }
        if self.fit_t_start < 0.0 {
            return Err(invalid("chaos.fit_t_start", "must be >= 0"));
        }
        if self.fit_t_end <= self.fit_t_start {
            return Err(invalid("chaos.fit_t_end", "must be > fit_t_start"));
        }
        if self.fit_t_end > self.t_max {
            return Err(invalid("chaos.fit_t_end", "must be <= t_max"));
        }
        if !(0.0..=PI).contains(&self.mean_theta) {
            return Err(invalid("chaos.mean_theta", "must lie in [0, π]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceSeries {
    /// `(t, ln |δZ(t)|)`, strictly increasing in `t`.
    pub points: Vec<(f64, f64)>,
    /// First sample time at which the raw separation exceeded
    /// [`SATURATION_CAP`].
    pub saturated_at: Option<f64>,
}

impl DivergenceSeries {
    /// Wraps externally supplied points, detecting saturation from the values
    /// themselves.
    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(invalid("series", "points must be finite"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("series", "times must be strictly increasing"));
        }
        let cap = SATURATION_CAP.ln();
        let saturated_at = points.iter().find(|(_, v)| *v > cap).map(|(t, _)| *t);
        Ok(Self {
            points,
            saturated_at,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda: f64,
    pub r_squared: f64,
    pub intercept: f64,
    pub n_points: usize,
    pub series: Vec<(f64, f64)>,
    pub saturated_at: Option<f64>,
}

/// Euclidean norm of the `(θ, ω)` difference with angle differences wrapped
/// to `(-π, π]`.
pub fn phase_separation(a: &LatticeState, b: &LatticeState) -> Result<f64> {
    if a.theta.len() != b.theta.len() || a.omega.len() != b.omega.len() {
        return Err(Error::SizeMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(separation_of_slices(&a.to_vec(), &b.to_vec()))
}

pub fn wrap_angle(d: f64) -> f64 {
    let w = (d + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

fn separation_of_slices(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() / 2;
    let angles = a[..n]
        .iter()
        .zip(&b[..n])
        .map(|(x, y)| wrap_angle(y - x).powi(2));
    let rates = a[n..].iter().zip(&b[n..]).map(|(x, y)| (y - x).powi(2));
    angles.chain(rates).sum::<f64>().sqrt()
}

/// Samples `ln |δZ|` every `cfg.sample_dt` up to `cfg.t_max` for a reference
/// trajectory started from `init_state(mean_theta, run.noise_amp, seed, ..)`
/// and a companion with `delta0` added to the angle of site 0.
///
/// Only the step bounds of `integrator` are used; tolerances come from
/// `cfg.tolerance`. With `a > 0` the pair torque jumps when neighbors pass
/// through alignment, and the step straddling such a crossing must resolve
/// offsets of order `delta0`.
pub fn divergence_series(
    mean_theta: f64,
    seed: u64,
    params: &ModelParams,
    cfg: &DivergenceConfig,
    run: &RunConfig,
    integrator: &IntegratorConfig,
) -> Result<DivergenceSeries> {
    if !(cfg.delta0.is_finite() && cfg.delta0 > 0.0) {
        return Err(Error::ZeroPerturbation);
    }
    cfg.validate()?;
    params.validate()?;
    let integrator = IntegratorConfig {
        abs_tol: cfg.tolerance,
        rel_tol: cfg.tolerance,
        ..*integrator
    };
    integrator.validate()?;
    let table = NeighborTable::for_params(params)?;
    let reference = init_state(mean_theta, run.noise_amp, seed, params);
    let dim = 2 * table.n_sites();

    // [reference.., companion..]
    let mut y = reference.to_vec();
    y.extend_from_within(..);
    y[dim] += cfg.delta0;

    let dissipation = cfg.dissipation;
    let rhs = |_: f64, y: &[f64], dy: &mut [f64]| {
        let (ya, yb) = y.split_at(dim);
        let (da, db) = dy.split_at_mut(dim);
        eom_rhs_into(ya, da, params, &table, dissipation);
        eom_rhs_into(yb, db, params, &table, dissipation);
    };

    let mut solver = Dopri5::new(integrator, y.len());
    let ln_delta0 = cfg.delta0.ln();
    let mut points = vec![(0.0, ln_delta0)];
    let mut saturated_at = None;
    let mut log_growth = 0.0;
    let mut t = 0.0;
    let mut k: u64 = 0;
    while t < cfg.t_max {
        let next = ((k + 1) as f64 * cfg.sample_dt).min(cfg.t_max);
        solver.integrate(rhs, t, &mut y, next, |_, _| {}, |_, _| false)?;
        t = next;
        k += 1;

        let (ya, yb) = y.split_at_mut(dim);
        let sep = separation_of_slices(ya, yb);
        if !sep.is_finite() {
            return Err(Error::NonFinite { t });
        }
        if sep == 0.0 {
            return Err(Error::ZeroPerturbation);
        }
        if cfg.renormalize {
            log_growth += (sep / cfg.delta0).ln();
            points.push((t, ln_delta0 + log_growth));
            let scale = cfg.delta0 / sep;
            let n = dim / 2;
            for i in 0..dim {
                let d = if i < n {
                    wrap_angle(yb[i] - ya[i])
                } else {
                    yb[i] - ya[i]
                };
                yb[i] = ya[i] + d * scale;
            }
        } else {
            if saturated_at.is_none() && sep > SATURATION_CAP {
                saturated_at = Some(t);
            }
            points.push((t, sep.ln()));
        }
    }
    Ok(DivergenceSeries {
        points,
        saturated_at,
    })
}

/// Least-squares slope of `ln |δZ|` against `t` over the fit window, using
/// only samples before saturation.
pub fn fit_lyapunov(series: &DivergenceSeries, cfg: &DivergenceConfig) -> Result<LyapunovEstimate> {
    let usable: Vec<(f64, f64)> = series
        .points
        .iter()
        .copied()
        .filter(|&(t, _)| t >= cfg.fit_t_start && t <= cfg.fit_t_end)
        .filter(|&(t, _)| series.saturated_at.is_none_or(|ts| t < ts))
        .collect();
    if usable.len() < 3 {
        let in_window = series
            .points
            .iter()
            .filter(|&&(t, _)| t >= cfg.fit_t_start && t <= cfg.fit_t_end)
            .count();
        if in_window >= 3 {
            return Err(Error::Saturated);
        }
        return Err(Error::EmptyFitWindow(usable.len()));
    }
    let n = usable.len() as f64;
    let t_mean = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let v_mean = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut stv, mut svv) = (0.0, 0.0, 0.0);
    for &(t, v) in &usable {
        stt += (t - t_mean) * (t - t_mean);
        stv += (t - t_mean) * (v - v_mean);
        svv += (v - v_mean) * (v - v_mean);
    }
    let lambda = stv / stt;
    let intercept = v_mean - lambda * t_mean;
    let ss_res: f64 = usable
        .iter()
        .map(|&(t, v)| (v - intercept - lambda * t).powi(2))
        .sum();
    let r_squared = if svv == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / svv).clamp(0.0, 1.0)
    };
    Ok(LyapunovEstimate {
        lambda,
        r_squared,
        intercept,
        n_points: usable.len(),
        series: series.points.clone(),
        saturated_at: series.saturated_at,
    })
}

/// Runs [`divergence_series`] with the configured angle and seed, then
/// fits it.
pub fn measure_lyapunov(
    params: &ModelParams,
    cfg: &DivergenceConfig,
    run: &RunConfig,
    integrator: &IntegratorConfig,
) -> Result<LyapunovEstimate> {
    let series = divergence_series(cfg.mean_theta, cfg.seed, params, cfg, run, integrator)?;
    fit_lyapunov(&series, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_series(slope: f64, c: f64, n: usize, dt: f64) -> DivergenceSeries {
        DivergenceSeries {
            points: (0..n)
                .map(|i| (i as f64 * dt, slope * i as f64 * dt + c))
                .collect(),
            saturated_at: None,
        }
    }

    #[test]
    fn separation_values() {
        let a = LatticeState::new(vec![0.1, 0.2], vec![0.0, 1.0]).unwrap();
        assert_eq!(phase_separation(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.theta[1] += 3e-5;
        b.omega[1] += 4e-5;
        assert!((phase_separation(&a, &b).unwrap() - 5e-5).abs() < 1e-15);
        let mut c = a.clone();
        c.theta[0] += 2.0 * PI;
        assert!(phase_separation(&a, &c).unwrap() < 1e-14);
        let short = LatticeState::uniform(1, 0.0);
        assert!(phase_separation(&a, &short).is_err());
    }

    #[test]
    fn wrap_convention() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(2.0 * PI + 0.5) - 0.5).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    fn whole_window() -> DivergenceConfig {
        DivergenceConfig {
            fit_t_start: 0.0,
            ..DivergenceConfig::default()
        }
    }

    #[test]
    fn fit_recovers_slope() {
        let cfg = whole_window();
        let est = fit_lyapunov(&linear_series(1.2, -18.0, 101, 0.1), &cfg).unwrap();
        assert!((est.lambda - 1.2).abs() < 1e-12);
        assert!((est.r_squared - 1.0).abs() < 1e-12);
        assert!((est.intercept + 18.0).abs() < 1e-10);
    }

    #[test]
    fn flat_series_gives_zero() {
        let cfg = whole_window();
        let est = fit_lyapunov(&linear_series(0.0, -5.0, 20, 0.1), &cfg).unwrap();
        assert_eq!(est.lambda, 0.0);
    }

    #[test]
    fn two_points_rejected() {
        let cfg = whole_window();
        let res = fit_lyapunov(&linear_series(1.0, 0.0, 2, 0.1), &cfg);
        assert!(matches!(res, Err(Error::EmptyFitWindow(2))));
    }

    #[test]
    fn saturation_truncates_fit() {
        let mut s = linear_series(1.0, -10.0, 200, 0.1);
        for p in s.points.iter_mut().skip(100) {
            p.1 = -2.8;
        }
        let s = DivergenceSeries::from_points(s.points).unwrap();
        assert!(s.saturated_at.is_some());
        let est = fit_lyapunov(&s, &whole_window()).unwrap();
        assert!((est.lambda - 1.0).abs() < 1e-9);
        assert_eq!(est.n_points, 72);

        let all = DivergenceSeries::from_points(vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]).unwrap();
        assert!(matches!(
            fit_lyapunov(&all, &whole_window()),
            Err(Error::Saturated)
        ));
    }

    #[test]
    fn zero_perturbation_rejected() {
        let cfg = DivergenceConfig {
            delta0: 0.0,
            ..DivergenceConfig::default()
        };
        let res = divergence_series(
            FRAC_PI_2,
            1,
            &ModelParams::default(),
            &cfg,
            &RunConfig::default(),
            &IntegratorConfig::default(),
        );
        assert_eq!(res.unwrap_err(), Error::ZeroPerturbation);
    }

    #[test]
    fn free_rotors_do_not_diverge() {
        let params = ModelParams {
            spring_k: 0.0,
            field_b: 0.0,
            ..ModelParams::default()
        };
        let cfg = DivergenceConfig {
            t_max: 5.0,
            fit_t_end: 5.0,
            ..DivergenceConfig::default()
        };
        let est = measure_lyapunov(
            &params,
            &cfg,
            &RunConfig::default(),
            &IntegratorConfig::default(),
        )
        .unwrap();
        assert!(est.lambda.abs() < 1e-6, "{}", est.lambda);
    }

    #[test]
    fn config_validation() {
        assert!(DivergenceConfig::default().validate().is_ok());
        let bad = DivergenceConfig {
            fit_t_end: 40.0,
            ..DivergenceConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
