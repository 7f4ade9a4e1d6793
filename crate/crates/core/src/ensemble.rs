//! Monte Carlo sweep over initial mean angles in `[0, π]`, tallying collapse
//! outcomes against `cos²(θ/2)`.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::integrator::IntegratorConfig;
use crate::model::ModelParams;
use crate::trajectory::{simulate, Outcome, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Grid points spanning `[0, π]` inclusive.
    pub n_angles: usize,
    pub trials_per_angle: usize,
    pub base_seed: u64,
    /// Worker threads. Results do not depend on it.
    pub parallelism: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_angles: 21,
            trials_per_angle: 200,
            base_seed: 0x5eed,
            parallelism: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_angles < 2 {
            return Err(invalid("sweep.n_angles", "must be >= 2"));
        }
        if self.trials_per_angle < 1 {
            return Err(invalid("sweep.trials_per_angle", "must be >= 1"));
        }
        if self.parallelism < 1 {
            return Err(invalid("sweep.parallelism", "must be >= 1"));
        }
        Ok(())
    }

    pub fn angle(&self, index: usize) -> f64 {
        if index + 1 == self.n_angles {
            PI
        } else {
            index as f64 * PI / (self.n_angles - 1) as f64
        }
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.n_angles).map(|m| self.angle(m)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleStat {
    pub mean_theta: f64,
    pub n_up: usize,
    pub n_down: usize,
    pub n_unsettled: usize,
    /// `n_up / (n_up + n_down)`; `None` when every trial was unsettled.
    pub fraction_up: Option<f64>,
    pub predicted: f64,
    pub residual: Option<f64>,
}

impl AngleStat {
    fn from_outcomes(mean_theta: f64, outcomes: &[Outcome]) -> Self {
        let count = |o: Outcome| outcomes.iter().filter(|&&x| x == o).count();
        let (n_up, n_down, n_unsettled) = (
            count(Outcome::Up),
            count(Outcome::Down),
            count(Outcome::Unsettled),
        );
        let predicted = predicted_up(mean_theta);
        let fraction_up = (n_up + n_down > 0).then(|| n_up as f64 / (n_up + n_down) as f64);
        Self {
            mean_theta,
            n_up,
            n_down,
            n_unsettled,
            fraction_up,
            predicted,
            residual: fraction_up.map(|f| f - predicted),
        }
    }

    pub fn trials(&self) -> usize {
        self.n_up + self.n_down + self.n_unsettled
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Ascending in `mean_theta`.
    pub stats: Vec<AngleStat>,
    /// `None` when no angle has a defined fraction.
    pub rms_residual: Option<f64>,
    pub sweep: SweepConfig,
    pub params: ModelParams,
    pub run: RunConfig,
    /// Not serialized, so reruns produce identical bytes.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl SweepResult {
    pub fn total_unsettled(&self) -> usize {
        self.stats.iter().map(|s| s.n_unsettled).sum()
    }

    pub fn total_trials(&self) -> usize {
        self.stats.iter().map(AngleStat::trials).sum()
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-trial seed from the master seed and grid coordinates.
///
/// For a fixed master seed the map is a bijection of the packed
/// `(angle << 32) ^ trial` counter, so distinct grid points below 2^32 never
/// collide; for fixed coordinates it is a bijection of the master seed.
pub fn derive_trial_seed(base_seed: u64, angle_index: u64, trial_index: u64) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let counter = (angle_index << 32) ^ trial_index;
    mix64(mix64(base_seed.wrapping_add(GOLDEN)).wrapping_add(counter.wrapping_mul(GOLDEN)))
}

/// `cos²(θ/2)`, written as `(1 + cos θ)/2` so the endpoints and midpoint
/// come out exact.
pub fn predicted_up(mean_theta: f64) -> f64 {
    0.5 * (1.0 + mean_theta.cos())
}

/// Root mean square of the defined per-angle residuals.
pub fn rms_residual(stats: &[AngleStat]) -> Result<f64> {
    let residuals: Vec<f64> = stats.iter().filter_map(|s| s.residual).collect();
    if residuals.is_empty() {
        return Err(Error::AllUnsettled);
    }
    let mean_sq = residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64;
    Ok(mean_sq.sqrt())
}

/// Runs every `(angle, trial)` pair and aggregates per angle.
///
/// Trials are fanned out over a dedicated pool of `sweep.parallelism`
/// threads; each trial's seed depends only on its grid coordinates, and
/// results are collected in grid order, so the output is independent of the
/// thread count.
pub fn run_sweep(
    sweep: &SweepConfig,
    params: &ModelParams,
    run: &RunConfig,
    integrator: &IntegratorConfig,
) -> Result<SweepResult> {
    sweep.validate()?;
    params.validate()?;
    run.validate()?;
    integrator.validate()?;

    let start = Instant::now();
    let trials = sweep.trials_per_angle;
    let total = sweep.n_angles * trials;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep.parallelism)
        .build()
        .map_err(|e| invalid("sweep.parallelism", e.to_string()))?;

    let outcomes: Vec<Outcome> = pool.install(|| {
        (0..total)
            .into_par_iter()
            .map(|idx| {
                let (m, r) = (idx / trials, idx % trials);
                let seed = derive_trial_seed(sweep.base_seed, m as u64, r as u64);
                simulate(sweep.angle(m), seed, params, run, integrator, false)
                    .map(|rec| rec.outcome)
                    .map_err(|e| Error::Trial {
                        angle: m,
                        trial: r,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let stats: Vec<AngleStat> = outcomes
        .chunks(trials)
        .enumerate()
        .map(|(m, chunk)| AngleStat::from_outcomes(sweep.angle(m), chunk))
        .collect();
    let rms = rms_residual(&stats).ok();
    Ok(SweepResult {
        stats,
        rms_residual: rms,
        sweep: *sweep,
        params: *params,
        run: *run,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn prediction_values() {
        assert_eq!(predicted_up(0.0), 1.0);
        assert_eq!(predicted_up(PI), 0.0);
        assert_eq!(predicted_up(FRAC_PI_2), 0.5);
    }

    #[test]
    fn prediction_mirror_sums_to_one() {
        let sweep = SweepConfig {
            n_angles: 1001,
            ..SweepConfig::default()
        };
        for m in 0..sweep.n_angles {
            let a = predicted_up(sweep.angle(m));
            let b = predicted_up(sweep.angle(sweep.n_angles - 1 - m));
            assert!((a + b - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn angle_grid_is_inclusive() {
        let sweep = SweepConfig {
            n_angles: 5,
            ..SweepConfig::default()
        };
        let a = sweep.angles();
        assert_eq!(a[0], 0.0);
        assert_eq!(a[4], PI);
        assert!((a[2] - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        assert_eq!(derive_trial_seed(7, 3, 4), derive_trial_seed(7, 3, 4));
        let mut seen = HashSet::new();
        for m in 0..1001u64 {
            for r in 0..200u64 {
                assert!(seen.insert(derive_trial_seed(12345, m, r)));
            }
        }
    }

    #[test]
    fn rms_values() {
        let stat = |f: Option<f64>, p: f64| AngleStat {
            mean_theta: 0.0,
            n_up: 0,
            n_down: 0,
            n_unsettled: 0,
            fraction_up: f,
            predicted: p,
            residual: f.map(|f| f - p),
        };
        assert_eq!(rms_residual(&[stat(Some(0.3), 0.3)]).unwrap(), 0.0);
        assert_eq!(rms_residual(&[stat(Some(1.0), 0.5)]).unwrap(), 0.5);
        assert_eq!(rms_residual(&[stat(None, 0.5)]), Err(Error::AllUnsettled));
        // undefined angles are skipped
        assert_eq!(
            rms_residual(&[stat(None, 0.5), stat(Some(1.0), 0.5)]).unwrap(),
            0.5
        );
    }

    #[test]
    fn tally_excludes_unsettled_from_fraction() {
        let s = AngleStat::from_outcomes(
            FRAC_PI_2,
            &[Outcome::Up, Outcome::Unsettled, Outcome::Down, Outcome::Up],
        );
        assert_eq!((s.n_up, s.n_down, s.n_unsettled), (2, 1, 1));
        assert!((s.fraction_up.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let s = AngleStat::from_outcomes(0.0, &[Outcome::Unsettled]);
        assert_eq!(s.fraction_up, None);
    }

    #[test]
    fn sweep_validation() {
        let bad = SweepConfig {
            n_angles: 1,
            ..SweepConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SweepConfig {
            parallelism: 0,
            ..SweepConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
