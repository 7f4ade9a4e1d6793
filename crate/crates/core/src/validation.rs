//! Pass/fail checks of a sweep against the `cos²(θ/2)` collapse curve.

use serde::{Deserialize, Serialize};

use crate::ensemble::SweepResult;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub max_rms_residual: f64,
    /// Minimum fraction up at θ = 0.
    pub min_up_at_zero: f64,
    /// Maximum fraction up at θ = π.
    pub max_up_at_pi: f64,
    pub max_unsettled_rate: f64,
    /// Largest tolerated rise of fraction up between adjacent angles.
    pub max_adjacent_increase: f64,
    /// Mirror-pair tolerance in binomial standard errors.
    pub mirror_sigmas: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_rms_residual: 0.07,
            min_up_at_zero: 0.97,
            max_up_at_pi: 0.03,
            max_unsettled_rate: 0.02,
            max_adjacent_increase: 0.10,
            mirror_sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

pub fn check_rms(result: &SweepResult, t: &Thresholds) -> Check {
    let passed = result.rms_residual.is_some_and(|r| r <= t.max_rms_residual);
    Check::new(
        "rms_residual",
        passed,
        format!(
            "{} (limit {})",
            fmt_opt(result.rms_residual),
            t.max_rms_residual
        ),
    )
}

pub fn check_endpoints(result: &SweepResult, t: &Thresholds) -> Check {
    let first = result.stats.first().and_then(|s| s.fraction_up);
    let last = result.stats.last().and_then(|s| s.fraction_up);
    let passed =
        first.is_some_and(|f| f >= t.min_up_at_zero) && last.is_some_and(|f| f <= t.max_up_at_pi);
    Check::new(
        "endpoints",
        passed,
        format!(
            "fraction_up(0) = {} (min {}), fraction_up(pi) = {} (max {})",
            fmt_opt(first),
            t.min_up_at_zero,
            fmt_opt(last),
            t.max_up_at_pi
        ),
    )
}

pub fn check_unsettled(result: &SweepResult, t: &Thresholds) -> Check {
    let total = result.total_trials().max(1);
    let rate = result.total_unsettled() as f64 / total as f64;
    Check::new(
        "unsettled_rate",
        rate <= t.max_unsettled_rate,
        format!(
            "{}/{} = {rate:.4} (max {})",
            result.total_unsettled(),
            result.total_trials(),
            t.max_unsettled_rate
        ),
    )
}

/// Vacuous for grids of fewer than three angles.
pub fn check_monotonic(result: &SweepResult, t: &Thresholds) -> Check {
    if result.stats.len() < 3 {
        return Check::new("monotonic", true, "vacuous (fewer than 3 angles)".into());
    }
    let fractions: Vec<Option<f64>> = result.stats.iter().map(|s| s.fraction_up).collect();
    let worst = fractions
        .windows(2)
        .filter_map(|w| Some(w[1]? - w[0]?))
        .fold(f64::NEG_INFINITY, f64::max);
    let undefined = fractions.iter().filter(|f| f.is_none()).count();
    let passed = worst <= t.max_adjacent_increase && undefined == 0;
    Check::new(
        "monotonic",
        passed,
        format!(
            "largest adjacent increase {worst:.4} (max {}), {undefined} undefined angles",
            t.max_adjacent_increase
        ),
    )
}

/// `f(θ) + f(π − θ) = 1` per mirror pair, with the pooled binomial standard
/// error of the two fractions.
pub fn check_mirror(result: &SweepResult, t: &Thresholds) -> Check {
    let n = result.stats.len();
    let mut worst_z: f64 = 0.0;
    let mut failures = 0;
    for m in 0..n.div_ceil(2) {
        let (a, b) = (&result.stats[m], &result.stats[n - 1 - m]);
        let (Some(fa), Some(fb)) = (a.fraction_up, b.fraction_up) else {
            failures += 1;
            continue;
        };
        let na = (a.n_up + a.n_down) as f64;
        let nb = (b.n_up + b.n_down) as f64;
        let deviation = fa + fb - 1.0;
        let pooled = 0.5 * (fa + 1.0 - fb);
        let var = pooled * (1.0 - pooled);
        let se = if m == n - 1 - m {
            2.0 * (var / na).sqrt()
        } else {
            (var * (1.0 / na + 1.0 / nb)).sqrt()
        };
        let ok = deviation.abs() <= t.mirror_sigmas * se;
        if !ok {
            failures += 1;
        }
        let z = if se > 0.0 {
            deviation.abs() / se
        } else if deviation == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst_z = worst_z.max(z);
    }
    Check::new(
        "mirror_symmetry",
        failures == 0,
        format!(
            "{failures} of {} pairs outside {} SE, worst |deviation|/SE = {worst_z:.2}",
            n.div_ceil(2),
            t.mirror_sigmas
        ),
    )
}

/// Every check, in report order.
pub fn check_sweep(result: &SweepResult, t: &Thresholds) -> Vec<Check> {
    vec![
        check_rms(result, t),
        check_endpoints(result, t),
        check_unsettled(result, t),
        check_monotonic(result, t),
        check_mirror(result, t),
    ]
}
