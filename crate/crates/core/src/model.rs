//! Planar multi-body spin model.
//!
//! Each lattice site carries a unit moment `n = (sin θ, 0, cos θ)` confined to
//! the x–z plane, with the magnetic field along +z. Three torques act on a
//! site: the double-well field torque `-μB sin 2θ`, nearest-neighbor spring
//! coupling on the chord between unit vectors, and (when switched on) linear
//! damping `-bω`.
//!
//! Positive torque increases θ. Integrator state vectors are laid out as
//! `[θ_0, .., θ_{n-1}, ω_0, .., ω_{n-1}]`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Chords shorter than this are rejected by the Cartesian oracle.
pub const ORACLE_MIN_CHORD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Magnetic moment magnitude |μ|.
    pub mu: f64,
    /// Field magnitude along +z.
    pub field_b: f64,
    pub spring_k: f64,
    /// Spring rest length on the unit-vector chord scale: 0 is ferromagnetic,
    /// 2 is anti-ferromagnetic.
    pub spring_a: f64,
    pub dissipation_b: f64,
    pub inertia: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            field_b: 1.0,
            spring_k: 10.0,
            spring_a: 2.0,
            dissipation_b: 1.0,
            inertia: 1.0,
            rows: 3,
            cols: 3,
        }
    }
}

impl ModelParams {
    pub fn n_sites(&self) -> usize {
        self.rows * self.cols
    }

    /// Checks every field invariant. Errors name the field as `model.<field>`.
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(&format!("model.{name}"), "must be finite"))
            }
        };
        finite("mu", self.mu)?;
        finite("field_b", self.field_b)?;
        finite("spring_k", self.spring_k)?;
        finite("spring_a", self.spring_a)?;
        finite("dissipation_b", self.dissipation_b)?;
        finite("inertia", self.inertia)?;
        if self.mu <= 0.0 {
            return Err(invalid("model.mu", "must be > 0"));
        }
        if self.inertia <= 0.0 {
            return Err(invalid("model.inertia", "must be > 0"));
        }
        if self.field_b < 0.0 {
            return Err(invalid("model.field_b", "must be >= 0"));
        }
        if self.spring_k < 0.0 {
            return Err(invalid("model.spring_k", "must be >= 0"));
        }
        if self.dissipation_b < 0.0 {
            return Err(invalid("model.dissipation_b", "must be >= 0"));
        }
        if !(0.0..=2.0).contains(&self.spring_a) {
            return Err(invalid("model.spring_a", "must lie in [0, 2]"));
        }
        if self.rows == 0 {
            return Err(invalid("model.rows", "must be >= 1"));
        }
        if self.cols == 0 {
            return Err(invalid("model.cols", "must be >= 1"));
        }
        Ok(())
    }
}

/// Angles and angular velocities of every site, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeState {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl LatticeState {
    pub fn new(theta: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        if theta.len() != omega.len() {
            return Err(Error::SizeMismatch {
                expected: theta.len(),
                got: omega.len(),
            });
        }
        Ok(Self { theta, omega })
    }

    pub fn uniform(n: usize, theta: f64) -> Self {
        Self {
            theta: vec![theta; n],
            omega: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.omega).all(|v| v.is_finite())
    }

    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.theta.len() != expected || self.omega.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                got: self.theta.len().max(self.omega.len()),
            });
        }
        Ok(())
    }

    /// Flattens into `[θ.., ω..]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.len());
        y.extend_from_slice(&self.theta);
        y.extend_from_slice(&self.omega);
        y
    }

    pub fn from_slice(y: &[f64]) -> Self {
        let n = y.len() / 2;
        Self {
            theta: y[..n].to_vec(),
            omega: y[n..].to_vec(),
        }
    }
}

/// Open-boundary 4-connected grid adjacency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborTable {
    rows: usize,
    cols: usize,
    adjacency: Vec<Vec<usize>>,
    /// Each undirected bond once, as `(i, j)` with `i < j`.
    bonds: Vec<(usize, usize)>,
}

impl NeighborTable {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(
                if rows == 0 {
                    "model.rows"
                } else {
                    "model.cols"
                },
                "lattice must have at least one site",
            ));
        }
        let n = rows * cols;
        let mut adjacency = vec![Vec::with_capacity(4); n];
        let mut bonds = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if r > 0 {
                    adjacency[i].push(i - cols);
                }
                if c > 0 {
                    adjacency[i].push(i - 1);
                }
                if c + 1 < cols {
                    adjacency[i].push(i + 1);
                    bonds.push((i, i + 1));
                }
                if r + 1 < rows {
                    adjacency[i].push(i + cols);
                    bonds.push((i, i + cols));
                }
            }
        }
        bonds.sort_unstable();
        Ok(Self {
            rows,
            cols,
            adjacency,
            bonds,
        })
    }

    pub fn for_params(params: &ModelParams) -> Result<Self> {
        Self::new(params.rows, params.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_sites(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, site: usize) -> &[usize] {
        &self.adjacency[site]
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }
}

pub fn build_neighbor_table(rows: usize, cols: usize) -> Result<NeighborTable> {
    NeighborTable::new(rows, cols)
}

/// `sin 2θ`, exactly zero at every float multiple of `FRAC_PI_2`.
///
/// The angle is reduced against the nearest multiple of π/2 first, so the
/// equilibria at 0, π/2 and π (as represented in `f64`) carry no rounding
/// torque that would break their symmetry.
pub fn sin_2theta(theta: f64) -> f64 {
    let k = (theta / FRAC_PI_2).round();
    let s = (2.0 * (theta - k * FRAC_PI_2)).sin();
    if k.rem_euclid(2.0) == 0.0 {
        s
    } else {
        -s
    }
}

/// Double-well field torque, zero at θ ∈ {0, π} and restoring toward both.
pub fn torque_sc(theta: f64, params: &ModelParams) -> f64 {
    -params.mu * params.field_b * sin_2theta(theta)
}

/// Torque on spin `j` exerted by its neighbor `i` through the chord spring.
///
/// Zero when the two unit vectors coincide, where the spring direction is
/// undefined.
pub fn pair_coupling_torque(theta_j: f64, theta_i: f64, params: &ModelParams) -> f64 {
    pair_torque_of_delta(theta_i - theta_j, params)
}

#[inline]
fn pair_torque_of_delta(delta: f64, params: &ModelParams) -> f64 {
    let (s_half, c_half) = (0.5 * delta).sin_cos();
    let chord = 2.0 * s_half.abs();
    if chord == 0.0 {
        return 0.0;
    }
    // sin(Δ)/d = sign(sin(Δ/2))·cos(Δ/2)
    params.mu * params.spring_k * (chord - params.spring_a) * s_half.signum() * c_half
}

/// Literal Cartesian evaluation of the summed spring force and `|μ| n × F`,
/// returning the y-component (the +θ rotation axis).
pub fn torque_nn_vector_oracle(
    theta_j: f64,
    neighbor_thetas: &[f64],
    params: &ModelParams,
) -> Result<f64> {
    let unit = |t: f64| [t.sin(), 0.0, t.cos()];
    let n = unit(theta_j);
    let mut force = [0.0; 3];
    for &ti in neighbor_thetas {
        let ni = unit(ti);
        let diff = [ni[0] - n[0], ni[1] - n[1], ni[2] - n[2]];
        let chord = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
        if chord < ORACLE_MIN_CHORD {
            return Err(Error::DegenerateChord { chord });
        }
        let scale = params.spring_k * (chord - params.spring_a) / chord;
        for (f, d) in force.iter_mut().zip(diff) {
            *f += scale * d;
        }
    }
    // (n × F)_y = n_z F_x − n_x F_z
    Ok(params.mu * (n[2] * force[0] - n[0] * force[2]))
}

/// Equations-of-motion right-hand side on flat `[θ.., ω..]` buffers.
pub fn eom_rhs_into(
    y: &[f64],
    dy: &mut [f64],
    params: &ModelParams,
    table: &NeighborTable,
    dissipation_on: bool,
) {
    let n = table.n_sites();
    let (theta, omega) = y.split_at(n);
    let (dtheta, domega) = dy.split_at_mut(n);
    dtheta.copy_from_slice(omega);
    for (acc, &t) in domega.iter_mut().zip(theta) {
        *acc = torque_sc(t, params);
    }
    for &(i, j) in table.bonds() {
        let tau = pair_torque_of_delta(theta[i] - theta[j], params);
        domega[j] += tau;
        domega[i] -= tau;
    }
    let inv_i = params.inertia.recip();
    let b = if dissipation_on {
        params.dissipation_b
    } else {
        0.0
    };
    for (acc, &w) in domega.iter_mut().zip(omega) {
        *acc = (*acc - b * w) * inv_i;
    }
}

/// Time derivative of `state`; the `theta` field holds dθ/dt and `omega`
/// holds dω/dt.
pub fn eom_rhs(
    state: &LatticeState,
    params: &ModelParams,
    table: &NeighborTable,
    dissipation_on: bool,
) -> Result<LatticeState> {
    state.check_len(table.n_sites())?;
    let y = state.to_vec();
    let mut dy = vec![0.0; y.len()];
    eom_rhs_into(&y, &mut dy, params, table, dissipation_on);
    Ok(LatticeState::from_slice(&dy))
}

/// Kinetic plus field plus spring energy. The negative angle-gradient of the
/// potential part reproduces the conservative torques.
pub fn total_energy(state: &LatticeState, params: &ModelParams, table: &NeighborTable) -> f64 {
    energy_of_slice(&state.theta, &state.omega, params, table)
}

pub(crate) fn energy_of_slice(
    theta: &[f64],
    omega: &[f64],
    params: &ModelParams,
    table: &NeighborTable,
) -> f64 {
    let kinetic: f64 = omega.iter().map(|w| 0.5 * params.inertia * w * w).sum();
    let field: f64 = theta
        .iter()
        .map(|t| -0.5 * params.mu * params.field_b * (2.0 * t).cos())
        .sum();
    let spring: f64 = table
        .bonds()
        .iter()
        .map(|&(i, j)| {
            let chord = 2.0 * (0.5 * (theta[i] - theta[j])).sin().abs();
            let stretch = chord - params.spring_a;
            0.5 * params.mu * params.spring_k * stretch * stretch
        })
        .sum();
    kinetic + field + spring
}
