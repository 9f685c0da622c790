//! Lax-Friedrichs evolution of the LWR density on the ring road, plus the
//! conservation, total-variation and sup-norm diagnostics that go with it.

use thiserror::Error;

use crate::capacity::CapacityField;
use crate::grid::Grid;

/// `sup |f|` over `[0, 1]`.
pub const FLUX_SUP: f64 = 0.25;
/// `sup |f'|` over `[0, 1]`.
pub const FLUX_DERIV_SUP: f64 = 1.0;
/// Densities outside `[-tol, 1 + tol]` invalidate a run.
pub const DENSITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("capacity supremum is zero, no CFL time step exists")]
    ZeroCapacity,
    #[error("cfl factor must lie in (0, 1], got {0}")]
    CflFactor(f64),
    #[error("cannot evolve backwards from t = {from} to t = {to}")]
    Backwards { from: f64, to: f64 },
    #[error("density {value} left [0, 1] in cell {cell} at t = {time}")]
    DensityOutOfRange { time: f64, cell: usize, value: f64 },
}

/// LWR flux `f(rho) = rho (1 - rho)`.
#[inline]
pub fn lwr_flux(rho: f64) -> f64 {
    rho * (1.0 - rho)
}

#[inline]
pub fn lwr_flux_deriv(rho: f64) -> f64 {
    1.0 - 2.0 * rho
}

/// Cell means of the density and the time they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        Self { values, time }
    }

    pub fn constant(value: f64, grid: &Grid) -> Self {
        Self::new(vec![value; grid.cells()], 0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mass(&self, grid: &Grid) -> f64 {
        mass(&self.values, grid)
    }

    pub fn total_variation(&self) -> f64 {
        total_variation(&self.values)
    }
}

/// `sum_i rho_i dx`.
pub fn mass(values: &[f64], grid: &Grid) -> f64 {
    values.iter().sum::<f64>() * grid.dx()
}

/// Periodic total variation, including the wrap-around difference.
pub fn total_variation(values: &[f64]) -> f64 {
    let n = values.len();
    (0..n).map(|i| (values[i] - values[(i + n - 1) % n]).abs()).sum()
}

/// `dt = cfl_factor * dx / (sup|a| sup|f'|)` with `sup|f'| = 1` on `[0, 1]`.
pub fn cfl_timestep(capacity: &CapacityField, grid: &Grid, cfl_factor: f64) -> Result<f64, SolverError> {
    if !(cfl_factor > 0.0 && cfl_factor <= 1.0) {
        return Err(SolverError::CflFactor(cfl_factor));
    }
    if !(capacity.sup() > 0.0) {
        return Err(SolverError::ZeroCapacity);
    }
    Ok(cfl_factor * grid.dx() / (capacity.sup() * FLUX_DERIV_SUP))
}

/// One Lax-Friedrichs step with ratio `lambda = dt / dx`, periodic indices.
///
/// `out_i = (rho_{i+1} + rho_{i-1}) / 2 - lambda / 2 (a_{i+1} f(rho_{i+1}) - a_{i-1} f(rho_{i-1}))`
pub fn lxf_step(rho: &[f64], capacity: &[f64], lambda: f64, out: &mut [f64]) {
    let n = rho.len();
    debug_assert!(n >= 3 && capacity.len() == n && out.len() == n);
    let half = 0.5 * lambda;
    let flux = |i: usize| capacity[i] * lwr_flux(rho[i]);
    out[0] = 0.5 * (rho[1] + rho[n - 1]) - half * (flux(1) - flux(n - 1));
    for i in 1..n - 1 {
        out[i] = 0.5 * (rho[i + 1] + rho[i - 1]) - half * (flux(i + 1) - flux(i - 1));
    }
    out[n - 1] = 0.5 * (rho[0] + rho[n - 2]) - half * (flux(0) - flux(n - 2));
}

fn check_range(values: &[f64], time: f64) -> Result<(), SolverError> {
    match values
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v >= -DENSITY_TOLERANCE && v <= 1.0 + DENSITY_TOLERANCE))
    {
        Some((cell, &value)) => Err(SolverError::DensityOutOfRange { time, cell, value }),
        None => Ok(()),
    }
}

/// Deterministic flow `phi_t` started from an anchor density.
///
/// Full CFL steps are taken on the time grid `t_0 + k dt`; the state at an
/// arbitrary time is one shortened step from the last grid state at or before
/// it. The result therefore depends only on the anchor and the target time,
/// not on how a caller chunks its queries.
#[derive(Debug, Clone)]
pub struct Flow {
    grid: Grid,
    capacity: CapacityField,
    dt: f64,
    anchor: DensityField,
    steps: u64,
    base: Vec<f64>,
    scratch: Vec<f64>,
}

impl Flow {
    pub fn new(anchor: &DensityField, capacity: &CapacityField, grid: &Grid, cfl_factor: f64) -> Result<Self, SolverError> {
        assert_eq!(anchor.values.len(), grid.cells(), "density does not match the grid");
        let dt = cfl_timestep(capacity, grid, cfl_factor)?;
        check_range(&anchor.values, anchor.time)?;
        Ok(Self {
            grid: *grid,
            capacity: capacity.clone(),
            dt,
            anchor: anchor.clone(),
            steps: 0,
            base: anchor.values.clone(),
            scratch: vec![0.0; grid.cells()],
        })
    }

    /// Full CFL step size.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start_time(&self) -> f64 {
        self.anchor.time
    }

    pub fn capacity(&self) -> &CapacityField {
        &self.capacity
    }

    fn grid_time(&self, k: u64) -> f64 {
        self.anchor.time + k as f64 * self.dt
    }

    /// Largest `k` with `grid_time(k) <= t`.
    fn last_grid_index(&self, t: f64) -> u64 {
        let mut k = ((t - self.anchor.time) / self.dt).floor().max(0.0) as u64;
        while self.grid_time(k + 1) <= t {
            k += 1;
        }
        while k > 0 && self.grid_time(k) > t {
            k -= 1;
        }
        k
    }

    /// Grid times `t_0, t_0 + dt, ...` strictly below `t`, followed by `t`.
    pub fn time_grid(&self, t: f64) -> Vec<f64> {
        let mut times = Vec::new();
        let mut k = 0;
        while self.grid_time(k) < t {
            times.push(self.grid_time(k));
            k += 1;
        }
        times.push(t);
        times
    }

    fn advance_base(&mut self, k: u64) -> Result<(), SolverError> {
        if k < self.steps {
            self.base.copy_from_slice(&self.anchor.values);
            self.steps = 0;
        }
        let lambda = self.dt / self.grid.dx();
        while self.steps < k {
            lxf_step(&self.base, self.capacity.values(), lambda, &mut self.scratch);
            std::mem::swap(&mut self.base, &mut self.scratch);
            self.steps += 1;
            check_range(&self.base, self.grid_time(self.steps))?;
        }
        Ok(())
    }

    /// Writes `phi_{t - t_0}(rho_0)` into `out`.
    pub fn state_at(&mut self, t: f64, out: &mut DensityField) -> Result<(), SolverError> {
        if t < self.anchor.time {
            return Err(SolverError::Backwards {
                from: self.anchor.time,
                to: t,
            });
        }
        let k = self.last_grid_index(t);
        self.advance_base(k)?;
        let rest = t - self.grid_time(k);
        out.values.resize(self.base.len(), 0.0);
        if rest > 0.0 {
            lxf_step(&self.base, self.capacity.values(), rest / self.grid.dx(), &mut out.values);
            check_range(&out.values, t)?;
        } else {
            out.values.copy_from_slice(&self.base);
        }
        out.time = t;
        Ok(())
    }
}

/// Evolves `rho` to `t_target` with CFL steps and a shortened final step.
pub fn evolve(
    rho: &DensityField,
    capacity: &CapacityField,
    grid: &Grid,
    cfl_factor: f64,
    t_target: f64,
) -> Result<DensityField, SolverError> {
    let mut flow = Flow::new(rho, capacity, grid, cfl_factor)?;
    let mut out = rho.clone();
    flow.state_at(t_target, &mut out)?;
    Ok(out)
}

/// A-priori estimates from the stability analysis of the scheme, evaluated
/// with the discrete norms of the capacity.
pub mod bounds {
    use super::{FLUX_DERIV_SUP, FLUX_SUP};
    use crate::capacity::CapacityField;

    /// `||rho^{j+1}||_inf <= ||rho^j||_inf + dt ||f||_inf ||a'||_inf`.
    pub fn sup_step(prev_sup: f64, dt: f64, capacity: &CapacityField) -> f64 {
        prev_sup + dt * FLUX_SUP * capacity.sup_deriv()
    }

    /// `||rho(t)||_inf <= ||rho_0||_inf + t ||a'||_inf ||f||_inf`.
    pub fn sup_norm(initial_sup: f64, t: f64, capacity: &CapacityField) -> f64 {
        initial_sup + t * capacity.sup_deriv() * FLUX_SUP
    }

    /// `TV(rho^{j+1}) <= (1 + dt ||a'|| ||f'||) TV(rho^j) + dt 3/2 ||f|| ||a''||_1`.
    pub fn tv_step(prev_tv: f64, dt: f64, capacity: &CapacityField) -> f64 {
        (1.0 + dt * capacity.sup_deriv() * FLUX_DERIV_SUP) * prev_tv + dt * 1.5 * FLUX_SUP * capacity.second_deriv_l1()
    }

    /// Uniform TV bound `C_1` on `[0, horizon]`, the closed form of iterating
    /// [`tv_step`].
    pub fn total_variation(initial_tv: f64, horizon: f64, capacity: &CapacityField) -> f64 {
        let growth = capacity.sup_deriv() * FLUX_DERIV_SUP;
        let source = 1.5 * FLUX_SUP * capacity.second_deriv_l1();
        if growth == 0.0 {
            return initial_tv + horizon * source;
        }
        let e = (growth * horizon).exp();
        // `e` may overflow; a flat datum then still contributes nothing
        let carried = if initial_tv == 0.0 { 0.0 } else { e * initial_tv };
        carried + source / growth * (e - 1.0)
    }

    /// Bound on the per-unit-time growth of `t -> TV(rho(t))` on `[0, horizon]`.
    pub fn tv_growth_rate(initial_tv: f64, horizon: f64, capacity: &CapacityField) -> f64 {
        total_variation(initial_tv, horizon, capacity) * capacity.sup_deriv() * FLUX_DERIV_SUP
            + 1.5 * FLUX_SUP * capacity.second_deriv_l1()
    }
}
