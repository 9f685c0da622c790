//! Probability structure of the accident process: where a new accident
//! happens, how large and severe it is, how fast events occur, and the
//! composition-method sampler of the jump kernel.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use thiserror::Error;

use crate::capacity::{AccidentParams, CapacityField};
use crate::grid::Grid;
use crate::solver::{lwr_flux, DensityField};

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("total flux vanishes, the flux position measure is undefined")]
    ZeroFlux,
    #[error("neither flux nor density up-jumps are available to place an accident")]
    DegenerateState,
    #[error("no event possible: no active accident and zero accident rate")]
    NoEvent,
    #[error("invalid distribution: {0}")]
    Distribution(String),
}

/// Jump-process state: slot-indexed accidents (inactive slots have `drop == 0`)
/// and the density, which carries the current time.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub accidents: Vec<AccidentParams>,
    pub rho: DensityField,
}

impl ModelState {
    pub fn new(rho: DensityField) -> Self {
        Self {
            accidents: Vec::new(),
            rho,
        }
    }

    pub fn time(&self) -> f64 {
        self.rho.time
    }

    pub fn active_count(&self) -> usize {
        active_count(&self.accidents)
    }

    pub fn first_free_slot(&self) -> usize {
        first_free_slot(&self.accidents)
    }
}

/// Number of active accidents.
pub fn active_count(accidents: &[AccidentParams]) -> usize {
    accidents.iter().filter(|a| a.is_active()).count()
}

/// Smallest 1-based slot index whose accident is inactive. Slots past the end
/// of the list count as inactive.
pub fn first_free_slot(accidents: &[AccidentParams]) -> usize {
    accidents
        .iter()
        .position(|a| !a.is_active())
        .unwrap_or(accidents.len())
        + 1
}

/// Intensity scales of the three event sources.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    /// Accidents caused by high flux, per unit of total flux and time.
    pub flux: f64,
    /// Accidents at tailback ends, per unit of positive density jump and time.
    pub upjump: f64,
    /// Resolution rate of each active accident.
    pub resolve: f64,
}

impl RateParams {
    pub fn validate(&self) -> Result<(), MeasureError> {
        for (name, v) in [("flux", self.flux), ("upjump", self.upjump), ("resolve", self.resolve)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(MeasureError::Distribution(format!("rate {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Uniform accident size on `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeDist {
    min: f64,
    max: f64,
}

impl SizeDist {
    pub fn uniform(min: f64, max: f64) -> Result<Self, MeasureError> {
        if !(min > 0.0 && max >= min && max.is_finite()) {
            return Err(MeasureError::Distribution(format!(
                "size range [{min}, {max}] must satisfy 0 < min <= max"
            )));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.min + (self.max - self.min) * rng.random::<f64>()
    }
}

/// Finite distribution of capacity drops.
#[derive(Debug, Clone, PartialEq)]
pub struct CapDist {
    drops: Vec<f64>,
    weights: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl CapDist {
    /// Drops must lie in `(0, max_drop]` with `max_drop < 1`; weights sum to one.
    pub fn new(drops: Vec<f64>, weights: Vec<f64>, max_drop: f64) -> Result<Self, MeasureError> {
        let bad = |m: String| Err(MeasureError::Distribution(m));
        if drops.is_empty() || drops.len() != weights.len() {
            return bad("need one weight per capacity drop".into());
        }
        if !(0.0..1.0).contains(&max_drop) {
            return bad(format!("maximal drop must lie in [0, 1), got {max_drop}"));
        }
        if let Some(c) = drops.iter().find(|&&c| !(c > 0.0 && c <= max_drop)) {
            return bad(format!("capacity drop {c} outside (0, {max_drop}]"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("capacity drop weights must be non-negative and sum to 1".into());
        }
        let index = WeightedIndex::new(&weights).map_err(|e| MeasureError::Distribution(e.to_string()))?;
        Ok(Self { drops, weights, index })
    }

    pub fn drops(&self) -> &[f64] {
        &self.drops
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.drops[self.index.sample(rng)]
    }
}

/// `F(x_i, rho_i) = a_i f(rho_i)`, clipped at zero against round-off outside `[0, 1]`.
fn cell_flux(rho: f64, a: f64) -> f64 {
    (a * lwr_flux(rho)).max(0.0)
}

/// Discrete total flux `C_F = sum_i a_i f(rho_i) dx`.
pub fn flux_total(rho: &[f64], capacity: &CapacityField, grid: &Grid) -> f64 {
    rho.iter()
        .zip(capacity.values())
        .map(|(&r, &a)| cell_flux(r, a))
        .sum::<f64>()
        * grid.dx()
}

/// Flux-driven position law: piecewise constant density `weights[i]` on cell `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxMeasure {
    /// Density on each cell; `sum_i weights[i] * dx == 1`.
    pub weights: Vec<f64>,
    /// Normalizing constant `C_F`.
    pub total: f64,
}

pub fn flux_measure(rho: &[f64], capacity: &CapacityField, grid: &Grid) -> Result<FluxMeasure, MeasureError> {
    let total = flux_total(rho, capacity, grid);
    if !(total > 0.0) {
        return Err(MeasureError::ZeroFlux);
    }
    let weights = rho
        .iter()
        .zip(capacity.values())
        .map(|(&r, &a)| cell_flux(r, a) / total)
        .collect();
    Ok(FluxMeasure { weights, total })
}

/// Positive part of the discrete density derivative: atoms
/// `(rho_i - rho_{i-1})_+` at the interfaces `x_{i-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpJumps {
    /// `(i, mass)` for the atom at the left interface of cell `i`.
    pub atoms: Vec<(usize, f64)>,
    pub total: f64,
}

impl UpJumps {
    pub fn is_degenerate(&self) -> bool {
        !(self.total > 0.0)
    }
}

/// Total positive variation `D rho^+(R)`.
pub fn upjump_total(rho: &[f64]) -> f64 {
    let n = rho.len();
    (0..n).map(|i| (rho[i] - rho[(i + n - 1) % n]).max(0.0)).sum()
}

pub fn upjump_measure(rho: &[f64]) -> UpJumps {
    let n = rho.len();
    let atoms: Vec<(usize, f64)> = (0..n)
        .filter_map(|i| {
            let d = rho[i] - rho[(i + n - 1) % n];
            (d > 0.0).then_some((i, d))
        })
        .collect();
    let total = atoms.iter().map(|&(_, m)| m).sum();
    UpJumps { atoms, total }
}

/// Mixture `beta mu^F + (1 - beta) mu^D` of accident positions, ready to sample.
#[derive(Debug, Clone)]
pub struct PositionMeasure {
    beta: f64,
    flux: Option<(FluxMeasure, WeightedIndex<f64>)>,
    upjumps: Option<(UpJumps, WeightedIndex<f64>)>,
}

impl PositionMeasure {
    /// Weight actually placed on the flux component after degenerate
    /// components have been folded into the other one.
    pub fn effective_beta(&self) -> f64 {
        self.beta
    }

    pub fn flux_part(&self) -> Option<&FluxMeasure> {
        self.flux.as_ref().map(|(m, _)| m)
    }

    pub fn upjump_part(&self) -> Option<&UpJumps> {
        self.upjumps.as_ref().map(|(m, _)| m)
    }

    /// Picks the component, then a cell (uniform position inside it) or an
    /// interface atom (its exact coordinate).
    pub fn sample<R: Rng + ?Sized>(&self, grid: &Grid, rng: &mut R) -> f64 {
        let use_flux = rng.random::<f64>() < self.beta;
        match (use_flux, &self.flux, &self.upjumps) {
            (true, Some((_, index)), _) | (false, Some((_, index)), None) => {
                let cell = index.sample(rng);
                grid.wrap(grid.interface(cell) + grid.dx() * rng.random::<f64>())
            }
            (_, _, Some((jumps, index))) => grid.interface(jumps.atoms[index.sample(rng)].0),
            (_, None, None) => unreachable!("degenerate position measure is never constructed"),
        }
    }

    /// Probability that a sample falls into `[lo, hi)`; atoms count when
    /// `lo <= x < hi`.
    pub fn probability(&self, grid: &Grid, lo: f64, hi: f64) -> f64 {
        let dx = grid.dx();
        let flux = self.flux_part().map_or(0.0, |m| {
            m.weights
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let (a, b) = (grid.interface(i), grid.interface(i + 1));
                    w * (b.min(hi) - a.max(lo)).max(0.0).min(dx)
                })
                .sum()
        });
        let jumps = self.upjump_part().map_or(0.0, |j| {
            j.atoms
                .iter()
                .filter(|(i, _)| (lo..hi).contains(&grid.interface(*i)))
                .map(|(_, m)| m / j.total)
                .sum()
        });
        self.beta * flux + (1.0 - self.beta) * jumps
    }
}

fn weighted_index(weights: impl IntoIterator<Item = f64>) -> WeightedIndex<f64> {
    WeightedIndex::new(weights).expect("weights are non-negative with positive sum")
}

/// Builds the position mixture for `rho` under `capacity`.
///
/// A degenerate component hands its mixture weight to the other one; only if
/// both degenerate is there no position law.
pub fn position_measure(
    rho: &[f64],
    capacity: &CapacityField,
    grid: &Grid,
    beta: f64,
) -> Result<PositionMeasure, MeasureError> {
    let flux = match flux_measure(rho, capacity, grid) {
        Ok(m) if beta > 0.0 || upjump_total(rho) <= 0.0 => {
            let index = weighted_index(m.weights.iter().copied());
            Some((m, index))
        }
        _ => None,
    };
    let upjumps = if beta < 1.0 || flux.is_none() {
        Some(upjump_measure(rho))
            .filter(|j| !j.is_degenerate())
            .map(|j| {
                let index = weighted_index(j.atoms.iter().map(|&(_, m)| m));
                (j, index)
            })
    } else {
        None
    };
    let beta = match (&flux, &upjumps) {
        (None, None) => return Err(MeasureError::DegenerateState),
        (Some(_), None) => 1.0,
        (None, Some(_)) => 0.0,
        (Some(_), Some(_)) => beta,
    };
    Ok(PositionMeasure { beta, flux, upjumps })
}

/// Accident rate `lambda_A = lambda^F C_F + lambda^D D rho^+(R)`.
pub fn accident_rate(rho: &[f64], capacity: &CapacityField, grid: &Grid, rates: &RateParams) -> f64 {
    rates.flux * flux_total(rho, capacity, grid) + rates.upjump * upjump_total(rho)
}

/// Total jump rate `psi = lambda_A + lambda_R N(c)`.
pub fn rate(state: &ModelState, capacity: &CapacityField, grid: &Grid, rates: &RateParams) -> f64 {
    accident_rate(&state.rho.values, capacity, grid, rates) + rates.resolve * state.active_count() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpKind {
    Accident,
    Resolution,
}

impl JumpKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            JumpKind::Accident => "accident",
            JumpKind::Resolution => "resolution",
        }
    }
}

/// What a kernel draw did: which 1-based slot changed and the accident
/// involved (for a resolution, its parameters before removal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpOutcome {
    pub kind: JumpKind,
    pub slot: usize,
    pub accident: AccidentParams,
}

/// Static ingredients of the jump kernel.
#[derive(Debug, Clone)]
pub struct KernelParams {
    pub beta: f64,
    pub rates: RateParams,
    pub sizes: SizeDist,
    pub caps: CapDist,
}

/// Draws from the jump kernel by composition: first accident versus
/// resolution with odds `lambda_A : lambda_R N`, then the new accident's
/// position, size and drop, or a uniformly chosen active accident to resolve.
/// The density is left untouched.
pub fn sample_jump<R: Rng + ?Sized>(
    state: &mut ModelState,
    capacity: &CapacityField,
    grid: &Grid,
    kernel: &KernelParams,
    rng: &mut R,
) -> Result<JumpOutcome, MeasureError> {
    let accident_rate = accident_rate(&state.rho.values, capacity, grid, &kernel.rates);
    let active = state.active_count();
    let total = accident_rate + kernel.rates.resolve * active as f64;
    if !(total > 0.0) {
        return Err(MeasureError::NoEvent);
    }
    if rng.random::<f64>() < accident_rate / total {
        let position = position_measure(&state.rho.values, capacity, grid, kernel.beta)?.sample(grid, rng);
        let size = kernel.sizes.sample(rng);
        let drop = kernel.caps.sample(rng);
        let accident = AccidentParams::new(position, size, drop);
        let slot = state.first_free_slot();
        if slot > state.accidents.len() {
            state.accidents.push(accident);
        } else {
            state.accidents[slot - 1] = accident;
        }
        Ok(JumpOutcome {
            kind: JumpKind::Accident,
            slot,
            accident,
        })
    } else {
        let pick = rng.random_range(0..active);
        let index = state
            .accidents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_active())
            .nth(pick)
            .map(|(i, _)| i)
            .expect("pick is below the active count");
        let accident = state.accidents[index];
        state.accidents[index].drop = 0.0;
        Ok(JumpOutcome {
            kind: JumpKind::Resolution,
            slot: index + 1,
            accident,
        })
    }
}
