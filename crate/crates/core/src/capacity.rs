//! Space-dependent capacity `a(x) = c_road(x) * prod_i c_a(x, p_i, s_i, c_i)`.
//!
//! Both the road profile and every accident factor are periodic step
//! functions on `[-L, L)`. In smooth mode each factor is convolved with a
//! compactly supported bump kernel before the product is taken, which gives
//! the `C^2` capacity the total-variation estimates of the solver assume.

use std::sync::OnceLock;

use thiserror::Error;

use crate::grid::{wrap_periodic, Grid};

#[derive(Debug, Error, PartialEq)]
pub enum CapacityError {
    #[error("road profile: {0}")]
    Road(String),
    #[error("accident {slot}: {reason}")]
    Accident { slot: usize, reason: String },
    #[error("mollifier: {0}")]
    Mollifier(String),
    #[error("capacity {value} at cell {cell} is not positive")]
    NonPositive { cell: usize, value: f64 },
}

/// Right-continuous periodic step function on `[-L, L)`.
///
/// `values[k]` holds on `[breaks[k], breaks[k + 1])`, the last piece wrapping
/// around to `breaks[0] + 2L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicStep {
    half_length: f64,
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl PeriodicStep {
    pub fn constant(half_length: f64, value: f64) -> Self {
        Self {
            half_length,
            breaks: vec![-half_length],
            values: vec![value],
        }
    }

    /// `breaks` must be sorted and lie in `[-L, L)`; one value per break.
    pub fn new(half_length: f64, breaks: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(breaks.len(), values.len());
        debug_assert!(!breaks.is_empty());
        debug_assert!(breaks.windows(2).all(|w| w[0] < w[1]));
        Self {
            half_length,
            breaks,
            values,
        }
    }

    pub fn value_at(&self, x: f64) -> f64 {
        let y = wrap_periodic(x, self.half_length);
        let k = self.breaks.partition_point(|&b| b <= y);
        if k == 0 {
            *self.values.last().unwrap()
        } else {
            self.values[k - 1]
        }
    }

    /// Break positions where the value actually changes.
    pub fn discontinuities(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.values.len();
        (0..n).filter_map(move |k| {
            let prev = self.values[(k + n - 1) % n];
            (prev != self.values[k]).then_some(self.breaks[k])
        })
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Mollifier {
    /// Use the step functions as they are.
    #[default]
    Sharp,
    /// Convolve with the unit-mass bump supported on `[-epsilon, epsilon]`.
    Smooth { epsilon: f64 },
}

impl Mollifier {
    pub fn validate(&self) -> Result<(), CapacityError> {
        match *self {
            Mollifier::Sharp => Ok(()),
            Mollifier::Smooth { epsilon } if epsilon.is_finite() && epsilon > 0.0 => Ok(()),
            Mollifier::Smooth { epsilon } => Err(CapacityError::Mollifier(format!(
                "epsilon must be positive, got {epsilon}"
            ))),
        }
    }
}

const KERNEL_PANELS: usize = 64;

fn bump(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

fn simpson(a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = bump(a) + bump(b);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * bump(a + k as f64 * h);
    }
    acc * h / 3.0
}

fn half_mass() -> f64 {
    static HALF: OnceLock<f64> = OnceLock::new();
    *HALF.get_or_init(|| simpson(-1.0, 0.0, KERNEL_PANELS))
}

/// Cumulative mass of the normalized bump on `[-1, u]`.
///
/// Symmetric by construction: `kernel_cdf(-u) == 1 - kernel_cdf(u)` and
/// `kernel_cdf(0) == 0.5` exactly.
pub fn kernel_cdf(u: f64) -> f64 {
    if u <= -1.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else if u > 0.0 {
        1.0 - kernel_cdf(-u)
    } else {
        simpson(-1.0, u, KERNEL_PANELS) / (2.0 * half_mass())
    }
}

/// Normalized bump density `M_eps(x)`.
pub fn kernel_density(x: f64, epsilon: f64) -> f64 {
    bump(x / epsilon) / (2.0 * half_mass() * epsilon)
}

/// `(step * M_eps)(x)` in smooth mode, `step(x)` in sharp mode.
///
/// The convolution is split at the discontinuities inside the kernel window,
/// so each piece contributes its value times the kernel mass over the piece.
pub fn mollify(step: &PeriodicStep, mollifier: Mollifier, x: f64) -> f64 {
    let epsilon = match mollifier {
        Mollifier::Sharp => return step.value_at(x),
        Mollifier::Smooth { epsilon } => epsilon,
    };
    let period = 2.0 * step.half_length;
    let (lo, hi) = (x - epsilon, x + epsilon);
    let mut cuts: Vec<f64> = Vec::new();
    for d in step.discontinuities() {
        for shift in [-period, 0.0, period] {
            let z = d + shift;
            if z > lo && z < hi {
                cuts.push(z);
            }
        }
    }
    if cuts.is_empty() {
        return step.value_at(x);
    }
    cuts.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    let mut left = lo;
    for right in cuts.into_iter().chain(std::iter::once(hi)) {
        let mass = kernel_cdf((x - left) / epsilon) - kernel_cdf((x - right) / epsilon);
        acc += mass * step.value_at(0.5 * (left + right));
        left = right;
    }
    acc
}

/// Piecewise-constant road capacity `c~_road`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadProfile {
    breakpoints: Vec<f64>,
    capacities: Vec<f64>,
    floor: f64,
}

impl RoadProfile {
    /// `breakpoints` runs from `-L` to `L` inclusive; `capacities[m]` applies
    /// on `[x_m, x_{m+1})`.
    pub fn new(breakpoints: Vec<f64>, capacities: Vec<f64>, floor: f64) -> Result<Self, CapacityError> {
        let bad = |msg: String| Err(CapacityError::Road(msg));
        if breakpoints.len() < 2 || capacities.len() != breakpoints.len() - 1 {
            return bad(format!(
                "need M+1 breakpoints for M capacities, got {} and {}",
                breakpoints.len(),
                capacities.len()
            ));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return bad("breakpoints must be strictly increasing".into());
        }
        let (first, last) = (breakpoints[0], breakpoints[breakpoints.len() - 1]);
        if (first + last).abs() > 1e-12 * last.abs().max(1.0) || last <= 0.0 {
            return bad(format!("breakpoints must span [-L, L], got [{first}, {last}]"));
        }
        if !(floor.is_finite() && floor > 0.0) {
            return bad(format!("capacity floor must be positive, got {floor}"));
        }
        if let Some(c) = capacities.iter().find(|&&c| !(c >= floor && c.is_finite())) {
            return bad(format!("capacity {c} is below the floor {floor}"));
        }
        if capacities[0] != capacities[capacities.len() - 1] {
            return bad("first and last segment capacities must match for the periodic wrap".into());
        }
        Ok(Self {
            breakpoints,
            capacities,
            floor,
        })
    }

    pub fn uniform(half_length: f64, capacity: f64) -> Result<Self, CapacityError> {
        Self::new(vec![-half_length, half_length], vec![capacity], capacity)
    }

    pub fn half_length(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn max_capacity(&self) -> f64 {
        self.capacities.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_step(&self) -> PeriodicStep {
        let m = self.capacities.len();
        PeriodicStep::new(
            self.half_length(),
            self.breakpoints[..m].to_vec(),
            self.capacities.clone(),
        )
    }
}

/// One accident: position `p`, size `s` and capacity drop `c`.
/// A slot with `drop == 0` is inactive.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AccidentParams {
    pub position: f64,
    pub size: f64,
    pub drop: f64,
}

impl AccidentParams {
    pub fn new(position: f64, size: f64, drop: f64) -> Self {
        Self { position, size, drop }
    }

    pub fn is_active(&self) -> bool {
        self.drop > 0.0
    }

    pub fn validate(&self, slot: usize) -> Result<(), CapacityError> {
        let reason = if !self.position.is_finite() {
            "position must be finite".to_string()
        } else if !(self.size.is_finite() && self.size > 0.0) && self.is_active() {
            format!("size must be positive, got {}", self.size)
        } else if !(0.0..1.0).contains(&self.drop) {
            format!("capacity drop must lie in [0, 1), got {}", self.drop)
        } else {
            return Ok(());
        };
        Err(CapacityError::Accident { slot, reason })
    }

    /// Factor `1 - c` on `[p - s/2, p + s/2)` modulo the ring, `1` elsewhere.
    pub fn factor_step(&self, half_length: f64) -> PeriodicStep {
        let reduced = 1.0 - self.drop;
        if !self.is_active() {
            return PeriodicStep::constant(half_length, 1.0);
        }
        if self.size >= 2.0 * half_length {
            return PeriodicStep::constant(half_length, reduced);
        }
        let lo = wrap_periodic(self.position - 0.5 * self.size, half_length);
        let hi = wrap_periodic(self.position + 0.5 * self.size, half_length);
        if lo < hi {
            PeriodicStep::new(half_length, vec![lo, hi], vec![reduced, 1.0])
        } else if hi < lo {
            PeriodicStep::new(half_length, vec![hi, lo], vec![1.0, reduced])
        } else {
            // interval shrank to a point after rounding
            PeriodicStep::constant(half_length, 1.0)
        }
    }
}

/// Capacity sampled at cell centers with the discrete norms used by the CFL
/// condition and the a-priori bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityField {
    values: Vec<f64>,
    sup: f64,
    sup_deriv: f64,
    deriv_l1: f64,
    second_deriv_l1: f64,
}

impl CapacityField {
    pub fn from_values(values: Vec<f64>, grid: &Grid) -> Result<Self, CapacityError> {
        assert_eq!(values.len(), grid.cells(), "capacity does not match the grid");
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
            return Err(CapacityError::NonPositive { cell, value });
        }
        let n = values.len();
        let dx = grid.dx();
        let mut sup = 0.0_f64;
        let mut max_jump = 0.0_f64;
        let mut deriv_l1 = 0.0;
        let mut second = 0.0;
        for i in 0..n {
            let prev = values[(i + n - 1) % n];
            let next = values[(i + 1) % n];
            let jump = (next - values[i]).abs();
            sup = sup.max(values[i]);
            max_jump = max_jump.max(jump);
            deriv_l1 += jump;
            second += (next - 2.0 * values[i] + prev).abs();
        }
        Ok(Self {
            values,
            sup,
            sup_deriv: max_jump / dx,
            deriv_l1,
            second_deriv_l1: second / dx,
        })
    }

    pub fn uniform(value: f64, grid: &Grid) -> Result<Self, CapacityError> {
        Self::from_values(vec![value; grid.cells()], grid)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_i a_i`.
    pub fn sup(&self) -> f64 {
        self.sup
    }

    /// `max_i |a_{i+1} - a_i| / dx`. The one-sided quotient dominates the
    /// centered one, so both the L-infinity and TV step estimates hold with it.
    pub fn sup_deriv(&self) -> f64 {
        self.sup_deriv
    }

    /// `sum_i |a_{i+1} - a_i|`, the discrete `||a'||_1`.
    pub fn deriv_l1(&self) -> f64 {
        self.deriv_l1
    }

    /// `sum_i |a_{i+1} - 2 a_i + a_{i-1}| / dx`, the discrete `||a''||_1`.
    pub fn second_deriv_l1(&self) -> f64 {
        self.second_deriv_l1
    }

    /// `sum_i a_i dx`.
    pub fn integral(&self, grid: &Grid) -> f64 {
        self.values.iter().sum::<f64>() * grid.dx()
    }
}

/// Evaluates `a` at every cell center of `grid`.
pub fn total_capacity(
    road: &RoadProfile,
    accidents: &[AccidentParams],
    mollifier: Mollifier,
    grid: &Grid,
) -> Result<CapacityField, CapacityError> {
    mollifier.validate()?;
    let half_length = grid.half_length();
    if (road.half_length() - half_length).abs() > 1e-12 * half_length {
        return Err(CapacityError::Road(format!(
            "road spans [-{0}, {0}] but the grid spans [-{1}, {1}]",
            road.half_length(),
            half_length
        )));
    }
    if let Mollifier::Smooth { epsilon } = mollifier {
        if epsilon >= half_length {
            return Err(CapacityError::Mollifier(format!(
                "epsilon {epsilon} must be smaller than the half-length {half_length}"
            )));
        }
    }
    for (k, acc) in accidents.iter().enumerate() {
        acc.validate(k + 1)?;
    }
    let road_step = road.to_step();
    let factors: Vec<PeriodicStep> = accidents
        .iter()
        .filter(|a| a.is_active())
        .map(|a| a.factor_step(half_length))
        .collect();
    let values = grid
        .centers()
        .map(|x| {
            factors
                .iter()
                .fold(mollify(&road_step, mollifier, x), |acc, f| acc * mollify(f, mollifier, x))
        })
        .collect();
    CapacityField::from_values(values, grid)
}
