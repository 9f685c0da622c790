//! Jump-time engines and whole-path simulation of the accident process.
//!
//! Between jumps the density follows the deterministic Lax-Friedrichs flow
//! anchored at the last post-jump state. The next jump time is found either by
//! thinning against a constant rate bound (exact) or by the adaptive
//! Bernoulli-step scheme (approximate, the default).

use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::capacity::{total_capacity, AccidentParams, CapacityError, CapacityField, Mollifier, RoadProfile};
use crate::grid::Grid;
use crate::measures::{self, sample_jump, JumpKind, JumpOutcome, KernelParams, MeasureError, ModelState};
use crate::solver::{bounds, DensityField, Flow, SolverError};

#[derive(Debug, Error, PartialEq)]
pub enum PdpError {
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("rate {rate} exceeds the thinning bound {bound} at t = {time}")]
    BoundViolation { time: f64, rate: f64, bound: f64 },
    #[error("thinning bound {bound} would need about {candidates:e} candidates up to the horizon")]
    BoundTooLarge { bound: f64, candidates: f64 },
    #[error("invalid path configuration: {0}")]
    Config(String),
}

/// Largest expected number of thinning candidates per jump search.
pub const MAX_THINNING_CANDIDATES: f64 = 1e8;

/// Everything that stays fixed along a path: road, grid, solver and kernel.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: Grid,
    pub road: RoadProfile,
    pub mollifier: Mollifier,
    pub cfl_factor: f64,
    pub kernel: KernelParams,
}

impl Model {
    pub fn capacity(&self, accidents: &[AccidentParams]) -> Result<CapacityField, CapacityError> {
        total_capacity(&self.road, accidents, self.mollifier, &self.grid)
    }

    /// Deterministic flow anchored at `state`.
    pub fn flow(&self, state: &ModelState, capacity: &CapacityField) -> Result<Flow, SolverError> {
        Flow::new(&state.rho, capacity, &self.grid, self.cfl_factor)
    }

    pub fn rate(&self, state: &ModelState, capacity: &CapacityField) -> f64 {
        measures::rate(state, capacity, &self.grid, &self.kernel.rates)
    }
}

#[derive(Debug, Clone)]
pub struct PathConfig {
    pub model: Model,
    /// Horizon `T`.
    pub horizon: f64,
    /// Reference step of the approximate engine.
    pub dt_ref: f64,
    /// Acceptance ratio `varrho` in `(0, 1]`.
    pub acceptance_ratio: f64,
}

impl PathConfig {
    pub fn validate(&self) -> Result<(), PdpError> {
        let bad = |m: String| Err(PdpError::Config(m));
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be non-negative, got {}", self.horizon));
        }
        if !(self.dt_ref > 0.0) {
            return bad(format!("reference step must be positive, got {}", self.dt_ref));
        }
        if !(self.acceptance_ratio > 0.0 && self.acceptance_ratio <= 1.0) {
            return bad(format!("acceptance ratio must lie in (0, 1], got {}", self.acceptance_ratio));
        }
        if !(0.0..=1.0).contains(&self.model.kernel.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.model.kernel.beta));
        }
        if !(self.model.cfl_factor > 0.0 && self.model.cfl_factor <= 1.0) {
            return bad(format!("cfl factor must lie in (0, 1], got {}", self.model.cfl_factor));
        }
        self.model.kernel.rates.validate()?;
        self.model.mollifier.validate()?;
        Ok(())
    }
}

/// Result of searching for the next jump from a post-jump state.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpSearch {
    /// Jump at `time`; `state` is the pre-jump state, evolved to `time`.
    Jump { time: f64, state: ModelState },
    /// No jump before the horizon; `state` is evolved to the horizon.
    Censored { state: ModelState },
}

impl JumpSearch {
    pub fn time(&self) -> Option<f64> {
        match self {
            JumpSearch::Jump { time, .. } => Some(*time),
            JumpSearch::Censored { .. } => None,
        }
    }
}

/// One iteration of the approximate engine: from `start`, accept a jump at
/// `end` with probability `(end - start) * rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveStep {
    pub start: f64,
    pub end: f64,
    pub dt: f64,
    pub rate: f64,
}

impl AdaptiveStep {
    /// `dt = min(dt_ref, varrho / psi, T - t)`.
    pub fn new(start: f64, rate: f64, cfg: &PathConfig) -> Self {
        let remaining = cfg.horizon - start;
        let dt = cfg.dt_ref.min(cfg.acceptance_ratio / rate).min(remaining);
        let end = if dt >= remaining { cfg.horizon } else { start + dt };
        Self { start, end, dt, rate }
    }

    pub fn acceptance(&self) -> f64 {
        self.dt * self.rate
    }
}

/// Approximate next-jump search with adaptive Bernoulli steps.
///
/// Each iteration draws one uniform `U`, evolves the state to the end of the
/// step and stops there if `U < dt psi(y)`, with `psi` taken at the step start.
pub fn approx_next_jump<R: Rng + ?Sized>(
    state: &ModelState,
    capacity: &CapacityField,
    cfg: &PathConfig,
    rng: &mut R,
) -> Result<JumpSearch, PdpError> {
    let model = &cfg.model;
    let mut flow = model.flow(state, capacity)?;
    let mut y = state.clone();
    loop {
        if y.time() >= cfg.horizon {
            return Ok(JumpSearch::Censored { state: y });
        }
        let step = AdaptiveStep::new(y.time(), model.rate(&y, capacity), cfg);
        let u = rng.random::<f64>();
        flow.state_at(step.end, &mut y.rho)?;
        if u < step.acceptance() {
            return Ok(JumpSearch::Jump { time: step.end, state: y });
        }
    }
}

/// Exact next-jump search by thinning against the constant rate `bound`.
///
/// Candidates are spaced by independent `Exp(bound)` gaps; a candidate `s` is
/// accepted with probability `psi(phi_{s - t_n}(y_n)) / bound`.
pub fn exact_next_jump<R: Rng + ?Sized>(
    state: &ModelState,
    capacity: &CapacityField,
    cfg: &PathConfig,
    bound: f64,
    rng: &mut R,
) -> Result<JumpSearch, PdpError> {
    if !(bound >= 0.0) {
        return Err(PdpError::Config(format!("thinning bound must be non-negative, got {bound}")));
    }
    // the a-priori bound grows like exp(sup|a'| T) and is useless for steep capacities
    let candidates = bound * (cfg.horizon - state.time()).max(0.0);
    if !(candidates <= MAX_THINNING_CANDIDATES) {
        return Err(PdpError::BoundTooLarge { bound, candidates });
    }
    let model = &cfg.model;
    let mut flow = model.flow(state, capacity)?;
    let mut y = state.clone();
    let gaps = (bound > 0.0).then(|| Exp::new(bound).expect("positive rate"));
    let mut s = state.time();
    loop {
        s += gaps.as_ref().map_or(f64::INFINITY, |g| g.sample(rng));
        if s >= cfg.horizon {
            if y.time() < cfg.horizon {
                flow.state_at(cfg.horizon, &mut y.rho)?;
            }
            return Ok(JumpSearch::Censored { state: y });
        }
        flow.state_at(s, &mut y.rho)?;
        let rate = model.rate(&y, capacity);
        if rate > bound * (1.0 + 1e-12) {
            return Err(PdpError::BoundViolation { time: s, rate, bound });
        }
        if rng.random::<f64>() < rate / bound {
            return Ok(JumpSearch::Jump { time: s, state: y });
        }
    }
}

/// Upper bound on `psi` along the flow from `state` up to the horizon, built
/// from mass conservation and the a-priori total-variation estimate.
pub fn a_priori_rate_bound(state: &ModelState, capacity: &CapacityField, cfg: &PathConfig) -> f64 {
    let model = &cfg.model;
    let rates = &model.kernel.rates;
    let remaining = (cfg.horizon - state.time()).max(0.0);
    let flux_part = capacity.sup() * state.rho.mass(&model.grid);
    let tv = bounds::total_variation(state.rho.total_variation(), remaining, capacity);
    rates.flux * flux_part + rates.upjump * tv + rates.resolve * state.active_count() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateBound {
    Fixed(f64),
    /// Recomputed after every jump with [`a_priori_rate_bound`].
    APriori,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Engine {
    Approximate,
    Exact(RateBound),
}

impl Engine {
    pub fn next_jump<R: Rng + ?Sized>(
        &self,
        state: &ModelState,
        capacity: &CapacityField,
        cfg: &PathConfig,
        rng: &mut R,
    ) -> Result<JumpSearch, PdpError> {
        match *self {
            Engine::Approximate => approx_next_jump(state, capacity, cfg, rng),
            Engine::Exact(RateBound::Fixed(bound)) => exact_next_jump(state, capacity, cfg, bound, rng),
            Engine::Exact(RateBound::APriori) => {
                let bound = a_priori_rate_bound(state, capacity, cfg);
                exact_next_jump(state, capacity, cfg, bound, rng)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Initial,
    Accident,
    Resolution,
}

impl From<JumpKind> for RecordKind {
    fn from(kind: JumpKind) -> Self {
        match kind {
            JumpKind::Accident => RecordKind::Accident,
            JumpKind::Resolution => RecordKind::Resolution,
        }
    }
}

impl RecordKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecordKind::Initial => "initial",
            RecordKind::Accident => "accident",
            RecordKind::Resolution => "resolution",
        }
    }
}

/// One element `(T_n, Y_n)` of the jump chain.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub kind: RecordKind,
    /// 1-based slot that changed; `None` for the initial record.
    pub slot: Option<usize>,
    /// Accident created or resolved by this jump.
    pub accident: Option<AccidentParams>,
    /// Post-jump accident list.
    pub accidents: Vec<AccidentParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub rho: DensityField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub records: Vec<JumpRecord>,
    pub snapshots: Vec<Snapshot>,
    /// State at the horizon.
    pub final_state: ModelState,
}

/// Simulates one path on `[initial.time, T]`, alternating next-jump search and
/// kernel draws. Densities at `snapshot_times` come from the flow of the
/// inter-jump segment containing them.
pub fn simulate_path<R: Rng + ?Sized>(
    cfg: &PathConfig,
    initial: ModelState,
    snapshot_times: &[f64],
    engine: Engine,
    rng: &mut R,
) -> Result<PathResult, PdpError> {
    cfg.validate()?;
    let model = &cfg.model;
    let mut pending: Vec<f64> = snapshot_times
        .iter()
        .copied()
        .filter(|&t| t >= initial.time() && t <= cfg.horizon)
        .collect();
    pending.sort_by(f64::total_cmp);
    pending.reverse();

    let mut records = vec![JumpRecord {
        time: initial.time(),
        kind: RecordKind::Initial,
        slot: None,
        accident: None,
        accidents: initial.accidents.clone(),
    }];
    let mut snapshots = Vec::with_capacity(pending.len());
    let mut state = initial;
    loop {
        let capacity = model.capacity(&state.accidents)?;
        let search = engine.next_jump(&state, &capacity, cfg, rng)?;
        let in_segment = |t: f64| match search.time() {
            Some(end) => t < end,
            None => true,
        };
        if pending.last().is_some_and(|&t| in_segment(t)) {
            let mut flow = model.flow(&state, &capacity)?;
            let mut rho = state.rho.clone();
            while let Some(&t) = pending.last().filter(|&&t| in_segment(t)) {
                flow.state_at(t, &mut rho)?;
                snapshots.push(Snapshot { time: t, rho: rho.clone() });
                pending.pop();
            }
        }
        match search {
            JumpSearch::Jump { time, state: mut next } => {
                let outcome = sample_jump(&mut next, &capacity, &model.grid, &model.kernel, rng)?;
                records.push(JumpRecord {
                    time,
                    kind: outcome.kind.into(),
                    slot: Some(outcome.slot),
                    accident: Some(outcome.accident),
                    accidents: next.accidents.clone(),
                });
                state = next;
            }
            JumpSearch::Censored { state: end } => {
                return Ok(PathResult {
                    records,
                    snapshots,
                    final_state: end,
                });
            }
        }
    }
}

/// First jump of one sample: time and kernel outcome, or censoring.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstJump {
    pub time: Option<f64>,
    pub outcome: Option<JumpOutcome>,
}

/// The deterministic part of the approximate engine started from one fixed
/// initial state.
///
/// Before the first jump every sample follows the same flow and meets the
/// same sequence of adaptive steps; only the uniforms differ. Sampling against
/// the precomputed steps consumes each sample's random stream in exactly the
/// order [`approx_next_jump`] followed by [`sample_jump`] would.
#[derive(Debug, Clone)]
pub struct FirstJumpSkeleton {
    initial: ModelState,
    capacity: CapacityField,
    steps: Vec<AdaptiveStep>,
}

impl FirstJumpSkeleton {
    pub fn build(cfg: &PathConfig, initial: &ModelState) -> Result<Self, PdpError> {
        cfg.validate()?;
        let model = &cfg.model;
        let capacity = model.capacity(&initial.accidents)?;
        let mut flow = model.flow(initial, &capacity)?;
        let mut y = initial.clone();
        let mut steps = Vec::new();
        while y.time() < cfg.horizon {
            let step = AdaptiveStep::new(y.time(), model.rate(&y, &capacity), cfg);
            flow.state_at(step.end, &mut y.rho)?;
            steps.push(step);
        }
        Ok(Self {
            initial: initial.clone(),
            capacity,
            steps,
        })
    }

    pub fn steps(&self) -> &[AdaptiveStep] {
        &self.steps
    }

    /// Index of the accepted step, `None` when censored.
    pub fn draw_step<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        self.steps.iter().position(|step| rng.random::<f64>() < step.acceptance())
    }

    /// First jumps for one random stream per sample.
    pub fn sample<R: Rng>(&self, cfg: &PathConfig, mut rngs: Vec<R>) -> Result<Vec<FirstJump>, PdpError> {
        let model = &cfg.model;
        let accepted: Vec<Option<usize>> = rngs.iter_mut().map(|rng| self.draw_step(rng)).collect();
        let mut order: Vec<usize> = (0..rngs.len()).filter(|&i| accepted[i].is_some()).collect();
        order.sort_by_key(|&i| accepted[i]);

        let mut results = vec![
            FirstJump {
                time: None,
                outcome: None
            };
            rngs.len()
        ];
        let mut flow = model.flow(&self.initial, &self.capacity)?;
        let mut state = self.initial.clone();
        let mut current = None;
        for i in order {
            let k = accepted[i].expect("filtered");
            let end = self.steps[k].end;
            if current != Some(k) {
                flow.state_at(end, &mut state.rho)?;
                current = Some(k);
            }
            let mut next = state.clone();
            let outcome = sample_jump(&mut next, &self.capacity, &model.grid, &model.kernel, &mut rngs[i])?;
            results[i] = FirstJump {
                time: Some(end),
                outcome: Some(outcome),
            };
        }
        Ok(results)
    }
}

/// First jump of a single sample with the given engine, without sharing work.
pub fn first_jump<R: Rng + ?Sized>(
    cfg: &PathConfig,
    initial: &ModelState,
    capacity: &CapacityField,
    engine: Engine,
    rng: &mut R,
) -> Result<FirstJump, PdpError> {
    match engine.next_jump(initial, capacity, cfg, rng)? {
        JumpSearch::Jump { time, state: mut next } => {
            let outcome = sample_jump(&mut next, capacity, &cfg.model.grid, &cfg.model.kernel, rng)?;
            Ok(FirstJump {
                time: Some(time),
                outcome: Some(outcome),
            })
        }
        JumpSearch::Censored { .. } => Ok(FirstJump {
            time: None,
            outcome: None,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{CapDist, RateParams, SizeDist};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Uniform road of capacity 1, so `psi = flux * C_F` is constant in time for
    /// constant densities.
    fn constant_rate_config(rho: f64, horizon: f64) -> (PathConfig, ModelState) {
        let grid = Grid::new(1.0, 10).unwrap();
        let model = Model {
            grid,
            road: RoadProfile::uniform(1.0, 1.0).unwrap(),
            mollifier: Mollifier::Sharp,
            cfl_factor: 1.0,
            kernel: KernelParams {
                beta: 1.0,
                rates: RateParams {
                    flux: 1.0,
                    upjump: 1.0,
                    resolve: 1.0,
                },
                sizes: SizeDist::uniform(0.1, 0.2).unwrap(),
                caps: CapDist::new(vec![0.5], vec![1.0], 0.5).unwrap(),
            },
        };
        let cfg = PathConfig {
            model,
            horizon,
            dt_ref: 0.05,
            acceptance_ratio: 1.0,
        };
        (cfg, ModelState::new(DensityField::constant(rho, &grid)))
    }

    #[test]
    fn zero_rate_is_censored() {
        let (cfg, state) = constant_rate_config(0.0, 2.0);
        let cap = cfg.model.capacity(&[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = approx_next_jump(&state, &cap, &cfg, &mut rng).unwrap();
        assert!(matches!(out, JumpSearch::Censored { ref state } if state.time() == 2.0));
        let out = exact_next_jump(&state, &cap, &cfg, 0.0, &mut rng).unwrap();
        assert!(matches!(out, JumpSearch::Censored { ref state } if state.time() == 2.0));
        let out = exact_next_jump(&state, &cap, &cfg, 1.0, &mut rng).unwrap();
        assert!(matches!(out, JumpSearch::Censored { .. }));
    }

    #[test]
    fn full_acceptance_jumps_after_one_over_rate() {
        // C_F = f(0.5) * 2 = 0.5, so psi = 0.5 and varrho / psi = 2 <= dt_ref
        let (mut cfg, state) = constant_rate_config(0.5, 10.0);
        cfg.dt_ref = 3.0;
        let cap = cfg.model.capacity(&[]).unwrap();
        assert!((cfg.model.rate(&state, &cap) - 0.5).abs() < 1e-15);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = approx_next_jump(&state, &cap, &cfg, &mut rng).unwrap();
            assert_eq!(out.time(), Some(2.0));
        }
    }

    #[test]
    fn bound_violation_is_a_hard_error() {
        let (cfg, state) = constant_rate_config(0.5, 10.0);
        let cap = cfg.model.capacity(&[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = exact_next_jump(&state, &cap, &cfg, 0.25, &mut rng).unwrap_err();
        assert!(matches!(err, PdpError::BoundViolation { .. }));
    }

    #[test]
    fn a_priori_bound_dominates_the_rate() {
        let (cfg, state) = constant_rate_config(0.5, 10.0);
        let cap = cfg.model.capacity(&[]).unwrap();
        assert!(a_priori_rate_bound(&state, &cap, &cfg) >= cfg.model.rate(&state, &cap));
    }

    #[test]
    fn zero_horizon_gives_empty_chain() {
        let (cfg, state) = constant_rate_config(0.4, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = simulate_path(&cfg, state.clone(), &[0.0], Engine::Approximate, &mut rng).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].kind, RecordKind::Initial);
        assert_eq!(out.snapshots.len(), 1);
        assert_eq!(out.snapshots[0].rho, state.rho);
        assert_eq!(out.final_state, state);
    }

    #[test]
    fn invalid_acceptance_ratio_is_rejected() {
        let (mut cfg, state) = constant_rate_config(0.4, 1.0);
        cfg.acceptance_ratio = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            simulate_path(&cfg, state, &[], Engine::Approximate, &mut rng),
            Err(PdpError::Config(_))
        ));
    }

    #[test]
    fn skeleton_matches_per_sample_search() {
        let (mut cfg, state) = constant_rate_config(0.3, 5.0);
        cfg.model.kernel.beta = 0.5;
        cfg.dt_ref = 0.07;
        let cap = cfg.model.capacity(&[]).unwrap();
        let skeleton = FirstJumpSkeleton::build(&cfg, &state).unwrap();
        let rngs: Vec<ChaCha8Rng> = (0..50).map(ChaCha8Rng::seed_from_u64).collect();
        let shared = skeleton.sample(&cfg, rngs.clone()).unwrap();
        for (mut rng, expected) in rngs.into_iter().zip(shared) {
            let single = first_jump(&cfg, &state, &cap, Engine::Approximate, &mut rng).unwrap();
            assert_eq!(single, expected);
        }
    }
}
