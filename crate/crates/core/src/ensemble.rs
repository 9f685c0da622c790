//! Ensembles of independent paths and the grid refinement study.
//!
//! Path `i` always draws from stream `i` of the master seed, and results are
//! merged by index, so output does not depend on the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::capacity::total_capacity;
use crate::grid::Grid;
use crate::measures::ModelState;
use crate::pdp::{first_jump, simulate_path, Engine, FirstJump, FirstJumpSkeleton, PathConfig, PathResult, PdpError};
use crate::solver::{evolve, DensityField};

/// Independent random stream of path `index`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `op` on a pool of `threads` workers; `0` lets rayon decide.
pub fn with_threads<T: Send>(threads: usize, op: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(op),
        Err(_) => op(),
    }
}

/// Simulates paths `0..count` in parallel.
pub fn run_paths(
    cfg: &PathConfig,
    initial: &ModelState,
    snapshot_times: &[f64],
    engine: Engine,
    seed: u64,
    count: usize,
    threads: usize,
) -> Result<Vec<PathResult>, PdpError> {
    cfg.validate()?;
    with_threads(threads, || {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut rng = path_rng(seed, i as u64);
                simulate_path(cfg, initial.clone(), snapshot_times, engine, &mut rng)
            })
            .collect()
    })
}

/// First jumps of samples `0..count`, all started from `initial`.
///
/// The approximate engine shares one deterministic trajectory between all
/// samples; the exact engine searches per sample in parallel.
pub fn first_jump_ensemble(
    cfg: &PathConfig,
    initial: &ModelState,
    engine: Engine,
    seed: u64,
    count: usize,
    threads: usize,
) -> Result<Vec<FirstJump>, PdpError> {
    cfg.validate()?;
    let rngs: Vec<ChaCha8Rng> = (0..count as u64).map(|i| path_rng(seed, i)).collect();
    match engine {
        Engine::Approximate => FirstJumpSkeleton::build(cfg, initial)?.sample(cfg, rngs),
        Engine::Exact(_) => {
            let capacity = cfg.model.capacity(&initial.accidents)?;
            with_threads(threads, || {
                rngs.into_par_iter()
                    .map(|mut rng| first_jump(cfg, initial, &capacity, engine, &mut rng))
                    .collect()
            })
        }
    }
}

/// One level of a refinement study: `l1_diff = |rho_dx - R rho_{dx/2}|_1`,
/// with `R` averaging pairs of fine cells, and the observed order against
/// the previous level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub dx: f64,
    pub l1_diff: f64,
    pub order: Option<f64>,
}

/// Averages pairs of cells onto the grid with half as many cells.
pub fn restrict(fine: &[f64]) -> Vec<f64> {
    assert!(fine.len() % 2 == 0, "odd cell count");
    fine.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect()
}

/// Accident-free self-convergence at the horizon over `rows` successive
/// halvings of `grid`, i.e. `rows + 1` solves. `initial_on` gives the
/// initial cell means on any grid.
pub fn convergence_study(
    cfg: &PathConfig,
    grid: &Grid,
    rows: usize,
    initial_on: impl Fn(&Grid) -> DensityField + Sync,
    threads: usize,
) -> Result<Vec<ConvergenceRow>, PdpError> {
    cfg.validate()?;
    let model = &cfg.model;
    let grids: Vec<Grid> = (0..=rows).map(|k| grid.refined(1 << k)).collect();
    let solutions: Vec<DensityField> = with_threads(threads, || {
        grids
            .par_iter()
            .map(|g| {
                let capacity = total_capacity(&model.road, &[], model.mollifier, g)?;
                Ok(evolve(&initial_on(g), &capacity, g, model.cfl_factor, cfg.horizon)?)
            })
            .collect::<Result<_, PdpError>>()
    })?;
    let mut out: Vec<ConvergenceRow> = Vec::with_capacity(rows);
    for k in 0..rows {
        let coarse = &solutions[k].values;
        let fine = restrict(&solutions[k + 1].values);
        let dx = grids[k].dx();
        let l1_diff = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).sum::<f64>() * dx;
        let order = out.last().map(|prev: &ConvergenceRow| (prev.l1_diff / l1_diff).log2());
        out.push(ConvergenceRow { dx, l1_diff, order });
    }
    Ok(out)
}
