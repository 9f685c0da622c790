use lwr_accidents::capacity::{total_capacity, AccidentParams, CapacityField, Mollifier, RoadProfile};
use lwr_accidents::grid::Grid;
use lwr_accidents::measures::{
    accident_rate, flux_measure, flux_total, position_measure, sample_jump, upjump_measure, upjump_total, CapDist,
    JumpKind, KernelParams, ModelState, RateParams, SizeDist,
};
use lwr_accidents::solver::{DensityField, FLUX_DERIV_SUP, FLUX_SUP};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const L: f64 = 10.0;
const DRAWS: usize = 100_000;

fn road() -> RoadProfile {
    RoadProfile::new(vec![-L, 0.0, 5.0, L], vec![7.0, 5.0, 7.0], 5.0).unwrap()
}

fn wavy_density(grid: &Grid) -> Vec<f64> {
    grid.centers()
        .map(|x| 0.35 + 0.2 * (0.7 * x).sin() + 0.1 * (2.3 * x + 1.0).cos())
        .collect()
}

fn kernel(beta: f64) -> KernelParams {
    KernelParams {
        beta,
        rates: RateParams {
            flux: 1.0 / 105.0,
            upjump: 0.1,
            resolve: 0.5,
        },
        sizes: SizeDist::uniform(0.2, 1.0).unwrap(),
        caps: CapDist::new(vec![0.5, 0.99], vec![0.5, 0.5], 0.99).unwrap(),
    }
}

/// `|count / n - p| <= 3 sigma` with the binomial standard deviation.
fn within_three_sigma(count: usize, n: usize, p: f64) -> bool {
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    (count as f64 / n as f64 - p).abs() <= 3.0 * sigma + 1e-12
}

#[test]
fn components_are_normalized() {
    let grid = Grid::new(L, 400).unwrap();
    let cap = total_capacity(&road(), &[AccidentParams::new(-4.0, 0.5, 0.99)], Mollifier::Sharp, &grid).unwrap();
    let rho = wavy_density(&grid);
    let flux = flux_measure(&rho, &cap, &grid).unwrap();
    let total: f64 = flux.weights.iter().sum::<f64>() * grid.dx();
    assert!((total - 1.0).abs() < 1e-12);
    assert!((flux.total - flux_total(&rho, &cap, &grid)).abs() < 1e-12);
    let jumps = upjump_measure(&rho);
    let atoms: f64 = jumps.atoms.iter().map(|&(_, m)| m).sum();
    assert_eq!(atoms, jumps.total);
    assert!((jumps.total - upjump_total(&rho)).abs() < 1e-12);
    for beta in [0.0, 0.4, 1.0] {
        let m = position_measure(&rho, &cap, &grid, beta).unwrap();
        assert!((m.probability(&grid, -L, L) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sampled_positions_match_the_mixture() {
    let grid = Grid::new(L, 50).unwrap();
    let cap = total_capacity(&road(), &[], Mollifier::Sharp, &grid).unwrap();
    let rho = wavy_density(&grid);
    let edges: Vec<f64> = (0..=10).map(|k| -L + 2.0 * L * k as f64 / 10.0).collect();
    for (seed, beta) in [(1, 0.0), (2, 0.3), (3, 1.0)] {
        let measure = position_measure(&rho, &cap, &grid, beta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0usize; 10];
        for _ in 0..DRAWS {
            let x = measure.sample(&grid, &mut rng);
            assert!((-L..L).contains(&x));
            counts[edges.partition_point(|&e| e <= x) - 1] += 1;
        }
        for k in 0..10 {
            let p = measure.probability(&grid, edges[k], edges[k + 1]);
            assert!(within_three_sigma(counts[k], DRAWS, p), "beta {beta} bin {k}: {} vs {p}", counts[k]);
        }
    }
}

#[test]
fn upjump_samples_sit_on_interfaces() {
    let grid = Grid::new(L, 50).unwrap();
    let cap = total_capacity(&road(), &[], Mollifier::Sharp, &grid).unwrap();
    let rho = wavy_density(&grid);
    let measure = position_measure(&rho, &cap, &grid, 0.0).unwrap();
    let jumps = upjump_measure(&rho);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10_000 {
        let x = measure.sample(&grid, &mut rng);
        assert!(jumps.atoms.iter().any(|&(i, _)| grid.interface(i) == x), "{x}");
    }
}

#[test]
fn branch_frequencies_and_slot_semantics() {
    let grid = Grid::new(L, 100).unwrap();
    let accidents = vec![AccidentParams::new(-3.0, 0.5, 0.5), AccidentParams::new(6.0, 0.8, 0.99)];
    let cap = total_capacity(&road(), &accidents, Mollifier::Sharp, &grid).unwrap();
    let rho = DensityField::new(wavy_density(&grid), 1.0);
    let k = kernel(0.5);
    let lambda_a = accident_rate(&rho.values, &cap, &grid, &k.rates);
    let p_accident = lambda_a / (lambda_a + 2.0 * k.rates.resolve);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = [0usize; 3];
    for _ in 0..DRAWS {
        let mut state = ModelState {
            accidents: accidents.clone(),
            rho: rho.clone(),
        };
        let out = sample_jump(&mut state, &cap, &grid, &k, &mut rng).unwrap();
        assert_eq!(state.rho, rho, "density must not change across a jump");
        match out.kind {
            JumpKind::Accident => {
                counts[0] += 1;
                assert_eq!(out.slot, 3);
                assert_eq!(&state.accidents[..2], &accidents[..]);
            }
            JumpKind::Resolution => {
                counts[out.slot] += 1;
                let other = 2 - out.slot;
                assert_eq!(state.accidents[other], accidents[other]);
                let gone = state.accidents[out.slot - 1];
                assert!(!gone.is_active());
                assert_eq!((gone.position, gone.size), (accidents[out.slot - 1].position, accidents[out.slot - 1].size));
                assert_eq!(out.accident, accidents[out.slot - 1]);
            }
        }
    }
    assert!(within_three_sigma(counts[0], DRAWS, p_accident));
    assert!(within_three_sigma(counts[1], DRAWS, (1.0 - p_accident) / 2.0));
    assert!(within_three_sigma(counts[2], DRAWS, (1.0 - p_accident) / 2.0));
}

#[test]
fn freed_slots_are_reused_smallest_first() {
    let grid = Grid::new(L, 100).unwrap();
    let accidents = vec![
        AccidentParams::new(-3.0, 0.5, 0.0),
        AccidentParams::new(6.0, 0.8, 0.99),
        AccidentParams::new(1.0, 0.8, 0.0),
    ];
    let cap = total_capacity(&road(), &accidents, Mollifier::Sharp, &grid).unwrap();
    let rho = DensityField::new(wavy_density(&grid), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seen_accident = false;
    for _ in 0..200 {
        let mut state = ModelState {
            accidents: accidents.clone(),
            rho: rho.clone(),
        };
        let out = sample_jump(&mut state, &cap, &grid, &kernel(0.5), &mut rng).unwrap();
        if out.kind == JumpKind::Accident {
            seen_accident = true;
            assert_eq!(out.slot, 1);
            assert_eq!(state.accidents.len(), 3);
        } else {
            assert_eq!(out.slot, 2);
        }
    }
    assert!(seen_accident);
}

fn perturbation(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-0.02..0.02, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Position laws depend continuously on the density, with the constants
    /// `2 ||f'|| ||a|| / ||F||_1` for the flux part and `1 / D rho^+` for the
    /// up-jump part.
    #[test]
    fn position_law_is_continuous_in_the_density(
        delta in perturbation(60),
        lo in -L..L,
        width in 0.0..(2.0 * L),
        acc_shift in -0.3..0.3,
    ) {
        let grid = Grid::new(L, 60).unwrap();
        let acc = AccidentParams::new(-4.0, 1.0, 0.5);
        let moved = AccidentParams::new(-4.0 + acc_shift, 1.0, 0.5);
        let cap = total_capacity(&road(), &[acc], Mollifier::Sharp, &grid).unwrap();
        let cap_moved = total_capacity(&road(), &[moved], Mollifier::Sharp, &grid).unwrap();
        let rho = wavy_density(&grid);
        let other: Vec<f64> = rho.iter().zip(&delta).map(|(r, d)| (r + d).clamp(0.0, 1.0)).collect();
        let diff: Vec<f64> = rho.iter().zip(&other).map(|(a, b)| a - b).collect();
        let l1 = diff.iter().map(|d| d.abs()).sum::<f64>() * grid.dx();
        let tv = lwr_accidents::solver::total_variation(&diff);
        let hi = lo + width;

        let f = |r: &[f64], c: &CapacityField| position_measure(r, c, &grid, 1.0).unwrap().probability(&grid, lo, hi);
        let d = |r: &[f64]| position_measure(r, &cap, &grid, 0.0).unwrap().probability(&grid, lo, hi);

        let norm_f = flux_total(&rho, &cap, &grid);
        let road_sup = 7.0;
        let bare = total_capacity(&road(), &[], Mollifier::Sharp, &grid).unwrap();
        // accident factors c_a = a / c_road
        let cap_l1: f64 = (0..grid.cells())
            .map(|i| (cap.values()[i] - cap_moved.values()[i]).abs() / bare.values()[i])
            .sum::<f64>()
            * grid.dx();
        let flux_bound = 2.0 / norm_f * (road_sup * FLUX_SUP * cap_l1 + FLUX_DERIV_SUP * road_sup * l1);
        prop_assert!((f(&rho, &cap) - f(&other, &cap_moved)).abs() <= flux_bound + 1e-12);
        let up_bound = tv / upjump_total(&rho);
        prop_assert!((d(&rho) - d(&other)).abs() <= up_bound + 1e-12);
    }
}
