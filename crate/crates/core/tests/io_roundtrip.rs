mod common;

use lwr_accidents::capacity::AccidentParams;
use lwr_accidents::ensemble::run_paths;
use lwr_accidents::io::{self, JumpRow};
use lwr_accidents::pdp::{Engine, RecordKind};
use proptest::prelude::*;

fn any_real() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -10.0..10.0f64, Just(0.0), Just(-0.0)]
}

fn jump_row() -> impl Strategy<Value = JumpRow> {
    (0usize..100, any_real(), 0u8..3, 1usize..9, any_real(), any_real(), any_real()).prop_map(|(id, t, k, slot, p, s, c)| {
        let kind = [RecordKind::Initial, RecordKind::Accident, RecordKind::Resolution][k as usize];
        let initial = kind == RecordKind::Initial;
        JumpRow {
            path_id: id,
            time: t,
            kind,
            slot: (!initial).then_some(slot),
            accident: (!initial).then(|| AccidentParams::new(p, s, c)),
        }
    })
}

proptest! {
    #[test]
    fn jump_files_round_trip_bitwise(rows in prop::collection::vec(jump_row(), 0..30)) {
        let mut buf = Vec::new();
        io::write_jumps(&mut buf, &rows).unwrap();
        let back = io::read_jumps(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.time.to_bits(), b.time.to_bits());
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn tables_round_trip_bitwise(rows in prop::collection::vec((any_real(), any_real()), 0..50)) {
        let mut buf = Vec::new();
        io::write_table(&mut buf, ("t", "value"), &rows).unwrap();
        let back = io::read_table(buf.as_slice(), ("t", "value")).unwrap();
        let bits = |v: &[(f64, f64)]| v.iter().map(|(a, b)| (a.to_bits(), b.to_bits())).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&rows));
    }
}

#[test]
fn simulated_outputs_round_trip_through_files() {
    let exp = common::ring_road_with(&[("cells = 1000      # dx = 1/50", "cells = 200"), ("horizon = 60", "horizon = 10"), ("snapshot_times = [0, 4.9, 10, 30, 60]", "snapshot_times = [0, 4.9, 10]")]);
    let paths = run_paths(&exp.path, &exp.initial, &exp.snapshot_times, Engine::Approximate, 5, 3, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<JumpRow> = paths.iter().enumerate().flat_map(|(i, p)| io::jump_rows(i, p)).collect();
    let file = dir.path().join("jumps.csv");
    io::to_file(&file, |w| io::write_jumps(w, &rows)).unwrap();
    assert_eq!(io::from_file(&file, io::read_jumps).unwrap(), rows);

    let grid = &exp.path.model.grid;
    for snap in &paths[1].snapshots {
        let file = dir.path().join(format!("snap_{}.csv", snap.time));
        io::to_file(&file, |w| io::write_snapshot(w, grid, &snap.rho)).unwrap();
        let back = io::from_file(&file, io::read_snapshot).unwrap();
        let rho: Vec<f64> = back.iter().map(|&(_, r)| r).collect();
        assert_eq!(rho, snap.rho.values);
        let xs: Vec<f64> = back.iter().map(|&(x, _)| x).collect();
        assert_eq!(xs, grid.centers().collect::<Vec<_>>());
    }
}
