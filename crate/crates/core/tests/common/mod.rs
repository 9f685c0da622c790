#![allow(dead_code)]

use std::path::PathBuf;

use lwr_accidents::config::{Experiment, SimConfig};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn ring_road_source() -> String {
    std::fs::read_to_string(repo_root().join("configs/ring_road.toml")).expect("example config")
}

/// The shipped ring-road experiment, with `edits` applied as `(old, new)`
/// text replacements. Snapshot times are dropped unless an edit sets them.
pub fn ring_road_with(edits: &[(&str, &str)]) -> Experiment {
    let mut src = ring_road_source();
    if !edits.iter().any(|(old, _)| old.starts_with("snapshot_times")) {
        src = src.replacen("snapshot_times = [0, 4.9, 10, 30, 60]", "snapshot_times = []", 1);
    }
    for (old, new) in edits {
        assert!(src.contains(old), "config has no {old:?}");
        src = src.replacen(old, new, 1);
    }
    SimConfig::from_toml(&src).unwrap().build().unwrap()
}

pub fn ring_road() -> Experiment {
    ring_road_with(&[])
}

/// Ring road with the mollified capacity and a sine initial density.
pub fn smooth_ring(cells: usize, horizon: f64) -> Experiment {
    let src = ring_road_source()
        .replace("cells = 1000      # dx = 1/50", &format!("cells = {cells}"))
        .replace("horizon = 60", &format!("horizon = {horizon}"))
        .replace("snapshot_times = [0, 4.9, 10, 30, 60]", "snapshot_times = []")
        .replace("mode = \"sharp\"", "mode = \"smooth\"\nepsilon = 1")
        .replace(
            "kind = \"constant\"\nvalue = 0.4",
            "kind = \"sine\"\nmean = 0.4\namplitude = 0.2\nwavenumber = 1",
        );
    SimConfig::from_toml(&src).unwrap().build().unwrap()
}
