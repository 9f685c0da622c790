//! Experiment configuration in TOML.
//!
//! Unknown keys are errors. Validation errors carry the line of the offending
//! key so that a typo in a rate constant is reported where it was made.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;
use thiserror::Error;

use crate::capacity::{Mollifier, RoadProfile};
use crate::grid::Grid;
use crate::measures::{CapDist, KernelParams, ModelState, RateParams, SizeDist};
use crate::pdp::{Model, PathConfig};
use crate::solver::DensityField;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}{message}", location(*line, *column))]
    Parse {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    #[error("{}{key}: {message}", location(*line, None))]
    Invalid {
        line: Option<usize>,
        key: String,
        message: String,
    },
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!("line {l}, column {c}: "),
        (Some(l), None) => format!("line {l}: "),
        _ => String::new(),
    }
}

/// Real number written as a float, an integer or a fraction string `"a/b"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Real(pub f64);

impl Real {
    pub fn parse(s: &str) -> Option<f64> {
        let s = s.trim();
        match s.split_once('/') {
            Some((num, den)) => {
                let (num, den): (f64, f64) = (num.trim().parse().ok()?, den.trim().parse().ok()?);
                (den != 0.0).then_some(num / den)
            }
            None => s.parse().ok(),
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct RealVisitor;

        impl Visitor<'_> for RealVisitor {
            type Value = Real;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a fraction string such as \"1/105\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
                Ok(Real(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
                Ok(Real(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
                Real::parse(v)
                    .map(Real)
                    .ok_or_else(|| E::invalid_value(de::Unexpected::Str(v), &self))
            }
        }

        deserializer.deserialize_any(RealVisitor)
    }
}

fn reals(v: &[Real]) -> Vec<f64> {
    v.iter().map(|r| r.0).collect()
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub half_length: Real,
    pub cells: usize,
    #[serde(default = "one")]
    pub cfl_factor: Real,
}

fn one() -> Real {
    Real(1.0)
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: Real,
    pub dt_ref: Real,
    #[serde(default = "one")]
    pub acceptance_ratio: Real,
    #[serde(default)]
    pub snapshot_times: Vec<Real>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RoadSection {
    pub breakpoints: Vec<Real>,
    pub capacities: Vec<Real>,
    /// Defaults to the smallest segment capacity.
    pub floor: Option<Real>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum MollifierMode {
    #[default]
    Sharp,
    Smooth,
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct MollifierSection {
    #[serde(default)]
    pub mode: MollifierMode,
    pub epsilon: Option<Real>,
}

/// Initial density; cell values are exact cell means.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSection {
    Constant {
        value: Real,
    },
    /// `values[m]` on `[breakpoints[m], breakpoints[m + 1])`, spanning `[-L, L]`.
    Piecewise {
        breakpoints: Vec<Real>,
        values: Vec<Real>,
    },
    /// `mean + amplitude * sin(pi * wavenumber * x / L)`.
    Sine {
        mean: Real,
        amplitude: Real,
        wavenumber: u32,
    },
}

impl InitialSection {
    /// Cell means on `grid`.
    pub fn cell_means(&self, grid: &Grid) -> Vec<f64> {
        let dx = grid.dx();
        let l = grid.half_length();
        (0..grid.cells())
            .map(|i| {
                let (lo, hi) = (grid.interface(i), grid.interface(i + 1));
                match self {
                    InitialSection::Constant { value } => value.0,
                    InitialSection::Piecewise { breakpoints, values } => {
                        let mut acc = 0.0;
                        for (m, v) in values.iter().enumerate() {
                            let overlap = hi.min(breakpoints[m + 1].0) - lo.max(breakpoints[m].0);
                            if overlap > 0.0 {
                                acc += v.0 * overlap;
                            }
                        }
                        acc / dx
                    }
                    InitialSection::Sine {
                        mean,
                        amplitude,
                        wavenumber,
                    } => {
                        let k = std::f64::consts::PI * f64::from(*wavenumber) / l;
                        mean.0 - amplitude.0 * ((k * hi).cos() - (k * lo).cos()) / (k * dx)
                    }
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    #[serde(default)]
    pub beta: Real,
    pub flux: Real,
    pub upjump: Real,
    pub resolve: Real,
}

impl Default for Real {
    fn default() -> Self {
        Real(0.0)
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AccidentsSection {
    pub size_min: Real,
    pub size_max: Real,
    pub drops: Vec<Real>,
    pub drop_weights: Vec<Real>,
    /// Defaults to the largest drop.
    pub max_drop: Option<Real>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_bins() -> usize {
    100
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out(),
            bins: default_bins(),
        }
    }
}

fn default_samples() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub domain: DomainSection,
    pub time: TimeSection,
    pub road: RoadSection,
    #[serde(default)]
    pub mollifier: MollifierSection,
    pub initial: InitialSection,
    pub rates: RatesSection,
    pub accidents: AccidentsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(skip)]
    source: String,
}

/// Validated configuration, ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub path: PathConfig,
    pub initial: ModelState,
    pub initial_section: InitialSection,
    pub seed: u64,
    pub samples: usize,
    pub snapshot_times: Vec<f64>,
    pub output: OutputSection,
}

impl Experiment {
    /// Initial state on another grid with the same road and horizon.
    pub fn initial_on(&self, grid: &Grid) -> ModelState {
        ModelState::new(DensityField::new(self.initial_section.cell_means(grid), 0.0))
    }
}

impl SimConfig {
    pub fn from_toml(source: &str) -> Result<Self, ConfigError> {
        let mut cfg: SimConfig = toml::from_str(source).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(source, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            ConfigError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.source = source.to_string();
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&source)
    }

    fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            line: key_line(&self.source, key),
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Checks every field and assembles the model.
    pub fn build(&self) -> Result<Experiment, ConfigError> {
        if self.samples == 0 {
            return Err(self.invalid("samples", "must be at least 1"));
        }

        let half_length = self.domain.half_length.0;
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(self.invalid("domain.half_length", format!("must be positive, got {half_length}")));
        }
        let grid = Grid::new(half_length, self.domain.cells).map_err(|e| self.invalid("domain.cells", e.to_string()))?;
        let cfl_factor = self.domain.cfl_factor.0;
        if !(cfl_factor > 0.0 && cfl_factor <= 1.0) {
            return Err(self.invalid("domain.cfl_factor", format!("must lie in (0, 1], got {cfl_factor}")));
        }

        let horizon = self.time.horizon.0;
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(self.invalid("time.horizon", format!("must be non-negative, got {horizon}")));
        }
        let dt_ref = self.time.dt_ref.0;
        if !(dt_ref.is_finite() && dt_ref > 0.0) {
            return Err(self.invalid("time.dt_ref", format!("must be positive, got {dt_ref}")));
        }
        let acceptance_ratio = self.time.acceptance_ratio.0;
        if !(acceptance_ratio > 0.0 && acceptance_ratio <= 1.0) {
            return Err(self.invalid(
                "time.acceptance_ratio",
                format!("must lie in (0, 1], got {acceptance_ratio}"),
            ));
        }
        let snapshot_times = reals(&self.time.snapshot_times);
        if let Some(t) = snapshot_times.iter().find(|&&t| !(0.0..=horizon).contains(&t)) {
            return Err(self.invalid("time.snapshot_times", format!("time {t} outside [0, {horizon}]")));
        }
        if !snapshot_times.windows(2).all(|w| w[0] < w[1]) {
            return Err(self.invalid("time.snapshot_times", "must be strictly increasing"));
        }

        let breakpoints = reals(&self.road.breakpoints);
        let capacities = reals(&self.road.capacities);
        let floor = match self.road.floor {
            Some(f) => f.0,
            None => capacities.iter().copied().fold(f64::INFINITY, f64::min),
        };
        let road = RoadProfile::new(breakpoints, capacities, floor).map_err(|e| self.invalid("road.breakpoints", e.to_string()))?;
        if road.half_length() != half_length {
            return Err(self.invalid(
                "road.breakpoints",
                format!("road spans [-{0}, {0}] but the domain half-length is {half_length}", road.half_length()),
            ));
        }

        let mollifier = match (self.mollifier.mode, self.mollifier.epsilon) {
            (MollifierMode::Sharp, _) => Mollifier::Sharp,
            (MollifierMode::Smooth, None) => {
                return Err(self.invalid("mollifier.mode", "smooth mode needs an epsilon"));
            }
            (MollifierMode::Smooth, Some(eps)) => {
                if !(eps.0 > 0.0 && eps.0 < half_length) {
                    return Err(self.invalid(
                        "mollifier.epsilon",
                        format!("must lie in (0, {half_length}), got {}", eps.0),
                    ));
                }
                Mollifier::Smooth { epsilon: eps.0 }
            }
        };

        let rho0 = self.initial_density(&grid)?;

        let beta = self.rates.beta.0;
        if !(0.0..=1.0).contains(&beta) {
            return Err(self.invalid("rates.beta", format!("must lie in [0, 1], got {beta}")));
        }
        for (key, v) in [
            ("rates.flux", self.rates.flux.0),
            ("rates.upjump", self.rates.upjump.0),
            ("rates.resolve", self.rates.resolve.0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(self.invalid(key, format!("must be positive, got {v}")));
            }
        }
        let rates = RateParams {
            flux: self.rates.flux.0,
            upjump: self.rates.upjump.0,
            resolve: self.rates.resolve.0,
        };

        let sizes = SizeDist::uniform(self.accidents.size_min.0, self.accidents.size_max.0)
            .map_err(|e| self.invalid("accidents.size_min", e.to_string()))?;
        if sizes.max() >= 2.0 * half_length {
            return Err(self.invalid("accidents.size_max", "accident must be shorter than the road"));
        }
        let drops = reals(&self.accidents.drops);
        let max_drop = match self.accidents.max_drop {
            Some(c) => c.0,
            None => drops.iter().copied().fold(0.0, f64::max),
        };
        let caps = CapDist::new(drops, reals(&self.accidents.drop_weights), max_drop)
            .map_err(|e| self.invalid("accidents.drops", e.to_string()))?;

        let path = PathConfig {
            model: Model {
                grid,
                road,
                mollifier,
                cfl_factor,
                kernel: KernelParams {
                    beta,
                    rates,
                    sizes,
                    caps,
                },
            },
            horizon,
            dt_ref,
            acceptance_ratio,
        };
        path.validate().map_err(|e| self.invalid("time", e.to_string()))?;

        Ok(Experiment {
            path,
            initial: ModelState::new(rho0),
            initial_section: self.initial.clone(),
            seed: self.seed,
            samples: self.samples,
            snapshot_times,
            output: self.output.clone(),
        })
    }

    fn initial_density(&self, grid: &Grid) -> Result<DensityField, ConfigError> {
        let l = grid.half_length();
        match &self.initial {
            InitialSection::Constant { value } => {
                if !(0.0..=1.0).contains(&value.0) {
                    return Err(self.invalid("initial.value", format!("must lie in [0, 1], got {}", value.0)));
                }
            }
            InitialSection::Piecewise { breakpoints, values } => {
                let b = reals(breakpoints);
                if b.len() != values.len() + 1 || !b.windows(2).all(|w| w[0] < w[1]) {
                    return Err(self.invalid(
                        "initial.breakpoints",
                        "need one more strictly increasing breakpoint than values",
                    ));
                }
                if b[0] != -l || b[b.len() - 1] != l {
                    return Err(self.invalid("initial.breakpoints", format!("must span [-{l}, {l}]")));
                }
                if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(&v.0)) {
                    return Err(self.invalid("initial.values", format!("value {} outside [0, 1]", v.0)));
                }
            }
            InitialSection::Sine { mean, amplitude, .. } => {
                let (lo, hi) = (mean.0 - amplitude.0.abs(), mean.0 + amplitude.0.abs());
                if !(lo >= 0.0 && hi <= 1.0) {
                    return Err(self.invalid("initial.amplitude", format!("density range [{lo}, {hi}] leaves [0, 1]")));
                }
            }
        }
        let rho = DensityField::new(self.initial.cell_means(grid), 0.0);
        if !(rho.mass(grid) > 0.0) {
            return Err(self.invalid("initial", "initial density must have positive mass"));
        }
        Ok(rho)
    }
}

fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

/// 1-based line of `key` (`section.name`, `name` or `section`) in `source`.
fn key_line(source: &str, key: &str) -> Option<usize> {
    let (section, name) = match key.split_once('.') {
        Some((s, n)) => (s, Some(n)),
        None if source.lines().any(|l| header(l) == Some(key)) => (key, None),
        None => ("", Some(key)),
    };
    let mut current = "";
    for (i, line) in source.lines().enumerate() {
        if let Some(h) = header(line) {
            current = h;
            if name.is_none() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if let Some(name) = name {
            let assigned = line.split_once('=').map(|(k, _)| k.trim());
            if current == section && assigned == Some(name) {
                return Some(i + 1);
            }
        }
    }
    // fall back to the section header when the key itself is absent
    name.and_then(|_| source.lines().position(|l| header(l) == Some(section)).map(|i| i + 1))
}

fn header(line: &str) -> Option<&str> {
    let t = line.trim();
    t.strip_prefix('[')?.strip_suffix(']').map(str::trim)
}
