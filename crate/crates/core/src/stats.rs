//! First-jump law along the deterministic flow, empirical distribution
//! functions, histograms and Kolmogorov-Smirnov distances.

use thiserror::Error;

use crate::measures::ModelState;
use crate::pdp::{PathConfig, PdpError};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("histogram edges must be strictly increasing with at least two entries")]
    BadEdges,
}

/// Distribution function tabulated on increasing knots, linearly
/// interpolated in between, `0` before the first knot and flat after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfTable {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl CdfTable {
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return 0.0;
        }
        if k == self.times.len() {
            return self.values[k - 1];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Left limit `F(t-)`. A repeated knot encodes a jump.
    pub fn eval_left(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 {
            return 0.0;
        }
        if k == self.times.len() {
            return self.values[k - 1];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// CDF `F` and density `g` of the first jump on a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstJumpLaw {
    pub cdf: CdfTable,
    pub pdf: Vec<f64>,
    /// Rate `psi` at each knot.
    pub rates: Vec<f64>,
}

impl FirstJumpLaw {
    pub fn pdf_table(&self) -> CdfTable {
        CdfTable {
            times: self.cdf.times.clone(),
            values: self.pdf.clone(),
        }
    }

    pub fn survival_at_end(&self) -> f64 {
        1.0 - self.cdf.values.last().copied().unwrap_or(0.0)
    }
}

/// Left-rectangle integration of a tabulated rate:
/// `I_k = I_{k-1} + (t_k - t_{k-1}) psi_{k-1}`, `F_k = 1 - exp(-I_k)`,
/// `g_k = psi_k exp(-I_k)`.
pub fn law_from_rates(times: &[f64], rates: &[f64]) -> FirstJumpLaw {
    assert_eq!(times.len(), rates.len());
    let mut integral = 0.0;
    let mut cdf = Vec::with_capacity(times.len());
    let mut pdf = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        if k > 0 {
            integral += (times[k] - times[k - 1]) * rates[k - 1];
        }
        let survival = (-integral).exp();
        cdf.push(-(-integral).exp_m1());
        pdf.push(rates[k] * survival);
    }
    FirstJumpLaw {
        cdf: CdfTable {
            times: times.to_vec(),
            values: cdf,
        },
        pdf,
        rates: rates.to_vec(),
    }
}

/// Law of the first jump time from `initial`, evaluating `psi` on the PDE
/// time grid of the deterministic flow up to the horizon.
pub fn analytic_first_jump(cfg: &PathConfig, initial: &ModelState) -> Result<FirstJumpLaw, PdpError> {
    cfg.validate()?;
    let model = &cfg.model;
    let capacity = model.capacity(&initial.accidents)?;
    let mut flow = model.flow(initial, &capacity)?;
    let horizon = cfg.horizon.max(initial.time());
    let times = flow.time_grid(horizon);
    let mut state = initial.clone();
    let mut rates = Vec::with_capacity(times.len());
    for &t in &times {
        flow.state_at(t, &mut state.rho)?;
        rates.push(model.rate(&state, &capacity));
    }
    Ok(law_from_rates(&times, &rates))
}

/// Right-continuous empirical CDF. Censored observations are not points of
/// the ECDF but count in the denominator, so on `[0, T]` it estimates the
/// unconditional CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
    total: usize,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self, StatsError> {
        Self::with_censored(samples, 0)
    }

    pub fn with_censored(samples: &[f64], censored: usize) -> Result<Self, StatsError> {
        let total = samples.len() + censored;
        if total == 0 {
            return Err(StatsError::EmptySample);
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted, total })
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn censored(&self) -> usize {
        self.total - self.sorted.len()
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= t) as f64 / self.total as f64
    }

    pub fn eval_left(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x < t) as f64 / self.total as f64
    }

    /// `(x, F_n(x))` at every distinct sample value.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.total as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in self.sorted.iter().enumerate() {
            let height = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = height,
                _ => out.push((x, height)),
            }
        }
        out
    }
}

/// `sup |F_n - F|`, checked on both sides of every ECDF jump and at every
/// table knot.
pub fn ks_distance(ecdf: &Ecdf, cdf: &CdfTable) -> f64 {
    let mut d: f64 = 0.0;
    let mut below = 0.0;
    for (x, height) in ecdf.steps() {
        d = d.max((height - cdf.eval(x)).abs()).max((cdf.eval_left(x) - below).abs());
        below = height;
    }
    for &t in &cdf.times {
        d = d
            .max((ecdf.eval(t) - cdf.eval(t)).abs())
            .max((ecdf.eval_left(t) - cdf.eval_left(t)).abs());
    }
    d
}

/// KS distance against a closed-form CDF.
pub fn ks_distance_fn(ecdf: &Ecdf, cdf: impl Fn(f64) -> f64) -> f64 {
    let mut d: f64 = 0.0;
    let mut below = 0.0;
    for (x, height) in ecdf.steps() {
        let f = cdf(x);
        d = d.max((height - f).abs()).max((f - below).abs());
        below = height;
    }
    d
}

/// Two-sample KS distance `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &Ecdf, b: &Ecdf) -> f64 {
    a.steps()
        .iter()
        .chain(b.steps().iter())
        .map(|&(x, _)| (a.eval(x) - b.eval(x)).abs())
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at level `alpha` for `n` samples.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()
}

/// Counts per bin `[e_k, e_{k+1})`; the last bin is closed. Values outside
/// the edges are dropped.
pub fn histogram(samples: &[f64], edges: &[f64]) -> Result<Vec<u64>, StatsError> {
    if edges.len() < 2 || !edges.windows(2).all(|w| w[0] < w[1]) {
        return Err(StatsError::BadEdges);
    }
    let bins = edges.len() - 1;
    let mut counts = vec![0; bins];
    for &x in samples {
        if x < edges[0] || x > edges[bins] {
            continue;
        }
        let k = edges.partition_point(|&e| e <= x).clamp(1, bins) - 1;
        counts[k] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_rate_law_is_exponential() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.05).collect();
        let rate = 0.7;
        let law = law_from_rates(&times, &vec![rate; times.len()]);
        assert_eq!(law.cdf.values[0], 0.0);
        for (k, &t) in times.iter().enumerate() {
            assert!((law.cdf.values[k] - (1.0 - (-rate * t).exp())).abs() < 1e-14);
            assert!((law.pdf[k] - rate * (-rate * t).exp()).abs() < 1e-14);
        }
        assert!(law.cdf.is_monotone());
    }

    #[test]
    fn pdf_integrates_with_survival_to_one() {
        let times: Vec<f64> = (0..=20_000).map(|k| k as f64 * 1e-3).collect();
        let rates: Vec<f64> = times.iter().map(|t| 0.2 + 0.1 * (3.0 * t).sin()).collect();
        let law = law_from_rates(&times, &rates);
        let integral: f64 = times.windows(2).zip(law.pdf.windows(2)).map(|(t, g)| 0.5 * (t[1] - t[0]) * (g[0] + g[1])).sum();
        assert!((integral + law.survival_at_end() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn ecdf_single_and_repeated_samples() {
        let e = Ecdf::new(&[2.0]).unwrap();
        assert_eq!(e.eval(1.999), 0.0);
        assert_eq!(e.eval(2.0), 1.0);
        let e = Ecdf::new(&[1.0, 1.0, 3.0]).unwrap();
        assert_eq!(e.steps(), vec![(1.0, 2.0 / 3.0), (3.0, 1.0)]);
        assert_eq!(Ecdf::new(&[]), Err(StatsError::EmptySample));
        let e = Ecdf::with_censored(&[1.0], 3).unwrap();
        assert_eq!(e.eval(5.0), 0.25);
        assert_eq!(e.censored(), 3);
    }

    #[test]
    fn ks_of_degenerate_sample_against_its_own_law() {
        let e = Ecdf::new(&[1.0; 10]).unwrap();
        let cdf = CdfTable {
            times: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 1.0, 1.0],
        };
        // the table ramps up linearly on [0, 1] while the ECDF stays at 0
        assert!((ks_distance(&e, &cdf) - 1.0).abs() < 1e-12);
        // a repeated knot is a jump, which matches the point mass exactly
        let step = CdfTable {
            times: vec![0.0, 1.0, 1.0, 2.0],
            values: vec![0.0, 0.0, 1.0, 1.0],
        };
        assert_eq!(step.eval(1.0), 1.0);
        assert_eq!(step.eval_left(1.0), 0.0);
        assert_eq!(ks_distance(&e, &step), 0.0);
    }

    #[test]
    fn ks_of_exponential_samples() {
        let n = 10_000;
        let crit = ks_critical_value(n, 0.05);
        assert!((crit - 0.0136).abs() < 1e-4);
        let mut passes = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
            let e = Ecdf::new(&xs).unwrap();
            if ks_distance_fn(&e, |t| 1.0 - (-t).exp()) < crit {
                passes += 1;
            }
        }
        // expected 38 of 40; binomial(40, 0.95) falls below 34 with prob < 1%
        assert!(passes >= 34, "{passes}");
    }

    #[test]
    fn histogram_counts() {
        let edges = uniform_edges(0.0, 1.0, 4);
        let counts = histogram(&[0.0, 0.1, 0.25, 0.9, 1.0, 1.5, -0.1], &edges).unwrap();
        assert_eq!(counts, vec![2, 1, 0, 2]);
        assert_eq!(histogram(&[0.0], &[1.0]), Err(StatsError::BadEdges));
    }

    #[test]
    fn two_sample_distance() {
        let a = Ecdf::new(&[1.0, 2.0]).unwrap();
        let b = Ecdf::new(&[3.0, 4.0]).unwrap();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn cdf_table_interpolation() {
        let t = CdfTable {
            times: vec![0.0, 1.0],
            values: vec![0.0, 0.5],
        };
        assert_eq!(t.eval(-1.0), 0.0);
        assert_eq!(t.eval(0.5), 0.25);
        assert_eq!(t.eval(7.0), 0.5);
    }
}
