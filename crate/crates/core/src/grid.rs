//! Uniform periodic grid on the ring road `[-L, L)`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("half-length must be positive and finite, got {0}")]
    HalfLength(f64),
    #[error("grid needs at least 3 cells, got {0}")]
    TooFewCells(usize),
}

/// `cells` finite volumes of width `2L / cells`. Cell `i` covers
/// `[x_{i-1/2}, x_{i+1/2})` with `x_{i-1/2} = -L + i dx`; indices wrap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    half_length: f64,
    cells: usize,
}

impl Grid {
    pub fn new(half_length: f64, cells: usize) -> Result<Self, GridError> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(GridError::HalfLength(half_length));
        }
        if cells < 3 {
            return Err(GridError::TooFewCells(cells));
        }
        Ok(Self { half_length, cells })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn length(&self) -> f64 {
        2.0 * self.half_length
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.cells as f64
    }

    /// Left interface of cell `i`, i.e. `x_{i-1/2}`. `interface(0) == -L`.
    pub fn interface(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.dx()
    }

    pub fn center(&self, i: usize) -> f64 {
        -self.half_length + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.cells).map(move |i| self.center(i))
    }

    /// Maps any coordinate onto `[-L, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        wrap_periodic(x, self.half_length)
    }

    /// Index of the cell containing `x` (after wrapping).
    pub fn cell_of(&self, x: f64) -> usize {
        let u = (self.wrap(x) + self.half_length) / self.dx();
        (u.floor() as usize).min(self.cells - 1)
    }

    /// Same road, `factor` times as many cells.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            half_length: self.half_length,
            cells: self.cells * factor,
        }
    }
}

pub(crate) fn wrap_periodic(x: f64, half_length: f64) -> f64 {
    let period = 2.0 * half_length;
    let mut y = (x + half_length).rem_euclid(period) - half_length;
    // rem_euclid can round up to exactly `period`
    if y >= half_length {
        y -= period;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_of_reference_grid() {
        let g = Grid::new(10.0, 1000).unwrap();
        assert!((g.dx() - 0.02).abs() < 1e-15);
        assert_eq!(g.interface(0), -10.0);
        assert!((g.center(0) + 9.99).abs() < 1e-12);
        assert!((g.interface(1000) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_and_cell_lookup() {
        let g = Grid::new(1.0, 4).unwrap();
        assert_eq!(g.wrap(1.0), -1.0);
        assert_eq!(g.wrap(-1.0), -1.0);
        assert!((g.wrap(2.5) - 0.5).abs() < 1e-15);
        assert_eq!(g.cell_of(-1.0), 0);
        assert_eq!(g.cell_of(0.99), 3);
        assert_eq!(g.cell_of(1.0), 0);
        assert_eq!(g.cell_of(-0.5), 1);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert_eq!(Grid::new(0.0, 10), Err(GridError::HalfLength(0.0)));
        assert_eq!(Grid::new(1.0, 2), Err(GridError::TooFewCells(2)));
    }
}
