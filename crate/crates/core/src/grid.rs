//! Uniform cell-centered grids on an interval or an axis-aligned rectangle.
//!
//! Boundaries are no-flux: the five-point (or three-point) Laplacian reflects
//! the adjacent interior value into the ghost cell, so the discrete normal
//! derivative vanishes on every face. Quadrature is the midpoint rule.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Smallest admissible number of cells along any axis.
pub const MIN_CELLS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Grid {
    dim: usize,
    extents: [f64; 2],
    cells: [usize; 2],
    spacing: [f64; 2],
    measure: f64,
}

impl Grid {
    /// The interval `(0, length)` split into `n` cells.
    pub fn line(length: f64, n: usize) -> Result<Self> {
        check_axis(length, n)?;
        Ok(Grid {
            dim: 1,
            extents: [length, 1.0],
            cells: [n, 1],
            spacing: [length / n as f64, 1.0],
            measure: length,
        })
    }

    /// The rectangle `(0, lx) × (0, ly)` split into `nx × ny` cells.
    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        check_axis(lx, nx)?;
        check_axis(ly, ny)?;
        Ok(Grid {
            dim: 2,
            extents: [lx, ly],
            cells: [nx, ny],
            spacing: [lx / nx as f64, ly / ny as f64],
            measure: lx * ly,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn h_min(&self) -> f64 {
        self.spacing().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn h_max(&self) -> f64 {
        self.spacing().iter().copied().fold(0.0, f64::max)
    }

    /// |Ω|, the product of the extents.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// Linear index of cell `(i, j)`; `i` runs fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.cells[0] * j
    }

    /// Axis indices of the cell with linear index `idx`.
    pub fn position(&self, idx: usize) -> [usize; 2] {
        [idx % self.cells[0], idx / self.cells[0]]
    }

    /// Coordinates of the center of cell `idx` (the second entry is 0 in 1D).
    pub fn center(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.position(idx);
        let x = (i as f64 + 0.5) * self.spacing[0];
        let y = if self.dim == 2 {
            (j as f64 + 0.5) * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Same axis lengths and dimension, different resolution.
    pub fn refined(&self, cells: &[usize]) -> Result<Self> {
        match (self.dim, cells) {
            (1, [n]) => Grid::line(self.extents[0], *n),
            (2, [nx, ny]) => Grid::rectangle(self.extents[0], self.extents[1], *nx, *ny),
            _ => Err(Error::input("cell counts do not match grid dimension")),
        }
    }
}

fn check_axis(length: f64, n: usize) -> Result<()> {
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::input(alloc::format!(
            "axis length must be positive, got {length}"
        )));
    }
    if n < MIN_CELLS {
        return Err(Error::input(alloc::format!(
            "need at least {MIN_CELLS} cells per axis, got {n}"
        )));
    }
    Ok(())
}

/// One scalar per cell of a [`Grid`]. All values are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::input(alloc::format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(cell) = first_non_finite(&values) {
            return Err(Error::input(alloc::format!(
                "non-finite value {} at cell {cell}",
                values[cell]
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Result<Self> {
        Field::new(grid, alloc::vec![value; grid.len()])
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|idx| f(grid.center(idx))).collect();
        Field::new(grid, values)
    }

    /// Builds a field without the finiteness check; callers run
    /// [`first_non_finite`] themselves and report the offending cell.
    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Cellwise map; the result is checked for finiteness.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Field> {
        Field::new(self.grid, self.values.iter().map(|&x| f(x)).collect())
    }

    /// Cellwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::input("fields live on different grids"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Field::new(self.grid, values)
    }

    /// Sup norm.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

pub(crate) fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|x| !x.is_finite())
}

/// Discrete Laplacian with ghost-cell reflection at every boundary face.
pub fn laplacian(field: &Field) -> Field {
    let mut out = alloc::vec![0.0; field.values.len()];
    laplacian_into(&field.grid, &field.values, &mut out);
    Field::from_raw(field.grid, out)
}

/// Writes the Laplacian of `values` into `out`. Both slices have `grid.len()` entries.
pub fn laplacian_into(grid: &Grid, values: &[f64], out: &mut [f64]) {
    assert_eq!(values.len(), grid.len());
    assert_eq!(out.len(), grid.len());
    let nx = grid.cells[0];
    let inv_hx2 = 1.0 / (grid.spacing[0] * grid.spacing[0]);
    if grid.dim == 1 {
        second_difference(values, out, inv_hx2);
        return;
    }

    let ny = grid.cells[1];
    let inv_hy2 = 1.0 / (grid.spacing[1] * grid.spacing[1]);
    for j in 0..ny {
        let row = &values[j * nx..(j + 1) * nx];
        second_difference(row, &mut out[j * nx..(j + 1) * nx], inv_hx2);
        let below = if j == 0 {
            row
        } else {
            &values[(j - 1) * nx..j * nx]
        };
        let above = if j + 1 == ny {
            row
        } else {
            &values[(j + 1) * nx..(j + 2) * nx]
        };
        for i in 0..nx {
            out[j * nx + i] += (below[i] - 2.0 * row[i] + above[i]) * inv_hy2;
        }
    }
}

// Three-point stencil along a contiguous line; ghost = adjacent interior value.
fn second_difference(line: &[f64], out: &mut [f64], inv_h2: f64) {
    let n = line.len();
    for i in 0..n {
        let left = line[i.saturating_sub(1)];
        let right = line[if i + 1 == n { i } else { i + 1 }];
        out[i] = (left - 2.0 * line[i] + right) * inv_h2;
    }
}

/// Midpoint rule: index-ordered sum of the values times the cell volume.
pub fn integrate(field: &Field) -> f64 {
    sum_ordered(&field.values) * field.grid.cell_volume()
}

pub(crate) fn sum_ordered(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, &x| acc + x)
}

/// Exact `(min, max)` over all cells.
pub fn extrema(field: &Field) -> (f64, f64) {
    field
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_too_few_cells() {
        assert!(Grid::line(1.0, 2).is_err());
        assert!(Grid::rectangle(1.0, 1.0, 3, 2).is_err());
        assert!(Grid::line(0.0, 10).is_err());
    }

    #[test]
    fn measure_is_product_of_extents() {
        let g = Grid::rectangle(2.0, 3.0, 4, 5).unwrap();
        assert_eq!(g.measure(), 6.0);
        assert_eq!(g.len(), 20);
        assert_eq!(g.spacing(), &[0.5, 0.6]);
    }

    #[test]
    fn field_rejects_nan_and_wrong_length() {
        let g = Grid::line(1.0, 3).unwrap();
        assert!(Field::new(g, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(Field::new(g, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn constant_field_is_harmonic() {
        let g = Grid::rectangle(1.0, 2.0, 5, 7).unwrap();
        let f = Field::constant(g, 3.25).unwrap();
        assert!(laplacian(&f).values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn three_point_stencil() {
        let g = Grid::line(3.0, 3).unwrap();
        let f = Field::new(g, vec![0.0, 1.0, 0.0]).unwrap();
        let lap = laplacian(&f);
        assert_eq!(lap.values()[1], -2.0);
        // reflected ghosts: (0 - 0 + 1) and (1 - 0 + 0)
        assert_eq!(lap.values()[0], 1.0);
        assert_eq!(lap.values()[2], 1.0);
    }

    #[test]
    fn quadratic_has_laplacian_two_in_interior() {
        let g = Grid::line(1.0, 50).unwrap();
        let f = Field::from_fn(g, |[x, _]| x * x).unwrap();
        let lap = laplacian(&f);
        for &x in &lap.values()[1..49] {
            assert!((x - 2.0).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn integrate_examples() {
        let g = Grid::line(1.0, 17).unwrap();
        assert!((integrate(&Field::constant(g, 2.5).unwrap()) - 2.5).abs() < 1e-15);
        let f = Field::from_fn(g, |[x, _]| x).unwrap();
        assert!((integrate(&f) - 0.5).abs() < 1e-15);
        let g2 = Grid::rectangle(2.0, 3.0, 8, 9).unwrap();
        assert!((integrate(&Field::constant(g2, 1.5).unwrap()) - 9.0).abs() < 1e-13);
    }

    #[test]
    fn extrema_examples() {
        let g = Grid::line(1.0, 10).unwrap();
        let f = Field::from_fn(g, |[x, _]| -x).unwrap();
        let (lo, hi) = extrema(&f);
        assert!((lo + 0.95).abs() < 1e-15);
        assert!((hi + 0.05).abs() < 1e-15);
        let g3 = Grid::line(1.0, 3).unwrap();
        assert_eq!(
            extrema(&Field::new(g3, vec![0.0, 1.0, 0.0]).unwrap()),
            (0.0, 1.0)
        );
    }

    #[test]
    fn two_d_cell_centers() {
        let g = Grid::rectangle(2.0, 1.0, 4, 5).unwrap();
        let idx = g.index(3, 2);
        assert_eq!(g.position(idx), [3, 2]);
        assert_eq!(g.center(idx), [1.75, 0.5]);
    }
}
