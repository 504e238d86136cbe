//! Uniform node-registered rasters and the geometry that runs on them.
//!
//! Node `(i, j)` sits at `origin + (i·h, j·h)`; `i` runs east and `j` runs
//! north, and values are stored row-major with `j = 0` the southern row.
//! Cells that carry no data are flagged in a parallel boolean mask and never
//! take part in a stencil.

mod contour;
mod distance;
mod mask;
mod polyline;

pub use contour::marching_squares;
pub use distance::{inside_parity, signed_distance, unsigned_distance, SegmentIndex};
pub use mask::{DomainMask, NodeMask};
pub use polyline::{read_polylines_csv, write_polylines_csv, Polyline};

use crate::error::{Error, Result};
use crate::par::*;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Shape and placement of a raster. `origin` is the south-west node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    cellsize: f64,
    origin: Point,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, cellsize: f64, origin: Point) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2x2 nodes, got {nx}x{ny}"
            )));
        }
        if !(cellsize > 0.0 && cellsize.is_finite()) {
            return Err(Error::InvalidGrid(format!("cellsize must be > 0, got {cellsize}")));
        }
        if !(origin.x.is_finite() && origin.y.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            nx,
            ny,
            cellsize,
            origin,
        })
    }

    /// Smallest grid with spacing `cellsize` whose nodes cover the box, with
    /// the south-west node exactly at `(xmin, ymin)`.
    pub fn covering(xmin: f64, ymin: f64, xmax: f64, ymax: f64, cellsize: f64) -> Result<Self> {
        if !(xmax > xmin && ymax > ymin) {
            return Err(Error::InvalidGrid("empty bounding box".into()));
        }
        let nx = ((xmax - xmin) / cellsize - 1e-9).ceil() as usize + 1;
        let ny = ((ymax - ymin) / cellsize - 1e-9).ceil() as usize + 1;
        Self::new(nx, ny, cellsize, Point::new(xmin, ymin))
    }

    /// Grid symmetric about `center` with `half_nodes` nodes on each side.
    pub fn centered(center: Point, half_nodes: usize, cellsize: f64) -> Result<Self> {
        let n = 2 * half_nodes + 1;
        let origin = Point::new(
            center.x - half_nodes as f64 * cellsize,
            center.y - half_nodes as f64 * cellsize,
        );
        Self::new(n, n, cellsize, origin)
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn cellsize(&self) -> f64 {
        self.cellsize
    }

    #[inline]
    pub fn origin(&self) -> Point {
        self.origin
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.origin.x + i as f64 * self.cellsize
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.origin.y + j as f64 * self.cellsize
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(self.x(i), self.y(j))
    }

    #[inline]
    pub fn node_at(&self, k: usize) -> Point {
        let (i, j) = self.ij(k);
        self.node(i, j)
    }

    pub fn xmax(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn ymax(&self) -> f64 {
        self.y(self.ny - 1)
    }

    /// Fractional node coordinates of `p`.
    #[inline]
    pub fn frac(&self, p: Point) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.cellsize,
            (p.y - self.origin.y) / self.cellsize,
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        let (fx, fy) = self.frac(p);
        let tol = 1e-9;
        fx >= -tol && fy >= -tol && fx <= (self.nx - 1) as f64 + tol && fy <= (self.ny - 1) as f64 + tol
    }

    pub fn nearest_node(&self, p: Point) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let (fx, fy) = self.frac(p);
        let i = (fx.round().max(0.0) as usize).min(self.nx - 1);
        let j = (fy.round().max(0.0) as usize).min(self.ny - 1);
        Some((i, j))
    }

    /// Sub-grid of `nx × ny` nodes starting at node `(i0, j0)`.
    pub fn window(&self, i0: usize, j0: usize, nx: usize, ny: usize) -> Result<Grid> {
        if i0 + nx > self.nx || j0 + ny > self.ny {
            return Err(Error::InvalidGrid("window exceeds parent grid".into()));
        }
        Grid::new(nx, ny, self.cellsize, self.node(i0, j0))
    }

    pub fn ensure_same(&self, other: &Grid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} @ {} vs {}x{} @ {}",
                self.nx, self.ny, self.cellsize, other.nx, other.ny, other.cellsize
            )))
        }
    }
}

/// A real-valued raster with an optional nodata mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    nodata: Vec<bool>,
}

impl ScalarField {
    /// Field with data everywhere. Every value must be finite.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let nodata = vec![false; grid.len()];
        Self::with_nodata(grid, values, nodata)
    }

    pub fn with_nodata(grid: Grid, values: Vec<f64>, nodata: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() || nodata.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {} (mask {})",
                grid.len(),
                values.len(),
                nodata.len()
            )));
        }
        if let Some(k) = (0..values.len()).find(|&k| !nodata[k] && !values[k].is_finite()) {
            let (i, j) = grid.ij(k);
            return Err(Error::InvalidGrid(format!(
                "non-finite value {} at node ({i}, {j})",
                values[k]
            )));
        }
        Ok(Self {
            grid,
            values,
            nodata,
        })
    }

    /// Builds a field from raw values, flagging non-finite entries as nodata.
    pub fn from_values_lossy(grid: Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        let nodata = values.iter().map(|v| !v.is_finite()).collect();
        Self {
            grid,
            values,
            nodata,
        }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self::from_values_lossy(grid, vec![value; grid.len()])
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64 + Sync) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| f(grid.node_at(k)))
            .collect();
        Self::from_values_lossy(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn nodata(&self) -> &[bool] {
        &self.nodata
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    #[inline]
    pub fn is_nodata(&self, i: usize, j: usize) -> bool {
        self.nodata[self.grid.index(i, j)]
    }

    pub fn has_nodata(&self) -> bool {
        self.nodata.iter().any(|&b| b)
    }

    /// Applies `f` to every data value; nodata stays nodata.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> ScalarField {
        let values = self
            .values
            .par_iter()
            .zip(self.nodata.par_iter())
            .map(|(&v, &nd)| if nd { f64::NAN } else { f(v) })
            .collect();
        ScalarField::from_values_lossy(self.grid, values)
    }

    /// Minimum and maximum over data nodes selected by `mask`.
    pub fn range_on(&self, mask: &NodeMask) -> Option<(f64, f64)> {
        mask.indices()
            .filter(|&k| !self.nodata[k])
            .map(|k| self.values[k])
            .fold(None, |acc, v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    /// Bilinear interpolation of the four nodes around `p`; exact at nodes.
    pub fn bilinear_sample(&self, p: Point) -> Result<f64> {
        if !self.grid.contains(p) {
            return Err(Error::OutOfExtent { x: p.x, y: p.y });
        }
        let g = &self.grid;
        let (fx, fy) = g.frac(p);
        let fx = fx.clamp(0.0, (g.nx - 1) as f64);
        let fy = fy.clamp(0.0, (g.ny - 1) as f64);
        let i = (fx.floor() as usize).min(g.nx - 2);
        let j = (fy.floor() as usize).min(g.ny - 2);
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            if self.is_nodata(i + di, j + dj) {
                return Err(Error::Nodata {
                    i: i + di,
                    j: j + dj,
                });
            }
        }
        let f00 = self.get(i, j);
        let f10 = self.get(i + 1, j);
        let f01 = self.get(i, j + 1);
        let f11 = self.get(i + 1, j + 1);
        Ok((1.0 - tx) * (1.0 - ty) * f00
            + tx * (1.0 - ty) * f10
            + (1.0 - tx) * ty * f01
            + tx * ty * f11)
    }

    /// Central differences in the interior, first-order one-sided on the
    /// border. Nodes whose stencil touches nodata come back as nodata.
    pub fn gradient_central(&self) -> (ScalarField, ScalarField) {
        let g = self.grid;
        let h = g.cellsize;
        let (nx, ny) = (g.nx, g.ny);
        let diff = |k_lo: usize, k_hi: usize, span: f64| -> f64 {
            if self.nodata[k_lo] || self.nodata[k_hi] {
                f64::NAN
            } else {
                (self.values[k_hi] - self.values[k_lo]) / span
            }
        };
        let gx: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|k| {
                if self.nodata[k] {
                    return f64::NAN;
                }
                let (i, _) = g.ij(k);
                if i == 0 {
                    diff(k, k + 1, h)
                } else if i == nx - 1 {
                    diff(k - 1, k, h)
                } else {
                    diff(k - 1, k + 1, 2.0 * h)
                }
            })
            .collect();
        let gy: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|k| {
                if self.nodata[k] {
                    return f64::NAN;
                }
                let (_, j) = g.ij(k);
                if j == 0 {
                    diff(k, k + nx, h)
                } else if j == ny - 1 {
                    diff(k - nx, k, h)
                } else {
                    diff(k - nx, k + nx, 2.0 * h)
                }
            })
            .collect();
        (
            ScalarField::from_values_lossy(g, gx),
            ScalarField::from_values_lossy(g, gy),
        )
    }

    /// Copies the window starting at `(i0, j0)` onto `sub`.
    pub fn crop(&self, i0: usize, j0: usize, sub: Grid) -> ScalarField {
        let mut values = Vec::with_capacity(sub.len());
        let mut nodata = Vec::with_capacity(sub.len());
        for j in 0..sub.ny {
            let start = self.grid.index(i0, j0 + j);
            values.extend_from_slice(&self.values[start..start + sub.nx]);
            nodata.extend_from_slice(&self.nodata[start..start + sub.nx]);
        }
        ScalarField {
            grid: sub,
            values,
            nodata,
        }
    }

    /// Writes `sub` back into this field at `(i0, j0)`.
    pub fn paste(&mut self, i0: usize, j0: usize, sub: &ScalarField) {
        let sg = sub.grid;
        for j in 0..sg.ny {
            let dst = self.grid.index(i0, j0 + j);
            let src = sg.index(0, j);
            self.values[dst..dst + sg.nx].copy_from_slice(&sub.values[src..src + sg.nx]);
            self.nodata[dst..dst + sg.nx].copy_from_slice(&sub.nodata[src..src + sg.nx]);
        }
    }
}

/// Midpoint-rule integral `Σ f·h²` over the nodes of `mask`.
///
/// Rows are summed independently and then combined in row order, so the
/// result does not depend on the thread count.
pub fn integrate(field: &ScalarField, mask: &NodeMask) -> Result<f64> {
    field.grid.ensure_same(mask.grid(), "integrate")?;
    let g = field.grid;
    let rows: Vec<Result<f64>> = (0..g.ny)
        .into_par_iter()
        .map(|j| {
            let mut s = 0.0;
            for i in 0..g.nx {
                let k = g.index(i, j);
                if mask.contains_index(k) {
                    if field.nodata[k] {
                        return Err(Error::Nodata { i, j });
                    }
                    s += field.values[k];
                }
            }
            Ok(s)
        })
        .collect();
    let mut total = 0.0;
    for r in rows {
        total += r?;
    }
    Ok(total * g.cellsize * g.cellsize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Grid {
        Grid::new(n, n, 1.0, Point::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate_shapes() {
        assert!(Grid::new(1, 5, 1.0, Point::default()).is_err());
        assert!(Grid::new(5, 5, 0.0, Point::default()).is_err());
        assert!(Grid::new(5, 5, -1.0, Point::default()).is_err());
    }

    #[test]
    fn bilinear_reproduces_constants() {
        let f = ScalarField::constant(unit_grid(4), 5.0);
        assert_eq!(f.bilinear_sample(Point::new(1.3, 2.7)).unwrap(), 5.0);
    }

    #[test]
    fn bilinear_is_exact_for_linear_x() {
        let f = ScalarField::from_fn(unit_grid(4), |p| p.x);
        assert_eq!(f.bilinear_sample(Point::new(0.25, 0.0)).unwrap(), 0.25);
    }

    #[test]
    fn bilinear_of_xy_at_cell_center() {
        // corners {0,0,0,1}: (1/4)(0+0+0+1)
        let f = ScalarField::from_fn(unit_grid(3), |p| p.x * p.y);
        assert_eq!(f.bilinear_sample(Point::new(0.5, 0.5)).unwrap(), 0.25);
    }

    #[test]
    fn bilinear_errors() {
        let g = unit_grid(4);
        let f = ScalarField::constant(g, 1.0);
        assert!(matches!(
            f.bilinear_sample(Point::new(-0.5, 1.0)),
            Err(Error::OutOfExtent { .. })
        ));
        let mut vals = vec![1.0; g.len()];
        vals[g.index(2, 2)] = f64::NAN;
        let f = ScalarField::from_values_lossy(g, vals);
        assert!(matches!(
            f.bilinear_sample(Point::new(1.5, 1.5)),
            Err(Error::Nodata { i: 2, j: 2 })
        ));
        assert!(f.bilinear_sample(Point::new(0.5, 0.5)).is_ok());
    }

    #[test]
    fn gradient_of_linear_and_constant() {
        let f = ScalarField::from_fn(unit_grid(6), |p| 3.0 * p.x);
        let (gx, gy) = f.gradient_central();
        for j in 1..5 {
            for i in 1..5 {
                assert!((gx.get(i, j) - 3.0).abs() < 1e-12);
                assert_eq!(gy.get(i, j), 0.0);
            }
        }
        let (gx, gy) = ScalarField::constant(unit_grid(5), 2.0).gradient_central();
        assert!(gx.values().iter().chain(gy.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn central_difference_of_quadratic_is_exact_at_node() {
        let g = Grid::new(21, 3, 0.1, Point::new(0.0, 0.0)).unwrap();
        let f = ScalarField::from_fn(g, |p| p.x * p.x);
        let (gx, _) = f.gradient_central();
        assert!((gx.get(10, 1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_marks_nodata_stencils() {
        let g = unit_grid(5);
        let mut vals = vec![1.0; g.len()];
        vals[g.index(2, 2)] = f64::NAN;
        let (gx, gy) = ScalarField::from_values_lossy(g, vals).gradient_central();
        assert!(gx.is_nodata(1, 2) && gx.is_nodata(3, 2) && !gx.is_nodata(1, 1));
        assert!(gy.is_nodata(2, 1) && gy.is_nodata(2, 3));
    }

    #[test]
    fn integrate_counts_cells() {
        let g = Grid::new(12, 12, 2.0, Point::default()).unwrap();
        let mask = NodeMask::from_fn(g, |i, j| (1..11).contains(&i) && (1..11).contains(&j));
        assert_eq!(mask.count(), 100);
        assert_eq!(integrate(&ScalarField::constant(g, 1.0), &mask).unwrap(), 400.0);
        assert_eq!(integrate(&ScalarField::constant(g, 0.0), &mask).unwrap(), 0.0);
    }

    #[test]
    fn integrate_density_over_unit_disc() {
        let g = Grid::centered(Point::default(), 105, 0.01).unwrap();
        let disc = DomainMask::disc(g, Point::default(), 1.0).unwrap();
        let psi = ScalarField::constant(g, 1.0 / std::f64::consts::PI);
        let total = integrate(&psi, &disc).unwrap();
        assert!((total - 1.0).abs() < 0.02, "{total}");
    }

    #[test]
    fn crop_and_paste_roundtrip() {
        let g = unit_grid(6);
        let f = ScalarField::from_fn(g, |p| p.x + 10.0 * p.y);
        let sub = g.window(1, 2, 3, 3).unwrap();
        let c = f.crop(1, 2, sub);
        assert_eq!(c.get(0, 0), f.get(1, 2));
        assert_eq!(c.get(2, 2), f.get(3, 4));
        let mut z = ScalarField::constant(g, 0.0);
        z.paste(1, 2, &c);
        assert_eq!(z.get(3, 4), f.get(3, 4));
        assert_eq!(z.get(0, 0), 0.0);
    }
}
