use std::ops::Deref;

use super::{inside_parity, marching_squares, unsigned_distance, Grid, Point, Polyline, ScalarField};
use crate::error::{Error, Result};

/// A set of grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMask {
    grid: Grid,
    inside: Vec<bool>,
}

impl NodeMask {
    pub fn new(grid: Grid, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != grid.len() {
            return Err(Error::InvalidMask(format!(
                "expected {} flags, got {}",
                grid.len(),
                inside.len()
            )));
        }
        Ok(Self { grid, inside })
    }

    pub fn empty(grid: Grid) -> Self {
        Self {
            grid,
            inside: vec![false; grid.len()],
        }
    }

    pub fn full(grid: Grid) -> Self {
        Self {
            grid,
            inside: vec![true; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(usize, usize) -> bool) -> Self {
        let inside = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                f(i, j)
            })
            .collect();
        Self { grid, inside }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn flags(&self) -> &[bool] {
        &self.inside
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.inside[self.grid.index(i, j)]
    }

    #[inline]
    pub fn contains_index(&self, k: usize) -> bool {
        self.inside[k]
    }

    pub fn set(&mut self, k: usize, value: bool) {
        self.inside[k] = value;
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.inside
            .iter()
            .enumerate()
            .filter_map(|(k, &b)| b.then_some(k))
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.inside.iter().any(|&b| b)
    }

    pub fn area(&self) -> f64 {
        self.count() as f64 * self.grid.cellsize() * self.grid.cellsize()
    }

    pub fn union(&self, other: &NodeMask) -> NodeMask {
        self.zip(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &NodeMask) -> NodeMask {
        self.zip(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &NodeMask) -> NodeMask {
        self.zip(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &NodeMask) -> bool {
        self.inside.iter().zip(&other.inside).all(|(&a, &b)| !a || b)
    }

    fn zip(&self, other: &NodeMask, f: impl Fn(bool, bool) -> bool) -> NodeMask {
        assert_eq!(self.grid, other.grid, "masks on different grids");
        NodeMask {
            grid: self.grid,
            inside: self
                .inside
                .iter()
                .zip(&other.inside)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// 1.0 inside, 0.0 outside.
    pub fn indicator(&self) -> ScalarField {
        let values = self.inside.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ScalarField::from_values_lossy(self.grid, values)
    }

    /// Index bounds `(i_min, j_min, i_max, j_max)` of the selected nodes.
    pub fn bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut b: Option<(usize, usize, usize, usize)> = None;
        for k in self.indices() {
            let (i, j) = self.grid.ij(k);
            b = Some(match b {
                None => (i, j, i, j),
                Some((a, c, d, e)) => (a.min(i), c.min(j), d.max(i), e.max(j)),
            });
        }
        b
    }
}

/// The protected region `Ω`: a non-empty node set kept one node clear of the
/// raster border, together with its boundary curve(s).
#[derive(Debug, Clone, PartialEq)]
pub struct DomainMask {
    nodes: NodeMask,
    boundary: Vec<Polyline>,
}

impl Deref for DomainMask {
    type Target = NodeMask;
    fn deref(&self) -> &NodeMask {
        &self.nodes
    }
}

impl DomainMask {
    /// Uses the node set as given; the boundary is traced half-way between
    /// inside and outside nodes.
    pub fn from_nodes(nodes: NodeMask) -> Result<Self> {
        Self::validate(&nodes)?;
        let boundary = marching_squares(&nodes.indicator(), 0.5);
        if boundary.is_empty() {
            return Err(Error::InvalidMask("could not trace a boundary".into()));
        }
        Ok(Self { nodes, boundary })
    }

    /// Nodes inside one or more closed polygons (even-odd rule).
    pub fn from_polygons(grid: Grid, polygons: Vec<Polyline>) -> Result<Self> {
        if polygons.is_empty() {
            return Err(Error::InvalidMask("no polygon given".into()));
        }
        let polygons: Vec<Polyline> = polygons
            .into_iter()
            .map(|p| {
                if p.is_closed() {
                    Ok(p)
                } else {
                    Polyline::new(p.vertices().to_vec(), true)
                }
            })
            .collect::<Result<_>>()?;
        let inside = inside_parity(&grid, &polygons);
        let nodes = NodeMask::new(grid, inside)?;
        Self::validate(&nodes)?;
        Ok(Self {
            nodes,
            boundary: polygons,
        })
    }

    /// A disc, with the circle approximated finely enough that the polygon
    /// deviates from it by less than 1e-4 of a cell.
    pub fn disc(grid: Grid, center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidMask(format!("disc radius must be > 0, got {radius}")));
        }
        let tol = 1e-4 * grid.cellsize();
        let n = ((std::f64::consts::PI * (radius / (2.0 * tol)).sqrt()).ceil() as usize).max(64);
        let verts = (0..n)
            .map(|m| {
                let a = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
                Point::new(center.x + radius * a.cos(), center.y + radius * a.sin())
            })
            .collect();
        Self::from_polygons(grid, vec![Polyline::new(verts, true)?])
    }

    pub fn rectangle(grid: Grid, min: Point, max: Point) -> Result<Self> {
        let verts = vec![
            min,
            Point::new(max.x, min.y),
            max,
            Point::new(min.x, max.y),
        ];
        Self::from_polygons(grid, vec![Polyline::new(verts, true)?])
    }

    fn validate(nodes: &NodeMask) -> Result<()> {
        if nodes.is_empty() {
            return Err(Error::InvalidMask("mask has no inside node".into()));
        }
        let g = nodes.grid();
        let touches = (0..g.nx()).any(|i| nodes.contains(i, 0) || nodes.contains(i, g.ny() - 1))
            || (0..g.ny()).any(|j| nodes.contains(0, j) || nodes.contains(g.nx() - 1, j));
        if touches {
            return Err(Error::InvalidMask(
                "mask touches the raster border; a one-cell margin is required".into(),
            ));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &NodeMask {
        &self.nodes
    }

    pub fn boundary(&self) -> &[Polyline] {
        &self.boundary
    }

    pub fn perimeter(&self) -> f64 {
        self.boundary.iter().map(Polyline::length).sum()
    }

    /// Exact distance to the boundary, positive on inside nodes.
    pub fn signed_distance(&self) -> ScalarField {
        let g = *self.nodes.grid();
        let d = unsigned_distance(&g, &self.boundary);
        let values = d
            .into_iter()
            .zip(self.nodes.flags())
            .map(|(d, &inside)| if inside { d } else { -d })
            .collect();
        ScalarField::from_values_lossy(g, values)
    }
}
