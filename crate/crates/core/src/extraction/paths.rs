use serde::Serialize;

use super::{bracket, BenefitField, CostField};
use crate::error::{Error, Result};
use crate::grid::{integrate, DomainMask, NodeMask, Point, ScalarField};
use crate::rng::{scenario_rng, unit_f64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathStatus {
    /// Left the mask.
    Exited,
    /// Cost fell below the two-cell threshold near the boundary.
    LowCost,
    /// No step along the descent direction lowered the cost.
    Stagnated,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitPath {
    /// Starts at the extraction point. A path that starts on the boundary
    /// has a single vertex.
    pub vertices: Vec<Point>,
    pub status: PathStatus,
    /// Benefit at the extraction point, which selects the cost field.
    pub benefit: f64,
}

impl ExitPath {
    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| w[0].dist(w[1])).sum()
    }
}

/// Steepest-descent exit paths on the level-specific cost `C_{B(x₀)}`.
pub struct PathTracer<'a> {
    cost: &'a CostField,
    benefit: &'a BenefitField,
    grads: Vec<(ScalarField, ScalarField)>,
    inside: ScalarField,
    low_cost: f64,
    perimeter: f64,
}

impl<'a> PathTracer<'a> {
    /// `vmax` is the fastest travel speed; costs below `2h/vmax` count as
    /// being at the boundary.
    pub fn new(cost: &'a CostField, benefit: &'a BenefitField, mask: &DomainMask, vmax: f64) -> Result<Self> {
        if !(vmax > 0.0) {
            return Err(Error::invalid("vmax must be > 0"));
        }
        let grads = cost.per_level.iter().map(|t| t.times.gradient_central()).collect();
        Ok(Self {
            cost,
            benefit,
            grads,
            inside: mask.signed_distance(),
            low_cost: 2.0 * mask.grid().cellsize() / vmax,
            perimeter: mask.perimeter(),
        })
    }

    fn level(&self, b: f64) -> (usize, f64) {
        let ls = &self.cost.levels;
        bracket(ls, b.clamp(ls[0], ls[ls.len() - 1])).unwrap_or((0, 0.0))
    }

    /// Level cost `C_b` at `p`, `None` outside the grid.
    pub fn cost_at(&self, b: f64, p: Point) -> Option<f64> {
        let (i, w) = self.level(b);
        let f = &self.cost.per_level;
        let lo = f[i].times.bilinear_sample(p).ok()?;
        let hi = f[i + 1].times.bilinear_sample(p).ok()?;
        Some((1.0 - w) * lo + w * hi)
    }

    fn gradient_at(&self, (i, w): (usize, f64), p: Point) -> Option<(f64, f64)> {
        let (ax, ay) = &self.grads[i];
        let (bx, by) = &self.grads[i + 1];
        let gx = (1.0 - w) * ax.bilinear_sample(p).ok()? + w * bx.bilinear_sample(p).ok()?;
        let gy = (1.0 - w) * ay.bilinear_sample(p).ok()? + w * by.bilinear_sample(p).ok()?;
        Some((gx, gy))
    }

    fn outside(&self, p: Point) -> bool {
        self.inside.bilinear_sample(p).map_or(true, |s| s <= 0.0)
    }

    /// Forward Euler on `dx/dt = −∇C/|∇C|` with step `step`. A step that
    /// fails to lower the cost is halved up to five times before the path
    /// is declared stagnated, so the sampled cost strictly decreases along
    /// every returned path.
    pub fn trace(&self, x0: Point, step: f64) -> ExitPath {
        let b0 = self.benefit.b.bilinear_sample(x0).unwrap_or(0.0);
        let lv = self.level(b0);
        let done = |vertices, status| ExitPath {
            vertices,
            status,
            benefit: b0,
        };
        let mut pts = vec![x0];
        let Some(mut c) = self.cost_at(b0, x0) else {
            return done(pts, PathStatus::Exited);
        };
        if self.outside(x0) {
            return done(pts, PathStatus::Exited);
        }
        if c < self.low_cost {
            return done(pts, PathStatus::LowCost);
        }
        let max_iter = (10.0 * self.perimeter / step).ceil() as usize;
        let mut p = x0;
        for _ in 0..max_iter {
            let Some((gx, gy)) = self.gradient_at(lv, p) else {
                return done(pts, PathStatus::Exited);
            };
            let n = gx.hypot(gy);
            if !(n > 1e-9) {
                return done(pts, PathStatus::Stagnated);
            }
            let dir = Point::new(gx / n, gy / n);
            let mut s = step;
            let mut accepted = None;
            for _ in 0..6 {
                let q = p - dir * s;
                match self.cost_at(b0, q) {
                    Some(cq) if cq < c => {
                        accepted = Some((q, cq));
                        break;
                    }
                    Some(_) => s *= 0.5,
                    None => return done(pts, PathStatus::Exited),
                }
            }
            let Some((q, cq)) = accepted else {
                return done(pts, PathStatus::Stagnated);
            };
            pts.push(q);
            p = q;
            c = cq;
            if self.outside(q) {
                return done(pts, PathStatus::Exited);
            }
            if c < self.low_cost {
                return done(pts, PathStatus::LowCost);
            }
        }
        done(pts, PathStatus::MaxIterations)
    }
}

/// One exit path from `x0` (see [`PathTracer::trace`]).
pub fn trace_exit_path(
    x0: Point,
    cost: &CostField,
    benefit: &BenefitField,
    mask: &DomainMask,
    vmax: f64,
    step: f64,
) -> Result<ExitPath> {
    if !(step > 0.0 && step <= mask.grid().cellsize()) {
        return Err(Error::invalid(format!("path step must be in (0, h], got {step}")));
    }
    Ok(PathTracer::new(cost, benefit, mask, vmax)?.trace(x0, step))
}

/// `n` points drawn uniformly over the nodes of `hp`, each jittered
/// uniformly within its cell.
pub fn seed_extraction_points(hp: &NodeMask, n: usize, seed: u64) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::invalid("number of extraction points must be >= 1"));
    }
    let nodes: Vec<usize> = hp.indices().collect();
    if nodes.is_empty() {
        return Err(Error::Model("high-profit region is empty".into()));
    }
    let g = hp.grid();
    let h = g.cellsize();
    let mut rng = scenario_rng(seed);
    Ok((0..n)
        .map(|_| {
            let pick = ((unit_f64(&mut rng) * nodes.len() as f64) as usize).min(nodes.len() - 1);
            let c = g.node_at(nodes[pick]);
            let jx = (unit_f64(&mut rng) - 0.5) * h;
            let jy = (unit_f64(&mut rng) - 0.5) * h;
            Point::new(c.x + jx, c.y + jy)
        })
        .collect())
}

fn seg_dist(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist(a + ab * t)
}

/// `Ω` minus the high-profit nodes and every node within `tube_radius` of a
/// path.
pub fn classify_pristine(
    hp: &NodeMask,
    paths: &[ExitPath],
    tube_radius: f64,
    omega: &DomainMask,
) -> Result<NodeMask> {
    if !(tube_radius > 0.0) {
        return Err(Error::invalid(format!("tube radius must be > 0, got {tube_radius}")));
    }
    let g = *omega.grid();
    g.ensure_same(hp.grid(), "high-profit mask vs domain")?;
    let mut touched = hp.clone();
    let mut mark = |a: Point, b: Point| {
        let lo = Point::new(a.x.min(b.x) - tube_radius, a.y.min(b.y) - tube_radius);
        let hi = Point::new(a.x.max(b.x) + tube_radius, a.y.max(b.y) + tube_radius);
        let (fx0, fy0) = g.frac(lo);
        let (fx1, fy1) = g.frac(hi);
        let clampi = |f: f64, n: usize| f.clamp(0.0, (n - 1) as f64) as usize;
        let (i0, i1) = (clampi(fx0.ceil(), g.nx()), clampi(fx1.floor(), g.nx()));
        let (j0, j1) = (clampi(fy0.ceil(), g.ny()), clampi(fy1.floor(), g.ny()));
        for j in j0..=j1 {
            for i in i0..=i1 {
                if seg_dist(g.node(i, j), a, b) <= tube_radius {
                    touched.set(g.index(i, j), true);
                }
            }
        }
    };
    for path in paths {
        match path.vertices.as_slice() {
            [] => {}
            [p] => mark(*p, *p),
            vs => {
                for w in vs.windows(2) {
                    mark(w[0], w[1]);
                }
            }
        }
    }
    Ok(omega.difference(&touched))
}

/// `(∫χ / ∫1, ∫Bχ / ∫B)` over `Ω`. With zero total benefit the second
/// ratio falls back to the first.
pub fn metrics(pristine: &NodeMask, benefit: &BenefitField, omega: &NodeMask) -> Result<(f64, f64)> {
    if !pristine.is_subset_of(omega) {
        return Err(Error::InvalidMask("pristine region extends outside the domain".into()));
    }
    let chi = pristine.indicator();
    let area = integrate(&ScalarField::constant(*omega.grid(), 1.0), omega)?;
    let proportion = integrate(&chi, omega)? / area;
    let weighted = ScalarField::new(
        *omega.grid(),
        chi.values().iter().zip(benefit.b.values()).map(|(c, b)| c * b).collect(),
    )?;
    let total = integrate(&benefit.b, omega)?;
    let value = if total > 0.0 {
        integrate(&weighted, omega)? / total
    } else {
        proportion
    };
    Ok((proportion, value))
}
