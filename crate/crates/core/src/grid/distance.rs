//! Exact Euclidean distance to polylines.
//!
//! Segments are grouped into buckets on a coarse uniform grid. A query seeds
//! its answer from the nearest bucket and then only opens buckets whose
//! bounding box is closer than the best distance so far, so the answer equals
//! the brute-force minimum over all segments.

use super::{Grid, Point, Polyline, ScalarField};
use crate::error::{Error, Result};
use crate::par::*;

#[inline]
fn point_segment_dist2(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let ap = p - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    let t = if len2 > 0.0 {
        ((ap.x * ab.x + ap.y * ab.y) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = p - (a + ab * t);
    d.x * d.x + d.y * d.y
}

pub struct SegmentIndex {
    segs: Vec<(Point, Point)>,
    /// Non-empty buckets: bounding box of their segments and segment ids.
    buckets: Vec<([f64; 4], Vec<u32>)>,
}

impl SegmentIndex {
    /// `bucket_size` is a hint; something near a few grid cells works well.
    pub fn new(lines: &[Polyline], bucket_size: f64) -> Self {
        let segs: Vec<(Point, Point)> = lines.iter().flat_map(|l| l.segments()).collect();
        if segs.is_empty() {
            return Self {
                segs,
                buckets: Vec::new(),
            };
        }
        let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for &(a, b) in &segs {
            xmin = xmin.min(a.x).min(b.x);
            ymin = ymin.min(a.y).min(b.y);
            xmax = xmax.max(a.x).max(b.x);
            ymax = ymax.max(a.y).max(b.y);
        }
        let bsize = bucket_size.max(1e-12 * (xmax - xmin).max(ymax - ymin)).max(f64::MIN_POSITIVE);
        let bnx = (((xmax - xmin) / bsize) as usize + 1).min(4096);
        let bny = (((ymax - ymin) / bsize) as usize + 1).min(4096);
        let mut grid: Vec<Vec<u32>> = vec![Vec::new(); bnx * bny];
        let cell = |v: f64, o: f64, n: usize| (((v - o) / bsize) as usize).min(n - 1);
        for (s, &(a, b)) in segs.iter().enumerate() {
            // midpoint bucket; the bucket box below is grown to cover the segment
            let m = (a + b) * 0.5;
            grid[cell(m.y, ymin, bny) * bnx + cell(m.x, xmin, bnx)].push(s as u32);
        }
        let buckets = grid
            .into_iter()
            .filter(|ids| !ids.is_empty())
            .map(|ids| {
                let mut r = [f64::MAX, f64::MAX, f64::MIN, f64::MIN];
                for &s in &ids {
                    let (a, b) = segs[s as usize];
                    r[0] = r[0].min(a.x).min(b.x);
                    r[1] = r[1].min(a.y).min(b.y);
                    r[2] = r[2].max(a.x).max(b.x);
                    r[3] = r[3].max(a.y).max(b.y);
                }
                (r, ids)
            })
            .collect();
        Self { segs, buckets }
    }

    pub fn is_empty(&self) -> bool {
        self.segs.is_empty()
    }

    /// Distance from `p` to the nearest segment (`f64::INFINITY` if none).
    pub fn distance(&self, p: Point) -> f64 {
        let rect_dist2 = |r: &[f64; 4]| {
            let dx = (r[0] - p.x).max(p.x - r[2]).max(0.0);
            let dy = (r[1] - p.y).max(p.y - r[3]).max(0.0);
            dx * dx + dy * dy
        };
        let scan = |ids: &[u32], best: &mut f64| {
            for &s in ids {
                let (a, b) = self.segs[s as usize];
                *best = best.min(point_segment_dist2(p, a, b));
            }
        };
        let mut near = Vec::with_capacity(self.buckets.len());
        let mut first = None;
        let mut first_d = f64::INFINITY;
        for (n, (r, _)) in self.buckets.iter().enumerate() {
            let d = rect_dist2(r);
            if d < first_d || first.is_none() {
                first = Some(n);
                first_d = d;
            }
            near.push(d);
        }
        let Some(first) = first else {
            return f64::INFINITY;
        };
        let mut best = f64::INFINITY;
        scan(&self.buckets[first].1, &mut best);
        for (n, (_, ids)) in self.buckets.iter().enumerate() {
            if n != first && near[n] < best {
                scan(ids, &mut best);
            }
        }
        best.sqrt()
    }
}

/// Distance from every node to the nearest polyline segment.
pub fn unsigned_distance(grid: &Grid, lines: &[Polyline]) -> Vec<f64> {
    let index = SegmentIndex::new(lines, 4.0 * grid.cellsize());
    (0..grid.len())
        .into_par_iter()
        .map(|k| index.distance(grid.node_at(k)))
        .collect()
}

/// Even-odd parity of every node with respect to the polylines (open ones
/// are closed implicitly): `true` when a ray cast towards `-x` crosses the
/// curves an odd number of times.
pub fn inside_parity(grid: &Grid, lines: &[Polyline]) -> Vec<bool> {
    let segs: Vec<(Point, Point)> = lines
        .iter()
        .flat_map(|l| {
            let v = l.vertices();
            let n = v.len();
            (0..n).map(move |s| (v[s], v[(s + 1) % n]))
        })
        .collect();
    let rows: Vec<Vec<bool>> = (0..grid.ny())
        .into_par_iter()
        .map(|j| {
            let y = grid.y(j);
            let mut xs: Vec<f64> = segs
                .iter()
                .filter(|(a, b)| (a.y > y) != (b.y > y))
                .map(|(a, b)| a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y))
                .collect();
            xs.sort_by(f64::total_cmp);
            let mut row = Vec::with_capacity(grid.nx());
            let mut c = 0;
            for i in 0..grid.nx() {
                let x = grid.x(i);
                while c < xs.len() && xs[c] < x {
                    c += 1;
                }
                row.push(c % 2 == 1);
            }
            row
        })
        .collect();
    rows.concat()
}

fn point_parity(p: Point, lines: &[Polyline]) -> bool {
    let mut odd = false;
    for l in lines {
        let v = l.vertices();
        let n = v.len();
        for s in 0..n {
            let (a, b) = (v[s], v[(s + 1) % n]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if x < p.x {
                    odd = !odd;
                }
            }
        }
    }
    odd
}

/// Exact signed distance to `contours`: positive on the same side as
/// `inside_ref`, negative elsewhere. Sides are decided by ray parity.
pub fn signed_distance(grid: &Grid, contours: &[Polyline], inside_ref: Point) -> Result<ScalarField> {
    if contours.is_empty() {
        return Err(Error::invalid("signed distance needs at least one contour"));
    }
    if let Some(n) = contours.iter().position(|c| c.length() == 0.0) {
        return Err(Error::InvalidPolyline(format!("contour {n} has zero length")));
    }
    let index = SegmentIndex::new(contours, 4.0 * grid.cellsize());
    if index.distance(inside_ref) == 0.0 {
        return Err(Error::invalid("reference point lies on a contour"));
    }
    let ref_parity = point_parity(inside_ref, contours);
    let parity = inside_parity(grid, contours);
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let d = index.distance(grid.node_at(k));
            if parity[k] == ref_parity {
                d
            } else {
                -d
            }
        })
        .collect();
    ScalarField::new(*grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(r: f64, n: usize) -> Polyline {
        let v = (0..n)
            .map(|m| {
                let a = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
                Point::new(r * a.cos(), r * a.sin())
            })
            .collect();
        Polyline::new(v, true).unwrap()
    }

    fn brute(p: Point, lines: &[Polyline]) -> f64 {
        lines
            .iter()
            .flat_map(|l| l.segments())
            .map(|(a, b)| point_segment_dist2(p, a, b).sqrt())
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn index_matches_brute_force() {
        let lines = vec![circle(1.0, 200), circle(0.3, 37)];
        let idx = SegmentIndex::new(&lines, 0.05);
        for k in 0..400 {
            let p = Point::new(-2.0 + 0.0101 * k as f64, 1.7 - 0.0087 * k as f64);
            assert_eq!(idx.distance(p), brute(p, &lines));
        }
    }

    #[test]
    fn signed_distance_of_circle() {
        let h = 0.05;
        let g = Grid::covering(-2.5, -2.5, 2.5, 2.5, h).unwrap();
        let phi = signed_distance(&g, &[circle(1.0, 400)], Point::default()).unwrap();
        let (i, j) = g.nearest_node(Point::new(0.0, 0.0)).unwrap();
        assert!((phi.get(i, j) - 1.0).abs() < h);
        let (i, j) = g.nearest_node(Point::new(2.0, 0.0)).unwrap();
        assert!((phi.get(i, j) + 1.0).abs() < h);
    }

    #[test]
    fn signed_distance_of_square() {
        let h = 0.05;
        let g = Grid::covering(-2.0, -2.0, 2.0, 2.0, h).unwrap();
        let sq = Polyline::new(
            vec![
                Point::new(-1.0, -1.0),
                Point::new(1.0, -1.0),
                Point::new(1.0, 1.0),
                Point::new(-1.0, 1.0),
            ],
            true,
        )
        .unwrap();
        let phi = signed_distance(&g, &[sq], Point::new(0.1, 0.2)).unwrap();
        let (i, j) = g.nearest_node(Point::new(0.9, 0.0)).unwrap();
        assert!((phi.get(i, j) - 0.1).abs() < h / 2.0);
    }

    #[test]
    fn signed_distance_errors() {
        let g = Grid::covering(-1.0, -1.0, 1.0, 1.0, 0.1).unwrap();
        assert!(signed_distance(&g, &[], Point::default()).is_err());
        let c = circle(0.5, 32);
        assert!(signed_distance(&g, &[c.clone()], c.vertices()[0]).is_err());
    }

    #[test]
    fn parity_of_nested_curves() {
        let g = Grid::covering(-2.0, -2.0, 2.0, 2.0, 0.1).unwrap();
        let par = inside_parity(&g, &[circle(1.5, 120), circle(0.5, 60)]);
        let at = |x: f64, y: f64| {
            let (i, j) = g.nearest_node(Point::new(x, y)).unwrap();
            par[g.index(i, j)]
        };
        assert!(!at(0.0, 0.0));
        assert!(at(1.0, 0.0));
        assert!(!at(1.9, 1.9));
    }
}
