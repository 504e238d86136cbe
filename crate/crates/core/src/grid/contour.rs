use std::collections::HashMap;

use super::{Grid, Point, Polyline, ScalarField};

/// Cell edge identifier: horizontal edges `(i,j)-(i+1,j)` are even,
/// vertical edges `(i,j)-(i,j+1)` odd.
type EdgeId = usize;

#[inline]
fn h_edge(g: &Grid, i: usize, j: usize) -> EdgeId {
    2 * g.index(i, j)
}

#[inline]
fn v_edge(g: &Grid, i: usize, j: usize) -> EdgeId {
    2 * g.index(i, j) + 1
}

fn edge_point(field: &ScalarField, e: EdgeId, level: f64) -> Point {
    let g = field.grid();
    let (i, j) = g.ij(e / 2);
    let a = field.get(i, j);
    let (b, di, dj) = if e % 2 == 0 {
        (field.get(i + 1, j), 1.0, 0.0)
    } else {
        (field.get(i, j + 1), 0.0, 1.0)
    };
    let t = ((level - a) / (b - a)).clamp(0.0, 1.0);
    let h = g.cellsize();
    Point::new(g.x(i) + di * t * h, g.y(j) + dj * t * h)
}

/// Traces `{field = level}` with marching squares.
///
/// A node counts as high when its value is `>= level`. Ambiguous saddle
/// cells are split by the mean of the four corners: a high mean keeps the
/// two high corners connected. Cells touching nodata are skipped, so
/// contours end there as they do at the raster border. Vertices are linear
/// interpolants along cell edges, in world coordinates.
pub fn marching_squares(field: &ScalarField, level: f64) -> Vec<Polyline> {
    let g = *field.grid();
    let mut segs: Vec<[EdgeId; 2]> = Vec::new();
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() - 1 {
            if field.is_nodata(i, j)
                || field.is_nodata(i + 1, j)
                || field.is_nodata(i + 1, j + 1)
                || field.is_nodata(i, j + 1)
            {
                continue;
            }
            let a = field.get(i, j);
            let b = field.get(i + 1, j);
            let c = field.get(i + 1, j + 1);
            let d = field.get(i, j + 1);
            let case = (a >= level) as u8
                | ((b >= level) as u8) << 1
                | ((c >= level) as u8) << 2
                | ((d >= level) as u8) << 3;
            let s = h_edge(&g, i, j);
            let e = v_edge(&g, i + 1, j);
            let n = h_edge(&g, i, j + 1);
            let w = v_edge(&g, i, j);
            let center_high = 0.25 * (a + b + c + d) >= level;
            match case {
                0 | 15 => {}
                1 | 14 => segs.push([s, w]),
                2 | 13 => segs.push([s, e]),
                4 | 11 => segs.push([e, n]),
                8 | 7 => segs.push([n, w]),
                3 | 12 => segs.push([w, e]),
                6 | 9 => segs.push([s, n]),
                5 => {
                    // a and c high
                    if center_high {
                        segs.push([s, e]);
                        segs.push([n, w]);
                    } else {
                        segs.push([s, w]);
                        segs.push([e, n]);
                    }
                }
                10 => {
                    // b and d high
                    if center_high {
                        segs.push([s, w]);
                        segs.push([e, n]);
                    } else {
                        segs.push([s, e]);
                        segs.push([n, w]);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    link(field, level, &segs)
}

fn link(field: &ScalarField, level: f64, segs: &[[EdgeId; 2]]) -> Vec<Polyline> {
    let mut by_edge: HashMap<EdgeId, Vec<usize>> = HashMap::with_capacity(segs.len() * 2);
    for (s, pair) in segs.iter().enumerate() {
        for &e in pair {
            by_edge.entry(e).or_default().push(s);
        }
    }
    let mut used = vec![false; segs.len()];
    let mut out = Vec::new();

    // Follow unused segments from `edge`, appending the far edge each time.
    let walk = |start_edge: EdgeId, used: &mut Vec<bool>, chain: &mut Vec<EdgeId>| {
        let mut edge = start_edge;
        loop {
            let next = by_edge
                .get(&edge)
                .and_then(|v| v.iter().copied().find(|&s| !used[s]));
            let Some(s) = next else { break };
            used[s] = true;
            let [p, q] = segs[s];
            edge = if p == edge { q } else { p };
            chain.push(edge);
        }
    };

    for s0 in 0..segs.len() {
        if used[s0] {
            continue;
        }
        used[s0] = true;
        let [first, second] = segs[s0];
        let mut fwd = vec![first, second];
        walk(second, &mut used, &mut fwd);
        let closed = fwd.len() > 2 && fwd.last() == fwd.first();
        let mut chain = if closed {
            fwd.pop();
            fwd
        } else {
            let mut back = Vec::new();
            walk(first, &mut used, &mut back);
            back.reverse();
            back.extend(fwd);
            back
        };
        let mut pts: Vec<Point> = chain.drain(..).map(|e| edge_point(field, e, level)).collect();
        pts.dedup();
        if closed && pts.len() > 1 && pts.first() == pts.last() {
            pts.pop();
        }
        if pts.len() < 2 {
            continue;
        }
        let closed = closed && pts.len() >= 3;
        if let Ok(pl) = Polyline::new(pts, closed) {
            out.push(pl);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Point;

    #[test]
    fn vertical_line_for_linear_field() {
        let g = Grid::new(4, 4, 1.0, Point::default()).unwrap();
        let f = ScalarField::from_fn(g, |p| p.x);
        let lines = marching_squares(&f, 0.5);
        assert_eq!(lines.len(), 1);
        assert!(!lines[0].is_closed());
        assert_eq!(lines[0].vertices().len(), 4);
        assert!(lines[0].vertices().iter().all(|p| p.x == 0.5));
    }

    #[test]
    fn circle_level_set() {
        let h = 0.1;
        let g = Grid::covering(-2.0, -2.0, 2.0, 2.0, h).unwrap();
        let f = ScalarField::from_fn(g, |p| p.x * p.x + p.y * p.y);
        let lines = marching_squares(&f, 1.0);
        assert_eq!(lines.len(), 1);
        assert!(lines[0].is_closed());
        let worst = lines[0]
            .vertices()
            .iter()
            .map(|p| (p.norm() - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 0.5 * h, "{worst}");
    }

    #[test]
    fn saddle_resolved_by_center_value() {
        // nodes at ±0.5, ±1.5; the middle cell is a saddle with mean 0, so
        // the high corners (xy > 0) stay connected and each low quadrant is
        // cut off by its own polyline.
        let g = Grid::new(4, 4, 1.0, Point::new(-1.5, -1.5)).unwrap();
        let f = ScalarField::from_fn(g, |p| p.x * p.y);
        let lines = marching_squares(&f, 0.0);
        assert_eq!(lines.len(), 2);
        for l in &lines {
            assert!(!l.is_closed());
            assert_eq!(l.vertices().len(), 4);
            let sx = l.vertices().iter().map(|p| p.x).sum::<f64>().signum();
            let sy = l.vertices().iter().map(|p| p.y).sum::<f64>().signum();
            assert_eq!(sx * sy, -1.0);
            for p in l.vertices() {
                assert!(p.x * sx >= 0.0 && p.y * sy >= 0.0);
                assert!(p.x == 0.0 || p.y == 0.0);
            }
        }
    }

    #[test]
    fn out_of_range_level_is_empty() {
        let g = Grid::new(4, 4, 1.0, Point::default()).unwrap();
        let f = ScalarField::from_fn(g, |p| p.x);
        assert!(marching_squares(&f, 10.0).is_empty());
        assert!(marching_squares(&f, -1.0).is_empty());
    }

    #[test]
    fn nodata_cells_break_contours() {
        let g = Grid::new(6, 6, 1.0, Point::default()).unwrap();
        let mut vals: Vec<f64> = (0..g.len()).map(|k| g.node_at(k).x).collect();
        vals[g.index(2, 3)] = f64::NAN;
        let f = ScalarField::from_values_lossy(g, vals);
        let lines = marching_squares(&f, 2.5);
        assert_eq!(lines.len(), 2);
    }
}
