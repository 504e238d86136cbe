use std::fmt::Write as _;

use super::Point;
use crate::error::{Error, Result};

/// An ordered chain of points in world coordinates. A closed polyline has an
/// implicit segment from the last vertex back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<Point>,
    closed: bool,
}

impl Polyline {
    pub fn new(vertices: Vec<Point>, closed: bool) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidPolyline(format!(
                "need at least 2 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(w) = vertices.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::InvalidPolyline(format!(
                "vertices {w} and {} coincide",
                w + 1
            )));
        }
        if vertices.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::InvalidPolyline("non-finite vertex".into()));
        }
        Ok(Self { vertices, closed })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        let m = if self.closed { n } else { n - 1 };
        (0..m).map(move |s| (self.vertices[s], self.vertices[(s + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| a.dist(b)).sum()
    }
}

/// Polyline CSV: a `# closed=<0|1>` header per polyline, one `x,y` row per
/// vertex, and a blank line between polylines.
pub fn write_polylines_csv<'a>(lines: impl IntoIterator<Item = (&'a [Point], bool)>) -> String {
    let mut out = String::new();
    for (n, (verts, closed)) in lines.into_iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "# closed={}", u8::from(closed));
        for p in verts {
            let _ = writeln!(out, "{},{}", p.x, p.y);
        }
    }
    out
}

/// Reads the polyline CSV format. Files without any `# closed=` header are
/// read as a single polygon (one vertex per row, implicitly closed).
pub fn read_polylines_csv(text: &str) -> Result<Vec<Polyline>> {
    let mut out = Vec::new();
    let mut cur: Vec<Point> = Vec::new();
    let mut closed = true;
    let mut started = false;
    let flush = |cur: &mut Vec<Point>, closed: bool, out: &mut Vec<Polyline>, line: usize| -> Result<()> {
        if cur.is_empty() {
            return Ok(());
        }
        let pl = Polyline::new(std::mem::take(cur), closed).map_err(|e| Error::Csv {
            line,
            msg: e.to_string(),
        })?;
        out.push(pl);
        Ok(())
    };
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let s = raw.trim();
        if s.is_empty() {
            flush(&mut cur, closed, &mut out, line)?;
            continue;
        }
        if let Some(rest) = s.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("closed=") {
                flush(&mut cur, closed, &mut out, line)?;
                closed = match v.trim() {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Csv {
                            line,
                            msg: format!("closed flag must be 0 or 1, got {other:?}"),
                        })
                    }
                };
                started = true;
            }
            continue;
        }
        let mut parts = s.split(',');
        let mut num = |what: &str| -> Result<f64> {
            let tok = parts.next().ok_or_else(|| Error::Csv {
                line,
                msg: format!("missing {what}"),
            })?;
            tok.trim().parse::<f64>().map_err(|e| Error::Csv {
                line,
                msg: format!("bad {what} {tok:?}: {e}"),
            })
        };
        let x = num("x")?;
        let y = num("y")?;
        if parts.next().is_some() {
            return Err(Error::Csv {
                line,
                msg: "expected exactly two columns".into(),
            });
        }
        if !started {
            closed = true;
        }
        cur.push(Point::new(x, y));
    }
    flush(&mut cur, closed, &mut out, text.lines().count())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_short_and_repeated() {
        assert!(Polyline::new(vec![Point::new(0.0, 0.0)], false).is_err());
        let p = Point::new(1.0, 1.0);
        assert!(Polyline::new(vec![p, p], false).is_err());
    }

    #[test]
    fn closed_length_includes_closing_segment() {
        let sq = Polyline::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(1.0, 0.0),
                Point::new(1.0, 1.0),
                Point::new(0.0, 1.0),
            ],
            true,
        )
        .unwrap();
        assert_eq!(sq.length(), 4.0);
        assert_eq!(sq.segments().count(), 4);
    }

    #[test]
    fn csv_roundtrip_and_plain_polygon() {
        let a = Polyline::new(vec![Point::new(0.1, 0.2), Point::new(1.0 / 3.0, 4.0)], false).unwrap();
        let b = Polyline::new(
            vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            true,
        )
        .unwrap();
        let text = write_polylines_csv([(a.vertices(), false), (b.vertices(), true)]);
        assert!(text.starts_with("# closed=0\n"));
        assert_eq!(read_polylines_csv(&text).unwrap(), vec![a, b.clone()]);

        let plain = "0,0\n1,0\n0,1\n";
        assert_eq!(read_polylines_csv(plain).unwrap(), vec![b]);
    }

    #[test]
    fn csv_errors_carry_line() {
        let err = read_polylines_csv("# closed=1\n0,0\n1,x\n").unwrap_err();
        assert!(matches!(err, Error::Csv { line: 3, .. }), "{err}");
    }
}
