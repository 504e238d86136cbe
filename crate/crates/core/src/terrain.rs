//! Elevation rasters and terrain walking speed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainMask, Grid, NodeMask, Point, Polyline, ScalarField};

/// Top walking speed in m/s.
pub const MAX_WALKING_SPEED: f64 = 1.11;

/// Default floor for walking speed, m/s.
pub const DEFAULT_V_MIN: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct ElevationModel {
    pub elevation: ScalarField,
    pub mask: DomainMask,
}

impl ElevationModel {
    pub fn new(elevation: ScalarField, mask: DomainMask) -> Result<Self> {
        elevation.grid().ensure_same(mask.grid(), "elevation vs mask")?;
        if let Some(k) = mask.indices().find(|&k| elevation.nodata()[k]) {
            let (i, j) = elevation.grid().ij(k);
            return Err(Error::Nodata { i, j });
        }
        Ok(Self { elevation, mask })
    }

    pub fn grid(&self) -> &Grid {
        self.elevation.grid()
    }
}

#[derive(Debug, Clone)]
pub struct SpeedField {
    pub v: ScalarField,
    pub v_min: f64,
}

impl SpeedField {
    /// Wraps an explicit speed raster; values are clamped to `v_min` from
    /// below and nodata nodes take `v_min`.
    pub fn from_raster(v: &ScalarField, v_min: f64) -> Result<Self> {
        check_v_min(v_min)?;
        let values = v
            .values()
            .iter()
            .zip(v.nodata())
            .map(|(&s, &nd)| if nd { v_min } else { s.max(v_min) })
            .collect();
        Ok(Self {
            v: ScalarField::new(*v.grid(), values)?,
            v_min,
        })
    }

    /// Constant speed everywhere.
    pub fn uniform(grid: Grid, speed: f64) -> Result<Self> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::invalid(format!("speed must be > 0, got {speed}")));
        }
        Ok(Self {
            v: ScalarField::constant(grid, speed),
            v_min: speed.min(DEFAULT_V_MIN),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.v.grid()
    }
}

fn check_v_min(v_min: f64) -> Result<()> {
    if !(v_min > 0.0 && v_min.is_finite()) {
        return Err(Error::invalid(format!("v_min must be > 0, got {v_min}")));
    }
    Ok(())
}

/// `1.11 · exp(−(100 s + 2)² / 2345)` m/s for slope magnitude `s` (rise/run).
pub fn walking_speed(s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::invalid(format!(
            "slope magnitude must be non-negative, got {s}"
        )));
    }
    let g = 100.0 * s + 2.0;
    Ok(MAX_WALKING_SPEED * (-(g * g) / 2345.0).exp())
}

/// `|∇h|` by central differences.
///
/// Fails when the one-node dilation of the mask touches nodata. Outside that
/// band, nodes whose stencil has no data come back as nodata.
pub fn slope_magnitude(elev: &ElevationModel) -> Result<ScalarField> {
    let g = *elev.grid();
    for k in elev.mask.indices() {
        let (i, j) = g.ij(k);
        for (di, dj) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
            let (ii, jj) = (i as isize + di, j as isize + dj);
            if elev.elevation.is_nodata(ii as usize, jj as usize) {
                return Err(Error::Nodata {
                    i: ii as usize,
                    j: jj as usize,
                });
            }
        }
    }
    let (gx, gy) = elev.elevation.gradient_central();
    let values = gx
        .values()
        .iter()
        .zip(gy.values())
        .map(|(a, b)| a.hypot(*b))
        .collect();
    Ok(ScalarField::from_values_lossy(g, values))
}

/// Walking speed per node, floored at `v_min`.
///
/// Where `overrides` has data the speed is multiplied by it and floored
/// again, e.g. factor 0 on a lake, 1.5 on a trail. Nodes without a slope
/// get `v_min`.
pub fn speed_field(
    elev: &ElevationModel,
    v_min: f64,
    overrides: Option<&ScalarField>,
) -> Result<SpeedField> {
    check_v_min(v_min)?;
    let slope = slope_magnitude(elev)?;
    if let Some(o) = overrides {
        o.grid().ensure_same(elev.grid(), "speed overrides")?;
        if let Some(k) = (0..o.values().len()).find(|&k| !o.nodata()[k] && o.at(k) < 0.0) {
            return Err(Error::invalid(format!("negative speed factor at node {k}")));
        }
    }
    let values = (0..slope.values().len())
        .map(|k| {
            if slope.nodata()[k] {
                return Ok(v_min);
            }
            let mut v = walking_speed(slope.at(k))?.max(v_min);
            if let Some(o) = overrides {
                if !o.nodata()[k] {
                    v = (v * o.at(k)).max(v_min);
                }
            }
            Ok(v)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SpeedField {
        v: ScalarField::new(*elev.grid(), values)?,
        v_min,
    })
}

/// Analytic elevation surfaces for tests and demos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Surface {
    Flat,
    /// Plane rising with `slope` towards `azimuth_deg` (0 = east, 90 = north).
    Ramp {
        slope: f64,
        #[serde(default)]
        azimuth_deg: f64,
    },
    /// Ridge along the y axis with a Gaussian cross-section.
    Ridge {
        height: f64,
        width: f64,
        #[serde(default)]
        center_x: f64,
    },
    /// Gaussian pit; its walls are steepest on the ring `r = radius/√2`.
    Crater {
        depth: f64,
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
    },
}

impl Surface {
    pub fn elevation(&self, p: Point) -> f64 {
        match *self {
            Surface::Flat => 0.0,
            Surface::Ramp { slope, azimuth_deg } => {
                let a = azimuth_deg.to_radians();
                slope * (p.x * a.cos() + p.y * a.sin())
            }
            Surface::Ridge {
                height,
                width,
                center_x,
            } => {
                let u = (p.x - center_x) / width;
                height * (-0.5 * u * u).exp()
            }
            Surface::Crater {
                depth,
                radius,
                center,
            } => {
                let r2 = ((p.x - center[0]).powi(2) + (p.y - center[1]).powi(2)) / (radius * radius);
                -depth * (-r2).exp()
            }
        }
    }

    /// Finite parameters and positive widths.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Surface::Flat => true,
            Surface::Ramp { slope, azimuth_deg } => slope.is_finite() && azimuth_deg.is_finite(),
            Surface::Ridge { height, width, .. } => height.is_finite() && width > 0.0,
            Surface::Crater { depth, radius, .. } => depth.is_finite() && radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid surface parameters: {self:?}")))
        }
    }
}

/// Synthetic mask shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskShape {
    Disc { center: [f64; 2], radius: f64 },
    Rectangle { min: [f64; 2], max: [f64; 2] },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl MaskShape {
    pub fn build(&self, grid: Grid) -> Result<DomainMask> {
        match self {
            MaskShape::Disc { center, radius } => {
                DomainMask::disc(grid, Point::new(center[0], center[1]), *radius)
            }
            MaskShape::Rectangle { min, max } => {
                DomainMask::rectangle(grid, Point::new(min[0], min[1]), Point::new(max[0], max[1]))
            }
            MaskShape::Polygon { vertices } => {
                let v = vertices.iter().map(|p| Point::new(p[0], p[1])).collect();
                DomainMask::from_polygons(grid, vec![Polyline::new(v, true)?])
            }
        }
    }
}

pub fn make_synthetic_terrain(surface: &Surface, grid: Grid, mask: &MaskShape) -> Result<ElevationModel> {
    surface.validate()?;
    let elevation = ScalarField::from_fn(grid, |p| surface.elevation(p));
    ElevationModel::new(elevation, mask.build(grid)?)
}

// ---------------------------------------------------------------------------
// ESRI ASCII grids

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Reads an ESRI ASCII grid.
///
/// Header keys are case-insensitive. `xllcorner`/`yllcorner` name the outer
/// corner of the south-west cell, so the first node sits half a cell inside;
/// `xllcenter`/`yllcenter` name the node itself. Rows arrive north first and
/// are flipped to the south-first storage order.
pub fn load_esri_ascii(text: &str) -> Result<ScalarField> {
    let mut ncols = None;
    let mut nrows = None;
    let mut xll: Option<(f64, bool)> = None;
    let mut yll: Option<(f64, bool)> = None;
    let mut cellsize = None;
    let mut nodata_value: Option<f64> = None;

    let mut lines = text.lines().enumerate().peekable();
    while let Some(&(ln, raw)) = lines.peek() {
        let line = ln + 1;
        let mut toks = raw.split_whitespace();
        let Some(key) = toks.next() else {
            lines.next();
            continue;
        };
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let key = key.to_ascii_lowercase();
        if matches!(key.as_str(), "nan" | "inf" | "infinity") {
            break;
        }
        lines.next();
        let val = toks
            .next()
            .ok_or_else(|| parse_err(line, format!("header key {key:?} has no value")))?;
        if toks.next().is_some() {
            return Err(parse_err(line, format!("trailing tokens after {key:?}")));
        }
        let num = || {
            val.parse::<f64>()
                .map_err(|e| parse_err(line, format!("bad value {val:?} for {key}: {e}")))
        };
        let count = || {
            val.parse::<usize>()
                .map_err(|e| parse_err(line, format!("bad value {val:?} for {key}: {e}")))
        };
        match key.as_str() {
            "ncols" => ncols = Some(count()?),
            "nrows" => nrows = Some(count()?),
            "xllcorner" => xll = Some((num()?, true)),
            "yllcorner" => yll = Some((num()?, true)),
            "xllcenter" => xll = Some((num()?, false)),
            "yllcenter" => yll = Some((num()?, false)),
            "cellsize" => cellsize = Some(num()?),
            "nodata_value" => nodata_value = Some(num()?),
            "dx" | "dy" => {
                return Err(parse_err(
                    line,
                    format!("{key:?} implies non-square cells, which are not supported"),
                ))
            }
            other => return Err(parse_err(line, format!("unknown header key {other:?}"))),
        }
    }
    let header_end = lines.peek().map(|&(ln, _)| ln + 1).unwrap_or(text.lines().count() + 1);
    let missing = |k: &str| parse_err(header_end, format!("missing header key {k:?}"));
    let ncols = ncols.ok_or_else(|| missing("ncols"))?;
    let nrows = nrows.ok_or_else(|| missing("nrows"))?;
    let (xll, x_corner) = xll.ok_or_else(|| missing("xllcorner"))?;
    let (yll, y_corner) = yll.ok_or_else(|| missing("yllcorner"))?;
    let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
    let origin = Point::new(
        if x_corner { xll + 0.5 * cellsize } else { xll },
        if y_corner { yll + 0.5 * cellsize } else { yll },
    );
    let grid = Grid::new(ncols, nrows, cellsize, origin).map_err(|e| parse_err(header_end, e.to_string()))?;

    let mut values = vec![0.0; grid.len()];
    let mut nodata = vec![false; grid.len()];
    let mut n = 0usize;
    let mut last_line = header_end;
    for (ln, raw) in lines {
        let line = ln + 1;
        last_line = line;
        for tok in raw.split_whitespace() {
            if n >= grid.len() {
                return Err(parse_err(
                    line,
                    format!("more than nrows*ncols = {} values", grid.len()),
                ));
            }
            let v: f64 = tok
                .parse()
                .map_err(|e| parse_err(line, format!("bad value {tok:?}: {e}")))?;
            let (row, col) = (n / ncols, n % ncols);
            let k = grid.index(col, nrows - 1 - row);
            if nodata_value == Some(v) {
                nodata[k] = true;
                values[k] = f64::NAN;
            } else if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value {tok:?}")));
            } else {
                values[k] = v;
            }
            n += 1;
        }
    }
    if n != grid.len() {
        return Err(parse_err(
            last_line,
            format!("expected {} values, found {n}", grid.len()),
        ));
    }
    ScalarField::with_nodata(grid, values, nodata)
}

/// Writes a field as ESRI ASCII using `xllcenter`/`yllcenter`, so the grid
/// origin survives a reload bit for bit. Values use the shortest decimal
/// form that parses back to the same `f64`.
pub fn write_esri_ascii(field: &ScalarField) -> String {
    let g = field.grid();
    let mut sentinel = -9999.0;
    while field.values().contains(&sentinel) {
        sentinel = sentinel * 10.0 - 9.0;
    }
    let mut out = String::with_capacity(g.len() * 8 + 128);
    let _ = writeln!(out, "ncols {}", g.nx());
    let _ = writeln!(out, "nrows {}", g.ny());
    let _ = writeln!(out, "xllcenter {}", g.origin().x);
    let _ = writeln!(out, "yllcenter {}", g.origin().y);
    let _ = writeln!(out, "cellsize {}", g.cellsize());
    let _ = writeln!(out, "NODATA_value {sentinel}");
    for j in (0..g.ny()).rev() {
        for i in 0..g.nx() {
            if i > 0 {
                out.push(' ');
            }
            if field.is_nodata(i, j) {
                let _ = write!(out, "{sentinel}");
            } else {
                let _ = write!(out, "{}", field.get(i, j));
            }
        }
        out.push('\n');
    }
    out
}

/// Mask as a 0/1 raster.
pub fn write_mask_ascii(mask: &NodeMask) -> String {
    write_esri_ascii(&mask.indicator())
}

/// Reads a 0/1 (or nonzero/zero) raster as a node set; nodata is outside.
pub fn load_mask_ascii(text: &str) -> Result<NodeMask> {
    let f = load_esri_ascii(text)?;
    let inside = f
        .values()
        .iter()
        .zip(f.nodata())
        .map(|(&v, &nd)| !nd && v != 0.0)
        .collect();
    NodeMask::new(*f.grid(), inside)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_speed(s: f64) -> f64 {
        let g = 100.0 * s + 2.0;
        0.11 + (-(g * g) / 1800.0).exp()
    }

    #[test]
    fn walking_speed_values() {
        let v0 = walking_speed(0.0).unwrap();
        assert!((v0 - 1.11 * (-4.0f64 / 2345.0).exp()).abs() < 1e-15);
        assert!((v0 - 1.1081).abs() < 1e-4);
        assert!(walking_speed(10.0).unwrap() < 1e-100);
        let (ours, theirs) = (walking_speed(0.6).unwrap(), reference_speed(0.6));
        assert!((ours - theirs).abs() <= 0.15 * theirs, "{ours} vs {theirs}");
        assert!(walking_speed(-0.1).is_err());
        assert!(walking_speed(f64::NAN).is_err());
    }

    fn esri(text: &str) -> ScalarField {
        load_esri_ascii(text).unwrap()
    }

    #[test]
    fn esri_constant_grid() {
        let f = esri("ncols 3\nnrows 3\nxllcorner 100\nyllcorner 200\ncellsize 10\nNODATA_value -9999\n7 7 7\n7 7 7\n7 7 7\n");
        assert_eq!(f.values(), &[7.0; 9]);
        assert_eq!(f.grid().origin(), Point::new(105.0, 205.0));
        assert_eq!(f.grid().cellsize(), 10.0);
    }

    #[test]
    fn esri_nodata_cell_is_masked() {
        let f = esri("NCOLS 3\nNROWS 3\nXLLCENTER 0\nYLLCENTER 0\nCELLSIZE 1\nNODATA_VALUE -9999\n1 2 3\n4 -9999 6\n7 8 9e0\n");
        assert!(f.is_nodata(1, 1));
        assert_eq!(f.nodata().iter().filter(|&&b| b).count(), 1);
        assert_eq!(f.get(2, 0), 9.0);
    }

    #[test]
    fn esri_rows_are_flipped() {
        let f = esri("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n3 4\n");
        assert_eq!(f.get(0, 0), 3.0);
        assert_eq!(f.get(1, 1), 2.0);
    }

    #[test]
    fn esri_errors() {
        let bad_count = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3\n";
        assert!(matches!(load_esri_ascii(bad_count), Err(Error::Parse { line: 7, .. })));
        let dy = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\ndy 2\n1 2\n3 4\n";
        assert!(matches!(load_esri_ascii(dy), Err(Error::Parse { line: 6, .. })));
        let missing = "ncols 2\nnrows 2\nxllcorner 0\ncellsize 1\n1 2\n3 4\n";
        assert!(load_esri_ascii(missing).is_err());
        let junk = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 x\n";
        assert!(matches!(load_esri_ascii(junk), Err(Error::Parse { line: 7, .. })));
    }

    #[test]
    fn esri_roundtrip_is_bit_exact() {
        let g = Grid::new(5, 4, 0.1, Point::new(-0.3, 1.0 / 3.0)).unwrap();
        let mut vals: Vec<f64> = (0..g.len()).map(|k| (k as f64).sqrt() * 1e-7 + 1.0 / 7.0).collect();
        vals[3] = f64::NAN;
        vals[7] = -9999.0;
        let f = ScalarField::from_values_lossy(g, vals);
        let back = load_esri_ascii(&write_esri_ascii(&f)).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.nodata(), f.nodata());
        for k in 0..g.len() {
            if !f.nodata()[k] {
                assert_eq!(back.at(k).to_bits(), f.at(k).to_bits());
            }
        }
    }

    fn model(surface: Surface, h: f64) -> ElevationModel {
        let grid = Grid::covering(-1.0, -1.0, 1.0, 1.0, h).unwrap();
        let mask = MaskShape::Rectangle {
            min: [-0.8, -0.8],
            max: [0.8, 0.8],
        };
        make_synthetic_terrain(&surface, grid, &mask).unwrap()
    }

    #[test]
    fn slope_of_flat_and_ramp() {
        let s = slope_magnitude(&model(Surface::Flat, 0.1)).unwrap();
        assert!(s.values().iter().all(|&v| v == 0.0));
        let m = model(
            Surface::Ramp {
                slope: 0.5,
                azimuth_deg: 0.0,
            },
            0.1,
        );
        let s = slope_magnitude(&m).unwrap();
        for k in m.mask.indices() {
            assert!((s.at(k) - 0.5).abs() < 1e-12);
        }
        let m = model(
            Surface::Ramp {
                slope: 0.2,
                azimuth_deg: 30.0,
            },
            0.1,
        );
        let s = slope_magnitude(&m).unwrap();
        for k in m.mask.indices() {
            assert!((s.at(k) - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn slope_of_sine_on_metre_grid() {
        let grid = Grid::new(41, 5, 1.0, Point::new(-20.0, -2.0)).unwrap();
        let elev = ScalarField::from_fn(grid, |p| 100.0 * (p.x / 100.0).sin());
        let mask = NodeMask::from_fn(grid, |i, j| (1..40).contains(&i) && (1..4).contains(&j));
        let m = ElevationModel::new(elev, DomainMask::from_nodes(mask).unwrap()).unwrap();
        let s = slope_magnitude(&m).unwrap();
        assert!((s.get(20, 2) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn slope_rejects_nodata_near_mask() {
        let grid = Grid::new(6, 6, 1.0, Point::default()).unwrap();
        let mut vals = vec![0.0; grid.len()];
        vals[grid.index(0, 0)] = f64::NAN;
        let elev = ScalarField::from_values_lossy(grid, vals);
        let mask = NodeMask::from_fn(grid, |i, j| (1..5).contains(&i) && (1..5).contains(&j));
        let m = ElevationModel {
            elevation: elev,
            mask: DomainMask::from_nodes(mask).unwrap(),
        };
        assert!(matches!(slope_magnitude(&m), Err(Error::Nodata { i: 0, j: 0 })));
    }

    #[test]
    fn ridge_slope_peaks_at_inflection() {
        let h = 0.01;
        let (height, width) = (0.3, 0.25);
        let m = model(
            Surface::Ridge {
                height,
                width,
                center_x: 0.0,
            },
            h,
        );
        let s = slope_magnitude(&m).unwrap();
        let g = m.grid();
        let j = g.ny() / 2;
        let (mut best_i, mut best) = (0, 0.0);
        for i in 0..g.nx() / 2 {
            if m.mask.contains(i, j) && s.get(i, j) > best {
                best = s.get(i, j);
                best_i = i;
            }
        }
        assert!((g.x(best_i) + width).abs() <= h + 1e-12, "{}", g.x(best_i));
        let analytic = height / width * (-0.5f64).exp();
        assert!((best - analytic).abs() < 1e-3);
    }

    #[test]
    fn speed_field_flat_and_clamped() {
        let m = model(Surface::Flat, 0.1);
        let sp = speed_field(&m, 0.01, None).unwrap();
        let v0 = walking_speed(0.0).unwrap();
        assert!(sp.v.values().iter().all(|&v| v == v0));

        let cliff = model(
            Surface::Ramp {
                slope: 5.0,
                azimuth_deg: 0.0,
            },
            0.1,
        );
        let sp = speed_field(&cliff, 0.01, None).unwrap();
        assert!(cliff.mask.indices().all(|k| sp.v.at(k) == 0.01));

        let g = *m.grid();
        let lake = ScalarField::from_fn(g, |p| if p.x.abs() < 0.2 { 0.0 } else { f64::NAN });
        let sp = speed_field(&m, 0.01, Some(&lake)).unwrap();
        let (i, j) = g.nearest_node(Point::new(0.0, 0.0)).unwrap();
        assert_eq!(sp.v.get(i, j), 0.01);
        let (i, j) = g.nearest_node(Point::new(0.5, 0.0)).unwrap();
        assert_eq!(sp.v.get(i, j), v0);
        assert!(speed_field(&m, 0.0, None).is_err());
    }

    #[test]
    fn crater_has_slow_ring() {
        let m = model(
            Surface::Crater {
                depth: 0.4,
                radius: 0.4,
                center: [0.0, 0.0],
            },
            0.02,
        );
        let sp = speed_field(&m, 0.01, None).unwrap();
        let g = m.grid();
        let at = |r: f64| sp.v.bilinear_sample(Point::new(r, 0.0)).unwrap();
        let ring = 0.4 / 2f64.sqrt();
        assert!(at(ring) < at(0.0) && at(ring) < at(0.75));
        assert!(g.len() > 0);
    }
}
