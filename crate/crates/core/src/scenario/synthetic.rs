use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GridSpec;
use crate::error::{Error, Result};
use crate::grid::{inside_parity, NodeMask, Point, Polyline, ScalarField};
use crate::terrain::{walking_speed, write_esri_ascii, write_mask_ascii, MaskShape, Surface, DEFAULT_V_MIN};

/// Synthetic terrain and mask to write out as rasters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub grid: GridSpec,
    pub surface: Surface,
    pub mask: MaskShape,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_dir")]
    pub output_dir: PathBuf,
}

fn default_v_min() -> f64 {
    DEFAULT_V_MIN
}

fn default_dir() -> PathBuf {
    PathBuf::from(".")
}

pub fn parse_synthetic_spec(text: &str) -> Result<SyntheticSpec> {
    let spec: SyntheticSpec = super::from_json(text)?;
    super::check_grid(&spec.grid, "/grid")?;
    spec.surface
        .validate()
        .map_err(|e| super::config_err("/surface", e.to_string()))?;
    super::check(spec.v_min > 0.0, "/v_min", || format!("must be > 0, got {}", spec.v_min))?;
    Ok(spec)
}

/// Nodes inside the shape, border nodes included: this only writes a file,
/// the margin is checked when a scenario loads it.
fn shape_nodes(shape: &MaskShape, grid: crate::grid::Grid) -> Result<NodeMask> {
    match shape {
        MaskShape::Disc { center, radius } => {
            let c = Point::new(center[0], center[1]);
            Ok(NodeMask::from_fn(grid, |i, j| grid.node(i, j).dist(c) <= *radius))
        }
        MaskShape::Rectangle { min, max } => Ok(NodeMask::from_fn(grid, |i, j| {
            let p = grid.node(i, j);
            (min[0]..=max[0]).contains(&p.x) && (min[1]..=max[1]).contains(&p.y)
        })),
        MaskShape::Polygon { vertices } => {
            let v = vertices.iter().map(|p| Point::new(p[0], p[1])).collect();
            NodeMask::new(grid, inside_parity(&grid, &[Polyline::new(v, true)?]))
        }
    }
}

/// Writes `elevation.asc`, `slope.asc`, `speed.asc` and `mask.asc` into
/// the spec's output directory (relative to `base`) and returns their paths.
pub fn make_synthetic(spec: &SyntheticSpec, base: &Path) -> Result<Vec<PathBuf>> {
    let grid = spec.grid.build()?;
    let elevation = ScalarField::from_fn(grid, |p| spec.surface.elevation(p));
    let (gx, gy) = elevation.gradient_central();
    let slope = ScalarField::new(
        grid,
        gx.values().iter().zip(gy.values()).map(|(a, b)| a.hypot(*b)).collect(),
    )?;
    let speed = slope
        .values()
        .iter()
        .map(|&s| walking_speed(s).map(|v| v.max(spec.v_min)))
        .collect::<Result<Vec<_>>>()?;
    let speed = ScalarField::new(grid, speed)?;
    let mask = shape_nodes(&spec.mask, grid)?;

    let dir = base.join(&spec.output_dir);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let files = [
        ("elevation.asc", write_esri_ascii(&elevation)),
        ("slope.asc", write_esri_ascii(&slope)),
        ("speed.asc", write_esri_ascii(&speed)),
        ("mask.asc", write_mask_ascii(&mask)),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}
