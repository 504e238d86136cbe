//! Declarative scenarios: JSON config in, rasters, paths, metrics and a
//! figure out.
//!
//! A config names where terrain, domain, benefit and patrol come from and
//! carries the risk and solver parameters. Relative paths inside it are
//! resolved against the directory that holds the config file.

mod render;
mod synthetic;
mod validate;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::extraction::{benefit_from_depth, run_extraction, write_outcome, BenefitField, ExtractionOutcome, RiskParams};
use crate::grid::{read_polylines_csv, DomainMask, Grid, NodeMask, ScalarField};
use crate::patrol::{self, PatrolStrategy};
use crate::solver::{depth_field, ArrivalTimeField, Scheme, SolverParams};
use crate::terrain::{
    load_esri_ascii, load_mask_ascii, speed_field, ElevationModel, MaskShape, SpeedField, Surface, DEFAULT_V_MIN,
};

pub use render::{load_outcome_view, render_svg, OutcomeView, SvgStyle};
pub use synthetic::{make_synthetic, parse_synthetic_spec, SyntheticSpec};
pub use validate::{validate_circle, ValidationReport};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub terrain: TerrainSource,
    pub mask: MaskSource,
    pub benefit: BenefitSpec,
    pub patrol: PatrolSpec,
    #[serde(default)]
    pub risk: RiskParams,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Node-registered grid covering `[xmin, xmax] × [ymin, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
    pub cellsize: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::covering(self.xmin, self.ymin, self.xmax, self.ymax, self.cellsize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainSource {
    /// Elevation raster; walking speed follows from its slope.
    Esri {
        path: PathBuf,
        /// Optional raster of speed multipliers on the same grid.
        #[serde(default)]
        speed_factors: Option<PathBuf>,
    },
    Synthetic { surface: Surface, grid: GridSpec },
    /// Constant walking speed, no elevation.
    UniformSpeed { speed: f64, grid: GridSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSource {
    /// The data nodes of the ESRI elevation raster, minus one node all
    /// round so every slope stencil has data.
    Nodata,
    PolygonCsv { path: PathBuf },
    Raster { path: PathBuf },
    Disc { center: [f64; 2], radius: f64 },
    Rectangle { min: [f64; 2], max: [f64; 2] },
    Polygon { vertices: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenefitSpec {
    /// `B = k·d·(2·d_m − d)/d_m` in the depth `d`.
    DepthPoly { k: f64 },
    /// `B = k·d`.
    DepthLinear { k: f64 },
    Raster { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatrolSpec {
    None,
    Homogeneous { budget: f64 },
    /// Band between depth fractions `lo` and `hi` of the maximum depth.
    Band { budget: f64, lo: f64, hi: f64 },
    /// Raster shape rescaled to the budget.
    Raster { path: PathBuf, budget: f64 },
}

impl PatrolSpec {
    fn budget(&self) -> f64 {
        match *self {
            PatrolSpec::None => 0.0,
            PatrolSpec::Homogeneous { budget }
            | PatrolSpec::Band { budget, .. }
            | PatrolSpec::Raster { budget, .. } => budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub cfl: f64,
    pub redistance_interval: usize,
    /// `None` lets the solver pick a stop time from the domain size.
    pub t_max: Option<f64>,
    /// Floor on walking speed.
    pub v_min: f64,
    pub scheme: Scheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = SolverParams::default();
        Self {
            cfl: p.cfl,
            redistance_interval: p.redistance_interval,
            t_max: p.t_max,
            v_min: DEFAULT_V_MIN,
            scheme: p.scheme,
        }
    }
}

impl SolverConfig {
    pub fn params(&self) -> SolverParams {
        SolverParams {
            cfl: self.cfl,
            scheme: self.scheme,
            redistance_interval: self.redistance_interval,
            t_max: self.t_max,
            ..SolverParams::default()
        }
    }
}

fn config_err(pointer: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.into(),
        msg: msg.into(),
    }
}

fn check(ok: bool, pointer: &str, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(config_err(pointer, msg()))
    }
}

/// Deserializes JSON, reporting failures at a JSON pointer.
pub(crate) fn from_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut pointer = String::new();
        for seg in e.path().iter() {
            match seg {
                serde_path_to_error::Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                serde_path_to_error::Segment::Map { key } => pointer.push_str(&format!("/{key}")),
                serde_path_to_error::Segment::Enum { variant } => pointer.push_str(&format!("/{variant}")),
                serde_path_to_error::Segment::Unknown => {}
            }
        }
        let msg = e.inner().to_string();
        if let Some(key) = msg.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
            if !pointer.ends_with(&format!("/{key}")) {
                pointer.push('/');
                pointer.push_str(key);
            }
        }
        if pointer.is_empty() {
            pointer.push('/');
        }
        config_err(&pointer, msg)
    })
}

/// Parses and validates a scenario config, filling defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = from_json(text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn check_grid(g: &GridSpec, at: &str) -> Result<()> {
    check(g.cellsize > 0.0 && g.cellsize.is_finite(), &format!("{at}/cellsize"), || {
        format!("must be > 0, got {}", g.cellsize)
    })?;
    check(g.xmax > g.xmin, &format!("{at}/xmax"), || "must exceed xmin".into())?;
    check(g.ymax > g.ymin, &format!("{at}/ymax"), || "must exceed ymin".into())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.schema == SCHEMA_VERSION, "/schema", || {
            format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema)
        })?;
        match &self.terrain {
            TerrainSource::Esri { .. } => {}
            TerrainSource::Synthetic { surface, grid } => {
                surface
                    .validate()
                    .map_err(|e| config_err("/terrain/surface", e.to_string()))?;
                check_grid(grid, "/terrain/grid")?;
            }
            TerrainSource::UniformSpeed { speed, grid } => {
                check(*speed > 0.0 && speed.is_finite(), "/terrain/speed", || {
                    format!("must be > 0, got {speed}")
                })?;
                check_grid(grid, "/terrain/grid")?;
            }
        }
        match &self.mask {
            MaskSource::Nodata => check(matches!(self.terrain, TerrainSource::Esri { .. }), "/mask/type", || {
                "a nodata mask needs an esri terrain".into()
            })?,
            MaskSource::Disc { radius, .. } => {
                check(*radius > 0.0, "/mask/radius", || format!("must be > 0, got {radius}"))?
            }
            MaskSource::Rectangle { min, max } => check(max[0] > min[0] && max[1] > min[1], "/mask/max", || {
                "must exceed min on both axes".into()
            })?,
            MaskSource::Polygon { vertices } => check(vertices.len() >= 3, "/mask/vertices", || {
                "a polygon needs at least 3 vertices".into()
            })?,
            MaskSource::PolygonCsv { .. } | MaskSource::Raster { .. } => {}
        }
        if let BenefitSpec::DepthPoly { k } | BenefitSpec::DepthLinear { k } = self.benefit {
            check(k > 0.0 && k.is_finite(), "/benefit/k", || format!("must be > 0, got {k}"))?;
        }
        let e = self.patrol.budget();
        check(e >= 0.0 && e.is_finite(), "/patrol/budget", || format!("must be >= 0, got {e}"))?;
        if let PatrolSpec::Band { lo, hi, .. } = self.patrol {
            check((0.0..1.0).contains(&lo), "/patrol/lo", || format!("must be in [0, 1), got {lo}"))?;
            check(hi > lo && hi <= 1.0, "/patrol/hi", || format!("must be in (lo, 1], got {hi}"))?;
        }
        let r = &self.risk;
        check(r.alpha >= 0.0 && r.alpha.is_finite(), "/risk/alpha", || {
            format!("must be >= 0, got {}", r.alpha)
        })?;
        check(r.epsilon > 0.0 && r.epsilon <= 1.0, "/risk/epsilon", || {
            format!("must be in (0, 1], got {}", r.epsilon)
        })?;
        check(r.n_levels >= 2, "/risk/n_levels", || format!("must be >= 2, got {}", r.n_levels))?;
        check(r.n_paths >= 1, "/risk/n_paths", || "must be >= 1".into())?;
        if let Some(t) = r.tube_radius {
            check(t > 0.0, "/risk/tube_radius", || format!("must be > 0, got {t}"))?;
        }
        if let Some(s) = r.path_step {
            check(s > 0.0, "/risk/path_step", || format!("must be > 0, got {s}"))?;
        }
        let s = &self.solver;
        check(s.cfl > 0.0 && s.cfl <= 1.0, "/solver/cfl", || format!("must be in (0, 1], got {}", s.cfl))?;
        check(s.redistance_interval >= 1, "/solver/redistance_interval", || "must be >= 1".into())?;
        if let Some(t) = s.t_max {
            check(t > 0.0, "/solver/t_max", || format!("must be > 0, got {t}"))?;
        }
        check(s.v_min > 0.0 && s.v_min.is_finite(), "/solver/v_min", || {
            format!("must be > 0, got {}", s.v_min)
        })?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialize");
        s.push('\n');
        s
    }
}

/// Everything the extraction model needs, loaded and co-registered.
#[derive(Debug, Clone)]
pub struct ScenarioInputs {
    pub speed: SpeedField,
    pub mask: DomainMask,
    pub benefit: BenefitField,
    pub patrol: PatrolStrategy,
}

fn read(base: &Path, path: &Path) -> Result<String> {
    let p = base.join(path);
    fs::read_to_string(&p).map_err(|e| Error::io(p, e))
}

fn read_raster(base: &Path, path: &Path) -> Result<ScalarField> {
    load_esri_ascii(&read(base, path)?).map_err(|e| e.context(base.join(path).display().to_string()))
}

/// Data nodes whose full 3×3 neighbourhood has data and which are not on
/// the raster border.
fn eroded_data_nodes(f: &ScalarField) -> NodeMask {
    let g = *f.grid();
    NodeMask::from_fn(g, |i, j| {
        if i == 0 || j == 0 || i + 1 >= g.nx() || j + 1 >= g.ny() {
            return false;
        }
        (j - 1..=j + 1).all(|jj| (i - 1..=i + 1).all(|ii| !f.is_nodata(ii, jj)))
    })
}

fn shape_of(mask: &MaskSource) -> Option<MaskShape> {
    match mask {
        MaskSource::Disc { center, radius } => Some(MaskShape::Disc {
            center: *center,
            radius: *radius,
        }),
        MaskSource::Rectangle { min, max } => Some(MaskShape::Rectangle { min: *min, max: *max }),
        MaskSource::Polygon { vertices } => Some(MaskShape::Polygon {
            vertices: vertices.clone(),
        }),
        _ => None,
    }
}

fn build_mask(cfg: &ScenarioConfig, base: &Path, grid: Grid, elevation: Option<&ScalarField>) -> Result<DomainMask> {
    if let Some(shape) = shape_of(&cfg.mask) {
        return shape.build(grid);
    }
    match &cfg.mask {
        MaskSource::Nodata => {
            let elev = elevation.ok_or_else(|| config_err("/mask/type", "a nodata mask needs an esri terrain"))?;
            DomainMask::from_nodes(eroded_data_nodes(elev))
        }
        MaskSource::PolygonCsv { path } => DomainMask::from_polygons(grid, read_polylines_csv(&read(base, path)?)?),
        MaskSource::Raster { path } => {
            let nodes = load_mask_ascii(&read(base, path)?)?;
            nodes.grid().ensure_same(&grid, "mask raster vs terrain")?;
            DomainMask::from_nodes(nodes)
        }
        _ => unreachable!("shape masks handled above"),
    }
}

fn load_terrain(cfg: &ScenarioConfig, base: &Path) -> Result<(SpeedField, DomainMask)> {
    let v_min = cfg.solver.v_min;
    match &cfg.terrain {
        TerrainSource::Esri { path, speed_factors } => {
            let elev = read_raster(base, path)?;
            let mask = build_mask(cfg, base, *elev.grid(), Some(&elev)).map_err(|e| e.context("mask"))?;
            let overrides = speed_factors.as_ref().map(|p| read_raster(base, p)).transpose()?;
            let model = ElevationModel::new(elev, mask.clone())?;
            Ok((speed_field(&model, v_min, overrides.as_ref())?, mask))
        }
        TerrainSource::Synthetic { surface, grid } => {
            let g = grid.build()?;
            let mask = build_mask(cfg, base, g, None).map_err(|e| e.context("mask"))?;
            let elev = ScalarField::from_fn(g, |p| surface.elevation(p));
            let model = ElevationModel::new(elev, mask.clone())?;
            Ok((speed_field(&model, v_min, None)?, mask))
        }
        TerrainSource::UniformSpeed { speed, grid } => {
            let g = grid.build()?;
            let mask = build_mask(cfg, base, g, None).map_err(|e| e.context("mask"))?;
            Ok((SpeedField::uniform(g, *speed)?, mask))
        }
    }
}

/// Loads terrain, domain, benefit and patrol for `cfg`. Relative paths are
/// taken from `base`.
pub fn load_inputs(cfg: &ScenarioConfig, base: &Path) -> Result<ScenarioInputs> {
    cfg.validate()?;
    let (speed, mask) = load_terrain(cfg, base).map_err(|e| e.context("terrain"))?;
    let params = cfg.solver.params();
    let mut depth: Option<ArrivalTimeField> = None;
    let mut depth_of = |mask: &DomainMask| -> Result<ArrivalTimeField> {
        if depth.is_none() {
            depth = Some(depth_field(mask, &params)?);
        }
        Ok(depth.clone().expect("just set"))
    };

    let benefit = match &cfg.benefit {
        BenefitSpec::DepthPoly { k } => benefit_from_depth(&depth_of(&mask)?, &mask, *k),
        BenefitSpec::DepthLinear { k } => {
            let d = depth_of(&mask)?;
            BenefitField::new(d.times.map(|d| k * d.max(0.0)), &mask)
        }
        BenefitSpec::Raster { path } => {
            let b = read_raster(base, path)?;
            b.grid().ensure_same(mask.grid(), "benefit raster vs terrain")?;
            BenefitField::new(b, &mask)
        }
    }
    .map_err(|e| e.context("benefit"))?;

    let patrol = match &cfg.patrol {
        PatrolSpec::None => Ok(PatrolStrategy::none(&mask)),
        PatrolSpec::Homogeneous { budget } => patrol::homogeneous(*budget, &mask),
        PatrolSpec::Band { budget, lo, hi } => patrol::band(*budget, &depth_of(&mask)?, &mask, *lo, *hi),
        PatrolSpec::Raster { path, budget } => patrol::from_raster(&read_raster(base, path)?, *budget, &mask),
    }
    .map_err(|e| e.context("patrol"))?;

    Ok(ScenarioInputs {
        speed,
        mask,
        benefit,
        patrol,
    })
}

#[derive(Debug)]
pub struct ScenarioRun {
    pub outcome: ExtractionOutcome,
    pub manifest: serde_json::Value,
    pub output_dir: PathBuf,
}

/// Runs `cfg` end to end and writes every output file plus
/// `manifest.json` and `outcome.svg` into its output directory.
pub fn run_scenario(cfg: &ScenarioConfig, base: &Path) -> Result<ScenarioRun> {
    let start = Instant::now();
    let inputs = load_inputs(cfg, base)?;
    let outcome = run_extraction(
        &inputs.speed,
        &inputs.mask,
        &inputs.patrol,
        &inputs.benefit,
        &cfg.risk,
        &cfg.solver.params(),
    )
    .map_err(|e| e.context("extraction"))?;
    let out = base.join(&cfg.output_dir);
    write_outcome(&outcome, &out).map_err(|e| e.context("output"))?;

    let svg = render_svg(&OutcomeView::from_outcome(&outcome), &SvgStyle::default());
    let svg_path = out.join("outcome.svg");
    fs::write(&svg_path, svg).map_err(|e| Error::io(svg_path, e))?;

    let manifest = manifest(cfg, &inputs, &outcome, start.elapsed().as_secs_f64());
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    let manifest_path = out.join("manifest.json");
    fs::write(&manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
    Ok(ScenarioRun {
        outcome,
        manifest,
        output_dir: out,
    })
}

fn manifest(cfg: &ScenarioConfig, inputs: &ScenarioInputs, outcome: &ExtractionOutcome, wall: f64) -> serde_json::Value {
    let g = inputs.mask.grid();
    let h = g.cellsize();
    let mut status = BTreeMap::new();
    for p in &outcome.paths {
        let key = serde_json::to_value(p.status).expect("status serialize");
        *status.entry(key.as_str().unwrap_or_default().to_string()).or_insert(0usize) += 1;
    }
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "resolved": {
            "grid": {
                "nx": g.nx(),
                "ny": g.ny(),
                "cellsize": h,
                "origin": [g.origin().x, g.origin().y],
            },
            "domain_nodes": inputs.mask.count(),
            "domain_area": inputs.mask.area(),
            "perimeter": inputs.mask.perimeter(),
            "tube_radius": cfg.risk.tube_radius.unwrap_or(2.0 * h),
            "path_step": cfg.risk.path_step.unwrap_or(0.5 * h),
            "patrol_budget": inputs.patrol.budget(),
            "benefit_range": [inputs.benefit.b_min, inputs.benefit.b_max],
            "benefit_levels": outcome.cost.levels,
            "dt": outcome.dt,
            "t_end": outcome.cost.per_level.iter().map(|t| t.t_end).collect::<Vec<_>>(),
            "worker_threads": crate::par::worker_threads(),
        },
        "solver_steps": outcome.solver_steps(),
        "unreached_nodes": outcome.cost.unreached.count(),
        "profitable": outcome.profitable,
        "high_profit_nodes": outcome.high_profit.count(),
        "path_status": status,
        "wall_time_s": wall,
    })
}

#[cfg(test)]
mod tests;
