use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExtractionOutcome;
use crate::error::{Error, Result};
use crate::grid::{write_polylines_csv, NodeMask, ScalarField};
use crate::terrain::{write_esri_ascii, write_mask_ascii};

/// The flat object written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub p_max: f64,
    pub pristine_proportion: f64,
    pub value_protected: f64,
    pub n_paths: usize,
    pub argmax_x: f64,
    pub argmax_y: f64,
}

impl Metrics {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metrics serialize");
        s.push('\n');
        s
    }
}

/// Paths as open polylines. Paths that never left their seed vertex have no
/// segment and are left out.
pub fn paths_csv(outcome: &ExtractionOutcome) -> String {
    write_polylines_csv(
        outcome
            .paths
            .iter()
            .filter(|p| p.vertices.len() >= 2)
            .map(|p| (p.vertices.as_slice(), false)),
    )
}

/// `field` with nodata outside `mask`.
fn masked(field: &ScalarField, mask: &NodeMask) -> ScalarField {
    let nodata = mask.flags().iter().map(|&inside| !inside).collect();
    let values = field
        .values()
        .iter()
        .zip(mask.flags())
        .map(|(&v, &inside)| if inside { v } else { 0.0 })
        .collect();
    ScalarField::with_nodata(*field.grid(), values, nodata).expect("same grid")
}

/// Writes `cost.asc`, `profit.asc`, `psi.asc`, `benefit.asc`,
/// `pristine.asc`, `paths.csv` and `metrics.json` into `dir`, creating it
/// if needed. The four value rasters carry NODATA outside the domain.
pub fn write_outcome(outcome: &ExtractionOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = outcome.mask.nodes();
    let files = [
        ("cost.asc", write_esri_ascii(&masked(&outcome.cost.c, m))),
        ("profit.asc", write_esri_ascii(&masked(&outcome.profit.p, m))),
        ("psi.asc", write_esri_ascii(&masked(&outcome.psi, m))),
        ("benefit.asc", write_esri_ascii(&masked(&outcome.benefit.b, m))),
        ("pristine.asc", write_mask_ascii(&outcome.pristine)),
        ("paths.csv", paths_csv(outcome)),
        ("metrics.json", outcome.metrics().to_json()),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
