//! Writes the rasters behind the island scenarios in `scenarios/`: an
//! elongated island joined to a small peninsula by a narrow neck, and a
//! strip patrol across the middle of the main body.
//!
//! `cargo run -p parkguard-core --example island_inputs -- scenarios`

use std::path::PathBuf;

use parkguard::terrain::{write_esri_ascii, write_mask_ascii};
use parkguard::{Grid, NodeMask, Point, ScalarField};

fn island(p: Point) -> bool {
    let body = ((p.x + 0.3) / 1.2).powi(2) + (p.y / 0.45).powi(2) <= 1.0;
    let peninsula = (p.x - 1.3).hypot(p.y) <= 0.28;
    let neck = p.y.abs() <= 0.05 && (0.8..=1.1).contains(&p.x);
    body || peninsula || neck
}

fn main() -> parkguard::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenarios".into()));
    let g = Grid::covering(-1.7, -0.7, 1.8, 0.7, 0.02)?;
    let mask = NodeMask::from_fn(g, |i, j| island(g.node(i, j)));
    let strip = ScalarField::from_fn(g, |p| if (p.x + 0.3).abs() <= 0.5 { 1.0 } else { 0.0 });
    std::fs::create_dir_all(&dir).expect("create output dir");
    std::fs::write(dir.join("island_mask.asc"), write_mask_ascii(&mask)).expect("write mask");
    std::fs::write(dir.join("center_band.asc"), write_esri_ascii(&strip)).expect("write patrol");
    Ok(())
}
