use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::extraction::{ExtractionOutcome, Metrics};
use crate::grid::{marching_squares, read_polylines_csv, DomainMask, Grid, NodeMask, Point, Polyline};
use crate::terrain::{load_esri_ascii, load_mask_ascii};

/// What the figure needs from an outcome.
#[derive(Debug, Clone)]
pub struct OutcomeView {
    pub grid: Grid,
    pub domain: NodeMask,
    pub boundary: Vec<Polyline>,
    pub high_profit: NodeMask,
    pub pristine: NodeMask,
    pub paths: Vec<Vec<Point>>,
    pub metrics: Metrics,
}

impl OutcomeView {
    pub fn from_outcome(o: &ExtractionOutcome) -> Self {
        Self {
            grid: *o.mask.grid(),
            domain: o.mask.nodes().clone(),
            boundary: o.mask.boundary().to_vec(),
            high_profit: o.high_profit.clone(),
            pristine: o.pristine.clone(),
            paths: o.paths.iter().map(|p| p.vertices.clone()).collect(),
            metrics: o.metrics(),
        }
    }
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let p = dir.join(name);
    fs::read_to_string(&p).map_err(|e| Error::io(p, e))
}

/// Rebuilds a view from a run's output directory. The domain is the data
/// region of `profit.asc`; the high-profit cut uses the `epsilon` recorded
/// in `manifest.json`, or 0.05 without one.
pub fn load_outcome_view(dir: &Path) -> Result<OutcomeView> {
    let profit = load_esri_ascii(&read(dir, "profit.asc")?)?;
    let g = *profit.grid();
    let domain = NodeMask::new(g, profit.nodata().iter().map(|&nd| !nd).collect())?;
    let boundary = DomainMask::from_nodes(domain.clone())?.boundary().to_vec();
    let pristine = load_mask_ascii(&read(dir, "pristine.asc")?)?;
    g.ensure_same(pristine.grid(), "pristine vs profit")?;
    let paths = read_polylines_csv(&read(dir, "paths.csv")?)?
        .into_iter()
        .map(|p| p.vertices().to_vec())
        .collect();
    let metrics: Metrics = super::from_json(&read(dir, "metrics.json")?)?;
    let epsilon = match read(dir, "manifest.json") {
        Ok(text) => serde_json::from_str::<serde_json::Value>(&text)?
            .pointer("/config/risk/epsilon")
            .and_then(|v| v.as_f64())
            .unwrap_or(0.05),
        Err(_) => 0.05,
    };
    let cut = (1.0 - epsilon) * metrics.p_max;
    let high_profit = NodeMask::from_fn(g, |i, j| {
        metrics.p_max > 0.0 && domain.contains(i, j) && profit.get(i, j) >= cut
    });
    Ok(OutcomeView {
        grid: g,
        domain,
        boundary,
        high_profit,
        pristine,
        paths,
        metrics,
    })
}

#[derive(Debug, Clone)]
pub struct SvgStyle {
    pub max_paths: usize,
    /// Width of the drawing in pixels; height follows the aspect ratio.
    pub width_px: f64,
    pub high_profit_fill: String,
    pub touched_fill: String,
    pub path_stroke: String,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self {
            max_paths: 50,
            width_px: 800.0,
            high_profit_fill: "#595959".into(),
            touched_fill: "#d9d9d9".into(),
            path_stroke: "#1f4e79".into(),
        }
    }
}

/// Merged row runs of `mask` as `<rect>`s, one cell per node.
fn cells(out: &mut String, mask: &NodeMask) {
    let g = mask.grid();
    let h = g.cellsize();
    for j in 0..g.ny() {
        let mut i = 0;
        while i < g.nx() {
            if !mask.contains(i, j) {
                i += 1;
                continue;
            }
            let start = i;
            while i < g.nx() && mask.contains(i, j) {
                i += 1;
            }
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#,
                g.x(start) - 0.5 * h,
                g.y(j) - 0.5 * h,
                (i - start) as f64 * h,
                h
            );
        }
    }
}

fn points(vs: &[Point]) -> String {
    let mut s = String::new();
    for (n, p) in vs.iter().enumerate() {
        if n > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{},{}", p.x, p.y);
    }
    s
}

fn lines(out: &mut String, ls: &[Polyline]) {
    for l in ls {
        let tag = if l.is_closed() { "polygon" } else { "polyline" };
        let _ = writeln!(out, r#"<{tag} points="{}"/>"#, points(l.vertices()));
    }
}

/// Layered figure: domain, non-pristine cells, high-profit cells and their
/// contour, sample paths, boundary and a metrics legend. Drawing happens in
/// world coordinates under one flipping transform.
pub fn render_svg(view: &OutcomeView, style: &SvgStyle) -> String {
    let g = &view.grid;
    let h = g.cellsize();
    let (x0, y0) = (g.origin().x - 0.5 * h, g.origin().y - 0.5 * h);
    let (x1, y1) = (g.xmax() + 0.5 * h, g.ymax() + 0.5 * h);
    let s = style.width_px / (x1 - x0);
    let height = (y1 - y0) * s;
    let legend_h = 90.0;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{th}" viewBox="0 0 {w} {th}">"#,
        w = style.width_px,
        th = height + legend_h
    );
    let _ = writeln!(
        out,
        r#"<g id="world" transform="matrix({s} 0 0 {} {} {})">"#,
        -s,
        -x0 * s,
        y1 * s
    );
    let _ = writeln!(out, r##"<g id="domain" fill="#ffffff" fill-rule="evenodd" stroke="none">"##);
    lines(&mut out, &view.boundary);
    out.push_str("</g>\n");

    let touched = view.domain.difference(&view.pristine).difference(&view.high_profit);
    if !touched.is_empty() {
        let _ = writeln!(out, r#"<g id="non-pristine" fill="{}" stroke="none">"#, style.touched_fill);
        cells(&mut out, &touched);
        out.push_str("</g>\n");
    }
    if !view.high_profit.is_empty() {
        let _ = writeln!(out, r#"<g id="high-profit" fill="{}" stroke="none">"#, style.high_profit_fill);
        cells(&mut out, &view.high_profit);
        out.push_str("</g>\n");
        let _ = writeln!(
            out,
            r##"<g id="high-profit-contour" fill="none" stroke="#000000" stroke-width="1" vector-effect="non-scaling-stroke">"##
        );
        lines(&mut out, &marching_squares(&view.high_profit.indicator(), 0.5));
        out.push_str("</g>\n");
    }
    let drawn: Vec<&Vec<Point>> = view.paths.iter().filter(|p| p.len() >= 2).take(style.max_paths).collect();
    if !drawn.is_empty() {
        let _ = writeln!(
            out,
            r#"<g id="paths" fill="none" stroke="{}" stroke-width="1" vector-effect="non-scaling-stroke">"#,
            style.path_stroke
        );
        for p in drawn {
            let _ = writeln!(out, r#"<polyline points="{}"/>"#, points(p));
        }
        out.push_str("</g>\n");
    }
    let _ = writeln!(
        out,
        r##"<g id="boundary" fill="none" stroke="#000000" stroke-width="2" vector-effect="non-scaling-stroke">"##
    );
    lines(&mut out, &view.boundary);
    out.push_str("</g>\n</g>\n");

    let m = &view.metrics;
    let _ = writeln!(
        out,
        r#"<g id="legend" font-family="sans-serif" font-size="14" transform="translate(10 {})">"#,
        height + 20.0
    );
    let rows = [
        format!("P_max = {:.4} at ({:.3}, {:.3})", m.p_max, m.argmax_x, m.argmax_y),
        format!("pristine proportion = {:.4}", m.pristine_proportion),
        format!("value protected = {:.4}", m.value_protected),
        format!("exit paths = {}", m.n_paths),
    ];
    for (n, row) in rows.iter().enumerate() {
        let _ = writeln!(out, r#"<text x="0" y="{}">{row}</text>"#, 18.0 * n as f64);
    }
    out.push_str("</g>\n</svg>\n");
    out
}
