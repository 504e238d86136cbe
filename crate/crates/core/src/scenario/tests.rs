use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::grid::Point;
use crate::terrain::write_esri_ascii;

const MINIMAL: &str = r#"{
    "schema": 1,
    "terrain": {"type": "synthetic", "surface": {"type": "flat"},
                "grid": {"xmin": -1.2, "ymin": -1.2, "xmax": 1.2, "ymax": 1.2, "cellsize": 0.05}},
    "mask": {"type": "disc", "center": [0, 0], "radius": 1},
    "benefit": {"type": "depth_poly", "k": 8},
    "patrol": {"type": "none"}
}"#;

/// Unit disc, speed 1, `B = 2d`, `ψ = E/π`.
fn disc_config(h: f64, budget: f64, out: &str) -> String {
    let m = 1.0 + 5.0 * h;
    format!(
        r#"{{
        "schema": 1,
        "terrain": {{"type": "uniform_speed", "speed": 1,
                    "grid": {{"xmin": -{m}, "ymin": -{m}, "xmax": {m}, "ymax": {m}, "cellsize": {h}}}}},
        "mask": {{"type": "disc", "center": [0, 0], "radius": 1}},
        "benefit": {{"type": "depth_linear", "k": 2}},
        "patrol": {{"type": "homogeneous", "budget": {budget}}},
        "risk": {{"n_paths": 40, "rng_seed": 7}},
        "output_dir": "{out}"
    }}"#
    )
}

fn pointer(err: Error) -> String {
    match err {
        Error::Config { pointer, .. } => pointer,
        other => panic!("expected a config error, got {other}"),
    }
}

fn with(text: &str, patch: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(text).unwrap();
    patch(&mut v);
    v.to_string()
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config(MINIMAL).unwrap();
    assert_eq!(cfg.risk.alpha, 1.0);
    assert_eq!(cfg.risk.epsilon, 0.05);
    assert_eq!(cfg.risk.n_levels, 17);
    assert_eq!(cfg.solver.cfl, 0.5);
    assert_eq!(cfg.solver.redistance_interval, 20);
    assert_eq!(cfg.solver.scheme, Scheme::Eno2);
    assert_eq!(cfg.output_dir, PathBuf::from("out"));
    assert_eq!(cfg.benefit, BenefitSpec::DepthPoly { k: 8.0 });
}

#[test]
fn errors_carry_json_pointers() {
    let bad = with(MINIMAL, |v| v["risk"] = serde_json::json!({"alpha": -1}));
    assert_eq!(pointer(parse_config(&bad).unwrap_err()), "/risk/alpha");

    let bad = with(MINIMAL, |v| v["risk"] = serde_json::json!({"alhpa": 1}));
    assert_eq!(pointer(parse_config(&bad).unwrap_err()), "/risk/alhpa");

    let bad = with(MINIMAL, |v| v["solver"] = serde_json::json!({"cfl": 1.5}));
    assert_eq!(pointer(parse_config(&bad).unwrap_err()), "/solver/cfl");

    let bad = with(MINIMAL, |v| v["benefit"]["k"] = serde_json::json!(0));
    assert_eq!(pointer(parse_config(&bad).unwrap_err()), "/benefit/k");

    let bad = with(MINIMAL, |v| v["schema"] = serde_json::json!(2));
    assert_eq!(pointer(parse_config(&bad).unwrap_err()), "/schema");

    let bad = with(MINIMAL, |v| v["risk"] = serde_json::json!({"n_levels": "many"}));
    assert_eq!(pointer(parse_config(&bad).unwrap_err()), "/risk/n_levels");

    let bad = with(MINIMAL, |v| {
        v.as_object_mut().unwrap().remove("patrol");
    });
    let err = parse_config(&bad).unwrap_err();
    assert!(err.to_string().contains("patrol"), "{err}");

    let bad = with(MINIMAL, |v| v["extra"] = serde_json::json!(1));
    assert_eq!(pointer(parse_config(&bad).unwrap_err()), "/extra");

    let bad = with(MINIMAL, |v| v["patrol"] = serde_json::json!({"type": "band", "budget": 1, "lo": 0.7, "hi": 0.3}));
    assert_eq!(pointer(parse_config(&bad).unwrap_err()), "/patrol/hi");

    let bad = with(MINIMAL, |v| v["patrol"] = serde_json::json!({"type": "homogeneous", "budget": -2}));
    assert_eq!(pointer(parse_config(&bad).unwrap_err()), "/patrol/budget");

    let bad = with(MINIMAL, |v| v["mask"] = serde_json::json!({"type": "nodata"}));
    assert_eq!(pointer(parse_config(&bad).unwrap_err()), "/mask/type");

    let bad = with(MINIMAL, |v| v["patrol"] = serde_json::json!({"type": "sweep"}));
    assert!(parse_config(&bad).unwrap_err().to_string().contains("sweep"));

    assert!(matches!(parse_config("{"), Err(Error::Config { .. })));
}

#[test]
fn band_config_round_trips() {
    let text = with(MINIMAL, |v| {
        v["patrol"] = serde_json::json!({"type": "band", "budget": 3e4, "lo": 0.3, "hi": 0.7});
    });
    let cfg = parse_config(&text).unwrap();
    assert_eq!(cfg.patrol, PatrolSpec::Band { budget: 3e4, lo: 0.3, hi: 0.7 });
    let again = parse_config(&cfg.to_json()).unwrap();
    assert_eq!(again, cfg);
    assert_eq!(again.to_json(), cfg.to_json());
}

#[test]
fn disc_scenario_writes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&disc_config(0.04, 1.0, "run")).unwrap();
    let run = run_scenario(&cfg, dir.path()).unwrap();
    let out = dir.path().join("run");
    for name in [
        "metrics.json",
        "manifest.json",
        "cost.asc",
        "profit.asc",
        "psi.asc",
        "benefit.asc",
        "pristine.asc",
        "paths.csv",
        "outcome.svg",
    ] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let p_max = metrics["p_max"].as_f64().unwrap();
    assert!((p_max - PI / 8.0).abs() <= 0.04 * PI / 8.0, "{p_max}");
    assert_eq!(metrics["n_paths"], 40);
    assert_eq!(run.output_dir, out);

    // No silent defaults: every parameter appears with a value.
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    for key in ["alpha", "epsilon", "n_levels", "n_paths", "rng_seed"] {
        assert!(m["config"]["risk"][key].is_number(), "risk/{key}");
    }
    for key in ["cfl", "redistance_interval", "v_min"] {
        assert!(m["config"]["solver"][key].is_number(), "solver/{key}");
    }
    assert_eq!(m["config"]["solver"]["scheme"], "eno2");
    for key in ["tube_radius", "path_step", "dt", "patrol_budget"] {
        assert!(m["resolved"][key].is_number(), "resolved/{key}");
    }
    assert_eq!(m["resolved"]["tube_radius"].as_f64().unwrap(), 0.08);
    assert_eq!(m["resolved"]["t_end"].as_array().unwrap().len(), 17);
    assert_eq!(m["solver_steps"].as_array().unwrap().len(), 17);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["config"], serde_json::to_value(&cfg).unwrap());

    // Outside the domain the value rasters hold no data.
    let psi = load_esri_ascii(&fs::read_to_string(out.join("psi.asc")).unwrap()).unwrap();
    assert!(psi.is_nodata(0, 0));
    let g = *psi.grid();
    let (i, j) = g.nearest_node(Point::default()).unwrap();
    assert!((psi.get(i, j) - 1.0 / run.outcome.mask.area()).abs() < 1e-12);

    // The figure rebuilt from disk matches the one drawn from memory.
    let view = load_outcome_view(&out).unwrap();
    assert_eq!(view.domain, *run.outcome.mask.nodes());
    assert_eq!(view.pristine, run.outcome.pristine);
    assert_eq!(view.high_profit, run.outcome.high_profit);
    assert_eq!(view.metrics, run.outcome.metrics());
    assert_eq!(view.paths.len(), run.outcome.paths.iter().filter(|p| p.vertices.len() >= 2).count());
}

#[test]
fn patrol_lowers_the_best_profit() {
    let dir = tempfile::tempdir().unwrap();
    let free = parse_config(&disc_config(0.05, 0.0, "free")).unwrap();
    let patrolled = parse_config(&disc_config(0.05, 1.0, "patrolled")).unwrap();
    let a = run_scenario(&free, dir.path()).unwrap().outcome.profit.p_max;
    let b = run_scenario(&patrolled, dir.path()).unwrap().outcome.profit.p_max;
    assert!(b < a, "{b} vs {a}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let read = |sub: &str, name: &str| fs::read(dir.path().join(sub).join(name)).unwrap();
    for out in ["a", "b"] {
        let cfg = parse_config(&disc_config(0.05, 1.0, out)).unwrap();
        run_scenario(&cfg, dir.path()).unwrap();
    }
    for name in ["metrics.json", "paths.csv", "pristine.asc", "profit.asc", "outcome.svg"] {
        assert_eq!(read("a", name), read("b", name), "{name}");
    }
}

/// Rectangle of elevation data with nodata margins, plus a patrol shape
/// and a polygon file, all referenced by relative path.
fn write_raster_inputs(dir: &Path) -> Grid {
    let g = Grid::covering(0.0, 0.0, 2.0, 1.5, 0.05).unwrap();
    let data = |p: Point| (0.099..=1.901).contains(&p.x) && (0.099..=1.401).contains(&p.y);
    let elev: Vec<f64> = (0..g.len()).map(|k| 20.0 * g.node_at(k).x).collect();
    let nodata: Vec<bool> = (0..g.len()).map(|k| !data(g.node_at(k))).collect();
    let elev = ScalarField::with_nodata(g, elev, nodata).unwrap();
    fs::create_dir_all(dir.join("in")).unwrap();
    fs::write(dir.join("in/dem.asc"), write_esri_ascii(&elev)).unwrap();
    let shape = ScalarField::from_fn(g, |p| p.x);
    fs::write(dir.join("in/patrol.asc"), write_esri_ascii(&shape)).unwrap();
    fs::write(dir.join("in/park.csv"), "0.3,0.3\n1.7,0.3\n1.7,1.2\n0.3,1.2\n").unwrap();
    g
}

#[test]
fn esri_nodata_mask_is_eroded_one_node() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_raster_inputs(dir.path());
    let text = r#"{
        "schema": 1,
        "terrain": {"type": "esri", "path": "in/dem.asc"},
        "mask": {"type": "nodata"},
        "benefit": {"type": "depth_poly", "k": 1},
        "patrol": {"type": "raster", "path": "in/patrol.asc", "budget": 0.5}
    }"#;
    let cfg = parse_config(text).unwrap();
    let inputs = load_inputs(&cfg, dir.path()).unwrap();
    let inside = NodeMask::from_fn(g, |i, j| {
        let p = g.node(i, j);
        (0.149..=1.851).contains(&p.x) && (0.149..=1.351).contains(&p.y)
    });
    assert_eq!(*inputs.mask.nodes(), inside);
    assert!((crate::grid::integrate(inputs.patrol.psi(), &inputs.mask).unwrap() - 0.5).abs() < 1e-9);
    // Slope 20 is too steep to walk: speed sits at the floor.
    assert!(inputs.mask.indices().all(|k| inputs.speed.v.at(k) == DEFAULT_V_MIN));
}

#[test]
fn polygon_csv_mask_with_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_raster_inputs(dir.path());
    let text = r#"{
        "schema": 1,
        "terrain": {"type": "uniform_speed", "speed": 1,
                    "grid": {"xmin": 0, "ymin": 0, "xmax": 2, "ymax": 1.5, "cellsize": 0.05}},
        "mask": {"type": "polygon_csv", "path": "in/park.csv"},
        "benefit": {"type": "depth_linear", "k": 3},
        "patrol": {"type": "band", "budget": 1, "lo": 0.2, "hi": 0.8},
        "risk": {"n_paths": 10}
    }"#;
    let cfg = parse_config(text).unwrap();
    let inputs = load_inputs(&cfg, dir.path()).unwrap();
    assert_eq!(*inputs.mask.grid(), g);
    let (i, j) = g.nearest_node(Point::new(1.0, 0.75)).unwrap();
    assert!(inputs.mask.contains(i, j));
    assert!(!inputs.mask.contains(2, 2));
    let deepest = 0.45;
    assert!((inputs.benefit.b_max - 3.0 * deepest).abs() < 0.05, "{}", inputs.benefit.b_max);

    let missing = with(text, |v| v["mask"]["path"] = serde_json::json!("in/nope.csv"));
    let err = load_inputs(&parse_config(&missing).unwrap(), dir.path()).unwrap_err();
    assert!(err.to_string().contains("nope.csv"), "{err}");
}

#[test]
fn alpha_zero_cost_is_depth() {
    let r = validate_circle(0.04, 0.0, 1.0, 17);
    assert!(r.error.is_none());
    assert!(r.max_abs_cost_error <= 2.0 * 0.04, "{}", r.max_abs_cost_error);
    assert_eq!(r.cost_tolerance, 2.0 * 0.04);
    assert_eq!(r.p_max_exact, 1.0);
}

#[test]
fn circle_errors_shrink_under_refinement() {
    let coarse = validate_circle(0.04, 1.0, 1.0, 17);
    let fine = validate_circle(0.02, 1.0, 1.0, 17);
    assert!(fine.max_abs_cost_error < coarse.max_abs_cost_error);
    assert!(fine.max_abs_profit_error < coarse.max_abs_profit_error);
    assert!(fine.piecewise_max_abs_profit_error < coarse.piecewise_max_abs_profit_error);
    assert!(fine.pass, "{}", fine.to_json());
    assert!((fine.p_max_exact - PI / 8.0).abs() < 1e-15);
}

#[test]
fn circle_failures_are_reported() {
    let r = validate_circle(-1.0, 1.0, 1.0, 17);
    assert!(!r.pass);
    assert!(r.error.is_some());
    let r = validate_circle(0.05, 1.0, 1.0, 1);
    assert!(!r.pass);
    assert!(r.error.unwrap().contains("n_levels"));
}

fn report(cost: f64, profit: f64, piecewise: f64) -> ValidationReport {
    ValidationReport {
        h: 0.01,
        alpha: 1.0,
        budget: 1.0,
        n_levels: 17,
        max_abs_cost_error: cost,
        max_abs_profit_error: profit,
        piecewise_max_abs_profit_error: piecewise,
        cost_tolerance: 0.03,
        profit_tolerance: 0.015,
        p_max: 0.39,
        p_max_exact: PI / 8.0,
        nodes_compared: 1,
        pass: true,
        error: None,
    }
}

proptest! {
    #[test]
    fn loosening_tolerance_never_fails(
        c in 0.0f64..0.1, p in 0.0f64..0.1, q in 0.0f64..0.1,
        tc in 0.0f64..0.1, tp in 0.0f64..0.1, dc in 0.0f64..0.1, dp in 0.0f64..0.1,
    ) {
        let r = report(c, p, q);
        if r.passes(tc, tp) {
            prop_assert!(r.passes(tc + dc, tp + dp));
        }
    }
}

fn read_raster(path: &Path) -> ScalarField {
    load_esri_ascii(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(surface: &str, mask: &str, h: f64) -> (tempfile::TempDir, Vec<PathBuf>) {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"grid": {{"xmin": -1, "ymin": -1, "xmax": 1, "ymax": 1, "cellsize": {h}}},
            "surface": {surface}, "mask": {mask}, "output_dir": "terrain"}}"#
    );
    let spec = parse_synthetic_spec(&text).unwrap();
    let files = make_synthetic(&spec, dir.path()).unwrap();
    (dir, files)
}

#[test]
fn synthetic_disc_raster_size() {
    let (_dir, files) = synth(r#"{"type": "flat"}"#, r#"{"type": "disc", "center": [0, 0], "radius": 1}"#, 0.01);
    let names: Vec<_> = files.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
    assert_eq!(names, ["elevation.asc", "slope.asc", "speed.asc", "mask.asc"]);
    let elev = read_raster(&files[0]);
    assert_eq!((elev.grid().nx(), elev.grid().ny()), (201, 201));
    let mask = load_mask_ascii(&fs::read_to_string(&files[3]).unwrap()).unwrap();
    assert_eq!((mask.grid().nx(), mask.grid().ny()), (201, 201));
    assert!(mask.contains(100, 100));
    assert!(!mask.contains(0, 0));
    assert!((mask.area() - PI).abs() < 0.01);
}

#[test]
fn synthetic_ramp_has_constant_slope() {
    let (_dir, files) = synth(
        r#"{"type": "ramp", "slope": 0.1, "azimuth_deg": 30}"#,
        r#"{"type": "rectangle", "min": [-0.5, -0.5], "max": [0.5, 0.5]}"#,
        0.05,
    );
    let slope = read_raster(&files[1]);
    assert!(slope.values().iter().all(|s| (s - 0.1).abs() < 1e-12));
    let speed = read_raster(&files[2]);
    let v = crate::terrain::walking_speed(0.1).unwrap();
    assert!(speed.values().iter().all(|s| (s - v).abs() < 1e-12));
}

#[test]
fn synthetic_crater_has_a_slow_ring() {
    let (_dir, files) = synth(
        r#"{"type": "crater", "depth": 0.3, "radius": 0.5}"#,
        r#"{"type": "polygon", "vertices": [[-0.8, -0.8], [0.8, -0.8], [0, 0.8]]}"#,
        0.01,
    );
    let speed = read_raster(&files[2]);
    let g = *speed.grid();
    let j = g.nearest_node(Point::default()).unwrap().1;
    let (i_min, _) = (g.nx() / 2..g.nx())
        .map(|i| (i, speed.get(i, j)))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let r = g.x(i_min);
    assert!((r - 0.5 / 2f64.sqrt()).abs() <= 0.02, "slowest at r = {r}");
    // Flat centre and flat rim both walk faster than the ring.
    let centre = speed.get(g.nx() / 2, j);
    let rim = speed.get(g.nx() - 2, j);
    assert!(centre > speed.get(i_min, j) && rim > speed.get(i_min, j));
    let mask = load_mask_ascii(&fs::read_to_string(&files[3]).unwrap()).unwrap();
    assert!(mask.contains(g.nx() / 2, g.ny() / 2));
    assert!(!mask.contains(g.nx() / 2, g.ny() - 5));
}

#[test]
fn synthetic_unknown_kind_is_an_error() {
    let text = r#"{"grid": {"xmin": -1, "ymin": -1, "xmax": 1, "ymax": 1, "cellsize": 0.1},
                   "surface": {"type": "volcano"}, "mask": {"type": "disc", "center": [0, 0], "radius": 0.5}}"#;
    let err = parse_synthetic_spec(text).unwrap_err();
    assert!(err.to_string().contains("volcano"), "{err}");
    let text = text.replace(r#""type": "volcano""#, r#""type": "flat""#).replace("disc", "hexagon");
    assert!(parse_synthetic_spec(&text).is_err());
}

fn parse_svg(svg: &str) -> roxmltree::Document<'_> {
    roxmltree::Document::parse(svg).expect("well-formed SVG")
}

fn group<'a>(doc: &'a roxmltree::Document<'a>, id: &str) -> Option<roxmltree::Node<'a, 'a>> {
    doc.descendants().find(|n| n.attribute("id") == Some(id))
}

#[test]
fn fully_pristine_outcome_draws_only_the_boundary() {
    let g = Grid::covering(-1.2, -1.2, 1.2, 1.2, 0.1).unwrap();
    let mask = DomainMask::disc(g, Point::default(), 1.0).unwrap();
    let view = OutcomeView {
        grid: g,
        domain: mask.nodes().clone(),
        boundary: mask.boundary().to_vec(),
        high_profit: NodeMask::empty(g),
        pristine: mask.nodes().clone(),
        paths: vec![],
        metrics: crate::extraction::Metrics {
            p_max: -0.5,
            pristine_proportion: 1.0,
            value_protected: 1.0,
            n_paths: 0,
            argmax_x: 0.0,
            argmax_y: 0.0,
        },
    };
    let svg = render_svg(&view, &SvgStyle::default());
    let doc = parse_svg(&svg);
    for id in ["non-pristine", "high-profit", "high-profit-contour", "paths"] {
        assert!(group(&doc, id).is_none(), "{id}");
    }
    assert!(group(&doc, "boundary").is_some());
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("rect")).count(), 0);
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 0);
    assert!(svg.contains("pristine proportion = 1.0000"));
}

#[test]
fn disc_figure_shows_the_annulus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&disc_config(0.04, 1.0, "run")).unwrap();
    run_scenario(&cfg, dir.path()).unwrap();
    let svg = fs::read_to_string(dir.path().join("run/outcome.svg")).unwrap();
    let doc = parse_svg(&svg);
    // HP band in depth: d − 2d²/π ≥ 0.95·π/8, i.e. r from 0.039 to 0.390.
    let (r_in, r_out) = (1.0 - PI / 4.0 * (1.0 + 0.05f64.sqrt()), 1.0 - PI / 4.0 * (1.0 - 0.05f64.sqrt()));
    let slack = 0.04 * 1.5;
    let hp = group(&doc, "high-profit").unwrap();
    let mut n = 0;
    for r in hp.children().filter(|n| n.has_tag_name("rect")) {
        let f = |k| r.attribute(k).unwrap().parse::<f64>().unwrap();
        let (x, y, w, h) = (f("x"), f("y"), f("width"), f("height"));
        let far = (x.abs().max((x + w).abs())).hypot(y.abs().max((y + h).abs()));
        assert!(far <= r_out + 2.0 * slack, "cell run reaches r = {far}");
        let near_x = if x <= 0.0 && x + w >= 0.0 { 0.0 } else { x.abs().min((x + w).abs()) };
        let near_y = if y <= 0.0 && y + h >= 0.0 { 0.0 } else { y.abs().min((y + h).abs()) };
        assert!(near_x.hypot(near_y) >= (r_in - slack).max(0.0) - 1e-12);
        n += 1;
    }
    assert!(n > 0);
    assert!(r_in > 0.03 && r_out < 0.4);
    let paths = group(&doc, "paths").unwrap();
    assert!(paths.children().filter(|n| n.has_tag_name("polyline")).count() <= 50);
    assert!(group(&doc, "high-profit-contour").is_some());
    assert!(group(&doc, "legend").is_some());

    let few = SvgStyle {
        max_paths: 3,
        ..SvgStyle::default()
    };
    let view = load_outcome_view(&dir.path().join("run")).unwrap();
    let doc_text = render_svg(&view, &few);
    let doc = parse_svg(&doc_text);
    assert_eq!(group(&doc, "paths").unwrap().children().filter(|n| n.has_tag_name("polyline")).count(), 3);
}
