use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::extraction::{expected_profit, BenefitField, ProfitSolve, RiskParams};
use crate::grid::{DomainMask, Grid, Point, ScalarField};
use crate::patrol::PatrolStrategy;
use crate::solver::SolverParams;
use crate::terrain::SpeedField;

/// Profit tolerance for `h <= 0.02`.
pub const PROFIT_TOLERANCE: f64 = 0.015;

/// Depth window over which errors are measured.
const DEPTH_WINDOW: (f64, f64) = (0.05, 0.95);

/// Radius where the piecewise patrol density steps down.
const PIECEWISE_RADIUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub h: f64,
    pub alpha: f64,
    pub budget: f64,
    pub n_levels: usize,
    pub max_abs_cost_error: f64,
    pub max_abs_profit_error: f64,
    /// Profit error with a two-valued radial patrol density.
    pub piecewise_max_abs_profit_error: f64,
    pub cost_tolerance: f64,
    pub profit_tolerance: f64,
    pub p_max: f64,
    pub p_max_exact: f64,
    pub nodes_compared: usize,
    pub pass: bool,
    /// Set when the pipeline itself failed.
    pub error: Option<String>,
}

impl ValidationReport {
    /// Whether all three errors lie within the given tolerances.
    pub fn passes(&self, cost_tolerance: f64, profit_tolerance: f64) -> bool {
        self.error.is_none()
            && self.max_abs_cost_error <= cost_tolerance
            && self.max_abs_profit_error <= profit_tolerance
            && self.piecewise_max_abs_profit_error <= profit_tolerance
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialize");
        s.push('\n');
        s
    }
}

/// Unit disc on a grid with a five-cell margin, walking speed 1.
fn unit_disc(h: f64) -> Result<(DomainMask, SpeedField)> {
    let m = 1.0 + 5.0 * h;
    let g = Grid::covering(-m, -m, m, m, h)?;
    let mask = DomainMask::disc(g, Point::default(), 1.0)?;
    Ok((mask, SpeedField::uniform(g, 1.0)?))
}

fn radial_patrol(mask: &DomainMask, psi: impl Fn(f64) -> f64 + Sync) -> Result<PatrolStrategy> {
    let f = ScalarField::from_fn(*mask.grid(), |p| psi(p.norm()));
    PatrolStrategy::from_density(&f, mask)
}

struct Errors {
    cost: f64,
    profit: f64,
    nodes: usize,
}

/// Max errors against `C(d, B)` over the depth window, with `B = 2d`.
fn compare(mask: &DomainMask, solve: &ProfitSolve, cost: impl Fn(f64, f64) -> f64) -> Errors {
    let g = mask.grid();
    let mut e = Errors {
        cost: 0.0,
        profit: 0.0,
        nodes: 0,
    };
    for k in solve.profit.reached.indices() {
        let d = 1.0 - g.node_at(k).norm();
        if !(DEPTH_WINDOW.0..=DEPTH_WINDOW.1).contains(&d) {
            continue;
        }
        let b = 2.0 * d;
        let c = cost(d, b);
        e.cost = e.cost.max((solve.cost.c.at(k) - c).abs());
        e.profit = e.profit.max((solve.profit.p.at(k) - (b - c)).abs());
        e.nodes += 1;
    }
    e
}

/// Maximum over `d ∈ [0, 1]` of `d − 2aψ·d²`.
fn p_max_exact(a_psi: f64) -> f64 {
    if 4.0 * a_psi <= 1.0 {
        1.0 - 2.0 * a_psi
    } else {
        1.0 / (8.0 * a_psi)
    }
}

fn run(h: f64, alpha: f64, e: f64, n: usize) -> Result<ValidationReport> {
    let (mask, speed) = unit_disc(h)?;
    let benefit = BenefitField::new(
        ScalarField::from_fn(*mask.grid(), |p| 2.0 * (1.0 - p.norm()).max(0.0)),
        &mask,
    )?;
    let risk = RiskParams {
        alpha,
        n_levels: n,
        ..RiskParams::default()
    };
    let params = SolverParams::default();

    // Homogeneous ψ = E/π: the cost rate is constant along every radius.
    let psi = e / PI;
    let patrol = radial_patrol(&mask, |_| psi)?;
    let solve = expected_profit(&speed, &mask, &patrol, &benefit, &risk, &params)?;
    let hom = compare(&mask, &solve, |d, b| d + alpha * psi * b * d);

    // Two-valued ψ, twice as dense outside r = 1/2, same budget. Along a
    // radius the cost is d + αB·Q(d) with Q the integral of ψ over depth.
    let r0 = PIECEWISE_RADIUS;
    let psi_in = e / (PI * (r0 * r0 + 2.0 * (1.0 - r0 * r0)));
    let psi_out = 2.0 * psi_in;
    let patrol = radial_patrol(&mask, |r| if r > r0 { psi_out } else { psi_in })?;
    let pw = expected_profit(&speed, &mask, &patrol, &benefit, &risk, &params)?;
    let d0 = 1.0 - r0;
    let q = |d: f64| psi_out * d.min(d0) + psi_in * (d - d0).max(0.0);
    let piecewise = compare(&mask, &pw, |d, b| d + alpha * b * q(d));

    let mut report = ValidationReport {
        h,
        alpha,
        budget: e,
        n_levels: n,
        max_abs_cost_error: hom.cost,
        max_abs_profit_error: hom.profit,
        piecewise_max_abs_profit_error: piecewise.profit,
        cost_tolerance: 2.0 * h * (1.0 + alpha * psi * 2.0),
        profit_tolerance: PROFIT_TOLERANCE,
        p_max: solve.profit.p_max,
        p_max_exact: p_max_exact(alpha * psi),
        nodes_compared: hom.nodes,
        pass: false,
        error: None,
    };
    report.pass = report.passes(report.cost_tolerance, report.profit_tolerance);
    Ok(report)
}

/// Runs the unit-disc scenario with `v = 1`, `ψ = E/π`, `B = 2(1 − |x|)`
/// and compares cost and profit with their closed forms on nodes of depth
/// 0.05 to 0.95. A second run with a two-valued radial `ψ` of the same
/// budget checks the profit against its radial integral. Failures of the
/// pipeline are reported in the result, never returned.
pub fn validate_circle(h: f64, alpha: f64, e: f64, n: usize) -> ValidationReport {
    run(h, alpha, e, n).unwrap_or_else(|err| ValidationReport {
        h,
        alpha,
        budget: e,
        n_levels: n,
        max_abs_cost_error: f64::NAN,
        max_abs_profit_error: f64::NAN,
        piecewise_max_abs_profit_error: f64::NAN,
        cost_tolerance: f64::NAN,
        profit_tolerance: PROFIT_TOLERANCE,
        p_max: f64::NAN,
        p_max_exact: f64::NAN,
        nodes_compared: 0,
        pass: false,
        error: Some(err.to_string()),
    })
}
