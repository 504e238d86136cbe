//! Expected cost, profit, and pristine region for an extraction scenario.
//!
//! For each of `N` benefit levels `B_i` the boundary front is evolved with
//! normal speed `1/(1/v + α·ψ·B_i)`. Its arrival time is the cost of leaving
//! the region with loot worth `B_i`. Per node the cost is interpolated
//! between the two levels that bracket the local benefit. Extractors accept
//! any node whose profit is within a fraction `ε` of the best, leave along
//! the steepest descent of their level's cost, and everything they neither
//! occupy nor pass near is pristine.

mod output;
mod paths;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainMask, NodeMask, Point, ScalarField};
use crate::par::*;
use crate::patrol::PatrolStrategy;
use crate::solver::{evolve_arrival_times, ArrivalTimeField, NormalSpeed, SolverParams};
use crate::terrain::SpeedField;

pub use output::{paths_csv, write_outcome, Metrics};
pub use paths::{
    classify_pristine, metrics, seed_extraction_points, trace_exit_path, ExitPath, PathStatus, PathTracer,
};

#[derive(Debug, Clone)]
pub struct BenefitField {
    pub b: ScalarField,
    pub b_min: f64,
    pub b_max: f64,
}

impl BenefitField {
    /// Benefit must be finite and `>= 0` on the mask.
    pub fn new(b: ScalarField, mask: &NodeMask) -> Result<Self> {
        b.grid().ensure_same(mask.grid(), "benefit vs mask")?;
        for k in mask.indices() {
            if b.nodata()[k] {
                let (i, j) = b.grid().ij(k);
                return Err(Error::Nodata { i, j });
            }
            if b.at(k) < 0.0 {
                return Err(Error::Model(format!("benefit is negative at node {k}")));
            }
        }
        let (b_min, b_max) = b
            .range_on(mask)
            .ok_or_else(|| Error::InvalidMask("benefit mask is empty".into()))?;
        Ok(Self { b, b_min, b_max })
    }
}

/// `B = k·d·(2·d_m − d)/d_m`: zero on the boundary, `k·d_m` at the deepest point.
pub fn benefit_from_depth(depth: &ArrivalTimeField, mask: &NodeMask, k: f64) -> Result<BenefitField> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::invalid(format!("benefit constant k must be > 0, got {k}")));
    }
    let dm = depth.max_on(mask);
    if !(dm > 0.0) {
        return Err(Error::Model("maximum depth is zero".into()));
    }
    let b = depth.times.map(|d| {
        let d = d.clamp(0.0, dm);
        k * d * (2.0 * dm - d) / dm
    });
    BenefitField::new(b, mask)
}

/// Travel speed as the solver sees it: nodes outside the mask move at the
/// fastest speed found inside, so the region outside never holds the front back.
pub fn solver_speed(speed: &SpeedField, mask: &NodeMask) -> Result<ScalarField> {
    speed.grid().ensure_same(mask.grid(), "speed vs mask")?;
    let vmax = mask.indices().map(|k| speed.v.at(k)).fold(0.0, f64::max);
    if !(vmax > 0.0) {
        return Err(Error::Model("walking speed is zero on the mask".into()));
    }
    let values = (0..speed.v.values().len())
        .map(|k| if mask.contains_index(k) { speed.v.at(k) } else { vmax })
        .collect();
    ScalarField::new(*speed.grid(), values)
}

/// `ṽ = 1 / (1/v + α·ψ·B_i)`.
pub fn normal_speed(v: &ScalarField, psi: &ScalarField, alpha: f64, b_i: f64) -> Result<NormalSpeed> {
    v.grid().ensure_same(psi.grid(), "speed vs patrol")?;
    let values = v
        .values()
        .par_iter()
        .zip(psi.values().par_iter())
        .map(|(&v, &psi)| 1.0 / (1.0 / v + alpha * psi * b_i))
        .collect();
    NormalSpeed::new(ScalarField::new(*v.grid(), values)?)
}

/// Arrival times of the boundary front for one benefit level.
pub fn cost_for_benefit_level(
    speed: &ScalarField,
    patrol: &PatrolStrategy,
    alpha: f64,
    b_i: f64,
    boundary_phi0: &ScalarField,
    params: &SolverParams,
) -> Result<ArrivalTimeField> {
    if !(b_i >= 0.0) {
        return Err(Error::invalid(format!("benefit level must be >= 0, got {b_i}")));
    }
    if !(alpha >= 0.0) {
        return Err(Error::invalid(format!("alpha must be >= 0, got {alpha}")));
    }
    let vt = normal_speed(speed, patrol.psi(), alpha, b_i)?;
    evolve_arrival_times(boundary_phi0, &vt, params)
}

/// `n` values evenly spaced from `lo` to `hi`, both ends exact.
pub fn benefit_levels(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// Bracketing level index `i` and weight `w` so that
/// `b ≈ (1−w)·B_i + w·B_{i+1}`; `None` when `b` is outside the levels.
fn bracket(levels: &[f64], b: f64) -> Option<(usize, f64)> {
    let n = levels.len();
    if !(b >= levels[0] && b <= levels[n - 1]) {
        return None;
    }
    let i = levels.partition_point(|&x| x <= b).clamp(1, n - 1) - 1;
    let (lo, hi) = (levels[i], levels[i + 1]);
    let w = if hi > lo { ((b - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
    Some((i, w))
}

#[derive(Debug, Clone)]
pub struct CostField {
    pub c: ScalarField,
    pub unreached: NodeMask,
    pub levels: Vec<f64>,
    pub per_level: Vec<ArrivalTimeField>,
}

/// Per node, `C = (1−w)·T_i + w·T_{i+1}` between the levels bracketing `B`.
/// A node is unreached when a level it draws on is unreached there.
pub fn assemble_cost(
    levels: Vec<(f64, ArrivalTimeField)>,
    benefit: &BenefitField,
    mask: &NodeMask,
) -> Result<CostField> {
    if levels.len() < 2 {
        return Err(Error::invalid("cost assembly needs at least two benefit levels"));
    }
    if levels.windows(2).any(|w| !(w[0].0 <= w[1].0)) {
        return Err(Error::invalid("benefit levels must be sorted ascending"));
    }
    let g = *benefit.b.grid();
    for (_, t) in &levels {
        t.times.grid().ensure_same(&g, "level field vs benefit")?;
    }
    let (bs, fields): (Vec<f64>, Vec<ArrivalTimeField>) = levels.into_iter().unzip();
    let mut c = vec![0.0; g.len()];
    let mut unreached = NodeMask::empty(g);
    for k in mask.indices() {
        let b = benefit.b.at(k);
        let (i, w) = bracket(&bs, b).ok_or_else(|| {
            Error::Model(format!(
                "benefit {b} at node {k} lies outside the level range [{}, {}]",
                bs[0],
                bs[bs.len() - 1]
            ))
        })?;
        c[k] = (1.0 - w) * fields[i].times.at(k) + w * fields[i + 1].times.at(k);
        let missed = fields[i].unreached.contains_index(k) || (w > 0.0 && fields[i + 1].unreached.contains_index(k));
        if missed {
            unreached.set(k, true);
        }
    }
    Ok(CostField {
        c: ScalarField::new(g, c)?,
        unreached,
        levels: bs,
        per_level: fields,
    })
}

#[derive(Debug, Clone)]
pub struct ProfitField {
    pub p: ScalarField,
    pub p_max: f64,
    pub argmax: Point,
    /// Mask nodes whose cost is known.
    pub reached: NodeMask,
}

/// `P = B − C`, with the maximum taken over reached mask nodes (first node
/// in storage order on ties).
pub fn profit(benefit: &BenefitField, cost: &CostField, mask: &NodeMask) -> Result<ProfitField> {
    let g = *benefit.b.grid();
    g.ensure_same(cost.c.grid(), "benefit vs cost")?;
    let p: Vec<f64> = (0..g.len())
        .map(|k| if mask.contains_index(k) { benefit.b.at(k) - cost.c.at(k) } else { 0.0 })
        .collect();
    let reached = mask.difference(&cost.unreached);
    let best = reached
        .indices()
        .fold(None, |best: Option<usize>, k| match best {
            Some(b) if p[b] >= p[k] => Some(b),
            _ => Some(k),
        })
        .ok_or_else(|| Error::Model("no reached node to evaluate profit on".into()))?;
    Ok(ProfitField {
        p_max: p[best],
        argmax: g.node_at(best),
        p: ScalarField::new(g, p)?,
        reached,
    })
}

/// Nodes with `P >= (1−ε)·P_max` among reached nodes. When `P_max <= 0`
/// nothing is worth extracting: the mask is empty and the flag is `false`.
pub fn high_profit_region(profit: &ProfitField, epsilon: f64) -> Result<(NodeMask, bool)> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::invalid(format!("epsilon must be in (0, 1], got {epsilon}")));
    }
    let g = *profit.p.grid();
    if !(profit.p_max > 0.0) {
        return Ok((NodeMask::empty(g), false));
    }
    let cut = (1.0 - epsilon) * profit.p_max;
    let inside = (0..g.len())
        .map(|k| profit.reached.contains_index(k) && profit.p.at(k) >= cut)
        .collect();
    Ok((NodeMask::new(g, inside)?, true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub n_levels: usize,
    /// Defaults to two cells.
    pub tube_radius: Option<f64>,
    pub n_paths: usize,
    pub rng_seed: u64,
    /// Path integration step; defaults to half a cell.
    pub path_step: Option<f64>,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            epsilon: 0.05,
            n_levels: 17,
            tube_radius: None,
            n_paths: 200,
            rng_seed: 0,
            path_step: None,
        }
    }
}

impl RiskParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::invalid(format!("epsilon must be in (0, 1], got {}", self.epsilon)));
        }
        if self.n_levels < 2 {
            return Err(Error::invalid(format!("n_levels must be >= 2, got {}", self.n_levels)));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths must be >= 1"));
        }
        if let Some(r) = self.tube_radius {
            if !(r > 0.0) {
                return Err(Error::invalid(format!("tube_radius must be > 0, got {r}")));
            }
        }
        if let Some(s) = self.path_step {
            if !(s > 0.0) {
                return Err(Error::invalid(format!("path_step must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    pub mask: DomainMask,
    pub benefit: BenefitField,
    pub psi: ScalarField,
    pub cost: CostField,
    pub profit: ProfitField,
    pub high_profit: NodeMask,
    pub profitable: bool,
    pub paths: Vec<ExitPath>,
    pub pristine: NodeMask,
    pub pristine_proportion: f64,
    pub value_protected: f64,
    /// Time step shared by every level solve.
    pub dt: f64,
}

impl ExtractionOutcome {
    pub fn solver_steps(&self) -> Vec<usize> {
        self.cost.per_level.iter().map(|t| t.steps).collect()
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            p_max: self.profit.p_max,
            pristine_proportion: self.pristine_proportion,
            value_protected: self.value_protected,
            n_paths: self.paths.len(),
            argmax_x: self.profit.argmax.x,
            argmax_y: self.profit.argmax.y,
        }
    }
}

/// Cost and profit for every node, without the path stage.
#[derive(Debug, Clone)]
pub struct ProfitSolve {
    pub cost: CostField,
    pub profit: ProfitField,
    /// Travel speed as the solver saw it.
    pub speed: ScalarField,
    pub vmax: f64,
    /// Time step shared by every level solve.
    pub dt: f64,
}

/// Steps 1 to 5 of the model: benefit levels, one front solve per level,
/// cost assembly and profit.
pub fn expected_profit(
    speed: &SpeedField,
    mask: &DomainMask,
    patrol: &PatrolStrategy,
    benefit: &BenefitField,
    risk: &RiskParams,
    solver: &SolverParams,
) -> Result<ProfitSolve> {
    risk.validate()?;
    solver.validate()?;
    let g = *mask.grid();
    g.ensure_same(patrol.psi().grid(), "patrol vs mask")?;
    g.ensure_same(benefit.b.grid(), "benefit vs mask")?;

    let v = solver_speed(speed, mask)?;
    let vmax = v.values().iter().copied().fold(0.0, f64::max);
    let mut solver = solver.clone();
    let dt = solver.dt.unwrap_or(solver.cfl * g.cellsize() / (2.0 * vmax));
    solver.dt = Some(dt);

    let phi0 = mask.signed_distance();
    let levels = benefit_levels(benefit.b_min, benefit.b_max, risk.n_levels);
    let fields = levels
        .par_iter()
        .map(|&b_i| {
            cost_for_benefit_level(&v, patrol, risk.alpha, b_i, &phi0, &solver)
                .map_err(|e| e.context(format!("cost solve for benefit level {b_i}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let cost = assemble_cost(levels.into_iter().zip(fields).collect(), benefit, mask)?;
    let profit = profit(benefit, &cost, mask)?;
    Ok(ProfitSolve {
        cost,
        profit,
        speed: v,
        vmax,
        dt,
    })
}

/// Runs the whole model on co-registered inputs.
pub fn run_extraction(
    speed: &SpeedField,
    mask: &DomainMask,
    patrol: &PatrolStrategy,
    benefit: &BenefitField,
    risk: &RiskParams,
    solver: &SolverParams,
) -> Result<ExtractionOutcome> {
    let ProfitSolve {
        cost, profit, vmax, dt, ..
    } = expected_profit(speed, mask, patrol, benefit, risk, solver)?;
    let h = mask.grid().cellsize();
    let (high_profit, profitable) = high_profit_region(&profit, risk.epsilon)?;

    let mut paths = Vec::new();
    if profitable {
        let seeds = seed_extraction_points(&high_profit, risk.n_paths, risk.rng_seed)?;
        let tracer = PathTracer::new(&cost, benefit, mask, vmax)?;
        let step = risk.path_step.unwrap_or(0.5 * h);
        paths = seeds.par_iter().map(|&x0| tracer.trace(x0, step)).collect();
    }
    let tube = risk.tube_radius.unwrap_or(2.0 * h);
    let pristine = classify_pristine(&high_profit, &paths, tube, mask)?;
    let (pristine_proportion, value_protected) = metrics(&pristine, benefit, mask)?;
    Ok(ExtractionOutcome {
        mask: mask.clone(),
        benefit: benefit.clone(),
        psi: patrol.psi().clone(),
        cost,
        profit,
        high_profit,
        profitable,
        paths,
        pristine,
        pristine_proportion,
        value_protected,
        dt,
    })
}
